#ifndef DROPTUNE_SAMPLER_HPP
#define DROPTUNE_SAMPLER_HPP

#include <cstddef>
#include <cstdint>

#include "droptune/rng.hpp"

namespace droptune {

// One (hidden units, dropout rate) configuration.
struct HyperPoint {
  std::size_t hidden_units = 8;
  double dropout_rate = 0.0;

  bool operator==(const HyperPoint&) const = default;
};

struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  double span() const { return hi - lo; }
  bool contains(double v) const { return v >= lo && v <= hi; }
  bool contains(const Interval& other) const { return other.lo >= lo && other.hi <= hi; }
  bool operator==(const Interval&) const = default;
};

// Axis-aligned box over (log2 hidden units, dropout rate). The sampler draws
// from it; the zoom tuner shrinks it.
struct SearchSpace {
  Interval log2_units{3.0, 10.0};
  Interval dropout{0.0, 1.0};

  // Throws DomainError on empty intervals, log2 lower bound < 0, or a dropout
  // range outside [0, 1].
  void validate() const;
  // A unit count is inside when some exponent in the interval floors to it.
  bool contains(const HyperPoint& p) const;
  bool contains(const SearchSpace& inner) const {
    return log2_units.contains(inner.log2_units) && dropout.contains(inner.dropout);
  }
  bool operator==(const SearchSpace&) const = default;
};

using SearchRegion = SearchSpace;

// floor(2^c), the hidden-unit count for a log2 exponent.
std::size_t units_from_exponent(double c);

// c ~ U(lo, hi) on the open interval.
double sample_exponent(const Interval& log2_units, Rng& rng);

// c ~ U(log2 range), units = floor(2^c); dropout ~ U(dropout range). Both
// intervals are treated as open.
HyperPoint sample_point(const SearchSpace& space, Rng& rng);

// splitmix64 finalizer applied to master + golden_gamma * (index + 1).
std::uint64_t derive_trial_seed(std::uint64_t master_seed, std::uint64_t trial_index);

}  // namespace droptune

#endif  // DROPTUNE_SAMPLER_HPP
