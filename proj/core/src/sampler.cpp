#include "droptune/sampler.hpp"

#include <cmath>

#include "droptune/errors.hpp"

namespace droptune {

void SearchSpace::validate() const {
  if (!(log2_units.lo < log2_units.hi)) throw DomainError("empty log2-units interval");
  if (log2_units.lo < 0.0) throw DomainError("log2-units lower bound must be >= 0");
  if (!(dropout.lo < dropout.hi)) throw DomainError("empty dropout interval");
  if (dropout.lo < 0.0 || dropout.hi > 1.0)
    throw DomainError("dropout interval must lie within [0, 1]");
}

bool SearchSpace::contains(const HyperPoint& p) const {
  // Unit count u covers exponents [log2 u, log2(u + 1)) because of the floor.
  const auto u = static_cast<double>(p.hidden_units);
  const bool units_inside = std::log2(u + 1.0) > log2_units.lo && std::log2(u) <= log2_units.hi;
  return units_inside && dropout.contains(p.dropout_rate);
}

std::size_t units_from_exponent(double c) {
  return static_cast<std::size_t>(std::floor(std::exp2(c)));
}

double sample_exponent(const Interval& log2_units, Rng& rng) {
  return rng.uniform_open(log2_units.lo, log2_units.hi);
}

HyperPoint sample_point(const SearchSpace& space, Rng& rng) {
  const double c = sample_exponent(space.log2_units, rng);
  const double d = rng.uniform_open(space.dropout.lo, space.dropout.hi);
  HyperPoint p;
  p.hidden_units = units_from_exponent(c);
  if (p.hidden_units < 1) p.hidden_units = 1;
  p.dropout_rate = d;
  return p;
}

std::uint64_t derive_trial_seed(std::uint64_t master_seed, std::uint64_t trial_index) {
  return splitmix64_mix(master_seed + kGoldenGamma * (trial_index + 1));
}

}  // namespace droptune
