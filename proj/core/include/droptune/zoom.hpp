#ifndef DROPTUNE_ZOOM_HPP
#define DROPTUNE_ZOOM_HPP

// Iterative surrogate-guided search: sample a region, fit a cost surface to
// every trial seen so far inside it, keep the bounding box of the surface's
// low-cost cells, and repeat with a smaller budget.

#include <nlohmann/json_fwd.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "droptune/harness.hpp"
#include "droptune/sampler.hpp"
#include "droptune/surrogates.hpp"

namespace droptune::zoom {

inline surrogates::SurrogateTraining dropout_free_surrogate() {
  surrogates::SurrogateTraining t;
  t.dropout_rate = 0.0;
  return t;
}

struct ZoomConfig {
  std::vector<std::size_t> budget_schedule{100, 10, 5};
  double region_quantile = 0.1;
  // Fraction of the current region's span added on each side of the box.
  double region_margin = 0.1;
  std::size_t grid_resolution = 64;
  std::uint64_t master_seed = 0;
  // Stop once both spans fall below these.
  double min_log2_units_span = 0.1;
  double min_dropout_span = 0.02;
  // Dropout is off here: in eval mode a 6x16 ReLU stack trained with dropout
  // compresses its outputs enough to misplace the surface's minimum.
  surrogates::SurrogateTraining surrogate = dropout_free_surrogate();

  void validate() const;
};

struct ZoomRound {
  std::size_t index = 0;
  SearchRegion region;
  std::size_t budget = 0;
  std::uint64_t round_seed = 0;
  std::vector<TrialRecord> trials;  // this round's ledger slice
  std::size_t fit_rows = 0;          // cumulative in-region trials used for the fit
  std::optional<double> surrogate_mae;
  bool fallback = false;
  std::string fallback_reason;
  SearchRegion selected;
  std::optional<HyperPoint> predicted_best;
};

struct ZoomReport {
  std::vector<ZoomRound> rounds;
  std::optional<TrialRecord> best_observed;
  std::optional<HyperPoint> best_predicted;
  bool shrink_terminated = false;

  std::size_t evaluations() const;
};

// Cells with prediction <= the nearest-rank quantile value, boxed, widened by
// margin * span of the grid region per axis and clipped to it. A cell is its
// lattice point +- half a step.
SearchRegion select_region(const surrogates::SurfaceGrid& grid, double quantile, double margin);

// Box of +- margin * span around a point, clipped to the region.
SearchRegion region_around(const SearchRegion& region, const HyperPoint& point, double margin);

// Lowest cost; ties go to fewer hidden units, then lower dropout.
bool better_trial(const TrialRecord& a, const TrialRecord& b);
std::optional<TrialRecord> best_trial(const std::vector<TrialRecord>& trials);

struct ZoomRunOptions {
  // Per-round ledgers round_<r>.jsonl are written here when set.
  std::optional<std::filesystem::path> ledger_dir;
  // Continue after these completed rounds instead of starting fresh.
  std::optional<ZoomReport> resume_from;
  // Replaces the next round's region (clipped to the previous round's region).
  std::optional<SearchRegion> region_override;
  // Run at most this many new rounds.
  std::optional<std::size_t> max_rounds;
  unsigned workers = 1;
};

ZoomReport zoom_search(const SearchSpace& space, const ZoomConfig& cfg, const Evaluator& evaluator,
                       const ZoomRunOptions& options = {});

nlohmann::ordered_json to_json(const ZoomReport& report);
// Trials are not stored in the JSON; they are reloaded from each round's
// ledger file relative to `ledger_dir`.
ZoomReport report_from_json(const nlohmann::ordered_json& j,
                            const std::filesystem::path& ledger_dir);

std::string round_ledger_name(std::size_t round);

}  // namespace droptune::zoom

#endif  // DROPTUNE_ZOOM_HPP
