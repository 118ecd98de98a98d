#ifndef DROPTUNE_HARNESS_HPP
#define DROPTUNE_HARNESS_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "droptune/data.hpp"
#include "droptune/nn.hpp"
#include "droptune/sampler.hpp"

namespace droptune {

// One line of the trial ledger.
struct TrialRecord {
  std::uint64_t trial_index = 0;
  HyperPoint point;
  double cost = 0.0;
  double accuracy = 0.0;  // percent
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  std::optional<std::string> skipped;  // reason, when the evaluator diverged

  bool is_skipped() const { return skipped.has_value(); }
  bool operator==(const TrialRecord&) const = default;
};

struct EvalOutcome {
  double cost = 0.0;
  double accuracy = 0.0;
  std::size_t epochs = 0;
};

// Maps a configuration to (cost, accuracy). Implementations must be
// deterministic in (point, seed) and safe to call concurrently, since a
// single instance is shared by all harness workers. Divergence is reported by
// throwing DivergedError or NumericError.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual EvalOutcome evaluate(const HyperPoint& point, std::uint64_t seed) const = 0;
};

enum class SimulatedShape {
  bowl,               // (u - 0.5)^2 + (d - 0.3)^2
  dropout_symmetric,  // (u - 0.5)^2 + (d - 0.5)^2, equal cost at d and 1 - d
};

// Analytic cost surface over u = (log2 units - 3) / 7 and the dropout rate,
// plus optional U(-noise, noise) perturbation drawn from the trial seed.
// accuracy = 100 * (1 - min(cost, 1)).
class SimulatedEvaluator final : public Evaluator {
 public:
  explicit SimulatedEvaluator(SimulatedShape shape = SimulatedShape::bowl,
                              double noise = 0.0);

  EvalOutcome evaluate(const HyperPoint& point, std::uint64_t seed) const override;

  // Noise-free cost at a point.
  double true_cost(const HyperPoint& point) const;
  double true_cost(double log2_units, double dropout) const;

  SimulatedShape shape() const { return shape_; }
  double noise() const { return noise_; }

 private:
  SimulatedShape shape_;
  double noise_;
};

// Architecture knobs that stay fixed across a sweep; units and dropout come
// from the trial's HyperPoint.
struct MlpTemplate {
  std::size_t hidden_layers = 6;
  nn::HiddenActivation hidden_activation = nn::HiddenActivation::relu;
};

// Trains an nn-core classifier per evaluation. Init, shuffle and dropout
// seeds are all derived from the trial seed.
class TrainEvaluator final : public Evaluator {
 public:
  TrainEvaluator(data::Dataset train_set, data::Dataset val_set, MlpTemplate tmpl,
                 nn::TrainConfig tcfg);

  EvalOutcome evaluate(const HyperPoint& point, std::uint64_t seed) const override;

 private:
  data::Dataset train_;
  data::Dataset val_;
  MlpTemplate template_;
  nn::TrainConfig tcfg_;
};

// Convenience wrapper matching the train_evaluator operation.
TrainEvaluator train_evaluator(const data::Split& standardized_splits, MlpTemplate tmpl,
                               nn::TrainConfig tcfg);

// The configuration trial `index` of a run evaluates. Independent of every
// other trial, so runs can resume or parallelize without replaying a stream.
HyperPoint planned_point(const SearchSpace& space, std::uint64_t master_seed,
                         std::uint64_t index);

struct RunOptions {
  unsigned workers = 1;
  // Wall time is left at 0 unless requested, keeping ledgers byte-stable.
  bool record_timing = false;
  // Stop after this many new records have been appended (simulated crash).
  std::optional<std::size_t> stop_after;
  std::function<void(const TrialRecord&)> on_record;
};

// Evaluates trials 0..n-1 and appends them to the ledger at `ledger_path`
// (no file when the path is empty). An existing ledger is resumed: its valid
// records must match this run's planned points, a corrupt trailing line is
// discarded, and evaluation continues at the first missing trial. Returns
// all records in trial order.
std::vector<TrialRecord> run_trials(const SearchSpace& space, std::size_t n,
                                    const Evaluator& evaluator, std::uint64_t master_seed,
                                    const std::filesystem::path& ledger_path,
                                    const RunOptions& options = {});

std::string to_ledger_line(const TrialRecord& record);

struct LedgerContents {
  std::vector<TrialRecord> records;
  std::optional<std::string> warning;  // set when a trailing line was dropped
};

// Parses a JSON-lines ledger. A corrupt final line is dropped with a warning;
// a corrupt earlier line, a duplicate trial index or a violated record
// invariant raises IntegrityError.
LedgerContents load_ledger(const std::filesystem::path& path);

void write_ledger(const std::filesystem::path& path, const std::vector<TrialRecord>& records);

std::vector<TrialRecord> completed(const std::vector<TrialRecord>& ledger);

struct NonIdentifiablePair {
  std::uint64_t first_trial = 0;
  std::uint64_t second_trial = 0;
  double cost_gap = 0.0;
  double accuracy_gap = 0.0;
  double dropout_gap = 0.0;
};

// Record pairs sharing floor(log2 units) whose cost and accuracy agree within
// tolerance while their dropout rates differ by at least `dropout_gap`.
std::vector<NonIdentifiablePair> find_nonidentifiable_pairs(
    const std::vector<TrialRecord>& ledger, double cost_tol, double acc_tol,
    double dropout_gap);

}  // namespace droptune

#endif  // DROPTUNE_HARNESS_HPP
