#ifndef DROPTUNE_SURROGATES_HPP
#define DROPTUNE_SURROGATES_HPP

// Surrogate models fitted to a trial ledger: threshold-filtered linear
// regression of dropout on log2(units), polynomial logistic classification of
// "superior" configurations, and neural surface / inverse models.

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "droptune/harness.hpp"
#include "droptune/nn.hpp"
#include "droptune/sampler.hpp"

namespace droptune::surrogates {

// log2(units) is mapped affinely from [lo, hi] onto [0, 1]; dropout is used raw.
struct InputNormalization {
  double log2_units_lo = 3.0;
  double log2_units_hi = 10.0;

  double units(double log2_units) const {
    return (log2_units - log2_units_lo) / (log2_units_hi - log2_units_lo);
  }
  double units(std::size_t hidden_units) const;
};

enum class ThresholdKind { numeric, percentile };

struct ThresholdSpec {
  ThresholdKind kind = ThresholdKind::percentile;
  double value = 25.0;

  static ThresholdSpec numeric(double cost) { return {ThresholdKind::numeric, cost}; }
  static ThresholdSpec percentile(double p) { return {ThresholdKind::percentile, p}; }
  void validate() const;
};

// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value (p in (0, 100]).
double nearest_rank_percentile(std::vector<double> values, double p);

// numeric: cost < value. percentile: cost <= nearest-rank percentile of the
// ledger's costs. Skipped trials never qualify. Throws
// DegenerateSelectionError when nothing is selected.
std::vector<TrialRecord> select_by_threshold(const std::vector<TrialRecord>& ledger,
                                             const ThresholdSpec& spec);

// dropout ~= slope * log2(units) + intercept
struct LinearModel {
  double slope = 0.0;
  double intercept = 0.0;
  double mae = 0.0;
  std::size_t points = 0;

  double predict(double log2_units) const { return slope * log2_units + intercept; }
};

// Closed-form OLS over the subset. FitError when fewer than two distinct
// log2(units) values are present.
LinearModel fit_linear(const std::vector<TrialRecord>& subset);

// Monomials of (a, b) up to `degree` in graded-lex order, constant first:
// degree 2 -> [1, a, b, a^2, ab, b^2].
std::vector<double> poly_features(double a, double b, int degree);
std::size_t poly_feature_count(int degree);

struct LogisticOptions {
  nn::AdamConfig adam{0.01, 0.9, 0.999, 1e-8};
  std::size_t max_iterations = 50000;
  double gradient_tolerance = 1e-6;
  // Share of rows held out for a second fit that measures held-out accuracy.
  // Zero skips it.
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct LogisticFit {
  std::vector<double> coefficients;
  double train_accuracy = 0.0;  // fraction in [0, 1]
  std::size_t iterations = 0;
  bool converged = false;
};

// Full-batch Adam on mean BCE of sigmoid(w . phi(a, b)); inputs is n x 2.
LogisticFit fit_logistic_features(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& labels,
                                  int degree, const LogisticOptions& options = {});

double logistic_probability(const std::vector<double>& coefficients, int degree, double a,
                            double b);

struct LogisticModel {
  int degree = 2;
  std::vector<double> coefficients;
  InputNormalization normalization;
  double percentile = 25.0;
  double label_cost_threshold = 0.0;  // costs <= this are labelled superior
  double train_accuracy = 0.0;
  std::optional<double> holdout_accuracy;
  std::size_t iterations = 0;
  bool converged = false;

  double probability(std::size_t hidden_units, double dropout) const;
  double probability_log2(double log2_units, double dropout) const;
};

// Labels costs at or below the nearest-rank `percentile_label` percentile as 1
// and fits on (normalized log2 units, dropout).
LogisticModel fit_logistic(const std::vector<TrialRecord>& ledger, double percentile_label,
                           int degree, const LogisticOptions& options = {});

// Shared training recipe for the surface and inverse networks.
struct SurrogateTraining {
  nn::TrainConfig tcfg{2000, 128, {}, 0, 0};
  std::size_t hidden_layers = 6;
  std::size_t hidden_units = 16;
  double dropout_rate = 0.1;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;
};

enum class SurfaceTarget { cost, accuracy };
std::string_view to_string(SurfaceTarget t);
SurfaceTarget surface_target_from_string(std::string_view s);

struct SurfaceSurrogate {
  nn::MlpModel model;
  SurfaceTarget target = SurfaceTarget::cost;
  InputNormalization normalization;
  std::optional<double> heldout_mae;
  std::size_t train_rows = 0;
  std::size_t heldout_rows = 0;

  // Accuracy predictions are on the [0, 1] scale and clamped into it.
  double predict(double log2_units, double dropout) const;
};

// Trains the surface network with MSE on (normalized point -> target).
// Accuracy targets are rescaled from percent to [0, 1]. Needs >= 20 completed
// trials.
SurfaceSurrogate fit_surface(const std::vector<TrialRecord>& ledger, SurfaceTarget target,
                             const SurrogateTraining& training = {});

// Predictions on a resolution x resolution lattice including the region's
// corners. values is row-major with the dropout index as the row.
struct SurfaceGrid {
  SearchRegion region;
  std::size_t resolution = 0;
  std::vector<double> values;

  double log2_units_at(std::size_t col) const;
  double dropout_at(std::size_t row) const;
  double value(std::size_t row, std::size_t col) const { return values[row * resolution + col]; }
};

// Lattice coordinate i of n points spanning [lo, hi].
double lattice_coordinate(const Interval& axis, std::size_t i, std::size_t n);

SurfaceGrid predict_surface(const SurfaceSurrogate& model, const SearchRegion& region,
                            std::size_t resolution);

inline constexpr std::string_view kInverseCaveat =
    "dropout is not a function of (units, cost, accuracy): distinct dropout rates at the "
    "same width can reach the same cost and accuracy, so this mapping fails the vertical "
    "line test and its predictions are only indicative";

// (normalized log2 units, cost, accuracy in [0, 1]) -> dropout, sigmoid output.
struct InverseModel {
  nn::MlpModel model;
  InputNormalization normalization;
  std::optional<double> heldout_mae;
  std::size_t train_rows = 0;
  std::size_t heldout_rows = 0;
};

InverseModel fit_inverse(const std::vector<TrialRecord>& ledger,
                         const SurrogateTraining& training = {});

// Result lies strictly inside (0, 1). desired_accuracy is a percent.
double predict_inverse(const InverseModel& model, std::size_t hidden_units, double desired_cost,
                       double desired_accuracy);

struct InverseCurvePoint {
  std::size_t hidden_units = 0;
  double dropout = 0.0;
};

// Queries powers of two across the normalization range with the ledger's
// minimum cost and maximum accuracy as the desired values.
std::vector<InverseCurvePoint> inverse_curve(const InverseModel& model,
                                             const std::vector<TrialRecord>& ledger);

nlohmann::ordered_json to_json(const LinearModel& m);
nlohmann::ordered_json to_json(const LogisticModel& m);
nlohmann::ordered_json to_json(const SurfaceSurrogate& m);
nlohmann::ordered_json to_json(const InverseModel& m);
SurfaceSurrogate surface_from_json(const nlohmann::ordered_json& j);
InverseModel inverse_from_json(const nlohmann::ordered_json& j);

}  // namespace droptune::surrogates

#endif  // DROPTUNE_SURROGATES_HPP
