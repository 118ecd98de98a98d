#include "droptune/surrogates.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "droptune/errors.hpp"

namespace droptune::surrogates {

namespace {

using Json = nlohmann::ordered_json;

constexpr std::size_t kMinSurrogateRows = 20;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_degree(int degree) {
  if (degree < 1 || degree > 3) throw DomainError("polynomial degree must be 1, 2 or 3");
}

Eigen::MatrixXd design_matrix(const Eigen::MatrixXd& inputs, int degree) {
  const auto k = static_cast<Eigen::Index>(poly_feature_count(degree));
  Eigen::MatrixXd phi(inputs.rows(), k);
  for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
    const auto f = poly_features(inputs(r, 0), inputs(r, 1), degree);
    for (Eigen::Index c = 0; c < k; ++c) phi(r, c) = f[static_cast<std::size_t>(c)];
  }
  return phi;
}

double classification_accuracy(const Eigen::MatrixXd& phi, const Eigen::VectorXd& w,
                               const Eigen::VectorXd& labels) {
  const Eigen::VectorXd z = phi * w;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double cls = sigmoid(z[i]) >= 0.5 ? 1.0 : 0.0;
    if (cls == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(z.size());
}

// Deterministic train/held-out partition of n rows.
struct Partition {
  std::vector<std::size_t> train;
  std::vector<std::size_t> heldout;
};

Partition partition_rows(std::size_t n, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
    throw DomainError("holdout fraction must lie in [0, 1)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i-- > 1;) std::swap(order[i], order[rng.index(i + 1)]);
  std::size_t held = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(n)));
  if (holdout_fraction > 0.0) held = std::clamp<std::size_t>(held, 1, n - 1);
  Partition p;
  p.heldout.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
  p.train.assign(order.begin() + static_cast<std::ptrdiff_t>(held), order.end());
  std::sort(p.heldout.begin(), p.heldout.end());
  std::sort(p.train.begin(), p.train.end());
  return p;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k)
    out.row(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(rows[k]));
  return out;
}

Eigen::VectorXd take_rows(const Eigen::VectorXd& v, const std::vector<std::size_t>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k)
    out[static_cast<Eigen::Index>(k)] = v[static_cast<Eigen::Index>(rows[k])];
  return out;
}

// Result of training one regression network with an optional held-out split.
struct RegressionFit {
  nn::MlpModel model;
  std::optional<double> heldout_mae;
  std::size_t train_rows;
  std::size_t heldout_rows;
};

template <typename Postprocess>
RegressionFit fit_regression_network(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                                     nn::OutputActivation output,
                                     const SurrogateTraining& training, Postprocess post) {
  const auto n = static_cast<std::size_t>(inputs.rows());
  const Partition part =
      partition_rows(n, training.holdout_fraction, derive_trial_seed(training.seed, 4));

  nn::MlpConfig mcfg;
  mcfg.input_dim = static_cast<std::size_t>(inputs.cols());
  mcfg.hidden_layers = training.hidden_layers;
  mcfg.hidden_units = training.hidden_units;
  mcfg.dropout_rate = training.dropout_rate;
  mcfg.output_activation = output;
  mcfg.init_seed = derive_trial_seed(training.seed, 1);
  nn::TrainConfig tcfg = training.tcfg;
  tcfg.shuffle_seed = derive_trial_seed(training.seed, 2);
  tcfg.dropout_seed = derive_trial_seed(training.seed, 3);

  nn::MlpModel model(mcfg);
  nn::train_network(model, tcfg, take_rows(inputs, part.train), take_rows(targets, part.train),
                    nn::Loss::mean_squared_error);

  std::optional<double> mae;
  if (!part.heldout.empty()) {
    const Eigen::VectorXd pred = nn::forward(model, take_rows(inputs, part.heldout));
    const Eigen::VectorXd truth = take_rows(targets, part.heldout);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < pred.size(); ++i) sum += std::abs(post(pred[i]) - truth[i]);
    mae = sum / static_cast<double>(pred.size());
    if (!std::isfinite(*mae)) throw DivergedError("surrogate predictions are non-finite", tcfg.epochs);
  }
  return {std::move(model), mae, part.train.size(), part.heldout.size()};
}

double log2_units(const TrialRecord& r) {
  return std::log2(static_cast<double>(r.point.hidden_units));
}

Json normalization_json(const InputNormalization& n) {
  return {{"log2_units_lo", n.log2_units_lo}, {"log2_units_hi", n.log2_units_hi}};
}

InputNormalization normalization_from_json(const Json& j) {
  return {j.at("log2_units_lo").get<double>(), j.at("log2_units_hi").get<double>()};
}

Json optional_number(const std::optional<double>& v) {
  return v ? Json(*v) : Json(nullptr);
}

std::optional<double> optional_number_from(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

double InputNormalization::units(std::size_t hidden_units) const {
  return units(std::log2(static_cast<double>(hidden_units)));
}

void ThresholdSpec::validate() const {
  if (kind == ThresholdKind::percentile && !(value > 0.0 && value <= 100.0))
    throw DomainError("percentile threshold must lie in (0, 100]");
  if (kind == ThresholdKind::numeric && !(value > 0.0))
    throw DomainError("numeric threshold must be positive");
}

double nearest_rank_percentile(std::vector<double> values, double p) {
  if (values.empty()) throw DomainError("percentile of an empty sample");
  if (!(p > 0.0 && p <= 100.0)) throw DomainError("percentile must lie in (0, 100]");
  std::sort(values.begin(), values.end());
  const double rank = std::ceil(p / 100.0 * static_cast<double>(values.size()));
  const auto idx = static_cast<std::size_t>(std::max(rank, 1.0)) - 1;
  return values[std::min(idx, values.size() - 1)];
}

std::vector<TrialRecord> select_by_threshold(const std::vector<TrialRecord>& ledger,
                                             const ThresholdSpec& spec) {
  spec.validate();
  const auto rows = completed(ledger);
  if (rows.empty()) throw DegenerateSelectionError("ledger has no completed trials");

  double bound = spec.value;
  if (spec.kind == ThresholdKind::percentile) {
    std::vector<double> costs;
    costs.reserve(rows.size());
    for (const auto& r : rows) costs.push_back(r.cost);
    bound = nearest_rank_percentile(costs, spec.value);
  }
  std::vector<TrialRecord> out;
  for (const auto& r : rows) {
    const bool keep = spec.kind == ThresholdKind::numeric ? r.cost < bound : r.cost <= bound;
    if (keep) out.push_back(r);
  }
  if (out.empty()) {
    const std::string label = spec.kind == ThresholdKind::numeric
                                  ? "numeric threshold " + std::to_string(spec.value)
                                  : "percentile threshold " + std::to_string(spec.value);
    throw DegenerateSelectionError(label + " selects no trials");
  }
  return out;
}

LinearModel fit_linear(const std::vector<TrialRecord>& subset) {
  const auto rows = completed(subset);
  if (rows.size() < 2) throw FitError("linear fit needs at least two points");

  // Normal equations in centred form: slope = Sxy / Sxx.
  const auto n = static_cast<double>(rows.size());
  double mean_x = 0.0;
  double mean_y = 0.0;
  for (const auto& r : rows) {
    mean_x += log2_units(r);
    mean_y += r.point.dropout_rate;
  }
  mean_x /= n;
  mean_y /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& r : rows) {
    const double dx = log2_units(r) - mean_x;
    sxx += dx * dx;
    sxy += dx * (r.point.dropout_rate - mean_y);
  }
  if (!(sxx > 0.0)) throw FitError("linear fit is rank deficient: all unit counts are equal");

  LinearModel m;
  m.slope = sxy / sxx;
  m.intercept = mean_y - m.slope * mean_x;
  m.points = rows.size();
  double abs_sum = 0.0;
  for (const auto& r : rows) abs_sum += std::abs(r.point.dropout_rate - m.predict(log2_units(r)));
  m.mae = abs_sum / n;
  return m;
}

std::size_t poly_feature_count(int degree) {
  check_degree(degree);
  return static_cast<std::size_t>((degree + 1) * (degree + 2) / 2);
}

std::vector<double> poly_features(double a, double b, int degree) {
  check_degree(degree);
  std::vector<double> out;
  out.reserve(poly_feature_count(degree));
  for (int total = 0; total <= degree; ++total) {
    for (int pb = 0; pb <= total; ++pb) {
      const int pa = total - pb;
      out.push_back(std::pow(a, pa) * std::pow(b, pb));
    }
  }
  return out;
}

LogisticFit fit_logistic_features(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& labels,
                                  int degree, const LogisticOptions& options) {
  if (inputs.cols() != 2) throw ShapeError("logistic inputs must have two columns");
  if (inputs.rows() != labels.size()) throw ShapeError("input and label counts differ");
  if (inputs.rows() == 0) throw FitError("logistic fit on empty data");
  const double positives = labels.sum();
  if (positives == 0.0 || positives == static_cast<double>(labels.size()))
    throw FitError("logistic fit needs both classes");

  const Eigen::MatrixXd phi = design_matrix(inputs, degree);
  const double inv_n = 1.0 / static_cast<double>(phi.rows());
  nn::ParamSet params{{Eigen::MatrixXd::Zero(phi.cols(), 1), Eigen::VectorXd(0)}};
  nn::AdamState state = nn::AdamState::for_params(params);
  nn::ParamSet grads = nn::zeros_like(params);

  LogisticFit fit;
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    const Eigen::VectorXd z = phi * params[0].weights.col(0);
    const Eigen::VectorXd h = z.unaryExpr([](double v) { return sigmoid(v); });
    grads[0].weights.col(0) = phi.transpose() * (h - labels) * inv_n;
    fit.iterations = it;
    if (grads[0].weights.cwiseAbs().maxCoeff() < options.gradient_tolerance) {
      fit.converged = true;
      break;
    }
    nn::adam_step(params, grads, state, options.adam);
    fit.iterations = it + 1;
  }
  const Eigen::VectorXd w = params[0].weights.col(0);
  fit.coefficients.assign(w.begin(), w.end());
  fit.train_accuracy = classification_accuracy(phi, w, labels);
  return fit;
}

double logistic_probability(const std::vector<double>& coefficients, int degree, double a,
                            double b) {
  const auto f = poly_features(a, b, degree);
  if (f.size() != coefficients.size()) throw ShapeError("coefficient count does not match degree");
  return sigmoid(std::inner_product(f.begin(), f.end(), coefficients.begin(), 0.0));
}

double LogisticModel::probability(std::size_t hidden_units, double dropout) const {
  return logistic_probability(coefficients, degree, normalization.units(hidden_units), dropout);
}

double LogisticModel::probability_log2(double log2_units, double dropout) const {
  return logistic_probability(coefficients, degree, normalization.units(log2_units), dropout);
}

LogisticModel fit_logistic(const std::vector<TrialRecord>& ledger, double percentile_label,
                           int degree, const LogisticOptions& options) {
  const auto rows = completed(ledger);
  if (rows.size() < 2) throw FitError("logistic fit needs at least two completed trials");

  std::vector<double> costs;
  for (const auto& r : rows) costs.push_back(r.cost);
  LogisticModel model;
  model.degree = degree;
  model.percentile = percentile_label;
  model.label_cost_threshold = nearest_rank_percentile(costs, percentile_label);

  Eigen::MatrixXd inputs(static_cast<Eigen::Index>(rows.size()), 2);
  Eigen::VectorXd labels(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    inputs(r, 0) = model.normalization.units(rows[i].point.hidden_units);
    inputs(r, 1) = rows[i].point.dropout_rate;
    labels[r] = rows[i].cost <= model.label_cost_threshold ? 1.0 : 0.0;
  }
  const double positives = labels.sum();
  if (positives == 0.0 || positives == static_cast<double>(labels.size()))
    throw FitError("percentile threshold " + std::to_string(percentile_label) +
                   " puts every trial in one class");

  const LogisticFit full = fit_logistic_features(inputs, labels, degree, options);
  model.coefficients = full.coefficients;
  model.train_accuracy = full.train_accuracy;
  model.iterations = full.iterations;
  model.converged = full.converged;

  if (options.holdout_fraction > 0.0 && rows.size() >= 5) {
    const Partition part = partition_rows(rows.size(), options.holdout_fraction, options.seed);
    const Eigen::VectorXd train_labels = take_rows(labels, part.train);
    const double pos = train_labels.sum();
    if (pos > 0.0 && pos < static_cast<double>(train_labels.size())) {
      const LogisticFit split_fit =
          fit_logistic_features(take_rows(inputs, part.train), train_labels, degree, options);
      const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(
          split_fit.coefficients.data(), static_cast<Eigen::Index>(split_fit.coefficients.size()));
      model.holdout_accuracy = classification_accuracy(
          design_matrix(take_rows(inputs, part.heldout), degree), w, take_rows(labels, part.heldout));
    }
  }
  return model;
}

std::string_view to_string(SurfaceTarget t) {
  return t == SurfaceTarget::cost ? "cost" : "accuracy";
}

SurfaceTarget surface_target_from_string(std::string_view s) {
  if (s == "cost") return SurfaceTarget::cost;
  if (s == "accuracy") return SurfaceTarget::accuracy;
  throw DomainError("unknown surface target '" + std::string(s) + "'");
}

double SurfaceSurrogate::predict(double log2_units, double dropout) const {
  Eigen::MatrixXd x(1, 2);
  x << normalization.units(log2_units), dropout;
  const double y = nn::forward(model, x)[0];
  return target == SurfaceTarget::accuracy ? std::clamp(y, 0.0, 1.0) : y;
}

SurfaceSurrogate fit_surface(const std::vector<TrialRecord>& ledger, SurfaceTarget target,
                             const SurrogateTraining& training) {
  const auto rows = completed(ledger);
  if (rows.size() < kMinSurrogateRows)
    throw FitError("surface fit needs at least " + std::to_string(kMinSurrogateRows) +
                   " completed trials, got " + std::to_string(rows.size()));

  SurfaceSurrogate out{nn::MlpModel(nn::MlpConfig{2, 0, 1, 0.0}), target, {}, {}, 0, 0};
  Eigen::MatrixXd inputs(static_cast<Eigen::Index>(rows.size()), 2);
  Eigen::VectorXd targets(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    inputs(r, 0) = out.normalization.units(rows[i].point.hidden_units);
    inputs(r, 1) = rows[i].point.dropout_rate;
    targets[r] = target == SurfaceTarget::cost ? rows[i].cost : rows[i].accuracy / 100.0;
  }
  const bool clamp = target == SurfaceTarget::accuracy;
  auto fit = fit_regression_network(inputs, targets, nn::OutputActivation::identity, training,
                                    [clamp](double v) { return clamp ? std::clamp(v, 0.0, 1.0) : v; });
  out.model = std::move(fit.model);
  out.heldout_mae = fit.heldout_mae;
  out.train_rows = fit.train_rows;
  out.heldout_rows = fit.heldout_rows;
  return out;
}

double SurfaceGrid::log2_units_at(std::size_t col) const {
  return lattice_coordinate(region.log2_units, col, resolution);
}

double SurfaceGrid::dropout_at(std::size_t row) const {
  return lattice_coordinate(region.dropout, row, resolution);
}

double lattice_coordinate(const Interval& axis, std::size_t i, std::size_t n) {
  if (n < 2) return axis.lo;
  const double t = static_cast<double>(i) / static_cast<double>(n - 1);
  return i + 1 == n ? axis.hi : axis.lo + t * (axis.hi - axis.lo);
}

SurfaceGrid predict_surface(const SurfaceSurrogate& model, const SearchRegion& region,
                            std::size_t resolution) {
  if (resolution < 1) throw DomainError("grid resolution must be >= 1");
  SurfaceGrid grid;
  grid.region = region;
  grid.resolution = resolution;
  grid.values.resize(resolution * resolution);
  // Point-at-a-time evaluation keeps every cell bit-identical to a direct
  // single-point call, independent of grid size.
  for (std::size_t row = 0; row < resolution; ++row)
    for (std::size_t col = 0; col < resolution; ++col)
      grid.values[row * resolution + col] = model.predict(grid.log2_units_at(col), grid.dropout_at(row));
  return grid;
}

InverseModel fit_inverse(const std::vector<TrialRecord>& ledger, const SurrogateTraining& training) {
  const auto rows = completed(ledger);
  if (rows.size() < kMinSurrogateRows)
    throw FitError("inverse fit needs at least " + std::to_string(kMinSurrogateRows) +
                   " completed trials, got " + std::to_string(rows.size()));
  InverseModel out{nn::MlpModel(nn::MlpConfig{3, 0, 1, 0.0}), {}, {}, 0, 0};
  Eigen::MatrixXd inputs(static_cast<Eigen::Index>(rows.size()), 3);
  Eigen::VectorXd targets(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    inputs(r, 0) = out.normalization.units(rows[i].point.hidden_units);
    inputs(r, 1) = rows[i].cost;
    inputs(r, 2) = rows[i].accuracy / 100.0;
    targets[r] = rows[i].point.dropout_rate;
  }
  auto fit = fit_regression_network(inputs, targets, nn::OutputActivation::sigmoid, training,
                                    [](double v) { return v; });
  out.model = std::move(fit.model);
  out.heldout_mae = fit.heldout_mae;
  out.train_rows = fit.train_rows;
  out.heldout_rows = fit.heldout_rows;
  return out;
}

double predict_inverse(const InverseModel& model, std::size_t hidden_units, double desired_cost,
                       double desired_accuracy) {
  Eigen::MatrixXd x(1, 3);
  x << model.normalization.units(hidden_units), desired_cost, desired_accuracy / 100.0;
  const double y = nn::forward(model.model, x)[0];
  return std::clamp(y, 1e-7, 1.0 - 1e-7);
}

std::vector<InverseCurvePoint> inverse_curve(const InverseModel& model,
                                             const std::vector<TrialRecord>& ledger) {
  const auto rows = completed(ledger);
  if (rows.empty()) throw DomainError("inverse curve needs a non-empty ledger");
  double min_cost = rows.front().cost;
  double max_acc = rows.front().accuracy;
  for (const auto& r : rows) {
    min_cost = std::min(min_cost, r.cost);
    max_acc = std::max(max_acc, r.accuracy);
  }
  std::vector<InverseCurvePoint> out;
  const auto lo = static_cast<int>(std::ceil(model.normalization.log2_units_lo));
  const auto hi = static_cast<int>(std::floor(model.normalization.log2_units_hi));
  for (int k = lo; k <= hi; ++k) {
    const auto units = static_cast<std::size_t>(1) << k;
    out.push_back({units, predict_inverse(model, units, min_cost, max_acc)});
  }
  return out;
}

Json to_json(const LinearModel& m) {
  return {{"family", "linear"},
          {"slope", m.slope},
          {"intercept", m.intercept},
          {"mae", m.mae},
          {"points", m.points}};
}

Json to_json(const LogisticModel& m) {
  return {{"family", "logistic"},
          {"degree", m.degree},
          {"feature_order", "graded-lex over (normalized log2 units, dropout), constant first"},
          {"coefficients", m.coefficients},
          {"normalization", normalization_json(m.normalization)},
          {"percentile", m.percentile},
          {"label_cost_threshold", m.label_cost_threshold},
          {"train_accuracy", m.train_accuracy},
          {"holdout_accuracy", optional_number(m.holdout_accuracy)},
          {"iterations", m.iterations},
          {"converged", m.converged}};
}

Json to_json(const SurfaceSurrogate& m) {
  return {{"family", "surface"},
          {"target", to_string(m.target)},
          {"normalization", normalization_json(m.normalization)},
          {"heldout_mae", optional_number(m.heldout_mae)},
          {"train_rows", m.train_rows},
          {"heldout_rows", m.heldout_rows},
          {"network", nn::to_json(m.model)}};
}

Json to_json(const InverseModel& m) {
  return {{"family", "inverse"},
          {"caveat", kInverseCaveat},
          {"normalization", normalization_json(m.normalization)},
          {"heldout_mae", optional_number(m.heldout_mae)},
          {"train_rows", m.train_rows},
          {"heldout_rows", m.heldout_rows},
          {"network", nn::to_json(m.model)}};
}

SurfaceSurrogate surface_from_json(const Json& j) {
  try {
    if (j.at("family").get<std::string>() != "surface")
      throw SchemaError("model JSON is not a surface surrogate");
    SurfaceSurrogate m{nn::model_from_json(j.at("network")),
                       surface_target_from_string(j.at("target").get<std::string>()),
                       normalization_from_json(j.at("normalization")),
                       optional_number_from(j, "heldout_mae"),
                       j.value("train_rows", std::size_t{0}),
                       j.value("heldout_rows", std::size_t{0})};
    if (m.model.config().input_dim != 2) throw SchemaError("surface network must take 2 inputs");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed surface model JSON: ") + e.what());
  }
}

InverseModel inverse_from_json(const Json& j) {
  try {
    if (j.at("family").get<std::string>() != "inverse")
      throw SchemaError("model JSON is not an inverse model");
    InverseModel m{nn::model_from_json(j.at("network")),
                   normalization_from_json(j.at("normalization")),
                   optional_number_from(j, "heldout_mae"), j.value("train_rows", std::size_t{0}),
                   j.value("heldout_rows", std::size_t{0})};
    if (m.model.config().input_dim != 3) throw SchemaError("inverse network must take 3 inputs");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed inverse model JSON: ") + e.what());
  }
}

}  // namespace droptune::surrogates
