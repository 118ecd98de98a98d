// droptune: sweep / fit / zoom / report front end.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "droptune/data.hpp"
#include "droptune/errors.hpp"
#include "droptune/harness.hpp"
#include "droptune/report.hpp"
#include "droptune/sampler.hpp"
#include "droptune/surrogates.hpp"
#include "droptune/zoom.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace droptune;

namespace {

constexpr int kExitError = 1;
constexpr int kExitInterrupted = 3;
constexpr std::size_t kHeatmapResolution = 64;

// Resolved settings. Field names double as the config file keys.
struct RunConfig {
  std::optional<std::string> dataset;
  std::string label_column = "label";
  std::optional<std::string> synthetic;
  std::size_t synthetic_rows = 1000;
  std::optional<std::string> simulated;
  double noise = 0.0;
  std::optional<double> iqr_coefficient = 2.5;
  std::size_t hidden_layers = 6;
  std::size_t epochs = 150;
  std::size_t batch_size = 128;
  double learning_rate = 0.001;
  std::vector<double> log2_units_range{3.0, 10.0};
  std::vector<double> dropout_range{0.0, 1.0};
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  unsigned workers = 1;
  // zoom
  std::vector<std::size_t> schedule{100, 10, 5};
  double region_quantile = 0.1;
  double region_margin = 0.1;
  std::size_t grid_resolution = 64;
  std::size_t surrogate_epochs = 2000;
};

template <class T>
void take(const ordered_json& j, const char* key, T& field) {
  if (j.contains(key) && !j.at(key).is_null()) field = j.at(key).get<T>();
}

template <class T>
void take(const ordered_json& j, const char* key, std::optional<T>& field) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) field.reset();
  else field = j.at(key).get<T>();
}

void apply_config_file(const fs::path& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("config " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw SchemaError("config must be a JSON object");
  static const std::vector<std::string> known{
      "dataset", "label_column", "synthetic", "synthetic_rows", "simulated", "noise",
      "iqr_coefficient", "hidden_layers", "epochs", "batch_size", "learning_rate",
      "log2_units_range", "dropout_range", "out", "seed", "workers", "schedule",
      "region_quantile", "region_margin", "grid_resolution", "surrogate_epochs"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw SchemaError("unknown config key '" + key + "'");
  try {
    take(j, "dataset", cfg.dataset);
    take(j, "label_column", cfg.label_column);
    take(j, "synthetic", cfg.synthetic);
    take(j, "synthetic_rows", cfg.synthetic_rows);
    take(j, "simulated", cfg.simulated);
    take(j, "noise", cfg.noise);
    take(j, "iqr_coefficient", cfg.iqr_coefficient);
    take(j, "hidden_layers", cfg.hidden_layers);
    take(j, "epochs", cfg.epochs);
    take(j, "batch_size", cfg.batch_size);
    take(j, "learning_rate", cfg.learning_rate);
    take(j, "log2_units_range", cfg.log2_units_range);
    take(j, "dropout_range", cfg.dropout_range);
    take(j, "out", cfg.out);
    take(j, "seed", cfg.seed);
    take(j, "workers", cfg.workers);
    take(j, "schedule", cfg.schedule);
    take(j, "region_quantile", cfg.region_quantile);
    take(j, "region_margin", cfg.region_margin);
    take(j, "grid_resolution", cfg.grid_resolution);
    take(j, "surrogate_epochs", cfg.surrogate_epochs);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("config " + path.string() + ": " + e.what());
  }
}

// Flags are parsed into optionals and applied over the config file.
struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> dataset;
  std::optional<std::string> label_column;
  std::optional<std::string> synthetic;
  std::optional<std::size_t> synthetic_rows;
  std::optional<std::string> simulated;
  std::optional<double> noise;
  std::optional<double> iqr;
  bool no_iqr = false;
  std::optional<std::size_t> hidden_layers;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  std::vector<double> log2_units_range;
  std::vector<double> dropout_range;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::vector<std::size_t> schedule;
  std::optional<double> region_quantile;
  std::optional<double> region_margin;
  std::optional<std::size_t> grid_resolution;
  std::optional<std::size_t> surrogate_epochs;
};

void add_run_flags(CLI::App* cmd, Flags& f, bool with_zoom) {
  cmd->add_option("--config", f.config, "JSON config file; flags override its values");
  cmd->add_option("--dataset", f.dataset, "CSV dataset with a 0/1 label column");
  cmd->add_option("--label-column", f.label_column, "label column name (default label)");
  cmd->add_option("--synthetic", f.synthetic, "synthetic dataset: blobs | annulus");
  cmd->add_option("--rows", f.synthetic_rows, "synthetic dataset rows (default 1000)");
  cmd->add_option("--simulated", f.simulated, "analytic evaluator: bowl | symmetric");
  cmd->add_option("--noise", f.noise, "uniform noise half-width for --simulated");
  cmd->add_option("--iqr", f.iqr, "IQR outlier coefficient (default 2.5)");
  cmd->add_flag("--no-iqr", f.no_iqr, "skip outlier filtering");
  cmd->add_option("--hidden-layers", f.hidden_layers, "hidden layers per network (default 6)");
  cmd->add_option("--epochs", f.epochs, "training epochs per trial (default 150)");
  cmd->add_option("--batch-size", f.batch_size, "minibatch size (default 128)");
  cmd->add_option("--learning-rate", f.learning_rate, "Adam learning rate (default 0.001)");
  cmd->add_option("--log2-units", f.log2_units_range, "log2(hidden units) range LO,HI")
      ->expected(2)
      ->delimiter(',');
  cmd->add_option("--dropout", f.dropout_range, "dropout range LO,HI")->expected(2)->delimiter(',');
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--seed", f.seed, "master seed (required)");
  cmd->add_option("--workers", f.workers, "parallel trial workers");
  if (with_zoom) {
    cmd->add_option("--schedule", f.schedule, "per-round budgets, e.g. 100,10,5")->delimiter(',');
    cmd->add_option("--quantile", f.region_quantile, "low-cost quantile kept per round");
    cmd->add_option("--margin", f.region_margin, "region margin as a fraction of the span");
    cmd->add_option("--resolution", f.grid_resolution, "surrogate grid resolution");
    cmd->add_option("--surrogate-epochs", f.surrogate_epochs, "surface network epochs");
  }
}

template <class T>
void override_with(std::optional<T>& field, const std::optional<T>& flag) {
  if (flag) field = flag;
}
template <class T>
void override_with(T& field, const std::optional<T>& flag) {
  if (flag) field = *flag;
}

RunConfig resolve(const Flags& f) {
  RunConfig cfg;
  if (f.config) apply_config_file(*f.config, cfg);
  override_with(cfg.dataset, f.dataset);
  override_with(cfg.label_column, f.label_column);
  override_with(cfg.synthetic, f.synthetic);
  override_with(cfg.synthetic_rows, f.synthetic_rows);
  override_with(cfg.simulated, f.simulated);
  override_with(cfg.noise, f.noise);
  override_with(cfg.iqr_coefficient, f.iqr);
  if (f.no_iqr) cfg.iqr_coefficient.reset();
  override_with(cfg.hidden_layers, f.hidden_layers);
  override_with(cfg.epochs, f.epochs);
  override_with(cfg.batch_size, f.batch_size);
  override_with(cfg.learning_rate, f.learning_rate);
  if (!f.log2_units_range.empty()) cfg.log2_units_range = f.log2_units_range;
  if (!f.dropout_range.empty()) cfg.dropout_range = f.dropout_range;
  override_with(cfg.out, f.out);
  override_with(cfg.seed, f.seed);
  override_with(cfg.workers, f.workers);
  if (!f.schedule.empty()) cfg.schedule = f.schedule;
  override_with(cfg.region_quantile, f.region_quantile);
  override_with(cfg.region_margin, f.region_margin);
  override_with(cfg.grid_resolution, f.grid_resolution);
  override_with(cfg.surrogate_epochs, f.surrogate_epochs);
  return cfg;
}

SearchSpace space_of(const RunConfig& cfg) {
  if (cfg.log2_units_range.size() != 2 || cfg.dropout_range.size() != 2)
    throw DomainError("ranges need exactly two values");
  SearchSpace space{{cfg.log2_units_range[0], cfg.log2_units_range[1]},
                    {cfg.dropout_range[0], cfg.dropout_range[1]}};
  space.validate();
  return space;
}

void validate(const RunConfig& cfg) {
  if (!cfg.seed) throw DomainError("--seed is required for commands that sample");
  const int sources = static_cast<int>(cfg.dataset.has_value()) +
                      static_cast<int>(cfg.synthetic.has_value()) +
                      static_cast<int>(cfg.simulated.has_value());
  if (sources != 1)
    throw DomainError("choose exactly one of --dataset, --synthetic, --simulated");
  if (cfg.dataset && !fs::exists(*cfg.dataset))
    throw IoError("dataset not found: " + *cfg.dataset);
  if (cfg.workers < 1) throw DomainError("--workers must be >= 1");
  space_of(cfg);
}

std::unique_ptr<Evaluator> make_evaluator(const RunConfig& cfg) {
  if (cfg.simulated) {
    SimulatedShape shape;
    if (*cfg.simulated == "bowl") shape = SimulatedShape::bowl;
    else if (*cfg.simulated == "symmetric") shape = SimulatedShape::dropout_symmetric;
    else throw DomainError("unknown simulated evaluator '" + *cfg.simulated + "'");
    return std::make_unique<SimulatedEvaluator>(shape, cfg.noise);
  }
  data::Dataset ds;
  if (cfg.synthetic) {
    ds = data::make_synthetic(data::synthetic_kind_from_string(*cfg.synthetic), cfg.synthetic_rows,
                              *cfg.seed);
  } else {
    auto loaded = data::load_csv(*cfg.dataset, cfg.label_column);
    if (loaded.dropped_rows > 0)
      std::cerr << "dropped " << loaded.dropped_rows << " rows with missing values\n";
    ds = std::move(loaded.dataset);
  }
  if (cfg.iqr_coefficient) {
    const auto before = ds.rows();
    ds = data::iqr_filter(ds, *cfg.iqr_coefficient);
    if (ds.rows() != before)
      std::cerr << "outlier filter removed " << (before - ds.rows()) << " rows\n";
  }
  auto parts = data::split(ds, 0.2, *cfg.seed);
  auto standardized = data::standardize(parts.train, {parts.val});
  data::Split ready{std::move(standardized.train), std::move(standardized.others.front())};

  nn::TrainConfig tcfg;
  tcfg.epochs = cfg.epochs;
  tcfg.batch_size = cfg.batch_size;
  tcfg.adam.learning_rate = cfg.learning_rate;
  tcfg.validate();
  MlpTemplate tmpl;
  tmpl.hidden_layers = cfg.hidden_layers;
  return std::make_unique<TrainEvaluator>(train_evaluator(ready, tmpl, tcfg));
}

void write_json(const fs::path& path, const ordered_json& j) {
  report::write_text(path, j.dump(2) + "\n");
}

void emit_ledger_artifacts(const std::vector<TrialRecord>& ledger, const SearchRegion& region,
                           const fs::path& out) {
  report::emit_scatter_csv(ledger, out / "scatter.csv");
  if (completed(ledger).empty()) {
    std::cerr << "no completed trials; heatmaps not written\n";
    return;
  }
  using report::Metric;
  report::emit_heatmap_svg(
      report::nearest_trial_heatmap(ledger, region, kHeatmapResolution, Metric::cost, "Cost"),
      report::overlay_points(ledger, Metric::cost), out / "cost_heatmap.svg");
  report::emit_heatmap_svg(report::nearest_trial_heatmap(ledger, region, kHeatmapResolution,
                                                         Metric::accuracy, "Accuracy"),
                           report::overlay_points(ledger, Metric::accuracy),
                           out / "accuracy_heatmap.svg");
}

void print_summary(const std::vector<TrialRecord>& ledger) {
  const auto done = completed(ledger);
  std::printf("trials: %zu completed, %zu skipped\n", done.size(), ledger.size() - done.size());
  if (done.empty()) return;
  double min_cost = done.front().cost;
  double max_acc = done.front().accuracy;
  for (const auto& r : done) {
    min_cost = std::min(min_cost, r.cost);
    max_acc = std::max(max_acc, r.accuracy);
  }
  std::printf("min cost: %.6f\nmax accuracy: %.4f\n", min_cost, max_acc);
}

struct SweepArgs {
  Flags flags;
  std::size_t n = 0;
  bool timing = false;
  bool fresh = false;
  std::optional<std::size_t> stop_after;
};

int run_sweep(const SweepArgs& args) {
  const RunConfig cfg = resolve(args.flags);
  validate(cfg);
  const fs::path out = cfg.out;
  fs::create_directories(out);
  const fs::path ledger_path = out / "ledger.jsonl";
  if (args.fresh) fs::remove(ledger_path);

  const auto evaluator = make_evaluator(cfg);
  const auto space = space_of(cfg);
  RunOptions opts;
  opts.workers = cfg.workers;
  opts.record_timing = args.timing;
  opts.stop_after = args.stop_after;
  opts.on_record = [](const TrialRecord& r) {
    if (r.is_skipped())
      std::fprintf(stderr, "trial %llu skipped: %s\n",
                   static_cast<unsigned long long>(r.trial_index), r.skipped->c_str());
  };

  const auto start = std::chrono::steady_clock::now();
  const auto ledger = run_trials(space, args.n, *evaluator, *cfg.seed, ledger_path, opts);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::printf("ledger: %s\n", ledger_path.string().c_str());
  print_summary(ledger);
  std::printf("wall time: %.2f s\n", wall);
  if (ledger.size() < args.n) {
    std::fprintf(stderr, "stopped after %zu of %zu trials; rerun to resume\n", ledger.size(),
                 args.n);
    return kExitInterrupted;
  }
  emit_ledger_artifacts(ledger, space, out);
  return 0;
}

struct FitArgs {
  std::string ledger;
  std::string family;
  std::optional<std::string> out;
  std::optional<double> percentile;
  std::optional<double> threshold;
  int degree = 3;
  std::string target = "cost";
  std::uint64_t seed = 0;
  std::optional<std::size_t> epochs;
  std::size_t resolution = kHeatmapResolution;
};

surrogates::ThresholdSpec threshold_of(const FitArgs& a) {
  if (a.percentile && a.threshold) throw DomainError("give --percentile or --threshold, not both");
  if (a.threshold) return surrogates::ThresholdSpec::numeric(*a.threshold);
  return surrogates::ThresholdSpec::percentile(a.percentile.value_or(25.0));
}

std::string describe(const surrogates::ThresholdSpec& t) {
  char buf[64];
  if (t.kind == surrogates::ThresholdKind::numeric)
    std::snprintf(buf, sizeof buf, "cost threshold %g", t.value);
  else
    std::snprintf(buf, sizeof buf, "percentile %g", t.value);
  return buf;
}

SearchRegion ledger_region(const std::vector<TrialRecord>& ledger) {
  SearchSpace space;
  double lo = space.log2_units.hi;
  double hi = space.log2_units.lo;
  for (const auto& r : ledger) {
    const double c = std::log2(static_cast<double>(r.point.hidden_units));
    lo = std::min(lo, std::floor(c));
    hi = std::max(hi, std::ceil(c));
  }
  if (lo < hi) space.log2_units = {lo, hi};
  return space;
}

int run_fit(const FitArgs& a) {
  const fs::path ledger_path = a.ledger;
  auto contents = load_ledger(ledger_path);
  if (contents.warning) std::cerr << "warning: " << *contents.warning << "\n";
  const auto& ledger = contents.records;
  if (ledger.empty()) throw DomainError("ledger is empty");
  const fs::path out = a.out ? fs::path(*a.out) : ledger_path.parent_path();
  if (!out.empty()) fs::create_directories(out);

  surrogates::SurrogateTraining training;
  training.seed = a.seed;
  if (a.epochs) training.tcfg.epochs = *a.epochs;

  ordered_json metrics;
  metrics["family"] = a.family;
  if (a.family == "linear") {
    const auto spec = threshold_of(a);
    std::vector<TrialRecord> subset;
    try {
      subset = surrogates::select_by_threshold(ledger, spec);
    } catch (const DegenerateSelectionError&) {
      throw DegenerateSelectionError(describe(spec) + " selects no trials");
    }
    const auto model = surrogates::fit_linear(subset);
    write_json(out / "model_linear.json", surrogates::to_json(model));
    report::emit_linear_fit_plot(subset, model, out / "linear_fit.svg");
    metrics["threshold"] = describe(spec);
    metrics["points"] = model.points;
    metrics["mae"] = model.mae;
  } else if (a.family == "logistic") {
    if (a.threshold) throw DomainError("logistic labels use --percentile");
    const double p = a.percentile.value_or(25.0);
    surrogates::LogisticOptions opts;
    opts.seed = a.seed;
    const auto model = surrogates::fit_logistic(ledger, p, a.degree, opts);
    write_json(out / "model_logistic.json", surrogates::to_json(model));
    const auto region = ledger_region(ledger);
    report::HeatmapSpec spec;
    spec.region = region;
    spec.resolution = a.resolution;
    spec.title = "Logistic probability of a low-cost trial (degree " + std::to_string(a.degree) + ")";
    spec.value_label = "P(superior)";
    spec.values.resize(a.resolution * a.resolution);
    for (std::size_t row = 0; row < a.resolution; ++row)
      for (std::size_t col = 0; col < a.resolution; ++col)
        spec.values[row * a.resolution + col] = model.probability_log2(
            surrogates::lattice_coordinate(region.log2_units, col, a.resolution),
            surrogates::lattice_coordinate(region.dropout, row, a.resolution));
    report::emit_heatmap_svg(spec, report::overlay_points(ledger, report::Metric::cost),
                             out / "logistic_boundary.svg");
    metrics["degree"] = a.degree;
    metrics["percentile"] = p;
    metrics["train_accuracy"] = model.train_accuracy;
    if (model.holdout_accuracy) metrics["holdout_accuracy"] = *model.holdout_accuracy;
    metrics["converged"] = model.converged;
  } else if (a.family == "surface") {
    const auto target = surrogates::surface_target_from_string(a.target);
    const auto model = surrogates::fit_surface(ledger, target, training);
    const std::string stem = "surface_" + a.target;
    write_json(out / ("model_" + stem + ".json"), surrogates::to_json(model));
    const auto grid = surrogates::predict_surface(model, ledger_region(ledger), a.resolution);
    report::emit_grid_csv(grid, out / (stem + "_grid.csv"));
    const auto metric = target == surrogates::SurfaceTarget::cost ? report::Metric::cost
                                                                  : report::Metric::accuracy;
    auto overlay = report::overlay_points(ledger, metric);
    if (metric == report::Metric::accuracy)
      for (auto& p : overlay) p.value /= 100.0;
    report::emit_heatmap_svg(
        report::heatmap_from_grid(grid, "Surface surrogate: " + a.target,
                                  target == surrogates::SurfaceTarget::cost ? "cost" : "accuracy"),
        overlay, out / (stem + ".svg"));
    metrics["target"] = a.target;
    metrics["train_rows"] = model.train_rows;
    metrics["heldout_rows"] = model.heldout_rows;
    metrics["heldout_mae"] = model.heldout_mae ? ordered_json(*model.heldout_mae) : ordered_json();
  } else if (a.family == "inverse") {
    std::cerr << "caveat: " << surrogates::kInverseCaveat << "\n";
    const auto model = surrogates::fit_inverse(ledger, training);
    write_json(out / "model_inverse.json", surrogates::to_json(model));
    report::emit_inverse_curve_csv(surrogates::inverse_curve(model, ledger),
                                   out / "inverse_curve.csv");
    metrics["train_rows"] = model.train_rows;
    metrics["heldout_rows"] = model.heldout_rows;
    metrics["heldout_mae"] = model.heldout_mae ? ordered_json(*model.heldout_mae) : ordered_json();
  } else {
    throw DomainError("unknown family '" + a.family + "'");
  }
  std::cout << metrics.dump() << std::endl;
  return 0;
}

struct ZoomArgs {
  Flags flags;
  bool resume = false;
  std::vector<double> region;
  std::optional<std::size_t> max_rounds;
};

int run_zoom(const ZoomArgs& args) {
  const RunConfig cfg = resolve(args.flags);
  validate(cfg);
  const fs::path out = cfg.out;
  fs::create_directories(out);
  const auto evaluator = make_evaluator(cfg);

  zoom::ZoomConfig zc;
  zc.budget_schedule = cfg.schedule;
  zc.region_quantile = cfg.region_quantile;
  zc.region_margin = cfg.region_margin;
  zc.grid_resolution = cfg.grid_resolution;
  zc.master_seed = *cfg.seed;
  zc.surrogate.tcfg.epochs = cfg.surrogate_epochs;
  zc.validate();

  zoom::ZoomRunOptions opts;
  opts.ledger_dir = out;
  opts.max_rounds = args.max_rounds;
  opts.workers = cfg.workers;
  const fs::path report_path = out / "zoom_report.json";
  if (args.resume) {
    std::ifstream in(report_path);
    if (!in) throw IoError("cannot resume: " + report_path.string() + " not found");
    opts.resume_from = zoom::report_from_json(ordered_json::parse(in), out);
  }
  if (!args.region.empty()) {
    if (args.region.size() != 4)
      throw DomainError("--region takes LOG2_LO,LOG2_HI,DROPOUT_LO,DROPOUT_HI");
    opts.region_override =
        SearchRegion{{args.region[0], args.region[1]}, {args.region[2], args.region[3]}};
  }

  const auto rep = zoom::zoom_search(space_of(cfg), zc, *evaluator, opts);
  write_json(report_path, zoom::to_json(rep));
  for (const auto& round : rep.rounds) {
    if (completed(round.trials).empty()) continue;
    report::emit_heatmap_svg(
        report::nearest_trial_heatmap(round.trials, round.region, kHeatmapResolution,
                                      report::Metric::cost,
                                      "Round " + std::to_string(round.index) + " cost"),
        report::overlay_points(round.trials, report::Metric::cost),
        out / ("round_" + std::to_string(round.index) + "_cost.svg"));
  }

  std::printf("report: %s\nrounds: %zu\nevaluations: %zu\n", report_path.string().c_str(),
              rep.rounds.size(), rep.evaluations());
  if (rep.best_observed) {
    const auto& b = rep.best_observed->point;
    std::printf("best: units=%zu dropout=%.6f cost=%.6f accuracy=%.4f\n", b.hidden_units,
                b.dropout_rate, rep.best_observed->cost, rep.best_observed->accuracy);
  } else {
    std::printf("best: none (all trials skipped)\n");
  }
  if (rep.best_predicted)
    std::printf("predicted best: units=%zu dropout=%.6f\n", rep.best_predicted->hidden_units,
                rep.best_predicted->dropout_rate);
  return 0;
}

struct ReportArgs {
  std::string ledger;
  std::optional<std::string> out;
  std::vector<double> log2_units_range;
  std::vector<double> dropout_range;
};

int run_report(const ReportArgs& a) {
  const fs::path ledger_path = a.ledger;
  auto contents = load_ledger(ledger_path);
  if (contents.warning) std::cerr << "warning: " << *contents.warning << "\n";
  if (contents.records.empty()) throw DomainError("ledger is empty");
  const fs::path out = a.out ? fs::path(*a.out) : ledger_path.parent_path();
  if (!out.empty()) fs::create_directories(out);
  SearchRegion region = ledger_region(contents.records);
  if (!a.log2_units_range.empty()) region.log2_units = {a.log2_units_range[0], a.log2_units_range[1]};
  if (!a.dropout_range.empty()) region.dropout = {a.dropout_range[0], a.dropout_range[1]};
  region.validate();
  emit_ledger_artifacts(contents.records, region, out);
  print_summary(contents.records);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"droptune: random-search sweeps, surrogate fits and zoom tuning of MLP width and dropout"};
  app.require_subcommand(1);

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "sample and evaluate n random configurations");
  add_run_flags(sweep_cmd, sweep.flags, false);
  sweep_cmd->add_option("--n", sweep.n, "number of trials")->required();
  sweep_cmd->add_flag("--timing", sweep.timing, "record wall_seconds per trial");
  sweep_cmd->add_flag("--fresh", sweep.fresh, "discard an existing ledger instead of resuming");
  sweep_cmd->add_option("--stop-after", sweep.stop_after, "stop after this many new trials");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "fit a surrogate model to a ledger");
  fit_cmd->add_option("--ledger", fit.ledger, "ledger.jsonl")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--family", fit.family, "linear | logistic | surface | inverse")
      ->required()
      ->check(CLI::IsMember({"linear", "logistic", "surface", "inverse"}));
  fit_cmd->add_option("--out", fit.out, "output directory (default: the ledger's)");
  fit_cmd->add_option("--percentile", fit.percentile, "selection/label percentile (default 25)");
  fit_cmd->add_option("--threshold", fit.threshold, "numeric cost threshold (linear only)");
  fit_cmd->add_option("--degree", fit.degree, "logistic polynomial degree (default 3)");
  fit_cmd->add_option("--target", fit.target, "surface target: cost | accuracy")
      ->check(CLI::IsMember({"cost", "accuracy"}));
  fit_cmd->add_option("--seed", fit.seed, "seed for holdout split and network init (default 0)");
  fit_cmd->add_option("--epochs", fit.epochs, "surface/inverse training epochs (default 2000)");
  fit_cmd->add_option("--resolution", fit.resolution, "plot grid resolution");

  ZoomArgs zoom_args;
  auto* zoom_cmd = app.add_subcommand("zoom", "surrogate-guided region zooming");
  add_run_flags(zoom_cmd, zoom_args.flags, true);
  zoom_cmd->add_flag("--resume", zoom_args.resume, "continue from OUT/zoom_report.json");
  zoom_cmd->add_option("--region", zoom_args.region,
                       "override the next round's region: LOG2_LO,LOG2_HI,DROPOUT_LO,DROPOUT_HI")
      ->delimiter(',');
  zoom_cmd->add_option("--max-rounds", zoom_args.max_rounds, "run at most this many new rounds");

  ReportArgs rep;
  auto* report_cmd = app.add_subcommand("report", "regenerate CSV and SVG artifacts from a ledger");
  report_cmd->add_option("--ledger", rep.ledger, "ledger.jsonl")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--out", rep.out, "output directory (default: the ledger's)");
  report_cmd->add_option("--log2-units", rep.log2_units_range, "plot range LO,HI")
      ->expected(2)
      ->delimiter(',');
  report_cmd->add_option("--dropout", rep.dropout_range, "plot range LO,HI")
      ->expected(2)
      ->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sweep_cmd) return run_sweep(sweep);
    if (*fit_cmd) return run_fit(fit);
    if (*zoom_cmd) return run_zoom(zoom_args);
    if (*report_cmd) return run_report(rep);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return kExitError;
}
