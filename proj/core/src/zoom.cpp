#include "droptune/zoom.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "droptune/errors.hpp"

namespace droptune::zoom {

namespace {

using Json = nlohmann::ordered_json;

Interval clip(const Interval& v, const Interval& bounds) {
  return {std::clamp(v.lo, bounds.lo, bounds.hi), std::clamp(v.hi, bounds.lo, bounds.hi)};
}

Interval widen(const Interval& v, double amount, const Interval& bounds) {
  return clip({v.lo - amount, v.hi + amount}, bounds);
}

Json region_json(const SearchRegion& r) {
  return {{"log2_units", {r.log2_units.lo, r.log2_units.hi}},
          {"dropout", {r.dropout.lo, r.dropout.hi}}};
}

SearchRegion region_from_json(const Json& j) {
  SearchRegion r;
  r.log2_units = {j.at("log2_units").at(0).get<double>(), j.at("log2_units").at(1).get<double>()};
  r.dropout = {j.at("dropout").at(0).get<double>(), j.at("dropout").at(1).get<double>()};
  return r;
}

Json point_json(const HyperPoint& p) {
  return {{"units", p.hidden_units}, {"dropout", p.dropout_rate}};
}

HyperPoint point_from_json(const Json& j) {
  return {j.at("units").get<std::size_t>(), j.at("dropout").get<double>()};
}

// Lowest predicted cell; ties go to fewer units, then lower dropout.
HyperPoint grid_argmin(const surrogates::SurfaceGrid& grid) {
  std::size_t best_row = 0;
  std::size_t best_col = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t col = 0; col < grid.resolution; ++col) {
    for (std::size_t row = 0; row < grid.resolution; ++row) {
      const double v = grid.value(row, col);
      if (v < best) {
        best = v;
        best_row = row;
        best_col = col;
      }
    }
  }
  HyperPoint p;
  p.hidden_units = std::max<std::size_t>(1, units_from_exponent(grid.log2_units_at(best_col)));
  p.dropout_rate = std::min(grid.dropout_at(best_row), std::nextafter(1.0, 0.0));
  return p;
}

bool shrunk(const SearchRegion& r, const ZoomConfig& cfg) {
  return r.log2_units.span() < cfg.min_log2_units_span && r.dropout.span() < cfg.min_dropout_span;
}

}  // namespace

void ZoomConfig::validate() const {
  if (budget_schedule.empty()) throw DomainError("zoom schedule is empty");
  for (std::size_t i = 0; i < budget_schedule.size(); ++i) {
    if (budget_schedule[i] < 1) throw DomainError("zoom budgets must be positive");
    if (i > 0 && budget_schedule[i] > budget_schedule[i - 1])
      throw DomainError("zoom budgets must be non-increasing");
  }
  if (!(region_quantile > 0.0 && region_quantile < 1.0))
    throw DomainError("region quantile must lie in (0, 1)");
  if (!(region_margin >= 0.0)) throw DomainError("region margin must be >= 0");
  if (grid_resolution < 2) throw DomainError("grid resolution must be >= 2");
}

std::size_t ZoomReport::evaluations() const {
  std::size_t n = 0;
  for (const auto& r : rounds) n += r.trials.size();
  return n;
}

SearchRegion select_region(const surrogates::SurfaceGrid& grid, double quantile, double margin) {
  if (grid.values.empty() || grid.resolution == 0) throw DomainError("empty prediction grid");
  std::vector<double> sorted = grid.values;
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(quantile * n)));
  const double threshold = sorted[std::min(rank, sorted.size()) - 1];

  const std::size_t res = grid.resolution;
  const auto& region = grid.region;
  const double half_u = res > 1 ? 0.5 * region.log2_units.span() / static_cast<double>(res - 1) : 0.0;
  const double half_d = res > 1 ? 0.5 * region.dropout.span() / static_cast<double>(res - 1) : 0.0;

  double u_lo = std::numeric_limits<double>::infinity();
  double u_hi = -u_lo;
  double d_lo = u_lo;
  double d_hi = -u_lo;
  for (std::size_t row = 0; row < res; ++row) {
    for (std::size_t col = 0; col < res; ++col) {
      if (!(grid.value(row, col) <= threshold)) continue;
      const double u = grid.log2_units_at(col);
      const double d = grid.dropout_at(row);
      u_lo = std::min(u_lo, u - half_u);
      u_hi = std::max(u_hi, u + half_u);
      d_lo = std::min(d_lo, d - half_d);
      d_hi = std::max(d_hi, d + half_d);
    }
  }
  if (res == 1) return region;

  SearchRegion out;
  out.log2_units = widen({u_lo, u_hi}, margin * region.log2_units.span(), region.log2_units);
  out.dropout = widen({d_lo, d_hi}, margin * region.dropout.span(), region.dropout);
  return out;
}

SearchRegion region_around(const SearchRegion& region, const HyperPoint& point, double margin) {
  const double c = std::log2(static_cast<double>(point.hidden_units));
  SearchRegion out;
  out.log2_units = widen({c, c}, margin * region.log2_units.span(), region.log2_units);
  out.dropout = widen({point.dropout_rate, point.dropout_rate}, margin * region.dropout.span(),
                      region.dropout);
  // A zero-margin box would be empty; fall back to the parent axis.
  if (!(out.log2_units.lo < out.log2_units.hi)) out.log2_units = region.log2_units;
  if (!(out.dropout.lo < out.dropout.hi)) out.dropout = region.dropout;
  return out;
}

bool better_trial(const TrialRecord& a, const TrialRecord& b) {
  if (a.is_skipped() != b.is_skipped()) return !a.is_skipped();
  if (a.cost != b.cost) return a.cost < b.cost;
  if (a.point.hidden_units != b.point.hidden_units)
    return a.point.hidden_units < b.point.hidden_units;
  return a.point.dropout_rate < b.point.dropout_rate;
}

std::optional<TrialRecord> best_trial(const std::vector<TrialRecord>& trials) {
  std::optional<TrialRecord> best;
  for (const auto& t : trials) {
    if (t.is_skipped()) continue;
    if (!best || better_trial(t, *best)) best = t;
  }
  return best;
}

std::string round_ledger_name(std::size_t round) {
  return "round_" + std::to_string(round) + ".jsonl";
}

ZoomReport zoom_search(const SearchSpace& space, const ZoomConfig& cfg, const Evaluator& evaluator,
                       const ZoomRunOptions& options) {
  space.validate();
  cfg.validate();

  ZoomReport report = options.resume_from.value_or(ZoomReport{});
  if (report.rounds.size() > cfg.budget_schedule.size())
    throw DomainError("resumed report has more rounds than the schedule");

  std::vector<TrialRecord> history;
  for (const auto& r : report.rounds)
    history.insert(history.end(), r.trials.begin(), r.trials.end());

  SearchRegion parent = report.rounds.empty() ? space : report.rounds.back().region;
  SearchRegion next = report.rounds.empty() ? space : report.rounds.back().selected;
  if (options.region_override) {
    next.log2_units = clip(options.region_override->log2_units, parent.log2_units);
    next.dropout = clip(options.region_override->dropout, parent.dropout);
    next.validate();
  }

  std::size_t new_rounds = 0;
  while (report.rounds.size() < cfg.budget_schedule.size() && !report.shrink_terminated) {
    if (options.max_rounds && new_rounds >= *options.max_rounds) break;
    ZoomRound round;
    round.index = report.rounds.size();
    round.region = next;
    round.budget = cfg.budget_schedule[round.index];
    round.round_seed = derive_trial_seed(cfg.master_seed, round.index);

    std::filesystem::path ledger;
    if (options.ledger_dir) ledger = *options.ledger_dir / round_ledger_name(round.index);
    RunOptions run_opts;
    run_opts.workers = options.workers;
    round.trials = run_trials(round.region, round.budget, evaluator, round.round_seed, ledger, run_opts);
    history.insert(history.end(), round.trials.begin(), round.trials.end());

    std::vector<TrialRecord> in_region;
    for (const auto& t : history)
      if (!t.is_skipped() && round.region.contains(t.point)) in_region.push_back(t);
    round.fit_rows = in_region.size();

    try {
      surrogates::SurrogateTraining training = cfg.surrogate;
      training.seed = derive_trial_seed(round.round_seed, 7);
      const auto surface = surrogates::fit_surface(in_region, surrogates::SurfaceTarget::cost, training);
      const auto grid = surrogates::predict_surface(surface, round.region, cfg.grid_resolution);
      round.surrogate_mae = surface.heldout_mae;
      round.selected = select_region(grid, cfg.region_quantile, cfg.region_margin);
      round.predicted_best = grid_argmin(grid);
    } catch (const Error& e) {
      round.fallback = true;
      round.fallback_reason = e.what();
      const auto best = best_trial(in_region);
      round.selected = best ? region_around(round.region, best->point, cfg.region_margin) : round.region;
    }

    parent = round.region;
    next = round.selected;
    if (shrunk(next, cfg)) report.shrink_terminated = true;
    report.rounds.push_back(std::move(round));
    ++new_rounds;
  }

  report.best_observed = best_trial(history);
  report.best_predicted.reset();
  for (const auto& r : report.rounds)
    if (r.predicted_best) report.best_predicted = r.predicted_best;
  return report;
}

Json to_json(const ZoomReport& report) {
  Json rounds = Json::array();
  for (const auto& r : report.rounds) {
    Json round = {{"round", r.index},
                  {"region", region_json(r.region)},
                  {"budget", r.budget},
                  {"round_seed", std::to_string(r.round_seed)},
                  {"ledger", round_ledger_name(r.index)},
                  {"trials", r.trials.size()},
                  {"fit_rows", r.fit_rows},
                  {"surrogate_mae", r.surrogate_mae ? Json(*r.surrogate_mae) : Json(nullptr)},
                  {"fallback", r.fallback},
                  {"fallback_reason", r.fallback_reason},
                  {"selected", region_json(r.selected)},
                  {"predicted_best", r.predicted_best ? point_json(*r.predicted_best) : Json(nullptr)}};
    const auto best = best_trial(r.trials);
    round["best_in_round"] = best ? Json::parse(to_ledger_line(*best)) : Json(nullptr);
    rounds.push_back(std::move(round));
  }
  return {{"rounds", rounds},
          {"evaluations", report.evaluations()},
          {"shrink_terminated", report.shrink_terminated},
          {"best_observed",
           report.best_observed ? Json::parse(to_ledger_line(*report.best_observed)) : Json(nullptr)},
          {"best_predicted", report.best_predicted ? point_json(*report.best_predicted) : Json(nullptr)}};
}

ZoomReport report_from_json(const Json& j, const std::filesystem::path& ledger_dir) {
  ZoomReport report;
  try {
    for (const auto& jr : j.at("rounds")) {
      ZoomRound r;
      r.index = jr.at("round").get<std::size_t>();
      if (r.index != report.rounds.size()) throw IntegrityError("zoom rounds out of order");
      r.region = region_from_json(jr.at("region"));
      r.budget = jr.at("budget").get<std::size_t>();
      r.round_seed = std::stoull(jr.at("round_seed").get<std::string>());
      r.fit_rows = jr.at("fit_rows").get<std::size_t>();
      if (!jr.at("surrogate_mae").is_null()) r.surrogate_mae = jr.at("surrogate_mae").get<double>();
      r.fallback = jr.at("fallback").get<bool>();
      r.fallback_reason = jr.at("fallback_reason").get<std::string>();
      r.selected = region_from_json(jr.at("selected"));
      if (!jr.at("predicted_best").is_null()) r.predicted_best = point_from_json(jr.at("predicted_best"));
      const auto path = ledger_dir / jr.at("ledger").get<std::string>();
      if (!std::filesystem::exists(path))
        throw IntegrityError("zoom round ledger " + path.string() + " is missing");
      r.trials = load_ledger(path).records;
      if (r.trials.size() != jr.at("trials").get<std::size_t>())
        throw IntegrityError("zoom round ledger " + path.string() + " has the wrong trial count");
      report.rounds.push_back(std::move(r));
    }
    report.shrink_terminated = j.at("shrink_terminated").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed zoom report: ") + e.what());
  } catch (const std::logic_error& e) {
    throw SchemaError(std::string("malformed zoom report: ") + e.what());
  }
  std::vector<TrialRecord> all;
  for (const auto& r : report.rounds) all.insert(all.end(), r.trials.begin(), r.trials.end());
  report.best_observed = best_trial(all);
  for (const auto& r : report.rounds)
    if (r.predicted_best) report.best_predicted = r.predicted_best;
  return report;
}

}  // namespace droptune::zoom
