#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>

#include "droptune/errors.hpp"
#include "droptune/harness.hpp"
#include "droptune/zoom.hpp"
#include "support/test_support.hpp"

namespace droptune::zoom {
namespace {

using testing::TempDir;

class CountingEvaluator final : public Evaluator {
 public:
  explicit CountingEvaluator(const Evaluator& inner) : inner_(inner) {}
  EvalOutcome evaluate(const HyperPoint& p, std::uint64_t seed) const override {
    ++calls_;
    return inner_.evaluate(p, seed);
  }
  std::size_t calls() const { return calls_.load(); }

 private:
  const Evaluator& inner_;
  mutable std::atomic<std::size_t> calls_{0};
};

bool inside(const SearchRegion& inner, const SearchRegion& outer) {
  return inner.log2_units.lo >= outer.log2_units.lo && inner.log2_units.hi <= outer.log2_units.hi &&
         inner.dropout.lo >= outer.dropout.lo && inner.dropout.hi <= outer.dropout.hi;
}

surrogates::SurfaceGrid grid_of(const SearchRegion& region, std::size_t res,
                                const std::function<double(double, double)>& f) {
  surrogates::SurfaceGrid g;
  g.region = region;
  g.resolution = res;
  g.values.resize(res * res);
  for (std::size_t r = 0; r < res; ++r)
    for (std::size_t c = 0; c < res; ++c)
      g.values[r * res + c] = f(g.log2_units_at(c), g.dropout_at(r));
  return g;
}

ZoomConfig seeded(std::uint64_t seed) {
  ZoomConfig cfg;
  cfg.master_seed = seed;
  return cfg;
}

TEST(SelectRegion, SingleMinimumCellWithoutMargin) {
  const SearchRegion region{{3.0, 7.0}, {0.0, 0.8}};
  const auto g = grid_of(region, 5, [](double u, double d) {
    return (std::abs(u - 4.0) < 1e-9 && std::abs(d - 0.4) < 1e-9) ? 0.0 : 1.0;
  });
  const auto box = select_region(g, 0.01, 0.0);
  EXPECT_DOUBLE_EQ(box.log2_units.lo, 3.5);
  EXPECT_DOUBLE_EQ(box.log2_units.hi, 4.5);
  EXPECT_NEAR(box.dropout.lo, 0.3, 1e-12);
  EXPECT_NEAR(box.dropout.hi, 0.5, 1e-12);
}

TEST(SelectRegion, ConstantGridKeepsTheWholeRegion) {
  const SearchRegion region{{4.0, 8.0}, {0.1, 0.6}};
  const auto box = select_region(grid_of(region, 16, [](double, double) { return 0.3; }), 0.1, 0.1);
  EXPECT_EQ(box, region);
}

TEST(SelectRegion, BowlSublevelBoxContainsTheMinimum) {
  const SimulatedEvaluator bowl;
  const auto g = grid_of(SearchRegion{}, 64, [&](double u, double d) { return bowl.true_cost(u, d); });
  const auto box = select_region(g, 0.1, 0.1);
  EXPECT_TRUE(box.log2_units.contains(6.5) && box.dropout.contains(0.3));
  EXPECT_TRUE(inside(box, SearchRegion{}));
  EXPECT_LT(box.log2_units.span(), 7.0);
}

TEST(SelectRegion, RegionAroundClipsToParent) {
  const SearchRegion parent{{3.0, 10.0}, {0.0, 1.0}};
  const auto box = region_around(parent, HyperPoint{8, 0.05}, 0.1);
  EXPECT_DOUBLE_EQ(box.log2_units.lo, 3.0);
  EXPECT_NEAR(box.log2_units.hi, 3.7, 1e-12);
  EXPECT_DOUBLE_EQ(box.dropout.lo, 0.0);
  EXPECT_NEAR(box.dropout.hi, 0.15, 1e-12);
}

TEST(BestTrial, TiesPreferSmallerThenLessRegularized) {
  TrialRecord a;
  a.point = {64, 0.3};
  a.cost = 0.1;
  TrialRecord b = a;
  b.point = {32, 0.5};
  TrialRecord c = b;
  c.point = {32, 0.2};
  TrialRecord skipped = a;
  skipped.cost = 0.0;
  skipped.skipped = "diverged";
  EXPECT_EQ(best_trial({a, b, c, skipped})->point, c.point);
  EXPECT_FALSE(best_trial({skipped}));
}

TEST(Config, ValidationRules) {
  ZoomConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.budget_schedule = {};
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg.budget_schedule = {5, 10};
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg.budget_schedule = {10, 0};
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg = ZoomConfig{};
  cfg.region_quantile = 1.0;
  EXPECT_THROW(cfg.validate(), DomainError);
}

class ZoomBowl : public ::testing::Test {
 protected:
  static const ZoomReport& report() {
    static const ZoomReport r = zoom_search(SearchSpace{}, seeded(0), SimulatedEvaluator{});
    return r;
  }
};

TEST_F(ZoomBowl, BudgetIsSpentExactly) {
  const SimulatedEvaluator bowl;
  const CountingEvaluator counting(bowl);
  const auto r = zoom_search(SearchSpace{}, seeded(1), counting);
  EXPECT_EQ(counting.calls(), 115u);
  EXPECT_EQ(r.evaluations(), 115u);
  ASSERT_EQ(r.rounds.size(), 3u);
  EXPECT_EQ(r.rounds[0].trials.size(), 100u);
  EXPECT_EQ(r.rounds[2].trials.size(), 5u);
}

TEST_F(ZoomBowl, RegionsNestAndBestNeverWorsens) {
  const auto& r = report();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < r.rounds.size(); ++i) {
    const auto& round = r.rounds[i];
    EXPECT_TRUE(inside(round.selected, round.region));
    if (i > 0) EXPECT_TRUE(inside(round.region, r.rounds[i - 1].region));
    for (const auto& t : round.trials) {
      EXPECT_TRUE(round.region.contains(t.point));
      best = std::min(best, t.cost);
    }
    ASSERT_TRUE(round.surrogate_mae);
    EXPECT_FALSE(round.fallback);
  }
  ASSERT_TRUE(r.best_observed);
  EXPECT_EQ(r.best_observed->cost, best);
}

TEST_F(ZoomBowl, FinalPointNearTheAnalyticMinimum) {
  const auto& best = report().best_observed->point;
  EXPECT_LE(std::abs(best.dropout_rate - 0.3), 0.05);
  EXPECT_LE(std::abs(std::log2(static_cast<double>(best.hidden_units)) - 6.5), 0.5);
  ASSERT_TRUE(report().best_predicted);
}

TEST_F(ZoomBowl, SameSeedSameReport) {
  EXPECT_EQ(to_json(zoom_search(SearchSpace{}, seeded(0), SimulatedEvaluator{})).dump(),
            to_json(report()).dump());
}

TEST(Zoom, SingleTrialScheduleFallsBack) {
  ZoomConfig cfg = seeded(2);
  cfg.budget_schedule = {1};
  const auto r = zoom_search(SearchSpace{}, cfg, SimulatedEvaluator{});
  ASSERT_EQ(r.rounds.size(), 1u);
  EXPECT_EQ(r.evaluations(), 1u);
  EXPECT_TRUE(r.rounds[0].fallback);
  EXPECT_FALSE(r.rounds[0].fallback_reason.empty());
  EXPECT_EQ(r.best_observed->point, r.rounds[0].trials[0].point);
}

TEST(Zoom, ShrinkTerminationStopsEarly) {
  ZoomConfig cfg = seeded(3);
  cfg.budget_schedule = {40, 20, 20, 20, 20, 20, 20, 20, 20, 20, 20, 20};
  cfg.region_margin = 0.0;
  cfg.surrogate.tcfg.epochs = 300;
  const auto r = zoom_search(SearchSpace{}, cfg, SimulatedEvaluator{});
  ASSERT_TRUE(r.shrink_terminated);
  EXPECT_LT(r.rounds.size(), cfg.budget_schedule.size());
  const auto& last = r.rounds.back().selected;
  EXPECT_LT(last.log2_units.span(), cfg.min_log2_units_span);
  EXPECT_LT(last.dropout.span(), cfg.min_dropout_span);
}

TEST(Zoom, ResumeMatchesUninterruptedRun) {
  const SimulatedEvaluator ev(SimulatedShape::bowl, 0.02);
  ZoomConfig cfg = seeded(4);
  cfg.surrogate.tcfg.epochs = 300;
  TempDir full("zoom_full");
  ZoomRunOptions opts;
  opts.ledger_dir = full.path();
  const auto reference = zoom_search(SearchSpace{}, cfg, ev, opts);

  TempDir part("zoom_part");
  opts.ledger_dir = part.path();
  opts.max_rounds = 1;
  const auto first = zoom_search(SearchSpace{}, cfg, ev, opts);
  ASSERT_EQ(first.rounds.size(), 1u);
  const auto reloaded = report_from_json(nlohmann::ordered_json::parse(to_json(first).dump()), part.path());
  EXPECT_EQ(reloaded.rounds[0].trials, first.rounds[0].trials);
  opts.max_rounds.reset();
  opts.resume_from = reloaded;
  const auto resumed = zoom_search(SearchSpace{}, cfg, ev, opts);
  EXPECT_EQ(to_json(resumed).dump(), to_json(reference).dump());
  EXPECT_EQ(testing::read_file(part / round_ledger_name(2)), testing::read_file(full / round_ledger_name(2)));
}

TEST(Zoom, RegionOverrideIsClippedToThePreviousRound) {
  const SimulatedEvaluator ev;
  ZoomConfig cfg = seeded(5);
  cfg.surrogate.tcfg.epochs = 300;
  ZoomRunOptions opts;
  opts.max_rounds = 1;
  const auto first = zoom_search(SearchSpace{}, cfg, ev, opts);
  opts.resume_from = first;
  opts.region_override = SearchRegion{{2.0, 6.0}, {0.2, 0.4}};
  const auto next = zoom_search(SearchSpace{}, cfg, ev, opts);
  ASSERT_EQ(next.rounds.size(), 2u);
  const auto& region = next.rounds[1].region;
  EXPECT_EQ(region.log2_units.lo, 3.0);
  EXPECT_EQ(region.log2_units.hi, 6.0);
  EXPECT_EQ(region.dropout.lo, 0.2);
  EXPECT_EQ(region.dropout.hi, 0.4);
}

TEST(Zoom, MalformedReportIsSchemaError) {
  TempDir dir("zoom_bad");
  EXPECT_THROW(report_from_json(nlohmann::ordered_json::parse("{\"rounds\":3}"), dir.path()), SchemaError);
}

}  // namespace
}  // namespace droptune::zoom
