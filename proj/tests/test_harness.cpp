#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "droptune/data.hpp"
#include "droptune/errors.hpp"
#include "droptune/harness.hpp"
#include "support/test_support.hpp"

namespace droptune {
namespace {

using testing::read_file;
using testing::TempDir;
using testing::write_file;

double direct_bowl(const HyperPoint& p) {
  const double u = (std::log2(static_cast<double>(p.hidden_units)) - 3.0) / 7.0;
  return (u - 0.5) * (u - 0.5) + (p.dropout_rate - 0.3) * (p.dropout_rate - 0.3);
}

std::string run_to_text(std::size_t n, std::uint64_t seed, const Evaluator& ev,
                        const RunOptions& opts = {}) {
  TempDir dir("run");
  run_trials(SearchSpace{}, n, ev, seed, dir / "ledger.jsonl", opts);
  return read_file(dir / "ledger.jsonl");
}

// Diverges on every trial whose dropout exceeds 0.5.
class HalfDiverging final : public Evaluator {
 public:
  EvalOutcome evaluate(const HyperPoint& p, std::uint64_t) const override {
    if (p.dropout_rate > 0.5) throw DivergedError("loss exploded", 3);
    return {0.25, 75.0, 1};
  }
};

TEST(Simulated, CostsMatchTheSurfaceAtSampledPoints) {
  const SimulatedEvaluator ev;
  const auto recs = run_trials(SearchSpace{}, 5, ev, 42, {});
  ASSERT_EQ(recs.size(), 5u);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(recs[i].trial_index, i);
    EXPECT_EQ(recs[i].point, planned_point(SearchSpace{}, 42, i));
    EXPECT_NEAR(recs[i].cost, direct_bowl(recs[i].point), 1e-15);
    EXPECT_NEAR(recs[i].accuracy, 100.0 * (1.0 - recs[i].cost), 1e-12);
  }
}

TEST(Simulated, NoiseStaysWithinAmplitude) {
  const SimulatedEvaluator ev(SimulatedShape::bowl, 0.02);
  for (const auto& r : run_trials(SearchSpace{}, 200, ev, 1, {})) {
    EXPECT_LE(std::abs(r.cost - std::max(direct_bowl(r.point), 0.0)), 0.02 + 1e-15);
    EXPECT_EQ(ev.evaluate(r.point, r.seed).cost, r.cost);
  }
  EXPECT_THROW(SimulatedEvaluator(SimulatedShape::bowl, -1.0), DomainError);
}

TEST(RunTrials, SameSeedGivesByteIdenticalLedger) {
  const SimulatedEvaluator ev(SimulatedShape::bowl, 0.02);
  const std::string a = run_to_text(20, 5, ev);
  EXPECT_EQ(a, run_to_text(20, 5, ev));
  EXPECT_NE(a, run_to_text(20, 6, ev));
}

TEST(RunTrials, ParallelWorkersMatchSerial) {
  const SimulatedEvaluator ev(SimulatedShape::bowl, 0.02);
  RunOptions parallel;
  parallel.workers = 4;
  EXPECT_EQ(run_to_text(50, 8, ev), run_to_text(50, 8, ev, parallel));
}

TEST(RunTrials, ResumeAfterEveryInterruptionPoint) {
  const SimulatedEvaluator ev(SimulatedShape::bowl, 0.02);
  for (const std::size_t n : {5u, 10u}) {
    const std::string reference = run_to_text(n, 3, ev);
    for (std::size_t k = 0; k <= n; ++k) {
      TempDir dir("resume");
      RunOptions stop;
      stop.stop_after = k;
      const auto partial = run_trials(SearchSpace{}, n, ev, 3, dir / "l.jsonl", stop);
      EXPECT_EQ(partial.size(), k);
      std::size_t fresh = 0;
      RunOptions count;
      count.on_record = [&](const TrialRecord&) { ++fresh; };
      run_trials(SearchSpace{}, n, ev, 3, dir / "l.jsonl", count);
      EXPECT_EQ(fresh, n - k) << "n=" << n << " k=" << k;
      EXPECT_EQ(read_file(dir / "l.jsonl"), reference) << "n=" << n << " k=" << k;
    }
  }
}

TEST(RunTrials, TornTailIsDiscardedOnResume) {
  const SimulatedEvaluator ev;
  const std::string reference = run_to_text(6, 9, ev);
  TempDir dir("torn");
  RunOptions stop;
  stop.stop_after = 3;
  run_trials(SearchSpace{}, 6, ev, 9, dir / "l.jsonl", stop);
  write_file(dir / "l.jsonl", read_file(dir / "l.jsonl") + "{\"trial\":3,\"units\":");
  run_trials(SearchSpace{}, 6, ev, 9, dir / "l.jsonl");
  EXPECT_EQ(read_file(dir / "l.jsonl"), reference);
}

TEST(RunTrials, MismatchedSeedIsRejected) {
  const SimulatedEvaluator ev;
  TempDir dir("mismatch");
  run_trials(SearchSpace{}, 3, ev, 1, dir / "l.jsonl");
  EXPECT_THROW(run_trials(SearchSpace{}, 5, ev, 2, dir / "l.jsonl"), IntegrityError);
}

TEST(RunTrials, DivergedTrialsAreRecordedAsSkipped) {
  const HalfDiverging ev;
  TempDir dir("skip");
  const auto recs = run_trials(SearchSpace{}, 30, ev, 4, dir / "l.jsonl");
  std::size_t skipped = 0;
  for (const auto& r : recs) {
    EXPECT_EQ(r.is_skipped(), r.point.dropout_rate > 0.5);
    if (r.is_skipped()) {
      ++skipped;
      EXPECT_NE(r.skipped->find("diverged"), std::string::npos);
    }
  }
  EXPECT_GT(skipped, 0u);
  EXPECT_EQ(completed(recs).size(), recs.size() - skipped);
  const auto loaded = load_ledger(dir / "l.jsonl");
  EXPECT_EQ(loaded.records, recs);
  EXPECT_NE(read_file(dir / "l.jsonl").find("\"cost\":null"), std::string::npos);
}

TEST(Ledger, WriteLoadRoundTrip) {
  const SimulatedEvaluator ev(SimulatedShape::bowl, 0.01);
  RunOptions timed;
  timed.record_timing = true;
  const auto recs = run_trials(SearchSpace{}, 10, ev, 11, {}, timed);
  TempDir dir("rt");
  write_ledger(dir / "a.jsonl", recs);
  const auto loaded = load_ledger(dir / "a.jsonl");
  EXPECT_FALSE(loaded.warning);
  EXPECT_EQ(loaded.records, recs);
}

TEST(Ledger, TruncatedFinalLineDropsOneRecordWithWarning) {
  const SimulatedEvaluator ev;
  TempDir dir("trunc");
  run_trials(SearchSpace{}, 10, ev, 12, dir / "l.jsonl");
  std::string text = read_file(dir / "l.jsonl");
  text.resize(text.size() - 20);
  write_file(dir / "l.jsonl", text);
  const auto loaded = load_ledger(dir / "l.jsonl");
  EXPECT_EQ(loaded.records.size(), 9u);
  ASSERT_TRUE(loaded.warning);
}

TEST(Ledger, DuplicateIndexNamesTheLine) {
  const SimulatedEvaluator ev;
  const auto recs = run_trials(SearchSpace{}, 4, ev, 13, {});
  TempDir dir("dup");
  std::string text;
  for (const auto& r : recs) text += to_ledger_line(r) + "\n";
  text += to_ledger_line(recs[1]) + "\n";
  text += to_ledger_line(recs[2]) + "\n";
  write_file(dir / "l.jsonl", text);
  try {
    load_ledger(dir / "l.jsonl");
    FAIL() << "expected IntegrityError";
  } catch (const IntegrityError& e) {
    EXPECT_EQ(e.line(), 5u);
  }
}

TEST(Ledger, CorruptMiddleLineIsIntegrityError) {
  const SimulatedEvaluator ev;
  const auto recs = run_trials(SearchSpace{}, 3, ev, 14, {});
  TempDir dir("mid");
  write_file(dir / "l.jsonl", to_ledger_line(recs[0]) + "\nnot json\n" + to_ledger_line(recs[2]) + "\n");
  EXPECT_THROW(load_ledger(dir / "l.jsonl"), IntegrityError);
  std::string bad = to_ledger_line(recs[0]);
  bad.replace(bad.find("\"dropout\":"), 10, "\"dropout\":1.5,\"x\":");
  write_file(dir / "l.jsonl", bad + "\n" + to_ledger_line(recs[1]) + "\n");
  EXPECT_THROW(load_ledger(dir / "l.jsonl"), IntegrityError);
  EXPECT_THROW(load_ledger(dir / "missing.jsonl"), IoError);
}

class BlobsFixture : public ::testing::Test {
 protected:
  static data::Split splits() {
    const auto ds = data::make_synthetic(data::SyntheticKind::separable_blobs, 1000, 21);
    const auto parts = data::split(ds, 0.2, 21);
    const auto s = data::standardize(parts.train, {parts.val});
    return {s.train, s.others[0]};
  }
};

TEST_F(BlobsFixture, TrainEvaluatorLearnsSeparableData) {
  nn::TrainConfig tcfg;
  tcfg.epochs = 30;
  const auto ev = train_evaluator(splits(), MlpTemplate{}, tcfg);
  const auto out = ev.evaluate(HyperPoint{16, 0.0}, 77);
  EXPECT_GE(out.accuracy, 95.0);
  EXPECT_EQ(out.epochs, 30u);
  const auto again = ev.evaluate(HyperPoint{16, 0.0}, 77);
  EXPECT_EQ(out.cost, again.cost);
  EXPECT_EQ(out.accuracy, again.accuracy);
}

TEST_F(BlobsFixture, HeavyDropoutStillReportsFiniteCost) {
  nn::TrainConfig tcfg;
  tcfg.epochs = 30;
  const auto ev = train_evaluator(splits(), MlpTemplate{}, tcfg);
  const auto out = ev.evaluate(HyperPoint{8, 0.95}, 78);
  EXPECT_TRUE(std::isfinite(out.cost));
  EXPECT_GE(out.accuracy, 0.0);
  EXPECT_LE(out.accuracy, 100.0);
}

TEST(NonIdentifiable, SymmetricSurfaceYieldsPairs) {
  const SimulatedEvaluator ev(SimulatedShape::dropout_symmetric);
  const auto recs = run_trials(SearchSpace{}, 200, ev, 15, {});
  const auto pairs = find_nonidentifiable_pairs(recs, 0.01, 1.0, 0.3);
  ASSERT_FALSE(pairs.empty());
  for (const auto& p : pairs) {
    const auto& a = recs[p.first_trial];
    const auto& b = recs[p.second_trial];
    EXPECT_EQ(std::floor(std::log2(a.point.hidden_units)), std::floor(std::log2(b.point.hidden_units)));
    EXPECT_LE(std::abs(a.cost - b.cost), 0.01);
    EXPECT_GE(std::abs(a.point.dropout_rate - b.point.dropout_rate), 0.3);
  }
}

TEST(NonIdentifiable, DegenerateInputsYieldNothing) {
  const SimulatedEvaluator ev(SimulatedShape::bowl, 0.05);
  const auto recs = run_trials(SearchSpace{}, 50, ev, 16, {});
  EXPECT_TRUE(find_nonidentifiable_pairs({recs[0]}, 1.0, 100.0, 0.0).empty());
  EXPECT_TRUE(find_nonidentifiable_pairs(recs, 0.0, 0.0, 0.3).empty());
}

}  // namespace
}  // namespace droptune
