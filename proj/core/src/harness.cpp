#include "droptune/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "droptune/errors.hpp"

namespace droptune {

namespace {

using Json = nlohmann::ordered_json;

double normalized_units(double log2_units) { return (log2_units - 3.0) / 7.0; }

TrialRecord parse_record(const std::string& line) {
  const Json j = Json::parse(line);
  TrialRecord r;
  r.trial_index = j.at("trial").get<std::uint64_t>();
  r.point.hidden_units = j.at("units").get<std::size_t>();
  r.point.dropout_rate = j.at("dropout").get<double>();
  r.epochs = j.at("epochs").get<std::size_t>();
  r.seed = std::stoull(j.at("seed").get<std::string>());
  r.wall_seconds = j.at("wall_seconds").get<double>();
  if (j.contains("skipped")) {
    r.skipped = j.at("skipped").get<std::string>();
  } else {
    r.cost = j.at("cost").get<double>();
    r.accuracy = j.at("accuracy").get<double>();
  }
  return r;
}

// Empty string when the record is valid.
std::string invariant_violation(const TrialRecord& r) {
  if (r.point.hidden_units < 1) return "hidden units must be >= 1";
  if (!(r.point.dropout_rate >= 0.0 && r.point.dropout_rate < 1.0))
    return "dropout outside [0, 1)";
  if (!r.is_skipped()) {
    if (!(r.cost >= 0.0) || !std::isfinite(r.cost)) return "cost must be finite and >= 0";
    if (!(r.accuracy >= 0.0 && r.accuracy <= 100.0)) return "accuracy outside [0, 100]";
  }
  return {};
}

std::vector<std::string> split_lines(const std::string& text, bool& ends_with_newline) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  ends_with_newline = text.empty() || text.back() == '\n';
  return lines;
}

TrialRecord evaluate_trial(const SearchSpace& space, const Evaluator& evaluator,
                           std::uint64_t master_seed, std::uint64_t index,
                           bool record_timing) {
  TrialRecord rec;
  rec.trial_index = index;
  rec.seed = derive_trial_seed(master_seed, index);
  rec.point = planned_point(space, master_seed, index);
  const auto start = std::chrono::steady_clock::now();
  try {
    const EvalOutcome out = evaluator.evaluate(rec.point, rec.seed);
    rec.cost = out.cost;
    rec.accuracy = out.accuracy;
    rec.epochs = out.epochs;
    if (!std::isfinite(out.cost)) rec.skipped = "non-finite cost";
  } catch (const DivergedError& e) {
    rec.skipped = std::string("diverged: ") + e.what();
  } catch (const NumericError& e) {
    rec.skipped = std::string("numeric: ") + e.what();
  }
  if (rec.skipped) {
    rec.cost = 0.0;
    rec.accuracy = 0.0;
  }
  if (record_timing) {
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return rec;
}

// Appends lines to the ledger, flushing after each so a crash loses at most
// the line being written.
class LedgerWriter {
 public:
  explicit LedgerWriter(const std::filesystem::path& path) : path_(path) {
    if (path_.empty()) return;
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    out_.open(path_, std::ios::app | std::ios::binary);
    if (!out_) throw IoError("cannot open ledger " + path_.string() + " for append");
  }

  void append(const TrialRecord& rec) {
    if (path_.empty()) return;
    out_ << to_ledger_line(rec) << '\n';
    out_.flush();
    if (!out_) throw IoError("write to ledger " + path_.string() + " failed");
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

}  // namespace

SimulatedEvaluator::SimulatedEvaluator(SimulatedShape shape, double noise)
    : shape_(shape), noise_(noise) {
  if (!(noise >= 0.0)) throw DomainError("noise amplitude must be >= 0");
}

double SimulatedEvaluator::true_cost(double log2_units, double dropout) const {
  const double u = normalized_units(log2_units) - 0.5;
  const double centre = shape_ == SimulatedShape::bowl ? 0.3 : 0.5;
  const double d = dropout - centre;
  return u * u + d * d;
}

double SimulatedEvaluator::true_cost(const HyperPoint& point) const {
  return true_cost(std::log2(static_cast<double>(point.hidden_units)), point.dropout_rate);
}

EvalOutcome SimulatedEvaluator::evaluate(const HyperPoint& point, std::uint64_t seed) const {
  double f = true_cost(point);
  if (noise_ > 0.0) {
    Rng rng(seed);
    f += noise_ * (2.0 * rng.uniform() - 1.0);
  }
  f = std::max(f, 0.0);
  return {f, 100.0 * (1.0 - std::min(f, 1.0)), 0};
}

TrainEvaluator::TrainEvaluator(data::Dataset train_set, data::Dataset val_set,
                               MlpTemplate tmpl, nn::TrainConfig tcfg)
    : train_(std::move(train_set)), val_(std::move(val_set)), template_(tmpl), tcfg_(tcfg) {
  train_.validate();
  val_.validate();
  if (train_.cols() != val_.cols()) throw ShapeError("train/validation feature counts differ");
  tcfg_.validate();
}

EvalOutcome TrainEvaluator::evaluate(const HyperPoint& point, std::uint64_t seed) const {
  nn::MlpConfig mcfg;
  mcfg.input_dim = static_cast<std::size_t>(train_.cols());
  mcfg.hidden_layers = template_.hidden_layers;
  mcfg.hidden_units = point.hidden_units;
  mcfg.dropout_rate = point.dropout_rate;
  mcfg.hidden_activation = template_.hidden_activation;
  mcfg.init_seed = derive_trial_seed(seed, 1);
  nn::TrainConfig tcfg = tcfg_;
  tcfg.shuffle_seed = derive_trial_seed(seed, 2);
  tcfg.dropout_seed = derive_trial_seed(seed, 3);
  const auto result = nn::train(mcfg, tcfg, train_, val_);
  return {result.metrics.cost, result.metrics.accuracy, tcfg.epochs};
}

TrainEvaluator train_evaluator(const data::Split& standardized_splits, MlpTemplate tmpl,
                               nn::TrainConfig tcfg) {
  return TrainEvaluator(standardized_splits.train, standardized_splits.val, tmpl, tcfg);
}

HyperPoint planned_point(const SearchSpace& space, std::uint64_t master_seed,
                         std::uint64_t index) {
  Rng rng(derive_trial_seed(derive_trial_seed(master_seed, index), 0));
  return sample_point(space, rng);
}

std::string to_ledger_line(const TrialRecord& r) {
  Json j;
  j["trial"] = r.trial_index;
  j["units"] = r.point.hidden_units;
  j["dropout"] = r.point.dropout_rate;
  if (r.skipped) {
    j["cost"] = nullptr;
    j["accuracy"] = nullptr;
  } else {
    j["cost"] = r.cost;
    j["accuracy"] = r.accuracy;
  }
  j["epochs"] = r.epochs;
  j["seed"] = std::to_string(r.seed);
  j["wall_seconds"] = r.wall_seconds;
  if (r.skipped) j["skipped"] = *r.skipped;
  return j.dump();
}

LedgerContents load_ledger(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open ledger " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  bool ends_with_newline = true;
  const auto lines = split_lines(buffer.str(), ends_with_newline);

  std::size_t last_nonempty = lines.size();
  for (std::size_t i = lines.size(); i-- > 0;) {
    if (!lines[i].empty()) {
      last_nonempty = i;
      break;
    }
  }

  LedgerContents out;
  std::set<std::uint64_t> seen;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const bool trailing = i == last_nonempty;
    std::string problem;
    TrialRecord rec;
    try {
      rec = parse_record(lines[i]);
      problem = invariant_violation(rec);
    } catch (const std::exception& e) {
      problem = e.what();
    }
    if (!problem.empty()) {
      if (trailing) {
        out.warning = "dropped corrupt trailing ledger line " + std::to_string(i + 1) + ": " +
                      problem;
        break;
      }
      throw IntegrityError("corrupt ledger line " + std::to_string(i + 1) + ": " + problem,
                           i + 1);
    }
    if (!seen.insert(rec.trial_index).second)
      throw IntegrityError("duplicate trial index " + std::to_string(rec.trial_index) +
                               " at line " + std::to_string(i + 1),
                           i + 1);
    out.records.push_back(std::move(rec));
  }
  if (!ends_with_newline && !out.warning && !out.records.empty())
    out.warning = "ledger does not end with a newline";
  return out;
}

void write_ledger(const std::filesystem::path& path, const std::vector<TrialRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    for (const auto& r : records) out << to_ledger_line(r) << '\n';
    if (!out) throw IoError("write to " + tmp.string() + " failed");
  }
  std::filesystem::rename(tmp, path);
}

std::vector<TrialRecord> completed(const std::vector<TrialRecord>& ledger) {
  std::vector<TrialRecord> out;
  std::copy_if(ledger.begin(), ledger.end(), std::back_inserter(out),
               [](const TrialRecord& r) { return !r.is_skipped(); });
  return out;
}

std::vector<TrialRecord> run_trials(const SearchSpace& space, std::size_t n,
                                    const Evaluator& evaluator, std::uint64_t master_seed,
                                    const std::filesystem::path& ledger_path,
                                    const RunOptions& options) {
  space.validate();
  if (n < 1) throw DomainError("run_trials needs n >= 1");

  std::vector<TrialRecord> records;
  if (!ledger_path.empty() && std::filesystem::exists(ledger_path)) {
    LedgerContents existing = load_ledger(ledger_path);
    for (std::size_t i = 0; i < existing.records.size(); ++i) {
      const auto& r = existing.records[i];
      if (r.trial_index != i || r.seed != derive_trial_seed(master_seed, i) ||
          r.point != planned_point(space, master_seed, i))
        throw IntegrityError("ledger " + ledger_path.string() +
                                 " does not match this run's seed and space at trial " +
                                 std::to_string(r.trial_index),
                             i + 1);
    }
    records = std::move(existing.records);
    // Rewrite to drop a torn final line before appending.
    if (existing.warning) write_ledger(ledger_path, records);
    if (records.size() >= n) {
      records.resize(n);
      return records;
    }
  }

  LedgerWriter writer(ledger_path);
  const std::size_t first = records.size();
  const std::size_t last =
      options.stop_after ? std::min(n, first + *options.stop_after) : n;

  auto commit = [&](TrialRecord rec) {
    writer.append(rec);
    if (options.on_record) options.on_record(rec);
    records.push_back(std::move(rec));
  };

  const unsigned workers = std::max(1u, options.workers);
  if (workers == 1 || last - first <= 1) {
    for (std::size_t i = first; i < last; ++i)
      commit(evaluate_trial(space, evaluator, master_seed, i, options.record_timing));
    return records;
  }

  // Workers claim indices; the calling thread is the single writer and
  // commits results strictly in trial order.
  std::vector<std::optional<TrialRecord>> slots(last - first);
  std::mutex mu;
  std::condition_variable ready;
  std::atomic<std::size_t> next{first};
  std::atomic<bool> abort{false};
  std::exception_ptr failure;

  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= last || abort.load()) return;
      try {
        TrialRecord rec = evaluate_trial(space, evaluator, master_seed, i, options.record_timing);
        std::lock_guard lock(mu);
        slots[i - first] = std::move(rec);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        abort = true;
      }
      ready.notify_all();
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);

  std::exception_ptr write_failure;
  for (std::size_t i = first; i < last; ++i) {
    std::unique_lock lock(mu);
    ready.wait(lock, [&] { return slots[i - first].has_value() || failure != nullptr; });
    if (!slots[i - first]) break;
    TrialRecord rec = std::move(*slots[i - first]);
    lock.unlock();
    try {
      commit(std::move(rec));
    } catch (...) {
      write_failure = std::current_exception();
      abort = true;
      break;
    }
  }
  for (auto& t : pool) t.join();
  if (write_failure) std::rethrow_exception(write_failure);
  if (failure) std::rethrow_exception(failure);
  return records;
}

std::vector<NonIdentifiablePair> find_nonidentifiable_pairs(
    const std::vector<TrialRecord>& ledger, double cost_tol, double acc_tol,
    double dropout_gap) {
  const auto rows = completed(ledger);
  std::vector<NonIdentifiablePair> pairs;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto bucket_i = std::bit_width(rows[i].point.hidden_units);
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      if (std::bit_width(rows[j].point.hidden_units) != bucket_i) continue;
      const double dc = std::abs(rows[i].cost - rows[j].cost);
      const double da = std::abs(rows[i].accuracy - rows[j].accuracy);
      const double dd = std::abs(rows[i].point.dropout_rate - rows[j].point.dropout_rate);
      if (dc <= cost_tol && da <= acc_tol && dd >= dropout_gap)
        pairs.push_back({rows[i].trial_index, rows[j].trial_index, dc, da, dd});
    }
  }
  return pairs;
}

}  // namespace droptune
