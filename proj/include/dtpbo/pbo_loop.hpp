#ifndef DTPBO_PBO_LOOP_HPP
#define DTPBO_PBO_LOOP_HPP

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtpbo/acquisition.hpp"
#include "dtpbo/core.hpp"
#include "dtpbo/leaf_posterior.hpp"
#include "dtpbo/pref_tree.hpp"

namespace dtpbo {

/// The decision maker. answer() returns true when the first instance is preferred.
class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual bool prefers_first(const Instance& first, const Instance& second) = 0;
  /// Known utility for synthetic oracles; empty for humans.
  virtual std::optional<double> true_utility(const Instance&) const { return std::nullopt; }
  virtual std::optional<double> optimum_value() const { return std::nullopt; }
  bool is_synthetic() const { return optimum_value().has_value(); }
};

/// Noiseless oracle answering with the larger true utility (first wins ties).
class SyntheticOracle final : public Oracle {
 public:
  SyntheticOracle(std::function<double(const Instance&)> utility, double optimum)
      : utility_(std::move(utility)), optimum_(optimum) {}

  bool prefers_first(const Instance& first, const Instance& second) override {
    return utility_(first) >= utility_(second);
  }
  std::optional<double> true_utility(const Instance& x) const override { return utility_(x); }
  std::optional<double> optimum_value() const override { return optimum_; }

 private:
  std::function<double(const Instance&)> utility_;
  double optimum_;
};

enum class AcquisitionMode { Qeubo, Random };

inline std::string to_string(AcquisitionMode m) { return m == AcquisitionMode::Qeubo ? "qeubo" : "random"; }

inline AcquisitionMode acquisition_from_string(const std::string& s) {
  if (s == "qeubo") return AcquisitionMode::Qeubo;
  if (s == "random") return AcquisitionMode::Random;
  throw InvalidArgument("acquisition must be 'qeubo' or 'random', got '" + s + "'");
}

struct RunConfig {
  std::size_t initial_pairs = 20;
  std::size_t iterations = 200;
  TreeConfig tree_cfg{};
  NoiseConfig noise_cfg{};
  AcquisitionConfig acq_cfg{};
  AcquisitionMode acquisition = AcquisitionMode::Qeubo;
  std::uint64_t seed = 0;

  void check() const {
    if (initial_pairs < 1) throw InvalidArgument("initial_pairs must be >= 1");
    if (acq_cfg.pool_size < 2) throw InvalidArgument("pool_size must be >= 2");
    noise_cfg.check();
  }
};

struct TraceRecord {
  CandidatePair queried_pair;
  bool first_won = true;
  double timestamp = 0.0;  // seconds since the Unix epoch
  Instance incumbent;
  std::optional<double> regret;
  double fit_seconds = 0.0;      // fit + acquisition time spent producing queried_pair
  double elapsed_seconds = 0.0;  // wall time since the run started, at record completion
  std::size_t model_version = 0;

  ComparisonPair comparison() const {
    return first_won ? ComparisonPair{queried_pair.first, queried_pair.second}
                     : ComparisonPair{queried_pair.second, queried_pair.first};
  }
};

struct SessionTrace {
  std::vector<TraceRecord> records;
};

/// Observed instance with the best recommendation score. Synthetic oracles use
/// the true utility; otherwise the model's predicted mean. Ties keep the
/// earliest observation.
inline Instance recommend(std::span<const Instance> observed, const Oracle& oracle, const Surrogate* model) {
  if (observed.empty()) throw InvalidArgument("recommend needs at least one observed instance");
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < observed.size(); ++i) {
    double score;
    if (oracle.is_synthetic()) {
      score = *oracle.true_utility(observed[i]);
    } else {
      if (model == nullptr) throw InvalidArgument("recommend needs a fitted model for non-synthetic oracles");
      score = predict(model->tree, model->posterior, observed[i]).mean;
    }
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return observed[best];
}

/// Incremental form of the optimization loop: initial design pairs first, then
/// model-selected pairs. The pending pair after k answers is a pure function of
/// (schema, config, the k answers).
class PboSession {
 public:
  PboSession(FeatureSchema schema, RunConfig cfg)
      : cfg_(std::move(cfg)), dataset_(std::move(schema)) {
    cfg_.check();
    initial_ = lhs_sample_pairs(dataset_.schema(), cfg_.initial_pairs, cfg_.seed);
    advance();
  }

  const FeatureSchema& schema() const { return dataset_.schema(); }
  const RunConfig& config() const { return cfg_; }
  const PreferenceDataset& dataset() const { return dataset_; }
  const std::vector<Instance>& observed() const { return observed_; }
  const CandidatePair& pending() const { return pending_; }
  std::size_t answered() const { return dataset_.size(); }
  bool in_initial_phase() const { return answered() < cfg_.initial_pairs; }
  std::size_t model_version() const { return model_version_; }
  const std::optional<Surrogate>& model() const { return model_; }
  double pending_fit_seconds() const { return pending_fit_seconds_; }

  /// Records the answer to the pending pair and computes the next one.
  ComparisonPair answer(bool first_wins) {
    ComparisonPair cp = first_wins ? ComparisonPair{pending_.first, pending_.second}
                                   : ComparisonPair{pending_.second, pending_.first};
    dataset_.append(cp);
    observed_.push_back(pending_.first);
    observed_.push_back(pending_.second);
    advance();
    return cp;
  }

  /// Fits the current data without changing the pending pair.
  Surrogate fit_current() const { return fit_surrogate(dataset_, cfg_.tree_cfg, cfg_.noise_cfg); }

 private:
  void advance() {
    const auto k = answered();
    if (k < initial_.size()) {
      pending_ = initial_[k];
      pending_fit_seconds_ = 0.0;
      return;
    }
    const auto start = std::chrono::steady_clock::now();
    model_ = fit_current();
    ++model_version_;
    AcquisitionConfig acq = cfg_.acq_cfg;
    acq.seed = derive_seed(cfg_.seed, k);
    if (cfg_.acquisition == AcquisitionMode::Qeubo)
      pending_ = select_next_pair(model_->tree, model_->posterior, schema(), acq);
    else
      pending_ = random_pair(schema(), acq.seed);
    pending_fit_seconds_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }

  RunConfig cfg_;
  PreferenceDataset dataset_;
  std::vector<CandidatePair> initial_;
  std::vector<Instance> observed_;
  CandidatePair pending_;
  std::optional<Surrogate> model_;
  std::size_t model_version_ = 0;
  double pending_fit_seconds_ = 0.0;
};

class RunAborted : public Error {
 public:
  RunAborted(const std::string& what, SessionTrace partial) : Error(what), trace_(std::move(partial)) {}
  const SessionTrace& trace() const { return trace_; }

 private:
  SessionTrace trace_;
};

inline double unix_seconds() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

/// Runs initial_pairs + iterations queries against the oracle.
inline SessionTrace run(Oracle& oracle, const FeatureSchema& schema, const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  SessionTrace trace;
  PboSession session(schema, cfg);
  const std::size_t total = cfg.initial_pairs + cfg.iterations;
  while (trace.records.size() < total) {
    TraceRecord rec;
    rec.queried_pair = session.pending();
    rec.fit_seconds = session.pending_fit_seconds();
    rec.model_version = session.model_version();
    try {
      rec.first_won = oracle.prefers_first(rec.queried_pair.first, rec.queried_pair.second);
    } catch (const std::exception& e) {
      throw RunAborted(std::string("oracle failed: ") + e.what(), trace);
    }
    rec.timestamp = unix_seconds();
    session.answer(rec.first_won);

    if (oracle.is_synthetic()) {
      rec.incumbent = recommend(session.observed(), oracle, nullptr);
      rec.regret = *oracle.optimum_value() - *oracle.true_utility(rec.incumbent);
    } else {
      // past the initial phase the session has already fit the current data
      const Surrogate model = session.in_initial_phase() ? session.fit_current() : *session.model();
      rec.incumbent = recommend(session.observed(), oracle, &model);
    }
    rec.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    trace.records.push_back(std::move(rec));
  }
  return trace;
}

// ---------------------------------------------------------------------------
// JSON-lines trace

inline nlohmann::json pair_to_json(const CandidatePair& p) {
  return {{"a", instance_to_json(p.first)}, {"b", instance_to_json(p.second)}};
}

inline CandidatePair pair_from_json(const nlohmann::json& j) {
  return {instance_from_json(j.at("a")), instance_from_json(j.at("b"))};
}

inline nlohmann::json record_to_json(const TraceRecord& r, std::size_t index, bool include_timing = true) {
  nlohmann::json j{{"index", index},
                   {"pair", pair_to_json(r.queried_pair)},
                   {"winner", r.first_won ? "A" : "B"},
                   {"incumbent", instance_to_json(r.incumbent)},
                   {"regret", r.regret ? nlohmann::json(*r.regret) : nlohmann::json(nullptr)},
                   {"model_version", r.model_version}};
  if (include_timing) {
    j["timestamp"] = r.timestamp;
    j["fit_wall_time"] = r.fit_seconds;
    j["elapsed_seconds"] = r.elapsed_seconds;
  }
  return j;
}

inline TraceRecord record_from_json(const nlohmann::json& j) {
  TraceRecord r;
  r.queried_pair = pair_from_json(j.at("pair"));
  const auto w = j.at("winner").get<std::string>();
  if (w != "A" && w != "B") throw InvalidArgument("trace record: winner must be 'A' or 'B'");
  r.first_won = w == "A";
  r.incumbent = instance_from_json(j.at("incumbent"));
  if (j.contains("regret") && !j["regret"].is_null()) r.regret = j["regret"].get<double>();
  r.model_version = j.value("model_version", std::size_t{0});
  r.timestamp = j.value("timestamp", 0.0);
  r.fit_seconds = j.value("fit_wall_time", 0.0);
  r.elapsed_seconds = j.value("elapsed_seconds", 0.0);
  return r;
}

/// One JSON object per line. Without timing the output is a deterministic
/// function of (seed, answers).
inline std::string to_jsonl(const SessionTrace& trace, bool include_timing = true) {
  std::string out;
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    out += record_to_json(trace.records[i], i, include_timing).dump();
    out += '\n';
  }
  return out;
}

inline SessionTrace trace_from_jsonl(const std::string& text) {
  SessionTrace trace;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      trace.records.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw InvalidArgument("trace line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return trace;
}

}  // namespace dtpbo

#endif  // DTPBO_PBO_LOOP_HPP
