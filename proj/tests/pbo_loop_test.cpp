#include <stdexcept>

#include <gtest/gtest.h>

#include "dtpbo/benchmarks.hpp"
#include "dtpbo/pbo_loop.hpp"

namespace dtpbo {
namespace {

FeatureSchema box2() { return FeatureSchema({{"x", Continuous{0.0, 1.0}}, {"y", Continuous{0.0, 1.0}}}); }

SyntheticOracle bowl() {
  return SyntheticOracle(
      [](const Instance& v) { return -((v[0] - 0.3) * (v[0] - 0.3) + (v[1] - 0.7) * (v[1] - 0.7)); }, 0.0);
}

// Answers like a person: no access to utilities.
class OpaqueOracle : public Oracle {
 public:
  bool prefers_first(const Instance& a, const Instance& b) override { return a[0] >= b[0]; }
};

class FailingOracle : public Oracle {
 public:
  explicit FailingOracle(std::size_t fail_at) : fail_at_(fail_at) {}
  bool prefers_first(const Instance&, const Instance&) override {
    if (calls_++ == fail_at_) throw std::runtime_error("closed the tab");
    return true;
  }
  std::optional<double> true_utility(const Instance&) const override { return 0.0; }
  std::optional<double> optimum_value() const override { return 0.0; }

 private:
  std::size_t fail_at_;
  std::size_t calls_ = 0;
};

RunConfig small_config(std::uint64_t seed) {
  RunConfig cfg;
  cfg.initial_pairs = 5;
  cfg.iterations = 15;
  cfg.acq_cfg.pool_size = 16;
  cfg.seed = seed;
  return cfg;
}

TEST(Run, ZeroIterationsOnlyInitialDesign) {
  auto oracle = bowl();
  auto cfg = small_config(1);
  cfg.iterations = 0;
  const auto trace = run(oracle, box2(), cfg);
  ASSERT_EQ(trace.records.size(), 5u);
  const auto design = lhs_sample_pairs(box2(), 5, 1);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(trace.records[i].queried_pair.first, design[i].first);
    EXPECT_EQ(trace.records[i].model_version, 0u);
  }
}

TEST(Run, RegretIsNonIncreasingAndNonNegative) {
  auto oracle = bowl();
  const auto trace = run(oracle, box2(), small_config(2));
  ASSERT_EQ(trace.records.size(), 20u);
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    ASSERT_TRUE(trace.records[i].regret);
    EXPECT_GE(*trace.records[i].regret, 0.0);
    if (i > 0) EXPECT_LE(*trace.records[i].regret, *trace.records[i - 1].regret);
  }
}

TEST(Run, ModelVersionAdvancesAfterInitialPhase) {
  auto oracle = bowl();
  const auto trace = run(oracle, box2(), small_config(3));
  EXPECT_EQ(trace.records[4].model_version, 0u);
  EXPECT_EQ(trace.records[5].model_version, 1u);
  EXPECT_EQ(trace.records[19].model_version, 15u);
}

TEST(Run, TraceIsByteIdenticalForSeed) {
  auto a = bowl(), b = bowl(), c = bowl();
  const auto t1 = to_jsonl(run(a, box2(), small_config(4)), false);
  const auto t2 = to_jsonl(run(b, box2(), small_config(4)), false);
  const auto t3 = to_jsonl(run(c, box2(), small_config(5)), false);
  EXPECT_EQ(t1, t2);
  EXPECT_NE(t1, t3);
}

TEST(Run, RandomModeAlsoDeterministic) {
  auto cfg = small_config(6);
  cfg.acquisition = AcquisitionMode::Random;
  auto a = bowl(), b = bowl();
  EXPECT_EQ(to_jsonl(run(a, box2(), cfg), false), to_jsonl(run(b, box2(), cfg), false));
}

TEST(Run, CumulativeTimeStrictlyIncreases) {
  auto oracle = bowl();
  const auto trace = run(oracle, box2(), small_config(7));
  for (std::size_t i = 1; i < trace.records.size(); ++i)
    EXPECT_GT(trace.records[i].elapsed_seconds, trace.records[i - 1].elapsed_seconds);
}

TEST(Run, OpaqueOracleHasNoRegretButAnIncumbent) {
  OpaqueOracle oracle;
  const auto trace = run(oracle, box2(), small_config(8));
  ASSERT_EQ(trace.records.size(), 20u);
  for (const auto& r : trace.records) {
    EXPECT_FALSE(r.regret);
    EXPECT_EQ(r.incumbent.size(), 2u);
  }
}

TEST(Run, OracleFailureKeepsPartialTrace) {
  FailingOracle oracle(7);
  try {
    run(oracle, box2(), small_config(9));
    FAIL();
  } catch (const RunAborted& e) {
    EXPECT_EQ(e.trace().records.size(), 7u);
  }
}

TEST(Run, RejectsBadConfig) {
  auto oracle = bowl();
  auto cfg = small_config(1);
  cfg.initial_pairs = 0;
  EXPECT_THROW(run(oracle, box2(), cfg), InvalidArgument);
  cfg = small_config(1);
  cfg.noise_cfg.sigma_noise = 0.0;
  EXPECT_THROW(run(oracle, box2(), cfg), InvalidArgument);
}

TEST(Recommend, SyntheticUsesTrueUtilityAndKeepsEarliestOnTies) {
  auto oracle = bowl();
  std::vector<Instance> obs{Instance{{0.0, 0.0}}, Instance{{0.3, 0.7}}, Instance{{0.3, 0.7}}};
  EXPECT_EQ(recommend(obs, oracle, nullptr), obs[1]);
  std::vector<Instance> tie{Instance{{0.3, 0.6}}, Instance{{0.3, 0.8}}};
  EXPECT_EQ(recommend(tie, oracle, nullptr), tie[0]);
  EXPECT_THROW(recommend({}, oracle, nullptr), InvalidArgument);
}

TEST(Recommend, OpaqueUsesModelMean) {
  OpaqueOracle oracle;
  PreferenceDataset ds(box2());
  ds.append({Instance{{0.9, 0.5}}, Instance{{0.1, 0.5}}});
  ds.append({Instance{{0.8, 0.5}}, Instance{{0.2, 0.5}}});
  const auto model = fit_surrogate(ds, TreeConfig{}, NoiseConfig{});
  std::vector<Instance> obs{Instance{{0.1, 0.5}}, Instance{{0.9, 0.5}}};
  EXPECT_EQ(recommend(obs, oracle, &model), obs[1]);
  EXPECT_THROW(recommend(obs, oracle, nullptr), InvalidArgument);
}

TEST(Session, PendingPairIsReproducibleFromAnswers) {
  const std::vector<bool> answers{true, false, false, true, true, false, true, true};
  PboSession s1(box2(), small_config(10));
  for (bool a : answers) s1.answer(a);
  PboSession s2(box2(), small_config(10));
  for (bool a : answers) s2.answer(a);
  EXPECT_EQ(s1.pending().first, s2.pending().first);
  EXPECT_EQ(s1.pending().second, s2.pending().second);
  EXPECT_EQ(s1.model_version(), 4u);
  EXPECT_FALSE(s1.in_initial_phase());
}

TEST(Jsonl, RoundTripsAndReportsBadLine) {
  auto oracle = bowl();
  const auto trace = run(oracle, box2(), small_config(11));
  const auto text = to_jsonl(trace);
  const auto back = trace_from_jsonl(text);
  ASSERT_EQ(back.records.size(), trace.records.size());
  EXPECT_EQ(to_jsonl(back), text);

  try {
    trace_from_jsonl(text + "{\"pair\": 3}\n");
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("line 21"), std::string::npos);
  }
}

}  // namespace
}  // namespace dtpbo
