// Acceptance runner: one PASS / FAIL / SKIPPED line per criterion, followed by
// indented detail lines. Exit status is 1 if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dtpbo/acquisition.hpp"
#include "dtpbo/benchmarks.hpp"
#include "dtpbo/leaf_posterior.hpp"
#include "dtpbo/pbo_loop.hpp"
#include "dtpbo/pref_tree.hpp"
#include "dtpbo/sushi.hpp"
#include "dtpbo/sushi_synthetic.hpp"
#include "support/oracles.hpp"

namespace {

using namespace dtpbo;

enum class Status { Pass, Fail, Skipped };

struct Outcome {
  Status status = Status::Pass;
  std::vector<std::string> details;

  void fail(const std::string& why) {
    status = Status::Fail;
    details.push_back(why);
  }
  void note(const std::string& s) { details.push_back(s); }
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

const NoiseConfig kPaper{0.01, 0.02};

std::vector<LeafPairIndex> random_leaf_pairs(std::mt19937_64& rng, std::size_t m, std::size_t n) {
  std::uniform_int_distribution<std::size_t> leaf(0, m - 1), mult(1, 3);
  std::vector<LeafPairIndex> out;
  while (out.size() < n) {
    const auto w = leaf(rng), l = leaf(rng);
    if (w != l) out.push_back({w, l, mult(rng)});
  }
  return out;
}

std::vector<testing::RefPair> to_ref(const std::vector<LeafPairIndex>& pairs) {
  std::vector<testing::RefPair> out;
  for (const auto& p : pairs) out.push_back({p.winner_leaf, p.loser_leaf, p.multiplicity});
  return out;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

double rel_err(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

// ---------------------------------------------------------------------------

Outcome gradient_hessian() {
  Outcome out;
  std::mt19937_64 rng(101);
  std::normal_distribution<double> g(0.0, 0.02);
  double worst_g = 0.0, worst_h = 0.0;
  for (int c = 0; c < 200; ++c) {
    const std::size_t m = 2 + rng() % 5;
    const auto pairs = random_leaf_pairs(rng, m, 1 + rng() % 20);
    const auto ref = to_ref(pairs);
    Vector f(static_cast<Eigen::Index>(m));
    for (auto& x : f) x = g(rng);
    const auto e = objective_with_derivatives(f, pairs, kPaper);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      Vector fp = f, fm = f;
      fp[i] += h;
      fm[i] -= h;
      const double fd = (testing::ref_objective(to_std(fp), ref, 0.01, 0.02) -
                         testing::ref_objective(to_std(fm), ref, 0.01, 0.02)) / (2 * h);
      worst_g = std::max(worst_g, rel_err(e.gradient[i], fd));
      const Vector col = (objective_with_derivatives(fp, pairs, kPaper).gradient -
                          objective_with_derivatives(fm, pairs, kPaper).gradient) / (2 * h);
      for (Eigen::Index j = 0; j < f.size(); ++j) worst_h = std::max(worst_h, rel_err(e.hessian(j, i), col[j]));
    }
  }
  out.note("worst gradient relative error " + fmt(worst_g) + ", Hessian " + fmt(worst_h));
  if (worst_g >= 1e-5) out.fail("gradient error above 1e-5");
  if (worst_h >= 1e-4) out.fail("Hessian error above 1e-4");
  return out;
}

Outcome shift_identities() {
  Outcome out;
  std::mt19937_64 rng(202);
  double worst_lambda = 0.0, worst_total = 0.0, worst_s1 = 0.0, worst_mean = 0.0;
  int fits = 0;
  for (int c = 0; c < 200; ++c) {
    // fitted on real trees grown from random comparison data
    const auto schema = testing::random_mixed_schema(rng);
    PreferenceDataset ds(schema);
    for (const auto& p : testing::random_pairs(schema, 1 + rng() % 40, rng)) ds.append(p);
    const auto tree = grow_tree(ds, TreeConfig{});
    const auto pairs = aggregate_leaf_pairs(tree, ds.pairs());
    const auto m = tree.leaf_count();
    const auto f = find_map(pairs, m, kPaper);
    const Vector ones = Vector::Ones(static_cast<Eigen::Index>(m));
    worst_lambda = std::max(worst_lambda, (likelihood_hessian(f, pairs, kPaper) * ones).lpNorm<Eigen::Infinity>());
    const auto post = laplace_posterior(f, pairs, kPaper);
    const double expected = static_cast<double>(m) * kPaper.sigma_prior * kPaper.sigma_prior;
    worst_total = std::max(worst_total, std::abs(post.covariance.sum() - expected) / expected);
    const auto cond = condition_sum_to_zero(post);
    worst_s1 = std::max(worst_s1, (cond.covariance * ones).lpNorm<Eigen::Infinity>());
    worst_mean = std::max(worst_mean, std::abs(cond.mean.sum()) / static_cast<double>(m));
    ++fits;
  }
  out.note(std::to_string(fits) + " fits; max |Lambda 1| " + fmt(worst_lambda) + ", max rel |1'S1 - m s^2| " +
           fmt(worst_total) + ", max |S 1| " + fmt(worst_s1) + ", max |1'mu|/m " + fmt(worst_mean));
  if (worst_lambda > 1e-8) out.fail("Lambda 1 above 1e-8");
  if (worst_total > 1e-6) out.fail("1'S1 off by more than 1e-6 relative");
  if (worst_s1 > 1e-8) out.fail("conditioned S 1 above 1e-8");
  if (worst_mean > 1e-8) out.fail("conditioned mean sum above 1e-8 m");
  return out;
}

Outcome translation() {
  Outcome out;
  std::mt19937_64 rng(303);
  std::normal_distribution<double> g(0.0, 0.05);
  std::uniform_real_distribution<double> shift(-10.0, 10.0);
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    const std::size_t m = 2 + rng() % 5;
    const auto pairs = random_leaf_pairs(rng, m, 1 + rng() % 20);
    Vector f(static_cast<Eigen::Index>(m));
    for (auto& x : f) x = g(rng);
    const double s = shift(rng);
    worst = std::max(worst, std::abs(likelihood_term(f, pairs, kPaper) -
                                     likelihood_term((f.array() + s).matrix(), pairs, kPaper)));
  }
  out.note("max change " + fmt(worst));
  if (worst > 1e-9) out.fail("likelihood term moved by more than 1e-9");
  return out;
}

Outcome map_oracle() {
  Outcome out;
  std::mt19937_64 rng(404);
  double worst = 0.0;
  int cases = 0;
  for (std::size_t m = 2; m <= 4; ++m)
    for (std::size_t n = 1; n <= 10; ++n)
      for (int rep = 0; rep < 5; ++rep) {
        const auto pairs = random_leaf_pairs(rng, m, n);
        const auto f = find_map(pairs, m, kPaper);
        const auto ref = to_ref(pairs);
        const auto nm = testing::nelder_mead(
            [&](const std::vector<double>& x) { return testing::ref_objective(x, ref, 0.01, 0.02); },
            std::vector<double>(m, 0.0), 0.01);
        for (std::size_t i = 0; i < m; ++i) worst = std::max(worst, std::abs(f[static_cast<Eigen::Index>(i)] - nm[i]));
        ++cases;
      }
  out.note(std::to_string(cases) + " instances; max |f_newton - f_neldermead| " + fmt(worst));
  if (worst > 1e-4) out.fail("disagreement above 1e-4");
  return out;
}

Outcome split_oracle() {
  Outcome out;
  std::mt19937_64 rng(505);
  int score_mismatch = 0, split_mismatch = 0;
  for (int c = 0; c < 500; ++c) {
    const auto schema = testing::random_mixed_schema(rng);
    const auto pairs = testing::random_pairs(schema, rng() % 51, rng);
    const testing::BruteSplit* best = nullptr;
    const auto candidates = testing::brute_candidates(pairs, schema);
    for (const auto& cand : candidates) {
      const auto test = cand.categorical ? SplitTest::category_equals(cand.feature, static_cast<std::size_t>(cand.value))
                                         : SplitTest::threshold_at(cand.feature, cand.value);
      if (consistency_score(pairs, test, schema) != cand.score) ++score_mismatch;
      if (!best || cand.score > best->score) best = &cand;
    }
    const auto got = best_split(pairs, schema, TreeConfig{});
    const bool expect_split = best && best->score >= 1;
    if (expect_split != got.has_value()) {
      ++split_mismatch;
      continue;
    }
    if (!got) continue;
    const bool same = got->score == best->score && got->test.feature_index == best->feature &&
                      (best->categorical ? got->test.label_index == static_cast<std::size_t>(best->value)
                                         : std::abs(got->test.threshold - best->value) <= 1e-12);
    if (!same) ++split_mismatch;
  }
  out.note("score mismatches " + std::to_string(score_mismatch) + ", best-split mismatches " +
           std::to_string(split_mismatch) + " over 500 datasets");
  if (score_mismatch || split_mismatch) out.fail("brute-force enumeration disagrees");
  return out;
}

Outcome qeubo_monte_carlo() {
  Outcome out;
  std::mt19937_64 rng(606);
  std::normal_distribution<double> g(0.0, 0.05), z;
  std::uniform_real_distribution<double> rho(-0.95, 0.95), var(1e-5, 4e-3);
  constexpr std::size_t kSamples = 1'000'000;
  double worst = 0.0;
  int outside = 0;
  for (int c = 0; c < 100; ++c) {
    const double va = var(rng), vb = var(rng);
    const PairPrediction p{g(rng), g(rng), va, vb, rho(rng) * std::sqrt(va * vb)};
    const double l11 = std::sqrt(p.var_a), l21 = p.covariance / l11;
    const double l22 = std::sqrt(std::max(0.0, p.var_b - l21 * l21));
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < kSamples; ++i) {
      const double z1 = z(rng), z2 = z(rng);
      const double v = std::max(p.mean_a + l11 * z1, p.mean_b + l21 * z1 + l22 * z2);
      sum += v;
      sum2 += v * v;
    }
    const double mean = sum / kSamples;
    const double se = std::sqrt((sum2 / kSamples - mean * mean) / kSamples);
    const double k = std::abs(qeubo_value(p) - mean) / se;
    worst = std::max(worst, k);
    if (k > 3.0) ++outside;
  }
  out.note("largest deviation " + fmt(worst, 3) + " standard errors; " + std::to_string(outside) + " of 100 beyond 3");
  if (outside) out.fail("closed form outside 3 standard errors");
  return out;
}

Outcome rho_golden() {
  Outcome out;
  const sushi::UserRanking truth{0, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}};
  std::vector<double> desc;
  for (int i = 10; i > 0; --i) desc.push_back(i);
  auto check = [&](const std::string& name, const std::vector<double>& pred, double expected) {
    const double got = sushi::rho_regret(truth, pred);
    out.note(name + ": " + fmt(got, 10) + " (expected " + fmt(expected, 10) + ")");
    if (std::abs(got - expected) > 1e-12) out.fail(name + " mismatch");
  };
  check("perfect", desc, 0.0);
  auto swap34 = desc;
  std::swap(swap34[2], swap34[3]);
  check("swap 3/4", swap34, 10.0 / 21.0);
  check("all ties", std::vector<double>(10, 0.0), 4.0);
  auto inverted = desc;
  std::reverse(inverted.begin(), inverted.end());
  check("full inversion", inverted, 2.0 + 18.0 / 7.0);
  check("top three tied in one leaf", {3, 3, 3, 2, 2, 2, 1, 1, 1, 1}, 0.0);
  return out;
}

Outcome schwefel_direction() {
  Outcome out;
  RunConfig cfg;
  cfg.initial_pairs = 20;
  cfg.iterations = 100;
  const auto q = run_benchmark_experiment("schwefel2d", 10, cfg, AcquisitionMode::Qeubo);
  const auto r = run_benchmark_experiment("schwefel2d", 10, cfg, AcquisitionMode::Random);
  const double q_final = q.regret_stats().mean.back(), r_final = r.regret_stats().mean.back();
  out.note("mean final regret: qEUBO " + fmt(q_final) + ", random " + fmt(r_final));
  if (q_final > r_final) out.fail("qEUBO mean final regret above random");
  for (const auto* rep : {&q, &r})
    for (std::size_t run = 0; run < rep->runs; ++run)
      for (std::size_t t = 1; t < rep->regret[run].size(); ++t)
        if (rep->regret[run][t] > rep->regret[run][t - 1]) {
          out.fail("regret increased in " + to_string(rep->acquisition) + " run " + std::to_string(run));
          t = rep->regret[run].size();
        }
  return out;
}

Outcome levy_runtime() {
  Outcome out;
  RunConfig cfg;
  cfg.initial_pairs = 20;
  cfg.iterations = 200;
  const auto rep = run_benchmark_experiment("levy2d", 1, cfg, AcquisitionMode::Qeubo);
  const auto& t = rep.cum_seconds[0];
  // iteration k = k-th model-chosen query, after the initial pairs
  const double t50 = t[cfg.initial_pairs + 50 - 1], t200 = t.back();
  const double exponent = std::log(t200 / t50) / std::log(4.0);
  out.note("wall time " + fmt(t200, 3) + " s; cumulative time at iteration 50 " + fmt(t50, 3) +
           " s; growth exponent 50->200 " + fmt(exponent, 3));
  if (t200 >= 120.0) out.fail("200 iterations took 120 s or more");
  if (exponent >= 2.0) out.fail("cumulative time grows quadratically or faster");
  return out;
}

struct SushiSource {
  std::optional<sushi::SushiData> data;
  std::string label;
};

SushiSource real_sushi(const std::string& dir) {
  if (dir.empty()) return {std::nullopt, ""};
  return {sushi::load_sushi_data(dir), "sushi3 data in " + dir};
}

sushi::SushiData synthetic_sushi(std::size_t users) {
  sushi::SyntheticCorpusConfig c;
  c.users = users;
  return sushi::make_synthetic_corpus(c);
}

void sushi_direction(const sushi::SushiData& data, Outcome& out, const std::string& label, bool decisive) {
  sushi::SushiEvalConfig cfg;
  cfg.users = 50;
  cfg.queries = 30;
  const auto q = sushi::run_sushi_evaluation(data, cfg).mean_regret();
  cfg.acquisition = AcquisitionMode::Random;
  const auto r = sushi::run_sushi_evaluation(data, cfg).mean_regret();
  const bool ok = q[30] < q[5] && q[20] <= r[20];
  out.note(label + ": qEUBO q5 " + fmt(q[5]) + ", q20 " + fmt(q[20]) + ", q30 " + fmt(q[30]) + "; random q20 " +
           fmt(r[20]) + (ok ? "" : " (direction does not hold)"));
  if (decisive && !ok) out.fail("direction does not hold on " + label);
}

void warm_start_direction(const sushi::SushiData& data, Outcome& out, const std::string& label, bool decisive) {
  sushi::SushiEvalConfig cfg;
  cfg.users = 250;  // first cohort batch of 50 runs cold, leaving 200 warm-started users
  cfg.queries = 30;
  const auto cold = sushi::run_sushi_evaluation(data, cfg);
  cfg.warm_start = true;
  const auto warm = sushi::run_sushi_evaluation(data, cfg);
  const double w = warm.mean_queries_to(1.0, cfg.cohort_batch), c = cold.mean_queries_to(1.0, cfg.cohort_batch);
  const bool ok = w < c;
  out.note(label + ": mean queries to regret <= 1 over users 50..249: warm " + fmt(w) + ", cold " + fmt(c) +
           (ok ? "" : " (direction does not hold)"));
  if (decisive && !ok) out.fail("warm start is not faster on " + label);
}

Outcome sushi_criterion(const std::string& dir, bool warm) {
  Outcome out;
  const auto synthetic = synthetic_sushi(warm ? 300 : 60);
  const std::string syn_label = "synthetic stand-in corpus (not the survey)";
  const auto real = real_sushi(dir);
  if (!real.data) {
    out.status = Status::Skipped;
    out.note("sushi3 files not available; set SUSHI3_DIR or pass --sushi-dir");
  }
  if (real.data) {
    if (warm) warm_start_direction(*real.data, out, real.label, true);
    else sushi_direction(*real.data, out, real.label, true);
  }
  if (warm) warm_start_direction(synthetic, out, syn_label, false);
  else sushi_direction(synthetic, out, syn_label, false);
  return out;
}

struct Criterion {
  std::string id;
  std::string title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string only;
  std::string sushi_dir;
  if (const char* env = std::getenv("SUSHI3_DIR")) sushi_dir = env;
  bool require_sushi = false;
  app.add_option("--only", only, "Run a single criterion by id");
  app.add_option("--sushi-dir", sushi_dir, "Directory with the sushi3 files");
  app.add_flag("--require-sushi", require_sushi, "Run only the Sushi criteria; exit 77 when the sushi3 files are not available");
  CLI11_PARSE(app, argc, argv);

  if (require_sushi && sushi_dir.empty()) {
    std::cout << "sushi3 files not available; set SUSHI3_DIR\n";
    return 77;
  }

  const std::vector<Criterion> criteria{
      {"gradient-hessian", "Gradient/Hessian vs finite differences", gradient_hessian},
      {"shift-identities", "Shift-direction identities of the Laplace posterior", shift_identities},
      {"translation", "Likelihood term invariant under f -> f + c1", translation},
      {"map-oracle", "find_map vs Nelder-Mead", map_oracle},
      {"split-oracle", "Consistency score and best split vs brute force", split_oracle},
      {"qeubo-mc", "qEUBO closed form vs Monte Carlo", qeubo_monte_carlo},
      {"rho-golden", "rho-regret golden values", rho_golden},
      {"schwefel-direction", "Schwefel-2D qEUBO <= random, regret non-increasing", schwefel_direction},
      {"levy-runtime", "Levy-2D 200 iterations under 120 s, sub-quadratic growth", levy_runtime},
      {"sushi-direction", "Sushi A: regret q30 < q5, qEUBO <= random at q20", [&] { return sushi_criterion(sushi_dir, false); }},
      {"warm-start", "Sushi A warm start reaches regret <= 1 sooner", [&] { return sushi_criterion(sushi_dir, true); }},
  };

  int failures = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && c.id != only) continue;
    if (require_sushi && c.id != "sushi-direction" && c.id != "warm-start") continue;
    ++ran;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIPPED";
    std::cout << tag << "  " << c.id << "  " << c.title << "  (" << fmt(secs, 3) << " s)\n";
    for (const auto& d : o.details) std::cout << "      " << d << '\n';
    std::cout.flush();
    if (o.status == Status::Fail) ++failures;
  }
  if (ran == 0) {
    std::cerr << "no criterion named '" << only << "'\n";
    return 2;
  }
  return failures ? 1 : 0;
}
