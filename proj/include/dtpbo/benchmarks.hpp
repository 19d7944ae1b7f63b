#ifndef DTPBO_BENCHMARKS_HPP
#define DTPBO_BENCHMARKS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <functional>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "dtpbo/core.hpp"
#include "dtpbo/pbo_loop.hpp"

namespace dtpbo {

/// Test function in maximization form: evaluate returns minus the standard
/// minimization objective.
struct BenchmarkFunction {
  std::string name;
  std::size_t dimension = 0;
  std::vector<std::pair<double, double>> bounds;
  std::function<double(std::span<const double>)> objective;  // standard (minimization) form
  double known_max_value = 0.0;
  std::optional<Instance> known_max_location;

  FeatureSchema schema() const {
    std::vector<FeatureSpec> specs;
    for (std::size_t i = 0; i < dimension; ++i)
      specs.push_back({"x" + std::to_string(i + 1), Continuous{bounds[i].first, bounds[i].second}});
    return FeatureSchema(std::move(specs));
  }

  double evaluate(const Instance& x) const {
    if (x.size() != dimension)
      throw InvalidArgument(name + ": expected " + std::to_string(dimension) + " coordinates");
    for (std::size_t i = 0; i < dimension; ++i)
      if (!(x[i] >= bounds[i].first && x[i] <= bounds[i].second))
        throw InvalidArgument(name + ": coordinate " + std::to_string(i) + " out of bounds");
    return -objective(x.values);
  }
};

namespace functions {

inline double branin(std::span<const double> x) {
  constexpr double pi = std::numbers::pi;
  const double b = 5.1 / (4.0 * pi * pi);
  const double c = 5.0 / pi;
  const double t = 1.0 / (8.0 * pi);
  const double u = x[1] - b * x[0] * x[0] + c * x[0] - 6.0;
  return u * u + 10.0 * (1.0 - t) * std::cos(x[0]) + 10.0;
}

inline double sphere(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

inline double levy(std::span<const double> x) {
  constexpr double pi = std::numbers::pi;
  const std::size_t d = x.size();
  auto w = [&](std::size_t i) { return 1.0 + (x[i] - 1.0) / 4.0; };
  const double s0 = std::sin(pi * w(0));
  double s = s0 * s0;
  for (std::size_t i = 0; i + 1 < d; ++i) {
    const double wi = w(i);
    const double si = std::sin(pi * wi + 1.0);
    s += (wi - 1.0) * (wi - 1.0) * (1.0 + 10.0 * si * si);
  }
  const double wd = w(d - 1);
  const double sd = std::sin(2.0 * pi * wd);
  return s + (wd - 1.0) * (wd - 1.0) * (1.0 + sd * sd);
}

inline double rosenbrock(std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const double a = x[i + 1] - x[i] * x[i];
    const double b = x[i] - 1.0;
    s += 100.0 * a * a + b * b;
  }
  return s;
}

inline double michalewicz(std::span<const double> x) {
  constexpr double pi = std::numbers::pi;
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double inner = std::sin(static_cast<double>(i + 1) * x[i] * x[i] / pi);
    s -= std::sin(x[i]) * std::pow(inner, 20);
  }
  return s;
}

inline double hartmann6(std::span<const double> x) {
  static constexpr std::array<double, 4> alpha{1.0, 1.2, 3.0, 3.2};
  static constexpr double a[4][6] = {{10, 3, 17, 3.5, 1.7, 8},
                                     {0.05, 10, 17, 0.1, 8, 14},
                                     {3, 3.5, 1.7, 10, 17, 8},
                                     {17, 8, 0.05, 10, 0.1, 14}};
  static constexpr double p[4][6] = {{1312, 1696, 5569, 124, 8283, 5886},
                                     {2329, 4135, 8307, 3736, 1004, 9991},
                                     {2348, 1451, 3522, 2883, 3047, 6650},
                                     {4047, 8828, 8732, 5743, 1091, 381}};
  double s = 0.0;
  for (int i = 0; i < 4; ++i) {
    double inner = 0.0;
    for (int j = 0; j < 6; ++j) {
      const double d = x[static_cast<std::size_t>(j)] - 1e-4 * p[i][j];
      inner += a[i][j] * d * d;
    }
    s -= alpha[static_cast<std::size_t>(i)] * std::exp(-inner);
  }
  return s;
}

inline double schwefel(std::span<const double> x) {
  double s = 418.9829 * static_cast<double>(x.size());
  for (double v : x) s -= v * std::sin(std::sqrt(std::abs(v)));
  return s;
}

}  // namespace functions

namespace detail {

inline BenchmarkFunction make_function(std::string name, std::size_t dim, std::pair<double, double> box,
                                       std::function<double(std::span<const double>)> objective,
                                       std::optional<std::vector<double>> location, double best_known = 0.0) {
  BenchmarkFunction f;
  f.name = std::move(name);
  f.dimension = dim;
  f.bounds.assign(dim, box);
  f.objective = std::move(objective);
  if (location) {
    f.known_max_location = Instance{*location};
    f.known_max_value = -f.objective(*location);
  } else {
    f.known_max_value = best_known;
  }
  return f;
}

}  // namespace detail

inline std::vector<std::string> benchmark_ids() {
  return {"branin", "dejong", "levy2d", "rosenbrock4d", "michalewicz2d", "hartmann6d", "michalewicz5d",
          "schwefel5d", "schwefel2d"};
}

/// Suite ordered by increasing spikiness, plus schwefel2d for desk-scale runs.
inline BenchmarkFunction make_benchmark(const std::string& id) {
  using detail::make_function;
  constexpr double pi = std::numbers::pi;
  constexpr double schwefel_x = 420.96874878568275;
  if (id == "branin") {
    auto f = make_function(id, 2, {0, 0}, functions::branin, std::vector<double>{pi, 2.275});
    f.bounds = {{-5.0, 10.0}, {0.0, 15.0}};
    return f;
  }
  if (id == "dejong") return make_function(id, 2, {-5.12, 5.12}, functions::sphere, std::vector<double>(2, 0.0));
  if (id == "levy2d") return make_function(id, 2, {-10.0, 10.0}, functions::levy, std::vector<double>(2, 1.0));
  if (id == "rosenbrock4d")
    return make_function(id, 4, {-5.0, 10.0}, functions::rosenbrock, std::vector<double>(4, 1.0));
  if (id == "michalewicz2d")
    return make_function(id, 2, {0.0, pi}, functions::michalewicz, std::vector<double>{2.20290552, 1.57079633});
  if (id == "hartmann6d")
    return make_function(id, 6, {0.0, 1.0}, functions::hartmann6,
                         std::vector<double>{0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573});
  if (id == "michalewicz5d")
    return make_function(id, 5, {0.0, pi}, functions::michalewicz, std::nullopt, 4.687658179);
  if (id == "schwefel5d")
    return make_function(id, 5, {-500.0, 500.0}, functions::schwefel, std::vector<double>(5, schwefel_x));
  if (id == "schwefel2d")
    return make_function(id, 2, {-500.0, 500.0}, functions::schwefel, std::vector<double>(2, schwefel_x));
  throw InvalidArgument("unknown benchmark function: " + id);
}

inline double evaluate_benchmark(const std::string& id, const Instance& x) { return make_benchmark(id).evaluate(x); }

inline SyntheticOracle make_oracle(const BenchmarkFunction& f) {
  return SyntheticOracle([f](const Instance& x) { return f.evaluate(x); }, f.known_max_value);
}

struct CurveStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

inline CurveStats aggregate(const std::vector<std::vector<double>>& curves) {
  CurveStats s;
  if (curves.empty()) return s;
  const std::size_t n = curves.front().size();
  s.mean.assign(n, 0.0);
  s.stddev.assign(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double sum = 0.0;
    for (const auto& c : curves) sum += c[t];
    const double mean = sum / static_cast<double>(curves.size());
    double ss = 0.0;
    for (const auto& c : curves) ss += (c[t] - mean) * (c[t] - mean);
    s.mean[t] = mean;
    s.stddev[t] = curves.size() > 1 ? std::sqrt(ss / static_cast<double>(curves.size() - 1)) : 0.0;
  }
  return s;
}

struct ExperimentReport {
  std::string function;
  AcquisitionMode acquisition = AcquisitionMode::Qeubo;
  std::size_t runs = 0;
  std::vector<std::vector<double>> regret;       // [run][comparison]
  std::vector<std::vector<double>> cum_seconds;  // [run][comparison]

  CurveStats regret_stats() const { return aggregate(regret); }
  CurveStats time_stats() const { return aggregate(cum_seconds); }

  void write_csv(std::ostream& os) const {
    os << "run,iteration,regret,cum_seconds\n";
    os.precision(12);
    for (std::size_t r = 0; r < runs; ++r)
      for (std::size_t t = 0; t < regret[r].size(); ++t)
        os << r << ',' << t + 1 << ',' << regret[r][t] << ',' << cum_seconds[r][t] << '\n';
  }
};

/// Independent runs with seeds seed+0 .. seed+runs-1; regret and cumulative
/// wall time are recorded per answered comparison.
inline ExperimentReport run_benchmark_experiment(const std::string& function_id, std::size_t runs, RunConfig cfg,
                                                 AcquisitionMode acquisition, std::size_t threads = 1) {
  if (runs < 1) throw InvalidArgument("runs must be >= 1");
  const auto f = make_benchmark(function_id);
  const auto schema = f.schema();
  cfg.acquisition = acquisition;

  ExperimentReport report;
  report.function = function_id;
  report.acquisition = acquisition;
  report.runs = runs;
  report.regret.resize(runs);
  report.cum_seconds.resize(runs);

  auto one_run = [&](std::size_t r) {
    RunConfig run_cfg = cfg;
    run_cfg.seed = cfg.seed + r;
    auto oracle = make_oracle(f);
    const auto trace = run(oracle, schema, run_cfg);
    for (const auto& rec : trace.records) {
      report.regret[r].push_back(*rec.regret);
      report.cum_seconds[r].push_back(rec.elapsed_seconds);
    }
  };

  threads = std::max<std::size_t>(1, std::min(threads, runs));
  if (threads == 1) {
    for (std::size_t r = 0; r < runs; ++r) one_run(r);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> failures(threads);
    for (std::size_t w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t r = w; r < runs; r += threads) one_run(r);
        } catch (...) {
          failures[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (const auto& e : failures)
      if (e) std::rethrow_exception(e);
  }
  return report;
}

}  // namespace dtpbo

#endif  // DTPBO_BENCHMARKS_HPP
