// bench run  : regret/timing experiment on a test function, CSV out
// bench plot : regret-vs-iteration and time-vs-iteration charts from those CSVs
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dtpbo/benchmarks.hpp"
#include "dtpbo/explanation.hpp"
#include "svg_plot.hpp"

namespace {

struct CsvCurves {
  std::map<std::size_t, std::vector<double>> regret;  // run -> per iteration
  std::map<std::size_t, std::vector<double>> seconds;
};

CsvCurves read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw dtpbo::InvalidArgument("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "run,iteration,regret,cum_seconds") throw dtpbo::InvalidArgument(path + ": not a bench run report");
  CsvCurves c;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string run, it, regret, secs;
    if (!std::getline(row, run, ',') || !std::getline(row, it, ',') || !std::getline(row, regret, ',') ||
        !std::getline(row, secs))
      throw dtpbo::InvalidArgument(path + ":" + std::to_string(lineno) + ": expected 4 columns");
    c.regret[std::stoul(run)].push_back(std::stod(regret));
    c.seconds[std::stoul(run)].push_back(std::stod(secs));
  }
  if (c.regret.empty()) throw dtpbo::InvalidArgument(path + ": no rows");
  return c;
}

plot::Series to_series(const std::string& label, const std::map<std::size_t, std::vector<double>>& runs) {
  std::vector<std::vector<double>> curves;
  std::size_t n = std::numeric_limits<std::size_t>::max();
  for (const auto& [_, v] : runs) n = std::min(n, v.size());
  for (const auto& [_, v] : runs) curves.emplace_back(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n));
  const auto stats = dtpbo::aggregate(curves);
  plot::Series s{label, {}, stats.mean, stats.stddev};
  for (std::size_t t = 0; t < n; ++t) s.x.push_back(static_cast<double>(t + 1));
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Benchmark experiments for the decision-tree PBO surrogate"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run independent optimization runs and write a CSV report");
  std::string function = "schwefel5d", acquisition = "qeubo", out = "report.csv";
  std::size_t runs = 20, iterations = 200, initial = 20, pool = 64, threads = 1;
  std::uint64_t seed = 0;
  bool explain = false;
  run->add_option("--function", function, "Test function id")
      ->check(CLI::IsMember(dtpbo::benchmark_ids()))
      ->capture_default_str();
  run->add_option("--runs", runs, "Independent runs")->capture_default_str();
  run->add_option("--iterations", iterations, "Model-chosen queries per run")->capture_default_str();
  run->add_option("--initial", initial, "Initial space-filling pairs")->capture_default_str();
  run->add_option("--acquisition", acquisition, "qeubo or random")
      ->check(CLI::IsMember({"qeubo", "random"}))
      ->capture_default_str();
  run->add_option("--pool-size", pool, "Candidate pool size")->capture_default_str();
  run->add_option("--seed", seed, "Seed of run 0; run r uses seed + r")->capture_default_str();
  run->add_option("--threads", threads, "Worker threads")->capture_default_str();
  run->add_option("--out", out, "CSV output path")->capture_default_str();
  run->add_flag("--explain", explain, "Print the final tree of run 0 as rules");

  auto* plt = app.add_subcommand("plot", "Plot mean +- sd regret and cumulative time from run reports");
  std::vector<std::string> inputs;
  std::string out_dir = ".";
  plt->add_option("reports", inputs, "CSV reports from 'bench run'")->required()->check(CLI::ExistingFile);
  plt->add_option("--out-dir", out_dir, "Directory for regret.svg and time.svg")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      dtpbo::RunConfig cfg;
      cfg.initial_pairs = initial;
      cfg.iterations = iterations;
      cfg.acq_cfg.pool_size = pool;
      cfg.seed = seed;
      const auto report =
          dtpbo::run_benchmark_experiment(function, runs, cfg, dtpbo::acquisition_from_string(acquisition), threads);
      std::ofstream f(out);
      if (!f) throw dtpbo::Error("cannot write " + out);
      report.write_csv(f);
      const auto stats = report.regret_stats();
      std::cout << function << " " << acquisition << ": " << runs << " runs, final mean regret " << stats.mean.back()
                << " (sd " << stats.stddev.back() << "), mean wall time " << report.time_stats().mean.back()
                << " s\nwrote " << out << '\n';
      if (explain) {
        const auto f_def = dtpbo::make_benchmark(function);
        auto oracle = dtpbo::make_oracle(f_def);
        auto run_cfg = cfg;
        run_cfg.acquisition = dtpbo::acquisition_from_string(acquisition);
        dtpbo::PboSession session(f_def.schema(), run_cfg);
        for (std::size_t k = 0; k < initial + iterations; ++k) {
          const auto& p = session.pending();
          session.answer(oracle.prefers_first(p.first, p.second));
        }
        const auto model = session.fit_current();
        std::cout << dtpbo::render_rules(model.tree, model.posterior);
      }
    } else {
      std::filesystem::create_directories(out_dir);
      plot::Chart regret{"Regret vs comparisons answered", "comparisons answered", "regret", {}};
      plot::Chart time{"Cumulative wall time", "comparisons answered", "seconds", {}};
      for (const auto& path : inputs) {
        const auto c = read_report(path);
        const auto label = std::filesystem::path(path).stem().string();
        regret.series.push_back(to_series(label, c.regret));
        time.series.push_back(to_series(label, c.seconds));
      }
      const auto dir = std::filesystem::path(out_dir);
      plot::write_svg(regret, (dir / "regret.svg").string());
      plot::write_svg(time, (dir / "time.svg").string());
      std::cout << "wrote " << (dir / "regret.svg").string() << " and " << (dir / "time.svg").string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
