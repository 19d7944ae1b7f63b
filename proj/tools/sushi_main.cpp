// sushi eval  : simulated per-user sessions on sushi3 rankings, regret curves as CSV
// sushi synth : write a generated stand-in corpus in the sushi3 file layout
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dtpbo/sushi.hpp"
#include "dtpbo/sushi_synthetic.hpp"

int main(int argc, char** argv) {
  namespace s = dtpbo::sushi;
  CLI::App app{"Sushi preference experiments"};
  app.require_subcommand(1);

  auto* eval = app.add_subcommand("eval", "Simulate users answering pairwise queries from their rankings");
  std::string dataset = "A", acquisition = "qeubo", warm = "off", out = "curves.csv", data_dir;
  std::size_t users = 50, queries = 30, cohort = 50;
  double inflation = 0.2;
  std::uint64_t seed = 0;
  eval->add_option("--dataset", dataset, "A (10 items) or B (100 items)")
      ->check(CLI::IsMember({"A", "B"}))
      ->capture_default_str();
  eval->add_option("--users", users, "Users, in file order")->capture_default_str();
  eval->add_option("--queries", queries, "Queries per user")->capture_default_str();
  eval->add_option("--acquisition", acquisition, "qeubo or random")
      ->check(CLI::IsMember({"qeubo", "random"}))
      ->capture_default_str();
  eval->add_option("--warm-start", warm, "Start from the matching user cohort")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  eval->add_option("--cohort-batch", cohort, "Users between user-tree rebuilds")->capture_default_str();
  eval->add_option("--inflation", inflation, "Prior sd around the cohort mean")->capture_default_str();
  eval->add_option("--seed", seed)->capture_default_str();
  eval->add_option("--data-dir", data_dir, "Directory with sushi3.idata, sushi3.udata and the .order files")
      ->envname("SUSHI3_DIR");
  eval->add_option("--out", out, "CSV output path")->capture_default_str();

  auto* synth = app.add_subcommand("synth", "Write a generated stand-in corpus (not survey data)");
  std::string synth_dir;
  s::SyntheticCorpusConfig scfg;
  synth->add_option("--out", synth_dir, "Output directory")->required();
  synth->add_option("--users", scfg.users)->capture_default_str();
  synth->add_option("--seed", scfg.seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      s::write_corpus(s::make_synthetic_corpus(scfg), synth_dir);
      std::cout << "wrote a generated corpus of " << scfg.users << " users to " << synth_dir << '\n';
      return 0;
    }
    if (data_dir.empty()) throw dtpbo::InvalidArgument("--data-dir (or SUSHI3_DIR) is required");
    const auto data = s::load_sushi_data(data_dir);
    s::SushiEvalConfig cfg;
    cfg.dataset = s::dataset_from_string(dataset);
    cfg.users = users;
    cfg.queries = queries;
    cfg.acquisition = dtpbo::acquisition_from_string(acquisition);
    cfg.warm_start = warm == "on";
    cfg.cohort_batch = cohort;
    cfg.inflation = inflation;
    cfg.seed = seed;
    const auto report = s::run_sushi_evaluation(data, cfg);
    std::ofstream f(out);
    if (!f) throw dtpbo::Error("cannot write " + out);
    report.write_csv(f);

    const auto mean = report.mean_regret();
    std::cout << "dataset " << dataset << ", " << users << " users, " << acquisition << ", warm start " << warm
              << "\nmean rho-regret:";
    for (std::size_t q : {0, 5, 10, 20, 30})
      if (q < mean.size()) std::cout << "  q" << q << " " << std::setprecision(4) << mean[q];
    std::cout << "\nmean queries to regret <= 1: " << report.mean_queries_to(1.0) << "\nwrote " << out << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
