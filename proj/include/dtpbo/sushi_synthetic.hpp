// Generated stand-in for the sushi3 corpus, for running the Sushi pipeline
// when the published files are not available. It follows the published file
// layout and feature ranges; preferences come from a latent utility whose
// weights depend on the user's gender and age band. Results on it say
// nothing about the real survey.
#ifndef DTPBO_SUSHI_SYNTHETIC_HPP
#define DTPBO_SUSHI_SYNTHETIC_HPP

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "dtpbo/sushi.hpp"

namespace dtpbo::sushi {

struct SyntheticCorpusConfig {
  std::size_t items = 100;
  std::size_t users = 5000;
  double user_spread = 0.25;  // per-user jitter of the cohort weights
  double item_noise = 0.35;   // per (user, item) idiosyncratic utility
  std::uint64_t seed = 2024;
};

namespace detail {

// Weights over (oiliness, eat_frequency, normalized_price, maki, non-seafood)
// for the cohorts gender x {younger than 30, 30 and over}.
inline constexpr std::array<std::array<double, 5>, 4> kCohortWeights{{
    {0.9, 0.6, 0.3, -0.4, -0.8},
    {-0.5, 0.8, -0.6, 0.7, 0.2},
    {0.2, -0.3, 0.9, -0.8, 0.6},
    {-0.9, 0.4, 0.5, 0.3, -0.5},
}};

inline std::size_t cohort_of(const SushiUser& u) { return static_cast<std::size_t>(u.gender * 2 + (u.age_band >= 2)); }

}  // namespace detail

/// Latent utility of an item for a user; `jitter` and `noise` are the user's draws.
inline double synthetic_utility(const SushiItem& it, const SushiUser& u, const std::array<double, 5>& jitter,
                                double noise) {
  const auto& w = detail::kCohortWeights[detail::cohort_of(u)];
  const std::array<double, 5> x{it.oiliness / 4.0 - 0.5, it.eat_frequency / 3.0 - 0.5, it.normalized_price - 0.5,
                                it.style == 0 ? 0.5 : -0.5, it.major_group == 1 ? 0.5 : -0.5};
  double v = noise;
  for (std::size_t k = 0; k < 5; ++k) v += (w[k] + jitter[k]) * x[k];
  return v;
}

inline SushiData make_synthetic_corpus(const SyntheticCorpusConfig& cfg = {}) {
  if (cfg.items < kDatasetASize) throw InvalidArgument("synthetic corpus needs at least 10 items");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  SushiData d;
  for (std::size_t i = 0; i < cfg.items; ++i) {
    SushiItem it;
    it.id = i;
    it.name = "synthetic_" + std::to_string(i);
    it.style = unit(rng) < 0.3 ? 0 : 1;
    it.major_group = unit(rng) < 0.8 ? 0 : 1;
    it.minor_group = it.major_group == 0 ? pick(0, 8) : pick(9, 11);
    it.oiliness = std::round(4.0 * unit(rng) * 1000.0) / 1000.0;
    it.eat_frequency = std::round(3.0 * unit(rng) * 1000.0) / 1000.0;
    it.price = std::round((1.0 + 4.0 * unit(rng)) * 1000.0) / 1000.0;
    it.sell_frequency = std::round(unit(rng) * 1000.0) / 1000.0;
    d.items.push_back(it);
  }
  // same normalization as the loader
  double lo = d.items[0].price, hi = d.items[0].price;
  for (const auto& it : d.items) {
    lo = std::min(lo, it.price);
    hi = std::max(hi, it.price);
  }
  for (auto& it : d.items) it.normalized_price = hi > lo ? (it.price - lo) / (hi - lo) : 0.0;

  std::normal_distribution<double> jitter_dist(0.0, cfg.user_spread), noise_dist(0.0, cfg.item_noise);
  for (std::size_t u = 0; u < cfg.users; ++u) {
    SushiUser user;
    user.id = u;
    user.gender = pick(0, 1);
    user.age_band = pick(0, 5);
    user.survey_time = std::round((100.0 + 900.0 * unit(rng)) * 10.0) / 10.0;
    user.prefecture_child = pick(0, static_cast<int>(kPrefectures) - 1);
    user.region_child = user.prefecture_child % static_cast<int>(kRegions);
    user.east_west_child = user.region_child >= 6 ? 1 : 0;
    user.prefecture_changed = unit(rng) < 0.3 ? 1 : 0;
    user.prefecture_now =
        user.prefecture_changed ? pick(0, static_cast<int>(kPrefectures) - 1) : user.prefecture_child;
    user.region_now = user.prefecture_now % static_cast<int>(kRegions);
    user.east_west_now = user.region_now >= 6 ? 1 : 0;
    d.users.push_back(user);

    std::array<double, 5> jitter{};
    for (auto& j : jitter) j = jitter_dist(rng);
    std::vector<double> utility(cfg.items);
    for (std::size_t i = 0; i < cfg.items; ++i) utility[i] = synthetic_utility(d.items[i], user, jitter, noise_dist(rng));

    auto rank = [&](std::vector<std::size_t> ids) {
      std::stable_sort(ids.begin(), ids.end(), [&](auto a, auto b) { return utility[a] > utility[b]; });
      return UserRanking{u, std::move(ids)};
    };
    std::vector<std::size_t> set_a(kDatasetASize);
    std::iota(set_a.begin(), set_a.end(), 0);
    d.rankings_a.push_back(rank(set_a));

    std::vector<std::size_t> all(cfg.items);
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(kRankingLength);
    d.rankings_b.push_back(rank(all));
  }
  return d;
}

/// Writes the corpus in the published file layout.
inline void write_corpus(const SushiData& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw Error("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open(kItemFile);
    write_items(f, d.items);
  }
  {
    auto f = open(kUserFile);
    write_users(f, d.users);
  }
  {
    auto f = open(kOrderFileA);
    write_orders(f, d.rankings_a, kDatasetASize);
  }
  {
    auto f = open(kOrderFileB);
    write_orders(f, d.rankings_b, d.items.size());
  }
}

}  // namespace dtpbo::sushi

#endif  // DTPBO_SUSHI_SYNTHETIC_HPP
