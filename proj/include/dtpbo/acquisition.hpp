#ifndef DTPBO_ACQUISITION_HPP
#define DTPBO_ACQUISITION_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "dtpbo/core.hpp"
#include "dtpbo/leaf_posterior.hpp"
#include "dtpbo/normal.hpp"
#include "dtpbo/pref_tree.hpp"

namespace dtpbo {

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
  std::size_t leaf = 0;
};

/// Joint Gaussian prediction for the two members of a candidate pair.
struct PairPrediction {
  double mean_a = 0.0;
  double mean_b = 0.0;
  double var_a = 0.0;
  double var_b = 0.0;
  double covariance = 0.0;
};

struct AcquisitionConfig {
  std::size_t pool_size = 64;
  bool prioritize_within_leaf = false;
  // within-leaf pairs are preferred while the top leaf holds fewer pairs than this
  std::size_t within_leaf_saturation = 4;
  std::uint64_t seed = 0;
};

inline Prediction predict(const PreferenceTree& tree, const LatentPosterior& posterior, const Instance& x) {
  const auto leaf = tree.route(x);
  const auto k = static_cast<Eigen::Index>(leaf);
  return {posterior.mean[k], posterior.covariance(k, k), leaf};
}

inline PairPrediction predict_pair(const PreferenceTree& tree, const LatentPosterior& posterior,
                                   const Instance& a, const Instance& b) {
  const auto la = static_cast<Eigen::Index>(tree.route(a));
  const auto lb = static_cast<Eigen::Index>(tree.route(b));
  return {posterior.mean[la], posterior.mean[lb], posterior.covariance(la, la), posterior.covariance(lb, lb),
          posterior.covariance(la, lb)};
}

/// E[max(F_a, F_b)] for jointly Gaussian F_a, F_b (expected utility of the
/// best option for q = 2).
inline double qeubo_value(const PairPrediction& p) {
  const double s2 = p.var_a + p.var_b - 2.0 * p.covariance;
  const double s = s2 > 0.0 ? std::sqrt(s2) : 0.0;
  if (s <= 1e-12) return std::max(p.mean_a, p.mean_b);
  const double alpha = (p.mean_a - p.mean_b) / s;
  return p.mean_a * normal::cdf(alpha) + p.mean_b * normal::cdf(-alpha) + s * normal::pdf(alpha);
}

namespace detail {

// Range-normalized squared distance; categorical mismatches count 1.
inline double feature_distance(const FeatureSchema& schema, const Instance& a, const Instance& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema[i].is_continuous()) {
      const auto& c = schema[i].continuous();
      const double u = (a[i] - b[i]) / (c.upper - c.lower);
      d += u * u;
    } else if (a[i] != b[i]) {
      d += 1.0;
    }
  }
  return d;
}

}  // namespace detail

/// Index of the candidate to query next: the qEUBO maximizer (first on ties),
/// or, with within-leaf prioritization, the most distant same-leaf candidate
/// of the highest-mean leaf while that leaf is unsaturated.
inline std::size_t select_from_candidates(const PreferenceTree& tree, const LatentPosterior& posterior,
                                          std::span<const CandidatePair> candidates, const AcquisitionConfig& cfg) {
  if (candidates.empty()) throw InvalidArgument("no candidate pairs to select from");
  if (posterior.dimension() != tree.leaf_count()) throw InvalidArgument("posterior does not match tree");

  if (cfg.prioritize_within_leaf) {
    std::optional<std::size_t> top_leaf;
    for (const auto& c : candidates) {
      const auto la = tree.route(c.first);
      if (la != tree.route(c.second) || c.first == c.second) continue;
      if (!top_leaf || posterior.mean[static_cast<Eigen::Index>(la)] >
                           posterior.mean[static_cast<Eigen::Index>(*top_leaf)] ||
          (posterior.mean[static_cast<Eigen::Index>(la)] == posterior.mean[static_cast<Eigen::Index>(*top_leaf)] &&
           la < *top_leaf))
        top_leaf = la;
    }
    if (top_leaf && tree.leaf_node(*top_leaf).pair_count < cfg.within_leaf_saturation) {
      std::size_t best = candidates.size();
      double best_distance = -1.0;
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& c = candidates[i];
        if (c.first == c.second || tree.route(c.first) != *top_leaf || tree.route(c.second) != *top_leaf) continue;
        const double d = detail::feature_distance(tree.schema(), c.first, c.second);
        if (d > best_distance) {
          best_distance = d;
          best = i;
        }
      }
      if (best < candidates.size()) return best;
    }
  }

  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double v = qeubo_value(predict_pair(tree, posterior, candidates[i].first, candidates[i].second));
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }
  return best;
}

/// All unordered pairs of a pool, in (i, j) lexicographic order with i < j.
inline std::vector<CandidatePair> all_pairs(std::span<const Instance> pool) {
  std::vector<CandidatePair> out;
  out.reserve(pool.size() * (pool.size() - 1) / 2);
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (std::size_t j = i + 1; j < pool.size(); ++j) out.push_back({pool[i], pool[j]});
  return out;
}

inline std::vector<Instance> draw_pool(const FeatureSchema& schema, std::size_t pool_size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Instance> pool;
  pool.reserve(pool_size);
  for (std::size_t i = 0; i < pool_size; ++i) pool.push_back(sample_uniform(schema, rng));
  return pool;
}

/// Draws pool_size uniform instances and returns the selected pair among them.
inline CandidatePair select_next_pair(const PreferenceTree& tree, const LatentPosterior& posterior,
                                      const FeatureSchema& schema, const AcquisitionConfig& cfg) {
  if (cfg.pool_size < 2) throw InvalidArgument("pool_size must be >= 2");
  const auto pool = draw_pool(schema, cfg.pool_size, cfg.seed);
  const auto candidates = all_pairs(pool);
  return candidates[select_from_candidates(tree, posterior, candidates, cfg)];
}

/// Baseline: a uniformly random pair.
inline CandidatePair random_pair(const FeatureSchema& schema, std::uint64_t seed) {
  const auto pool = draw_pool(schema, 2, seed);
  return {pool[0], pool[1]};
}

}  // namespace dtpbo

#endif  // DTPBO_ACQUISITION_HPP
