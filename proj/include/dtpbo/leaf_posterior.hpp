#ifndef DTPBO_LEAF_POSTERIOR_HPP
#define DTPBO_LEAF_POSTERIOR_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dtpbo/core.hpp"
#include "dtpbo/normal.hpp"
#include "dtpbo/pref_tree.hpp"

namespace dtpbo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double gradient_norm)
      : Error(what), gradient_norm_(gradient_norm) {}
  double gradient_norm() const { return gradient_norm_; }

 private:
  double gradient_norm_;
};

class FactorizationError : public Error {
 public:
  using Error::Error;
};

/// One aggregated observation "leaf winner_leaf beat leaf loser_leaf",
/// seen multiplicity times.
struct LeafPairIndex {
  std::size_t winner_leaf = 0;
  std::size_t loser_leaf = 0;
  std::size_t multiplicity = 1;
  friend bool operator==(const LeafPairIndex&, const LeafPairIndex&) = default;
};

struct NoiseConfig {
  double sigma_noise = 0.01;
  double sigma_prior = 0.02;

  void check() const {
    if (!(sigma_noise > 0.0) || !(sigma_prior > 0.0))
      throw InvalidArgument("sigma_noise and sigma_prior must be positive");
  }
};

/// Isotropic Gaussian prior N(mean, scale^2 I) on the leaf values. The default
/// (empty mean) is the zero-mean prior with scale sigma_prior.
struct LeafPrior {
  Vector mean;        // empty means zero
  double scale = 0.0; // 0 means NoiseConfig::sigma_prior

  double resolved_scale(const NoiseConfig& cfg) const { return scale > 0.0 ? scale : cfg.sigma_prior; }
  Vector resolved_mean(std::size_t m) const {
    if (mean.size() == 0) return Vector::Zero(static_cast<Eigen::Index>(m));
    if (static_cast<std::size_t>(mean.size()) != m) throw InvalidArgument("prior mean has wrong dimension");
    return mean;
  }
};

struct LatentPosterior {
  Vector mean;
  Matrix covariance;
  bool constrained = false;

  std::size_t dimension() const { return static_cast<std::size_t>(mean.size()); }
};

struct ObjectiveEvaluation {
  double value = 0.0;
  Vector gradient;
  Matrix hessian;
};

namespace detail {

inline void check_indices(std::span<const LeafPairIndex> pairs, std::size_t m) {
  for (const auto& p : pairs)
    if (p.winner_leaf >= m || p.loser_leaf >= m) throw InvalidArgument("leaf index out of range");
}

}  // namespace detail

/// Negative log-likelihood of the probit pairwise model alone, without the prior.
inline double likelihood_term(const Vector& f, std::span<const LeafPairIndex> pairs, const NoiseConfig& cfg) {
  detail::check_indices(pairs, static_cast<std::size_t>(f.size()));
  const double scale = std::numbers::sqrt2 * cfg.sigma_noise;
  double value = 0.0;
  for (const auto& p : pairs) {
    const double z = (f[p.winner_leaf] - f[p.loser_leaf]) / scale;
    value -= static_cast<double>(p.multiplicity) * normal::log_cdf(z);
  }
  return value;
}

/// Likelihood-only Hessian, Lambda in the posterior precision I/s^2 + Lambda.
inline Matrix likelihood_hessian(const Vector& f, std::span<const LeafPairIndex> pairs, const NoiseConfig& cfg) {
  const auto m = f.size();
  detail::check_indices(pairs, static_cast<std::size_t>(m));
  const double scale = std::numbers::sqrt2 * cfg.sigma_noise;
  const double inv_scale2 = 1.0 / (scale * scale);
  Matrix lambda = Matrix::Zero(m, m);
  for (const auto& p : pairs) {
    const double z = (f[p.winner_leaf] - f[p.loser_leaf]) / scale;
    const double h = static_cast<double>(p.multiplicity) * normal::neg_log_cdf_curvature(z) * inv_scale2;
    lambda(p.winner_leaf, p.winner_leaf) += h;
    lambda(p.loser_leaf, p.loser_leaf) += h;
    lambda(p.winner_leaf, p.loser_leaf) -= h;
    lambda(p.loser_leaf, p.winner_leaf) -= h;
  }
  return lambda;
}

/// L(f) = -sum_k mult_k ln Phi(z_k) + |f - mu0|^2 / (2 s^2) with its exact
/// gradient and Hessian.
inline ObjectiveEvaluation objective_with_derivatives(const Vector& f, std::span<const LeafPairIndex> pairs,
                                                      const NoiseConfig& cfg, const LeafPrior& prior = {}) {
  const auto m = f.size();
  detail::check_indices(pairs, static_cast<std::size_t>(m));
  const double s = prior.resolved_scale(cfg);
  const Vector mu0 = prior.resolved_mean(static_cast<std::size_t>(m));
  const double inv_s2 = 1.0 / (s * s);
  const double scale = std::numbers::sqrt2 * cfg.sigma_noise;

  ObjectiveEvaluation out;
  const Vector centered = f - mu0;
  out.value = 0.5 * inv_s2 * centered.squaredNorm();
  out.gradient = inv_s2 * centered;
  out.hessian = Matrix::Identity(m, m) * inv_s2;
  for (const auto& p : pairs) {
    const double mult = static_cast<double>(p.multiplicity);
    const double z = (f[p.winner_leaf] - f[p.loser_leaf]) / scale;
    out.value -= mult * normal::log_cdf(z);
    const double g = -mult * normal::mills_ratio(z) / scale;
    out.gradient[p.winner_leaf] += g;
    out.gradient[p.loser_leaf] -= g;
    const double h = mult * normal::neg_log_cdf_curvature(z) / (scale * scale);
    out.hessian(p.winner_leaf, p.winner_leaf) += h;
    out.hessian(p.loser_leaf, p.loser_leaf) += h;
    out.hessian(p.winner_leaf, p.loser_leaf) -= h;
    out.hessian(p.loser_leaf, p.winner_leaf) -= h;
  }
  return out;
}

struct NewtonOptions {
  double gradient_tolerance = 1e-8;
  int max_iterations = 200;
  double armijo = 1e-4;
};

/// Minimizer of the strictly convex L(f) by damped Newton with backtracking,
/// started from the prior mean.
inline Vector find_map(std::span<const LeafPairIndex> pairs, std::size_t m, const NoiseConfig& cfg,
                       const LeafPrior& prior = {}, const NewtonOptions& options = {}) {
  if (m < 1) throw InvalidArgument("find_map needs m >= 1");
  cfg.check();
  detail::check_indices(pairs, m);
  Vector f = prior.resolved_mean(m);
  auto eval = objective_with_derivatives(f, pairs, cfg, prior);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    if (eval.gradient.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance) return f;
    Eigen::LLT<Matrix> llt(eval.hessian);
    if (llt.info() != Eigen::Success) throw FactorizationError("Hessian not positive definite during Newton step");
    const Vector step = -llt.solve(eval.gradient);
    const double slope = eval.gradient.dot(step);
    // Near the optimum the decrease drops below rounding in the objective
    // value; a full step that stays level and shrinks the gradient is taken.
    const double flat = 1e-12 * (1.0 + std::abs(eval.value));
    const double gnorm_now = eval.gradient.lpNorm<Eigen::Infinity>();
    bool accepted = false;
    for (double t = 1.0; t > 1e-18; t *= 0.5) {
      Vector trial = f + t * step;
      auto trial_eval = objective_with_derivatives(trial, pairs, cfg, prior);
      const bool armijo = trial_eval.value <= eval.value + options.armijo * t * slope;
      const bool level = t == 1.0 && trial_eval.value <= eval.value + flat &&
                         trial_eval.gradient.lpNorm<Eigen::Infinity>() < gnorm_now;
      if (armijo || level) {
        f = std::move(trial);
        eval = std::move(trial_eval);
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  const double gnorm = eval.gradient.lpNorm<Eigen::Infinity>();
  if (gnorm <= options.gradient_tolerance) return f;
  throw ConvergenceError("find_map did not converge (gradient max-norm " + std::to_string(gnorm) + ")", gnorm);
}

/// Laplace approximation at the MAP: covariance is the inverse Hessian,
/// obtained from its Cholesky factorization.
inline LatentPosterior laplace_posterior(const Vector& f_map, std::span<const LeafPairIndex> pairs,
                                         const NoiseConfig& cfg, const LeafPrior& prior = {}) {
  const auto eval = objective_with_derivatives(f_map, pairs, cfg, prior);
  Eigen::LLT<Matrix> llt(eval.hessian);
  if (llt.info() != Eigen::Success) throw FactorizationError("Hessian factorization failed at the MAP");
  LatentPosterior post;
  post.mean = f_map;
  post.covariance = llt.solve(Matrix::Identity(f_map.size(), f_map.size()));
  post.covariance = 0.5 * (post.covariance + post.covariance.transpose()).eval();
  post.constrained = false;
  return post;
}

/// Conditions a Gaussian on sum(f) = 0.
inline LatentPosterior condition_sum_to_zero(const LatentPosterior& posterior) {
  const Vector sigma_one = posterior.covariance.rowwise().sum();
  const double total = sigma_one.sum();
  if (!(total > 0.0)) throw Error("condition_sum_to_zero: 1'S1 must be positive");
  LatentPosterior out;
  out.mean = posterior.mean - (posterior.mean.sum() / total) * sigma_one;
  out.covariance = posterior.covariance - (sigma_one * sigma_one.transpose()) / total;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  out.constrained = true;
  return out;
}

/// Maps comparisons onto leaves, drops same-leaf pairs, and merges duplicates.
/// Output order is by (winner_leaf, loser_leaf).
inline std::vector<LeafPairIndex> aggregate_leaf_pairs(const PreferenceTree& tree,
                                                       std::span<const ComparisonPair> pairs) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> counts;
  for (const auto& p : pairs) {
    const auto w = tree.route(p.winner);
    const auto l = tree.route(p.loser);
    if (w != l) ++counts[{w, l}];
  }
  std::vector<LeafPairIndex> out;
  out.reserve(counts.size());
  for (const auto& [key, n] : counts) out.push_back({key.first, key.second, n});
  return out;
}

/// Leaf-value posterior for a fixed tree: MAP, Laplace covariance, then the
/// sum-to-zero conditioning.
inline LatentPosterior fit_leaf_values(const PreferenceTree& tree, std::span<const ComparisonPair> pairs,
                                       const NoiseConfig& noise_cfg, const LeafPrior& prior = {}) {
  noise_cfg.check();
  const auto leaf_pairs = aggregate_leaf_pairs(tree, pairs);
  const auto f_map = find_map(leaf_pairs, tree.leaf_count(), noise_cfg, prior);
  return condition_sum_to_zero(laplace_posterior(f_map, leaf_pairs, noise_cfg, prior));
}

struct Surrogate {
  PreferenceTree tree;
  LatentPosterior posterior;
};

inline Surrogate fit_surrogate(const PreferenceDataset& dataset, const TreeConfig& tree_cfg,
                               const NoiseConfig& noise_cfg) {
  Surrogate s{grow_tree(dataset, tree_cfg), {}};
  s.posterior = fit_leaf_values(s.tree, dataset.pairs(), noise_cfg);
  return s;
}

}  // namespace dtpbo

#endif  // DTPBO_LEAF_POSTERIOR_HPP
