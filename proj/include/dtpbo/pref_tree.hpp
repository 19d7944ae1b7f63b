#ifndef DTPBO_PREF_TREE_HPP
#define DTPBO_PREF_TREE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dtpbo/core.hpp"

namespace dtpbo {

/// Axis-aligned test. A Threshold passes when x[feature] >= t, a CategoryEquals
/// test when x[feature] equals the label. Passing members go right.
struct SplitTest {
  enum class Kind { Threshold, CategoryEquals };

  std::size_t feature_index = 0;
  Kind kind = Kind::Threshold;
  double threshold = 0.0;
  std::size_t label_index = 0;

  static SplitTest threshold_at(std::size_t feature, double t) {
    return {feature, Kind::Threshold, t, 0};
  }
  static SplitTest category_equals(std::size_t feature, std::size_t label) {
    return {feature, Kind::CategoryEquals, 0.0, label};
  }

  bool passes(const Instance& x) const {
    const double v = x[feature_index];
    if (kind == Kind::Threshold) return v >= threshold;
    return v == static_cast<double>(label_index);
  }

  friend bool operator==(const SplitTest&, const SplitTest&) = default;
};

inline void check_test(const FeatureSchema& schema, const SplitTest& test) {
  if (test.feature_index >= schema.size())
    throw InvalidArgument("split test feature index out of range");
  const auto& spec = schema[test.feature_index];
  if (test.kind == SplitTest::Kind::Threshold && !spec.is_continuous())
    throw InvalidArgument("threshold test on categorical feature " + spec.name);
  if (test.kind == SplitTest::Kind::CategoryEquals) {
    if (!spec.is_categorical())
      throw InvalidArgument("category test on continuous feature " + spec.name);
    if (test.label_index >= spec.categorical().labels.size())
      throw InvalidArgument("category test label out of range for " + spec.name);
  }
}

struct TreeConfig {
  std::size_t min_split_score = 1;
  std::size_t min_samples_split = 1;
  std::size_t max_depth = 50;
};

// ---------------------------------------------------------------------------
// Split scoring

/// |n_right - n_left|: pairs with the winner passing and the loser failing the
/// test, net of the reverse.
inline std::size_t consistency_score(std::span<const ComparisonPair> pairs, const SplitTest& test) {
  long long net = 0;
  for (const auto& p : pairs) {
    const bool w = test.passes(p.winner);
    const bool l = test.passes(p.loser);
    if (w && !l) ++net;
    else if (!w && l) --net;
  }
  return static_cast<std::size_t>(net < 0 ? -net : net);
}

inline std::size_t consistency_score(std::span<const ComparisonPair> pairs, const SplitTest& test,
                                     const FeatureSchema& schema) {
  check_test(schema, test);
  return consistency_score(pairs, test);
}

struct ScoredSplit {
  SplitTest test;
  std::size_t score = 0;
};

namespace detail {

inline double midpoint(double a, double b) {
  const double m = a + (b - a) / 2.0;
  return m > a ? m : b;
}

// Scores every midpoint threshold of one continuous feature by a sweep over
// sorted distinct values: pair (lo, hi) straddles exactly the thresholds
// between them, contributing +1 if the winner is the larger value.
inline void scan_continuous(std::span<const ComparisonPair> pairs, std::size_t feature,
                            std::optional<ScoredSplit>& best) {
  std::vector<double> values;
  values.reserve(2 * pairs.size());
  for (const auto& p : pairs) {
    values.push_back(p.winner[feature]);
    values.push_back(p.loser[feature]);
  }
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  if (values.size() < 2) return;

  std::vector<long long> delta(values.size(), 0);
  auto index_of = [&](double v) {
    return static_cast<std::size_t>(std::lower_bound(values.begin(), values.end(), v) - values.begin());
  };
  for (const auto& p : pairs) {
    const double w = p.winner[feature];
    const double l = p.loser[feature];
    if (w == l) continue;
    const long long sign = w > l ? 1 : -1;
    delta[index_of(std::min(w, l))] += sign;
    delta[index_of(std::max(w, l))] -= sign;
  }
  long long net = 0;
  for (std::size_t i = 0; i + 1 < values.size(); ++i) {
    net += delta[i];
    const auto score = static_cast<std::size_t>(net < 0 ? -net : net);
    if (!best || score > best->score)
      best = ScoredSplit{SplitTest::threshold_at(feature, midpoint(values[i], values[i + 1])), score};
  }
}

inline void scan_categorical(std::span<const ComparisonPair> pairs, std::size_t feature,
                             std::size_t label_count, std::optional<ScoredSplit>& best) {
  std::vector<long long> net(label_count, 0);
  std::vector<bool> seen(label_count, false);
  for (const auto& p : pairs) {
    const auto w = static_cast<std::size_t>(p.winner[feature]);
    const auto l = static_cast<std::size_t>(p.loser[feature]);
    seen[w] = seen[l] = true;
    if (w == l) continue;
    ++net[w];  // winner equals w, loser does not
    --net[l];
  }
  for (std::size_t label = 0; label < label_count; ++label) {
    if (!seen[label]) continue;
    const auto score = static_cast<std::size_t>(net[label] < 0 ? -net[label] : net[label]);
    if (!best || score > best->score) best = ScoredSplit{SplitTest::category_equals(feature, label), score};
  }
}

}  // namespace detail

/// Best-scoring candidate test over all features. Candidates are midpoints of
/// consecutive distinct observed values (continuous) and one equality test per
/// observed label (categorical). Ties keep the lowest feature, then the lowest
/// threshold or label. Absent when the best score is below min_split_score.
inline std::optional<ScoredSplit> best_split(std::span<const ComparisonPair> pairs,
                                             const FeatureSchema& schema, const TreeConfig& config) {
  std::optional<ScoredSplit> best;
  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (schema[f].is_continuous())
      detail::scan_continuous(pairs, f, best);
    else
      detail::scan_categorical(pairs, f, schema[f].categorical().labels.size(), best);
  }
  if (!best || best->score < config.min_split_score) return std::nullopt;
  return best;
}

struct Partition {
  std::vector<ComparisonPair> left;
  std::vector<ComparisonPair> right;
  std::vector<ComparisonPair> discarded;
};

/// Splits pairs into those wholly failing the test, wholly passing it, and
/// straddlers.
inline Partition partition_pairs(std::span<const ComparisonPair> pairs, const SplitTest& test) {
  Partition out;
  for (const auto& p : pairs) {
    const bool w = test.passes(p.winner);
    const bool l = test.passes(p.loser);
    if (w && l) out.right.push_back(p);
    else if (!w && !l) out.left.push_back(p);
    else out.discarded.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tree

struct TreeNode {
  bool is_leaf = true;
  // internal
  SplitTest test;
  std::size_t left = 0;
  std::size_t right = 0;
  std::size_t split_score = 0;
  std::size_t discarded_count = 0;
  // leaf
  std::size_t leaf_index = 0;
  // pairs that reached this node during growth
  std::size_t pair_count = 0;
  std::size_t depth = 0;
};

/// Single decision tree over X. Nodes are stored flat with node 0 as the root;
/// leaves are numbered depth-first, left to right.
class PreferenceTree {
 public:
  PreferenceTree() { nodes_.push_back(TreeNode{}); leaf_count_ = 1; }

  const FeatureSchema& schema() const { return schema_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& root() const { return nodes_.front(); }
  std::size_t leaf_count() const { return leaf_count_; }

  std::size_t depth() const {
    std::size_t d = 0;
    for (const auto& n : nodes_) d = std::max(d, n.depth);
    return d;
  }

  const TreeNode& leaf_node(std::size_t leaf_index) const {
    for (const auto& n : nodes_)
      if (n.is_leaf && n.leaf_index == leaf_index) return n;
    throw InvalidArgument("leaf index out of range");
  }

  std::size_t route(const Instance& x) const {
    std::size_t i = 0;
    while (!nodes_[i].is_leaf) i = nodes_[i].test.passes(x) ? nodes_[i].right : nodes_[i].left;
    return nodes_[i].leaf_index;
  }

  // Builds a tree from explicit nodes; used when reading explanation documents.
  static PreferenceTree from_nodes(FeatureSchema schema, std::vector<TreeNode> nodes) {
    PreferenceTree t;
    t.schema_ = std::move(schema);
    t.nodes_ = std::move(nodes);
    t.leaf_count_ = 0;
    for (const auto& n : t.nodes_) {
      if (n.is_leaf) ++t.leaf_count_;
      else check_test(t.schema_, n.test);
    }
    return t;
  }

 private:
  friend PreferenceTree grow_tree(const PreferenceDataset&, const TreeConfig&);

  FeatureSchema schema_;
  std::vector<TreeNode> nodes_;
  std::size_t leaf_count_ = 0;
};

namespace detail {

inline std::size_t grow(std::vector<TreeNode>& nodes, std::vector<ComparisonPair> pairs,
                        const FeatureSchema& schema, const TreeConfig& config, std::size_t depth,
                        std::size_t& next_leaf) {
  const std::size_t id = nodes.size();
  nodes.push_back(TreeNode{});
  nodes[id].pair_count = pairs.size();
  nodes[id].depth = depth;

  std::optional<ScoredSplit> split;
  if (depth < config.max_depth && pairs.size() >= config.min_samples_split)
    split = best_split(pairs, schema, config);
  if (!split) {
    nodes[id].leaf_index = next_leaf++;
    return id;
  }

  auto parts = partition_pairs(pairs, split->test);
  pairs.clear();
  nodes[id].is_leaf = false;
  nodes[id].test = split->test;
  nodes[id].split_score = split->score;
  nodes[id].discarded_count = parts.discarded.size();
  const auto left = grow(nodes, std::move(parts.left), schema, config, depth + 1, next_leaf);
  const auto right = grow(nodes, std::move(parts.right), schema, config, depth + 1, next_leaf);
  nodes[id].left = left;
  nodes[id].right = right;
  return id;
}

}  // namespace detail

/// Greedy recursive growth with straddler discarding. A node becomes a leaf
/// when no admissible split exists, it holds fewer than min_samples_split
/// pairs, or it sits at max_depth.
inline PreferenceTree grow_tree(const PreferenceDataset& dataset, const TreeConfig& config) {
  if (config.min_samples_split < 1) throw InvalidArgument("min_samples_split must be >= 1");
  PreferenceTree tree;
  tree.schema_ = dataset.schema();
  tree.nodes_.clear();
  std::size_t next_leaf = 0;
  detail::grow(tree.nodes_, dataset.pairs(), dataset.schema(), config, 0, next_leaf);
  tree.leaf_count_ = next_leaf;
  return tree;
}

}  // namespace dtpbo

#endif  // DTPBO_PREF_TREE_HPP
