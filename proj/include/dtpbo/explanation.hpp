#ifndef DTPBO_EXPLANATION_HPP
#define DTPBO_EXPLANATION_HPP

#include <cmath>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "dtpbo/leaf_posterior.hpp"
#include "dtpbo/pref_tree.hpp"

namespace dtpbo {

namespace detail {

inline std::string format_number(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// Describes the branch the test sends instances to: right when passing.
inline std::string describe(const FeatureSchema& schema, const SplitTest& t, bool right) {
  const auto& spec = schema[t.feature_index];
  if (t.kind == SplitTest::Kind::Threshold)
    return spec.name + (right ? " >= " : " < ") + format_number(t.threshold);
  const auto& label = spec.categorical().labels[t.label_index];
  return spec.name + (right ? " = " : " != ") + label;
}

inline nlohmann::json explain_node(const PreferenceTree& tree, const LatentPosterior& post, std::size_t id) {
  const auto& n = tree.nodes()[id];
  if (n.is_leaf) {
    const auto k = static_cast<Eigen::Index>(n.leaf_index);
    return {{"type", "leaf"},
            {"leaf_index", n.leaf_index},
            {"mean", post.mean[k]},
            {"std", std::sqrt(std::max(0.0, post.covariance(k, k)))},
            {"pair_count", n.pair_count}};
  }
  const auto& schema = tree.schema();
  nlohmann::json j{{"type", "split"},
                   {"feature", schema[n.test.feature_index].name},
                   {"feature_index", n.test.feature_index},
                   {"rule", describe(schema, n.test, false)},
                   {"right_rule", describe(schema, n.test, true)},
                   {"split_score", n.split_score},
                   {"discarded_count", n.discarded_count},
                   {"pair_count", n.pair_count}};
  if (n.test.kind == SplitTest::Kind::Threshold) {
    j["threshold"] = n.test.threshold;
  } else {
    j["label_index"] = n.test.label_index;
    j["label"] = schema[n.test.feature_index].categorical().labels[n.test.label_index];
  }
  j["left"] = explain_node(tree, post, n.left);
  j["right"] = explain_node(tree, post, n.right);
  return j;
}

inline std::size_t read_node(const nlohmann::json& j, std::vector<TreeNode>& nodes, std::size_t depth) {
  const std::size_t id = nodes.size();
  nodes.push_back(TreeNode{});
  nodes[id].depth = depth;
  nodes[id].pair_count = j.value("pair_count", std::size_t{0});
  const auto type = j.at("type").get<std::string>();
  if (type == "leaf") {
    nodes[id].leaf_index = j.at("leaf_index").get<std::size_t>();
    return id;
  }
  if (type != "split") throw InvalidArgument("explanation: unknown node type " + type);
  TreeNode n = nodes[id];
  n.is_leaf = false;
  const auto feature = j.at("feature_index").get<std::size_t>();
  n.test = j.contains("threshold") ? SplitTest::threshold_at(feature, j["threshold"].get<double>())
                                   : SplitTest::category_equals(feature, j.at("label_index").get<std::size_t>());
  n.split_score = j.value("split_score", std::size_t{0});
  n.discarded_count = j.value("discarded_count", std::size_t{0});
  nodes[id] = n;
  const auto left = read_node(j.at("left"), nodes, depth + 1);
  const auto right = read_node(j.at("right"), nodes, depth + 1);
  nodes[id].left = left;
  nodes[id].right = right;
  return id;
}

inline void render_node(std::ostringstream& os, const PreferenceTree& tree, const LatentPosterior& post,
                        std::size_t id, int indent) {
  const auto& n = tree.nodes()[id];
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  if (n.is_leaf) {
    const auto k = static_cast<Eigen::Index>(n.leaf_index);
    os << pad << "leaf " << n.leaf_index << ": mean " << format_number(post.mean[k]) << " +/- "
       << format_number(std::sqrt(std::max(0.0, post.covariance(k, k)))) << " (" << n.pair_count << " pairs)\n";
    return;
  }
  os << pad << "if " << describe(tree.schema(), n.test, false) << ":\n";
  render_node(os, tree, post, n.left, indent + 1);
  os << pad << "else:  # " << describe(tree.schema(), n.test, true) << "\n";
  render_node(os, tree, post, n.right, indent + 1);
}

inline void check_dimension(const PreferenceTree& tree, const LatentPosterior& posterior) {
  if (posterior.dimension() != tree.leaf_count() ||
      static_cast<std::size_t>(posterior.covariance.rows()) != tree.leaf_count())
    throw InvalidArgument("posterior dimension does not match the tree's leaf count");
}

}  // namespace detail

/// Nested JSON description of the tree with per-leaf mean, std and pair count.
inline nlohmann::json export_explanation(const PreferenceTree& tree, const LatentPosterior& posterior) {
  detail::check_dimension(tree, posterior);
  return {{"leaf_count", tree.leaf_count()},
          {"schema", schema_to_json(tree.schema())},
          {"root", detail::explain_node(tree, posterior, 0)}};
}

/// Rebuilds the tree structure from an explanation document.
inline PreferenceTree tree_from_explanation(const nlohmann::json& doc) {
  std::vector<TreeNode> nodes;
  detail::read_node(doc.at("root"), nodes, 0);
  return PreferenceTree::from_nodes(schema_from_json(doc.at("schema")), std::move(nodes));
}

/// Indented if/else rendering for terminals.
inline std::string render_rules(const PreferenceTree& tree, const LatentPosterior& posterior) {
  detail::check_dimension(tree, posterior);
  std::ostringstream os;
  detail::render_node(os, tree, posterior, 0, 0);
  return os.str();
}

}  // namespace dtpbo

#endif  // DTPBO_EXPLANATION_HPP
