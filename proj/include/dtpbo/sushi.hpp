#ifndef DTPBO_SUSHI_HPP
#define DTPBO_SUSHI_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dtpbo/acquisition.hpp"
#include "dtpbo/core.hpp"
#include "dtpbo/leaf_posterior.hpp"
#include "dtpbo/pbo_loop.hpp"
#include "dtpbo/pref_tree.hpp"

namespace dtpbo::sushi {

// ---------------------------------------------------------------------------
// Data

struct SushiItem {
  std::size_t id = 0;
  std::string name;
  int style = 0;        // 0 maki, 1 other
  int major_group = 0;  // 0 seafood, 1 other
  int minor_group = 0;  // 0..11
  double oiliness = 0.0;       // [0, 4]
  double eat_frequency = 0.0;  // [0, 3]
  double price = 0.0;          // as published
  double normalized_price = 0.0;  // min-max over the item file, [0, 1]
  double sell_frequency = 0.0;    // [0, 1]
};

struct SushiUser {
  std::size_t id = 0;
  int gender = 0;    // 0 male, 1 female
  int age_band = 0;  // 0: 15-19, 1: 20-29, ..., 5: 60+
  double survey_time = 0.0;
  int prefecture_child = 0;  // until age 15, 0..47
  int region_child = 0;      // 0..11
  int east_west_child = 0;   // 0 east, 1 west
  int prefecture_now = 0;
  int region_now = 0;
  int east_west_now = 0;
  int prefecture_changed = 0;
};

/// Item ids in preference order, most preferred first.
struct UserRanking {
  std::size_t user_id = 0;
  std::vector<std::size_t> items;
};

struct SushiData {
  std::vector<SushiItem> items;
  std::vector<SushiUser> users;
  std::vector<UserRanking> rankings_a;
  std::vector<UserRanking> rankings_b;
};

inline constexpr std::size_t kRankingLength = 10;
inline constexpr std::size_t kDatasetASize = 10;
inline constexpr std::size_t kPrefectures = 48;
inline constexpr std::size_t kRegions = 12;

inline const std::vector<std::string>& minor_group_labels() {
  static const std::vector<std::string> labels{"aomono", "akami", "shiromi",   "tare",  "clam_or_shell", "squid_or_octopus",
                                               "shrimp_or_crab", "roe", "other_seafood", "egg", "meat", "vegetable"};
  return labels;
}

inline FeatureSchema item_schema() {
  return FeatureSchema({{"style", Categorical{{"maki", "other"}}},
                        {"major_group", Categorical{{"seafood", "other"}}},
                        {"minor_group", Categorical{minor_group_labels()}},
                        {"oiliness", Continuous{0.0, 4.0}},
                        {"eat_frequency", Continuous{0.0, 3.0}},
                        {"normalized_price", Continuous{0.0, 1.0}}});
}

inline Instance item_instance(const SushiItem& item) {
  return Instance{{static_cast<double>(item.style), static_cast<double>(item.major_group),
                   static_cast<double>(item.minor_group), item.oiliness, item.eat_frequency, item.normalized_price}};
}

namespace detail {

inline std::vector<std::string> numbered_labels(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

}  // namespace detail

/// User features; survey_time is bounded by the largest time in the data.
inline FeatureSchema user_schema(double max_survey_time) {
  const auto pref = detail::numbered_labels("pref", kPrefectures);
  const auto region = detail::numbered_labels("region", kRegions);
  return FeatureSchema({{"gender", Categorical{{"male", "female"}}},
                        {"age_band", Categorical{{"15-19", "20-29", "30-39", "40-49", "50-59", "60+"}}},
                        {"survey_time", Continuous{0.0, std::max(1.0, max_survey_time)}},
                        {"prefecture_child", Categorical{pref}},
                        {"region_child", Categorical{region}},
                        {"east_west_child", Categorical{{"east", "west"}}},
                        {"prefecture_now", Categorical{pref}},
                        {"region_now", Categorical{region}},
                        {"east_west_now", Categorical{{"east", "west"}}},
                        {"prefecture_changed", Categorical{{"no", "yes"}}}});
}

inline FeatureSchema user_schema(const std::vector<SushiUser>& users) {
  double t = 0.0;
  for (const auto& u : users) t = std::max(t, u.survey_time);
  return user_schema(t);
}

inline Instance user_instance(const SushiUser& u) {
  return Instance{{static_cast<double>(u.gender), static_cast<double>(u.age_band), u.survey_time,
                   static_cast<double>(u.prefecture_child), static_cast<double>(u.region_child),
                   static_cast<double>(u.east_west_child), static_cast<double>(u.prefecture_now),
                   static_cast<double>(u.region_now), static_cast<double>(u.east_west_now),
                   static_cast<double>(u.prefecture_changed)}};
}

// ---------------------------------------------------------------------------
// Loading the published sushi3 text files

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

[[noreturn]] inline void parse_fail(const std::string& source, std::size_t line, const std::string& what) {
  throw InvalidArgument(source + ":" + std::to_string(line) + ": " + what);
}

inline double to_number(const std::string& tok, const std::string& source, std::size_t line, const char* column) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != tok.size() || !std::isfinite(v)) parse_fail(source, line, std::string(column) + ": not a number '" + tok + "'");
  return v;
}

inline int to_code(const std::string& tok, const std::string& source, std::size_t line, const char* column, int lo,
                   int hi) {
  const double v = to_number(tok, source, line, column);
  if (v != std::floor(v) || v < lo || v > hi)
    parse_fail(source, line,
               std::string(column) + " must be an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) +
                   "], got " + tok);
  return static_cast<int>(v);
}

inline double to_range(const std::string& tok, const std::string& source, std::size_t line, const char* column,
                       double lo, double hi) {
  const double v = to_number(tok, source, line, column);
  if (v < lo || v > hi)
    parse_fail(source, line, std::string(column) + " out of range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]: " + tok);
  return v;
}

}  // namespace detail

/// Item file, one item per line:
///   id name style major_group minor_group oiliness eat_frequency price sell_frequency
inline std::vector<SushiItem> parse_items(std::istream& in, const std::string& source = "items") {
  std::vector<SushiItem> items;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto t = detail::split_ws(line);
    if (t.empty()) continue;
    if (t.size() != 9) detail::parse_fail(source, n, "expected 9 columns, found " + std::to_string(t.size()));
    SushiItem it;
    it.id = static_cast<std::size_t>(detail::to_code(t[0], source, n, "id", 0, 1 << 30));
    if (it.id != items.size()) detail::parse_fail(source, n, "ids must be consecutive from 0");
    it.name = t[1];
    it.style = detail::to_code(t[2], source, n, "style", 0, 1);
    it.major_group = detail::to_code(t[3], source, n, "major_group", 0, 1);
    it.minor_group = detail::to_code(t[4], source, n, "minor_group", 0, 11);
    it.oiliness = detail::to_range(t[5], source, n, "oiliness", 0.0, 4.0);
    it.eat_frequency = detail::to_range(t[6], source, n, "eat_frequency", 0.0, 3.0);
    it.price = detail::to_range(t[7], source, n, "price", 0.0, 1e9);
    it.sell_frequency = detail::to_range(t[8], source, n, "sell_frequency", 0.0, 1.0);
    items.push_back(std::move(it));
  }
  if (items.empty()) throw InvalidArgument(source + ": no items");
  const auto [lo, hi] = std::minmax_element(items.begin(), items.end(),
                                            [](const auto& a, const auto& b) { return a.price < b.price; });
  const double p_lo = lo->price, p_hi = hi->price;
  for (auto& it : items) it.normalized_price = p_hi > p_lo ? (it.price - p_lo) / (p_hi - p_lo) : 0.0;
  return items;
}

/// User file, one user per line:
///   id gender age_band survey_time pref_child region_child east_west_child
///   pref_now region_now east_west_now prefecture_changed
inline std::vector<SushiUser> parse_users(std::istream& in, const std::string& source = "users") {
  std::vector<SushiUser> users;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto t = detail::split_ws(line);
    if (t.empty()) continue;
    if (t.size() != 11) detail::parse_fail(source, n, "expected 11 columns, found " + std::to_string(t.size()));
    SushiUser u;
    u.id = static_cast<std::size_t>(detail::to_code(t[0], source, n, "id", 0, 1 << 30));
    if (u.id != users.size()) detail::parse_fail(source, n, "ids must be consecutive from 0");
    u.gender = detail::to_code(t[1], source, n, "gender", 0, 1);
    u.age_band = detail::to_code(t[2], source, n, "age_band", 0, 5);
    u.survey_time = detail::to_range(t[3], source, n, "survey_time", 0.0, 1e9);
    u.prefecture_child = detail::to_code(t[4], source, n, "prefecture_child", 0, kPrefectures - 1);
    u.region_child = detail::to_code(t[5], source, n, "region_child", 0, kRegions - 1);
    u.east_west_child = detail::to_code(t[6], source, n, "east_west_child", 0, 1);
    u.prefecture_now = detail::to_code(t[7], source, n, "prefecture_now", 0, kPrefectures - 1);
    u.region_now = detail::to_code(t[8], source, n, "region_now", 0, kRegions - 1);
    u.east_west_now = detail::to_code(t[9], source, n, "east_west_now", 0, 1);
    u.prefecture_changed = detail::to_code(t[10], source, n, "prefecture_changed", 0, 1);
    users.push_back(u);
  }
  return users;
}

/// Order file: a header "<item count> 1", then one ranking per user line
///   0 10 i1 i2 ... i10   (most preferred first)
/// Line k (after the header) belongs to user k.
inline std::vector<UserRanking> parse_orders(std::istream& in, const std::string& source = "orders") {
  std::vector<UserRanking> out;
  std::string line;
  std::size_t n = 0;
  std::optional<std::size_t> item_count;
  while (std::getline(in, line)) {
    ++n;
    const auto t = detail::split_ws(line);
    if (t.empty()) continue;
    if (!item_count) {
      if (t.size() != 2) detail::parse_fail(source, n, "header must be '<item count> 1'");
      item_count = static_cast<std::size_t>(detail::to_code(t[0], source, n, "item count", 1, 1 << 20));
      continue;
    }
    if (t.size() < 2) detail::parse_fail(source, n, "truncated order line");
    const auto len = static_cast<std::size_t>(detail::to_code(t[1], source, n, "ranking length", 1, 1 << 20));
    if (len != kRankingLength) detail::parse_fail(source, n, "ranking length must be 10");
    if (t.size() != 2 + len)
      detail::parse_fail(source, n, "expected " + std::to_string(len) + " item ids, found " + std::to_string(t.size() - 2));
    UserRanking r;
    r.user_id = out.size();
    std::set<std::size_t> seen;
    for (std::size_t k = 0; k < len; ++k) {
      const auto id = static_cast<std::size_t>(
          detail::to_code(t[2 + k], source, n, "item id", 0, static_cast<int>(*item_count) - 1));
      if (!seen.insert(id).second) detail::parse_fail(source, n, "duplicate item id " + std::to_string(id));
      r.items.push_back(id);
    }
    out.push_back(std::move(r));
  }
  if (!item_count) throw InvalidArgument(source + ": empty order file");
  return out;
}

inline constexpr const char* kItemFile = "sushi3.idata";
inline constexpr const char* kUserFile = "sushi3.udata";
inline constexpr const char* kOrderFileA = "sushi3a.5000.10.order";
inline constexpr const char* kOrderFileB = "sushi3b.5000.10.order";

/// Loads the published sushi3 layout from a directory. Dataset-A item ids
/// 0..9 index the first ten rows of the item file.
inline SushiData load_sushi_data(const std::filesystem::path& dir) {
  auto open = [&](const char* name) {
    const auto p = dir / name;
    std::ifstream f(p);
    if (!f) throw InvalidArgument("missing sushi file: " + p.string());
    return std::make_pair(std::move(f), p.string());
  };
  SushiData d;
  {
    auto [f, name] = open(kItemFile);
    d.items = parse_items(f, name);
  }
  {
    auto [f, name] = open(kUserFile);
    d.users = parse_users(f, name);
  }
  {
    auto [f, name] = open(kOrderFileA);
    d.rankings_a = parse_orders(f, name);
  }
  {
    auto [f, name] = open(kOrderFileB);
    d.rankings_b = parse_orders(f, name);
  }
  if (d.items.size() < kDatasetASize) throw InvalidArgument("item file has fewer than 10 items");
  for (const auto& r : d.rankings_a)
    for (auto id : r.items)
      if (id >= kDatasetASize)
        throw InvalidArgument("dataset A ranking of user " + std::to_string(r.user_id) + " uses item " +
                              std::to_string(id) + " outside the fixed 10-item set");
  for (const auto& r : d.rankings_b)
    for (auto id : r.items)
      if (id >= d.items.size())
        throw InvalidArgument("dataset B ranking of user " + std::to_string(r.user_id) + " uses unknown item " +
                              std::to_string(id));
  if (d.rankings_a.size() != d.users.size() || d.rankings_b.size() != d.users.size())
    throw InvalidArgument("order files and user file disagree on the number of users");
  return d;
}

// Writers produce the same layout; used for generated corpora.
inline void write_items(std::ostream& os, const std::vector<SushiItem>& items) {
  os.precision(10);
  for (const auto& it : items)
    os << it.id << '\t' << it.name << '\t' << it.style << '\t' << it.major_group << '\t' << it.minor_group << '\t'
       << it.oiliness << '\t' << it.eat_frequency << '\t' << it.price << '\t' << it.sell_frequency << '\n';
}

inline void write_users(std::ostream& os, const std::vector<SushiUser>& users) {
  os.precision(10);
  for (const auto& u : users)
    os << u.id << '\t' << u.gender << '\t' << u.age_band << '\t' << u.survey_time << '\t' << u.prefecture_child
       << '\t' << u.region_child << '\t' << u.east_west_child << '\t' << u.prefecture_now << '\t' << u.region_now
       << '\t' << u.east_west_now << '\t' << u.prefecture_changed << '\n';
}

inline void write_orders(std::ostream& os, const std::vector<UserRanking>& rankings, std::size_t item_count) {
  os << item_count << " 1\n";
  for (const auto& r : rankings) {
    os << "0 " << r.items.size();
    for (auto id : r.items) os << ' ' << id;
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Rankings, comparisons and the regret metric

/// Winner/loser item ids.
struct ItemComparison {
  std::size_t winner = 0;
  std::size_t loser = 0;
  bool operator==(const ItemComparison&) const = default;
};

/// All pairs of a ranking, winner = higher ranked, ordered by rank positions.
inline std::vector<ItemComparison> ranking_comparisons(const UserRanking& r) {
  std::vector<ItemComparison> out;
  for (std::size_t i = 0; i < r.items.size(); ++i)
    for (std::size_t j = i + 1; j < r.items.size(); ++j) out.push_back({r.items[i], r.items[j]});
  return out;
}

inline ComparisonPair to_comparison(const ItemComparison& c, const std::vector<SushiItem>& items) {
  if (c.winner >= items.size() || c.loser >= items.size()) throw InvalidArgument("unknown sushi item id");
  return {item_instance(items[c.winner]), item_instance(items[c.loser])};
}

inline std::vector<ComparisonPair> ranking_to_comparisons(const UserRanking& r, const std::vector<SushiItem>& items) {
  std::vector<ComparisonPair> out;
  for (const auto& c : ranking_comparisons(r)) out.push_back(to_comparison(c, items));
  return out;
}

/// Position-dependent cost of moving an item across the top-3 boundary.
inline constexpr std::array<double, kRankingLength> kPositionValues{1.0,       2.0 / 3.0, 1.0 / 3.0, 1.0 / 7.0, 2.0 / 7.0,
                                                                    3.0 / 7.0, 4.0 / 7.0, 5.0 / 7.0, 6.0 / 7.0, 1.0};
inline constexpr double kMaxRhoRegret = 2.0 + 18.0 / 7.0;

/// Competition ranks (1 + number of strictly larger values).
inline std::vector<std::size_t> competition_ranks(const std::vector<double>& values) {
  std::vector<std::size_t> ranks(values.size(), 1);
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t j = 0; j < values.size(); ++j)
      if (values[j] > values[i]) ++ranks[i];
  return ranks;
}

/// predicted[k] is the predicted value of truth.items[k].
inline double rho_regret(const UserRanking& truth, const std::vector<double>& predicted) {
  if (truth.items.size() != kRankingLength) throw InvalidArgument("rho_regret needs a 10-item ranking");
  if (predicted.size() != truth.items.size()) throw InvalidArgument("rho_regret: a predicted value is missing");
  const auto ranks = competition_ranks(predicted);
  double regret = 0.0;
  for (std::size_t pos = 0; pos < kRankingLength; ++pos) {
    const bool true_top = pos < 3;
    const bool predicted_top = ranks[pos] <= 3;
    if (true_top != predicted_top) regret += kPositionValues[pos];
  }
  return regret;
}

/// Kendall tau-b between the true order and predicted values (ties only in
/// the prediction). Diagnostic only.
inline double kendall_tau_b(const UserRanking& truth, const std::vector<double>& predicted) {
  const std::size_t n = truth.items.size();
  if (predicted.size() != n) throw InvalidArgument("kendall_tau_b: size mismatch");
  double concordant = 0.0, discordant = 0.0, tied = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (predicted[i] > predicted[j]) concordant += 1;
      else if (predicted[i] < predicted[j]) discordant += 1;
      else tied += 1;
    }
  const double pairs = static_cast<double>(n * (n - 1) / 2);
  const double denom = std::sqrt(pairs * (pairs - tied));
  return denom > 0.0 ? (concordant - discordant) / denom : 0.0;
}

// ---------------------------------------------------------------------------
// User tree

namespace detail {

using PairKey = std::pair<std::size_t, std::size_t>;

// Signed count per unordered item pair (i < j): +1 for i > j, -1 for j > i.
inline std::map<PairKey, long long> signed_counts(const std::vector<ItemComparison>& cs) {
  std::map<PairKey, long long> out;
  for (const auto& c : cs) {
    if (c.winner == c.loser) continue;
    if (c.winner < c.loser) ++out[{c.winner, c.loser}];
    else --out[{c.loser, c.winner}];
  }
  return out;
}

}  // namespace detail

/// Agreement score of a set of users: for each item pair, |#(i > j) - #(j > i)|.
inline std::size_t user_consistency(const std::vector<const std::vector<ItemComparison>*>& users) {
  std::map<detail::PairKey, long long> total;
  for (const auto* u : users)
    for (const auto& [k, v] : detail::signed_counts(*u)) total[k] += v;
  std::size_t s = 0;
  for (const auto& [k, v] : total) s += static_cast<std::size_t>(std::llabs(v));
  return s;
}

/// Split gain: agreement of the left child plus agreement of the right child.
inline std::size_t user_split_gain(const std::vector<std::vector<ItemComparison>>& per_user,
                                   const std::vector<bool>& goes_right) {
  if (goes_right.size() != per_user.size()) throw InvalidArgument("user_split_gain: assignment size mismatch");
  std::vector<const std::vector<ItemComparison>*> left, right;
  for (std::size_t u = 0; u < per_user.size(); ++u) (goes_right[u] ? right : left).push_back(&per_user[u]);
  return user_consistency(left) + user_consistency(right);
}

struct UserTreeConfig {
  std::size_t max_depth = 5;
};

struct Cohort {
  Surrogate model;
  std::vector<std::size_t> members;  // indices into the training users
  std::size_t comparison_count = 0;
};

struct UserTreeNode {
  bool is_leaf = true;
  SplitTest test{};
  std::size_t left = 0;
  std::size_t right = 0;
  std::size_t gain = 0;
  std::size_t depth = 0;
  std::size_t cohort = 0;  // leaves only
};

class UserTree {
 public:
  UserTree(FeatureSchema schema, std::vector<UserTreeNode> nodes, std::vector<Cohort> cohorts)
      : schema_(std::move(schema)), nodes_(std::move(nodes)), cohorts_(std::move(cohorts)) {}

  const FeatureSchema& schema() const { return schema_; }
  const std::vector<UserTreeNode>& nodes() const { return nodes_; }
  const std::vector<Cohort>& cohorts() const { return cohorts_; }
  std::size_t depth() const {
    std::size_t d = 0;
    for (const auto& n : nodes_) d = std::max(d, n.depth);
    return d;
  }

  std::size_t route(const Instance& user) const {
    if (nodes_.empty()) throw Error("user tree has no nodes");
    std::size_t id = 0;
    while (!nodes_[id].is_leaf) id = nodes_[id].test.passes(user) ? nodes_[id].right : nodes_[id].left;
    return nodes_[id].cohort;
  }

 private:
  FeatureSchema schema_;
  std::vector<UserTreeNode> nodes_;
  std::vector<Cohort> cohorts_;
};

namespace detail {

struct UserSplit {
  SplitTest test;
  std::size_t gain;
};

// Dense signed-count rows restricted to the pairs present among `members`.
struct PairTable {
  std::vector<std::vector<long long>> rows;  // [member][pair]
  std::vector<long long> total;
};

inline PairTable build_pair_table(const std::vector<std::vector<ItemComparison>>& per_user,
                                  const std::vector<std::size_t>& members) {
  std::map<PairKey, std::size_t> index;
  std::vector<std::map<PairKey, long long>> counts;
  for (auto u : members) {
    counts.push_back(signed_counts(per_user[u]));
    for (const auto& [k, v] : counts.back()) index.emplace(k, 0);
  }
  std::size_t next = 0;
  for (auto& [k, i] : index) i = next++;
  PairTable t;
  t.total.assign(next, 0);
  for (const auto& c : counts) {
    std::vector<long long> row(next, 0);
    for (const auto& [k, v] : c) row[index[k]] = v;
    for (std::size_t p = 0; p < next; ++p) t.total[p] += row[p];
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline std::size_t split_gain_from(const std::vector<long long>& left, const std::vector<long long>& total) {
  std::size_t g = 0;
  for (std::size_t p = 0; p < total.size(); ++p)
    g += static_cast<std::size_t>(std::llabs(left[p])) + static_cast<std::size_t>(std::llabs(total[p] - left[p]));
  return g;
}

// Best test by gain; first feature, then lowest threshold or label on ties.
inline std::optional<UserSplit> best_user_split(const FeatureSchema& schema, const std::vector<Instance>& users,
                                                const std::vector<std::size_t>& members, const PairTable& table) {
  std::optional<UserSplit> best;
  auto offer = [&](const SplitTest& t, std::size_t gain) {
    if (!best || gain > best->gain) best = UserSplit{t, gain};
  };
  const std::size_t n = members.size();
  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (schema[f].is_continuous()) {
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](auto a, auto b) { return users[members[a]][f] < users[members[b]][f]; });
      // users below the threshold go left
      std::vector<long long> left(table.total.size(), 0);
      for (std::size_t k = 0; k + 1 < n; ++k) {
        const auto& row = table.rows[order[k]];
        for (std::size_t p = 0; p < left.size(); ++p) left[p] += row[p];
        const double a = users[members[order[k]]][f];
        const double b = users[members[order[k + 1]]][f];
        if (a == b) continue;
        offer(SplitTest::threshold_at(f, dtpbo::detail::midpoint(a, b)), split_gain_from(left, table.total));
      }
    } else {
      const auto labels = schema[f].categorical().labels.size();
      std::vector<std::vector<long long>> per_label(labels, std::vector<long long>(table.total.size(), 0));
      std::vector<std::size_t> label_users(labels, 0);
      for (std::size_t k = 0; k < n; ++k) {
        const auto lab = static_cast<std::size_t>(users[members[k]][f]);
        ++label_users[lab];
        for (std::size_t p = 0; p < table.total.size(); ++p) per_label[lab][p] += table.rows[k][p];
      }
      for (std::size_t lab = 0; lab < labels; ++lab) {
        if (label_users[lab] == 0 || label_users[lab] == n) continue;
        // passing ("equals") goes right: left = total - right
        std::vector<long long> left(table.total.size());
        for (std::size_t p = 0; p < left.size(); ++p) left[p] = table.total[p] - per_label[lab][p];
        offer(SplitTest::category_equals(f, lab), split_gain_from(left, table.total));
      }
    }
  }
  return best;
}

inline Cohort fit_cohort(const std::vector<std::size_t>& members,
                         const std::vector<std::vector<ItemComparison>>& per_user, const std::vector<SushiItem>& items,
                         const TreeConfig& item_tree_cfg, const NoiseConfig& noise_cfg) {
  PreferenceDataset ds(item_schema());
  for (auto u : members)
    for (const auto& c : per_user[u]) ds.append(to_comparison(c, items));
  return Cohort{fit_surrogate(ds, item_tree_cfg, noise_cfg), members, ds.size()};
}

inline std::size_t grow_user(const FeatureSchema& schema, const std::vector<Instance>& users,
                             const std::vector<std::vector<ItemComparison>>& per_user,
                             const std::vector<SushiItem>& items, std::vector<std::size_t> members, std::size_t depth,
                             const UserTreeConfig& cfg, const TreeConfig& item_cfg, const NoiseConfig& noise,
                             std::vector<UserTreeNode>& nodes, std::vector<Cohort>& cohorts) {
  const std::size_t id = nodes.size();
  nodes.push_back(UserTreeNode{});
  nodes[id].depth = depth;

  if (depth < cfg.max_depth && members.size() >= 2) {
    const auto table = build_pair_table(per_user, members);
    std::size_t parent = 0;
    for (auto v : table.total) parent += static_cast<std::size_t>(std::llabs(v));
    const auto split = best_user_split(schema, users, members, table);
    if (split && split->gain > parent) {
      std::vector<std::size_t> left, right;
      for (auto u : members) (split->test.passes(users[u]) ? right : left).push_back(u);
      nodes[id].is_leaf = false;
      nodes[id].test = split->test;
      nodes[id].gain = split->gain;
      const auto l = grow_user(schema, users, per_user, items, std::move(left), depth + 1, cfg, item_cfg, noise, nodes,
                               cohorts);
      const auto r = grow_user(schema, users, per_user, items, std::move(right), depth + 1, cfg, item_cfg, noise,
                               nodes, cohorts);
      nodes[id].left = l;
      nodes[id].right = r;
      return id;
    }
  }
  nodes[id].cohort = cohorts.size();
  cohorts.push_back(fit_cohort(members, per_user, items, item_cfg, noise));
  return id;
}

}  // namespace detail

/// Splits users on their features to maximize agreement within groups and
/// fits an item tree per group on its pooled comparisons.
inline UserTree grow_user_tree(const FeatureSchema& schema, const std::vector<Instance>& users,
                               const std::vector<std::vector<ItemComparison>>& per_user,
                               const std::vector<SushiItem>& items, const UserTreeConfig& cfg,
                               const TreeConfig& item_tree_cfg, const NoiseConfig& noise_cfg) {
  if (users.size() != per_user.size()) throw InvalidArgument("grow_user_tree: users and comparisons differ in size");
  for (const auto& u : users) require_valid(schema, u);
  std::vector<std::size_t> members(users.size());
  std::iota(members.begin(), members.end(), 0);
  std::vector<UserTreeNode> nodes;
  std::vector<Cohort> cohorts;
  detail::grow_user(schema, users, per_user, items, std::move(members), 0, cfg, item_tree_cfg, noise_cfg, nodes,
                    cohorts);
  return UserTree(schema, std::move(nodes), std::move(cohorts));
}

struct WarmStart {
  PreferenceTree tree;  // frozen for the session
  Vector prior_mean;
  Matrix prior_covariance;
  double inflation = 0.0;

  LeafPrior prior() const { return LeafPrior{prior_mean, inflation}; }
};

/// Cohort item tree plus an inflated prior centred on the cohort posterior.
inline WarmStart warm_start_session(const UserTree& tree, const Instance& new_user, double inflation) {
  if (!(inflation > 0.0) || !std::isfinite(inflation)) throw InvalidArgument("inflation must be positive");
  require_valid(tree.schema(), new_user);
  const auto& cohort = tree.cohorts().at(tree.route(new_user));
  const auto m = static_cast<Eigen::Index>(cohort.model.tree.leaf_count());
  if (cohort.model.posterior.mean.size() != m) throw Error("cohort leaf has no fitted posterior");
  return WarmStart{cohort.model.tree, cohort.model.posterior.mean, Matrix::Identity(m, m) * inflation * inflation,
                   inflation};
}

/// Posterior for a warm-started user: leaf values only, tree unchanged.
inline LatentPosterior warm_posterior(const WarmStart& w, std::span<const ComparisonPair> pairs,
                                      const NoiseConfig& noise_cfg) {
  return fit_leaf_values(w.tree, pairs, noise_cfg, w.prior());
}

// ---------------------------------------------------------------------------
// Simulated elicitation

enum class Dataset { A, B };

inline Dataset dataset_from_string(const std::string& s) {
  if (s == "A" || s == "a") return Dataset::A;
  if (s == "B" || s == "b") return Dataset::B;
  throw InvalidArgument("dataset must be A or B, got '" + s + "'");
}

struct SushiEvalConfig {
  Dataset dataset = Dataset::A;
  std::size_t users = 50;
  std::size_t queries = 30;
  std::size_t initial_random = 2;  // random pairs before the model chooses
  AcquisitionMode acquisition = AcquisitionMode::Qeubo;
  bool prioritize_within_leaf = true;
  bool warm_start = false;
  std::size_t cohort_batch = 50;
  double inflation = 0.2;  // 10 * sigma_prior
  TreeConfig item_tree_cfg{1, 1, 5};
  UserTreeConfig user_tree_cfg{};
  NoiseConfig noise_cfg{};
  std::uint64_t seed = 0;

  void check() const {
    if (users < 1) throw InvalidArgument("users must be >= 1");
    if (cohort_batch < 1) throw InvalidArgument("cohort_batch must be >= 1");
    if (!(inflation > 0.0)) throw InvalidArgument("inflation must be positive");
    noise_cfg.check();
  }
};

struct UserCurve {
  std::size_t user_id = 0;
  bool warm_started = false;
  std::vector<double> rho_regret;   // index q = answered queries, 0..queries
  std::vector<double> kendall_tau;  // diagnostic
  std::vector<ItemComparison> answered;
};

/// One simulated session against a user's full ranking. Queries come from the
/// not-yet-asked pairs of the user's ten items.
inline UserCurve simulate_user(const UserRanking& ranking, const SushiUser& user, const std::vector<SushiItem>& items,
                               const SushiEvalConfig& cfg, const WarmStart* warm) {
  const std::size_t n = ranking.items.size();
  std::vector<std::size_t> position(items.size(), n);
  for (std::size_t k = 0; k < n; ++k) position.at(ranking.items[k]) = k;

  std::vector<std::pair<std::size_t, std::size_t>> unasked;  // ids, ascending
  std::vector<std::size_t> sorted = ranking.items;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) unasked.push_back({sorted[i], sorted[j]});

  std::mt19937_64 rng(derive_seed(cfg.seed, user.id));
  PreferenceDataset data(item_schema());
  UserCurve curve;
  curve.user_id = user.id;
  curve.warm_started = warm != nullptr;

  std::optional<Surrogate> model;
  auto refit = [&] {
    if (warm) model = Surrogate{warm->tree, warm_posterior(*warm, data.pairs(), cfg.noise_cfg)};
    else model = fit_surrogate(data, cfg.item_tree_cfg, cfg.noise_cfg);
  };
  auto record = [&] {
    std::vector<double> values;
    for (auto id : ranking.items) values.push_back(predict(model->tree, model->posterior, item_instance(items[id])).mean);
    curve.rho_regret.push_back(rho_regret(ranking, values));
    curve.kendall_tau.push_back(kendall_tau_b(ranking, values));
  };

  refit();
  record();
  for (std::size_t q = 0; q < cfg.queries && !unasked.empty(); ++q) {
    std::size_t pick;
    if (cfg.acquisition == AcquisitionMode::Random || q < cfg.initial_random) {
      pick = std::uniform_int_distribution<std::size_t>(0, unasked.size() - 1)(rng);
    } else {
      std::vector<CandidatePair> cands;
      for (const auto& [a, b] : unasked) cands.push_back({item_instance(items[a]), item_instance(items[b])});
      AcquisitionConfig acq;
      acq.prioritize_within_leaf = cfg.prioritize_within_leaf;
      pick = select_from_candidates(model->tree, model->posterior, cands, acq);
    }
    const auto [a, b] = unasked[pick];
    unasked.erase(unasked.begin() + static_cast<std::ptrdiff_t>(pick));
    const ItemComparison c = position[a] < position[b] ? ItemComparison{a, b} : ItemComparison{b, a};
    curve.answered.push_back(c);
    data.append(to_comparison(c, items));
    refit();
    record();
  }
  return curve;
}

struct SushiEvalReport {
  SushiEvalConfig config;
  std::vector<UserCurve> curves;
  std::size_t user_tree_refreshes = 0;

  /// Mean regret over users at each query count.
  std::vector<double> mean_regret(std::size_t first_user = 0) const {
    std::vector<double> mean;
    std::size_t count = 0;
    for (std::size_t u = first_user; u < curves.size(); ++u) {
      const auto& c = curves[u].rho_regret;
      if (mean.size() < c.size()) mean.resize(c.size(), 0.0);
      for (std::size_t q = 0; q < c.size(); ++q) mean[q] += c[q];
      ++count;
    }
    for (auto& v : mean) v /= static_cast<double>(std::max<std::size_t>(1, count));
    return mean;
  }

  /// Mean number of queries until regret first reaches `threshold`
  /// (budget + 1 when never reached).
  double mean_queries_to(double threshold, std::size_t first_user = 0) const {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t u = first_user; u < curves.size(); ++u) {
      const auto& c = curves[u].rho_regret;
      std::size_t hit = config.queries + 1;
      for (std::size_t q = 0; q < c.size(); ++q)
        if (c[q] <= threshold) {
          hit = q;
          break;
        }
      total += static_cast<double>(hit);
      ++count;
    }
    return count ? total / static_cast<double>(count) : 0.0;
  }

  void write_csv(std::ostream& os) const {
    os << "user,warm_started,query,rho_regret,kendall_tau_b\n";
    os.precision(10);
    for (const auto& c : curves)
      for (std::size_t q = 0; q < c.rho_regret.size(); ++q)
        os << c.user_id << ',' << (c.warm_started ? 1 : 0) << ',' << q << ',' << c.rho_regret[q] << ','
           << c.kendall_tau[q] << '\n';
  }
};

/// Users are taken in file order. With warm start, the user tree is rebuilt
/// from the answered comparisons of all earlier users after every
/// cohort_batch users; the first batch runs cold.
inline SushiEvalReport run_sushi_evaluation(const SushiData& data, const SushiEvalConfig& cfg) {
  cfg.check();
  const auto& rankings = cfg.dataset == Dataset::A ? data.rankings_a : data.rankings_b;
  const std::size_t n_users = std::min({cfg.users, rankings.size(), data.users.size()});
  if (n_users < cfg.users) throw InvalidArgument("dataset has only " + std::to_string(n_users) + " users");

  const auto schema = user_schema(data.users);
  SushiEvalReport report;
  report.config = cfg;
  std::optional<UserTree> tree;
  std::vector<Instance> seen_users;
  std::vector<std::vector<ItemComparison>> seen_answers;

  for (std::size_t u = 0; u < n_users; ++u) {
    if (cfg.warm_start && u > 0 && u % cfg.cohort_batch == 0) {
      tree = grow_user_tree(schema, seen_users, seen_answers, data.items, cfg.user_tree_cfg, cfg.item_tree_cfg,
                            cfg.noise_cfg);
      ++report.user_tree_refreshes;
    }
    const auto& user = data.users[u];
    std::optional<WarmStart> warm;
    if (tree) warm = warm_start_session(*tree, user_instance(user), cfg.inflation);
    auto curve = simulate_user(rankings[u], user, data.items, cfg, warm ? &*warm : nullptr);
    seen_users.push_back(user_instance(user));
    seen_answers.push_back(curve.answered);
    report.curves.push_back(std::move(curve));
  }
  return report;
}

}  // namespace dtpbo::sushi

#endif  // DTPBO_SUSHI_HPP
