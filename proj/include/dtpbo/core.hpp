#ifndef DTPBO_CORE_HPP
#define DTPBO_CORE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace dtpbo {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

struct Continuous {
  double lower = 0.0;
  double upper = 1.0;
};

struct Categorical {
  std::vector<std::string> labels;
};

struct FeatureSpec {
  std::string name;
  std::variant<Continuous, Categorical> kind;

  bool is_continuous() const { return std::holds_alternative<Continuous>(kind); }
  bool is_categorical() const { return std::holds_alternative<Categorical>(kind); }
  const Continuous& continuous() const { return std::get<Continuous>(kind); }
  const Categorical& categorical() const { return std::get<Categorical>(kind); }
};

/// Ordered description of the search space X = X_cont x X_cat.
class FeatureSchema {
 public:
  FeatureSchema() = default;

  explicit FeatureSchema(std::vector<FeatureSpec> features) : features_(std::move(features)) {
    std::set<std::string> names;
    for (const auto& f : features_) {
      if (f.name.empty()) throw InvalidArgument("feature name must not be empty");
      if (!names.insert(f.name).second) throw InvalidArgument("duplicate feature name: " + f.name);
      if (f.is_continuous()) {
        const auto& c = f.continuous();
        if (!std::isfinite(c.lower) || !std::isfinite(c.upper) || !(c.lower < c.upper))
          throw InvalidArgument("feature " + f.name + ": bounds must be finite with lower < upper");
      } else {
        const auto& labels = f.categorical().labels;
        std::set<std::string> distinct(labels.begin(), labels.end());
        if (labels.size() < 2 || distinct.size() != labels.size())
          throw InvalidArgument("feature " + f.name + ": needs at least 2 distinct labels");
      }
    }
  }

  std::size_t size() const { return features_.size(); }
  const FeatureSpec& operator[](std::size_t i) const { return features_.at(i); }
  const std::vector<FeatureSpec>& features() const { return features_; }

  friend bool operator==(const FeatureSchema& a, const FeatureSchema& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto& fa = a[i];
      const auto& fb = b[i];
      if (fa.name != fb.name || fa.is_continuous() != fb.is_continuous()) return false;
      if (fa.is_continuous()) {
        if (fa.continuous().lower != fb.continuous().lower ||
            fa.continuous().upper != fb.continuous().upper)
          return false;
      } else if (fa.categorical().labels != fb.categorical().labels) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<FeatureSpec> features_;
};

/// A point of the search space. Categorical entries hold the label index.
struct Instance {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  friend bool operator==(const Instance&, const Instance&) = default;
};

/// An observed preference winner > loser.
struct ComparisonPair {
  Instance winner;
  Instance loser;
  friend bool operator==(const ComparisonPair&, const ComparisonPair&) = default;
};

/// An offered pair whose preferred member is not yet known.
struct CandidatePair {
  Instance first;
  Instance second;
  friend bool operator==(const CandidatePair&, const CandidatePair&) = default;
};

struct Violation {
  std::size_t feature_index;
  std::string feature;
  std::string message;
};

struct ValidationResult {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  explicit operator bool() const { return ok(); }
};

inline ValidationResult validate_instance(const FeatureSchema& schema, const Instance& instance) {
  ValidationResult result;
  if (instance.size() != schema.size()) {
    result.violations.push_back({schema.size(), "",
                                 "expected " + std::to_string(schema.size()) + " values, got " +
                                     std::to_string(instance.size())});
    return result;
  }
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto& spec = schema[i];
    const double v = instance[i];
    if (spec.is_continuous()) {
      const auto& c = spec.continuous();
      if (!std::isfinite(v) || v < c.lower || v > c.upper)
        result.violations.push_back({i, spec.name, "value outside [lower, upper]"});
    } else {
      const auto n = static_cast<double>(spec.categorical().labels.size());
      if (!(v >= 0.0 && v < n && v == std::floor(v)))
        result.violations.push_back({i, spec.name, "invalid category index"});
    }
  }
  return result;
}

inline void require_valid(const FeatureSchema& schema, const Instance& instance) {
  auto r = validate_instance(schema, instance);
  if (!r.ok()) {
    const auto& v = r.violations.front();
    throw InvalidArgument("invalid instance" + (v.feature.empty() ? "" : " (feature " + v.feature + ")") +
                          ": " + v.message);
  }
}

/// The growing observation set D_t. Appending never reorders existing pairs.
class PreferenceDataset {
 public:
  PreferenceDataset() = default;
  explicit PreferenceDataset(FeatureSchema schema) : schema_(std::move(schema)) {}

  const FeatureSchema& schema() const { return schema_; }
  const std::vector<ComparisonPair>& pairs() const { return pairs_; }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }

  void append(ComparisonPair pair) {
    require_valid(schema_, pair.winner);
    require_valid(schema_, pair.loser);
    pairs_.push_back(std::move(pair));
  }

 private:
  FeatureSchema schema_;
  std::vector<ComparisonPair> pairs_;
};

/// Mixes a base seed with a stream index so derived streams stay independent.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double sample_feature(const FeatureSpec& spec, std::mt19937_64& rng) {
  if (spec.is_continuous()) {
    const auto& c = spec.continuous();
    std::uniform_real_distribution<double> u(c.lower, c.upper);
    return u(rng);
  }
  std::uniform_int_distribution<std::size_t> pick(0, spec.categorical().labels.size() - 1);
  return static_cast<double>(pick(rng));
}

inline Instance sample_uniform(const FeatureSchema& schema, std::mt19937_64& rng) {
  Instance x;
  x.values.reserve(schema.size());
  for (const auto& spec : schema.features()) x.values.push_back(sample_feature(spec, rng));
  return x;
}

/// Latin-hypercube initial design: 2N instances, stratified per continuous
/// dimension, shuffled and paired consecutively.
inline std::vector<CandidatePair> lhs_sample_pairs(const FeatureSchema& schema, std::size_t pair_count,
                                                   std::uint64_t seed) {
  if (pair_count == 0) throw InvalidArgument("pair_count must be >= 1");
  const std::size_t n = 2 * pair_count;
  std::mt19937_64 rng(seed);
  std::vector<Instance> points(n);
  for (auto& p : points) p.values.resize(schema.size());

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t d = 0; d < schema.size(); ++d) {
    const auto& spec = schema[d];
    if (spec.is_continuous()) {
      const auto& c = spec.continuous();
      std::vector<std::size_t> bins(n);
      std::iota(bins.begin(), bins.end(), std::size_t{0});
      std::shuffle(bins.begin(), bins.end(), rng);
      const double width = (c.upper - c.lower) / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double lo = c.lower + width * static_cast<double>(bins[i]);
        double v = lo + width * unit(rng);
        // keep the draw inside its own half-open bin despite rounding
        const double hi = bins[i] + 1 == n ? c.upper : c.lower + width * static_cast<double>(bins[i] + 1);
        if (v >= hi && bins[i] + 1 < n) v = std::nextafter(hi, lo);
        points[i].values[d] = std::clamp(v, lo, c.upper);
      }
    } else {
      for (auto& p : points) p.values[d] = sample_feature(spec, rng);
    }
  }

  std::shuffle(points.begin(), points.end(), rng);
  std::vector<CandidatePair> pairs;
  pairs.reserve(pair_count);
  for (std::size_t i = 0; i < n; i += 2) pairs.push_back({points[i], points[i + 1]});
  return pairs;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json schema_to_json(const FeatureSchema& schema) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& f : schema.features()) {
    nlohmann::json j{{"name", f.name}};
    if (f.is_continuous()) {
      j["kind"] = "continuous";
      j["bounds"] = {f.continuous().lower, f.continuous().upper};
    } else {
      j["kind"] = "categorical";
      j["labels"] = f.categorical().labels;
    }
    features.push_back(std::move(j));
  }
  return {{"features", features}};
}

inline FeatureSchema schema_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("features") || !doc["features"].is_array())
    throw InvalidArgument("schema: missing 'features' array");
  std::vector<FeatureSpec> specs;
  std::size_t i = 0;
  for (const auto& f : doc["features"]) {
    const std::string where = "schema.features[" + std::to_string(i++) + "]";
    if (!f.is_object()) throw InvalidArgument(where + ": expected object");
    if (!f.contains("name") || !f["name"].is_string()) throw InvalidArgument(where + ".name: expected string");
    if (!f.contains("kind") || !f["kind"].is_string()) throw InvalidArgument(where + ".kind: expected string");
    FeatureSpec spec;
    spec.name = f["name"].get<std::string>();
    const auto kind = f["kind"].get<std::string>();
    if (kind == "continuous") {
      const auto& b = f.value("bounds", nlohmann::json());
      if (!b.is_array() || b.size() != 2 || !b[0].is_number() || !b[1].is_number())
        throw InvalidArgument(where + ".bounds: expected [lower, upper]");
      spec.kind = Continuous{b[0].get<double>(), b[1].get<double>()};
    } else if (kind == "categorical") {
      const auto& l = f.value("labels", nlohmann::json());
      if (!l.is_array()) throw InvalidArgument(where + ".labels: expected array of strings");
      Categorical cat;
      for (const auto& s : l) {
        if (!s.is_string()) throw InvalidArgument(where + ".labels: expected array of strings");
        cat.labels.push_back(s.get<std::string>());
      }
      spec.kind = std::move(cat);
    } else {
      throw InvalidArgument(where + ".kind: expected 'continuous' or 'categorical'");
    }
    specs.push_back(std::move(spec));
  }
  try {
    return FeatureSchema(std::move(specs));
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(std::string("schema: ") + e.what());
  }
}

inline nlohmann::json instance_to_json(const Instance& x) { return x.values; }

inline Instance instance_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw InvalidArgument("instance: expected array of numbers");
  Instance x;
  for (const auto& v : j) {
    if (!v.is_number()) throw InvalidArgument("instance: expected array of numbers");
    x.values.push_back(v.get<double>());
  }
  return x;
}

}  // namespace dtpbo

#endif  // DTPBO_CORE_HPP
