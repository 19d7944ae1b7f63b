#ifndef DTPBO_SESSION_SERVICE_HPP
#define DTPBO_SESSION_SERVICE_HPP

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtpbo/core.hpp"
#include "dtpbo/explanation.hpp"
#include "dtpbo/pbo_loop.hpp"

// After Eigen: httplib pulls in <resolv.h>, whose _res macro clashes with
// Eigen parameter names.
#include <httplib.h>

namespace dtpbo::service {

using nlohmann::json;

class NotFound : public Error {
 public:
  using Error::Error;
};

class Conflict : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Config documents

/// Accepted keys; anything else is rejected by name.
inline RunConfig config_from_json(const json& j) {
  RunConfig cfg;
  if (j.is_null()) return cfg;
  if (!j.is_object()) throw InvalidArgument("config: expected an object");
  for (const auto& [key, value] : j.items()) {
    auto natural = [&] {
      if (!value.is_number_integer() || value.get<std::int64_t>() < 0)
        throw InvalidArgument("config." + key + ": expected a non-negative integer");
      return value.get<std::size_t>();
    };
    auto positive = [&] {
      if (!value.is_number() || !(value.get<double>() > 0.0))
        throw InvalidArgument("config." + key + ": expected a positive number");
      return value.get<double>();
    };
    if (key == "initial_pairs") cfg.initial_pairs = natural();
    else if (key == "iterations") cfg.iterations = natural();
    else if (key == "pool_size") cfg.acq_cfg.pool_size = natural();
    else if (key == "prioritize_within_leaf") {
      if (!value.is_boolean()) throw InvalidArgument("config.prioritize_within_leaf: expected a boolean");
      cfg.acq_cfg.prioritize_within_leaf = value.get<bool>();
    } else if (key == "within_leaf_saturation") cfg.acq_cfg.within_leaf_saturation = natural();
    else if (key == "sigma_noise") cfg.noise_cfg.sigma_noise = positive();
    else if (key == "sigma_prior") cfg.noise_cfg.sigma_prior = positive();
    else if (key == "max_depth") cfg.tree_cfg.max_depth = natural();
    else if (key == "min_split_score") cfg.tree_cfg.min_split_score = natural();
    else if (key == "min_samples_split") cfg.tree_cfg.min_samples_split = natural();
    else if (key == "seed") cfg.seed = natural();
    else if (key == "acquisition") {
      if (!value.is_string()) throw InvalidArgument("config.acquisition: expected a string");
      cfg.acquisition = acquisition_from_string(value.get<std::string>());
    } else {
      throw InvalidArgument("config." + key + ": unknown field");
    }
  }
  cfg.check();
  return cfg;
}

inline json config_to_json(const RunConfig& c) {
  return {{"initial_pairs", c.initial_pairs},
          {"iterations", c.iterations},
          {"pool_size", c.acq_cfg.pool_size},
          {"prioritize_within_leaf", c.acq_cfg.prioritize_within_leaf},
          {"within_leaf_saturation", c.acq_cfg.within_leaf_saturation},
          {"sigma_noise", c.noise_cfg.sigma_noise},
          {"sigma_prior", c.noise_cfg.sigma_prior},
          {"max_depth", c.tree_cfg.max_depth},
          {"min_split_score", c.tree_cfg.min_split_score},
          {"min_samples_split", c.tree_cfg.min_samples_split},
          {"seed", c.seed},
          {"acquisition", to_string(c.acquisition)}};
}

/// Feature name -> value, with category labels instead of indices.
inline json labelled_instance(const FeatureSchema& schema, const Instance& x) {
  json out = json::object();
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema[i].is_categorical())
      out[schema[i].name] = schema[i].categorical().labels.at(static_cast<std::size_t>(x[i]));
    else
      out[schema[i].name] = x[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sessions

enum class SessionState { AwaitingAnswer, Finished };

inline std::string to_string(SessionState s) { return s == SessionState::AwaitingAnswer ? "awaiting_answer" : "finished"; }

class OpaqueUser final : public Oracle {
 public:
  bool prefers_first(const Instance&, const Instance&) override { throw Error("a human answers through the API"); }
};

class Session {
 public:
  Session(std::string id, FeatureSchema schema, RunConfig cfg, std::optional<std::string> key)
      : id_(std::move(id)), key_(std::move(key)), loop_(std::move(schema), std::move(cfg)) {}

  const std::string& id() const { return id_; }
  const std::optional<std::string>& idempotency_key() const { return key_; }
  const PboSession& loop() const { return loop_; }
  const SessionTrace& trace() const { return trace_; }
  SessionState state() const { return finished_ ? SessionState::Finished : SessionState::AwaitingAnswer; }
  std::size_t budget() const { return loop_.config().initial_pairs + loop_.config().iterations; }

  /// Applies an answer to a copy; the caller commits it after persisting.
  std::pair<PboSession, TraceRecord> preview_answer(bool first_won) const {
    PboSession next = loop_;
    TraceRecord rec;
    rec.queried_pair = loop_.pending();
    rec.first_won = first_won;
    rec.model_version = loop_.model_version();
    rec.fit_seconds = loop_.pending_fit_seconds();
    rec.timestamp = unix_seconds();
    next.answer(first_won);
    OpaqueUser user;
    const Surrogate model = next.in_initial_phase() ? next.fit_current() : *next.model();
    rec.incumbent = recommend(next.observed(), user, &model);
    return {std::move(next), std::move(rec)};
  }

  void commit(PboSession next, TraceRecord rec) {
    loop_ = std::move(next);
    trace_.records.push_back(std::move(rec));
    if (trace_.records.size() >= budget()) finished_ = true;
  }

  void finish() { finished_ = true; }

  std::shared_mutex& mutex() const { return mutex_; }

 private:
  std::string id_;
  std::optional<std::string> key_;
  PboSession loop_;
  SessionTrace trace_;
  bool finished_ = false;
  mutable std::shared_mutex mutex_;
};

/// Sessions on disk: <id>.session.json holds schema, config and status;
/// <id>.trace.jsonl holds one line per answered comparison.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
      const auto name = entry.path().filename().string();
      const std::string suffix = ".session.json";
      if (name.size() > suffix.size() && name.ends_with(suffix)) load(name.substr(0, name.size() - suffix.size()));
    }
  }

  const std::filesystem::path& directory() const { return dir_; }

  struct Created {
    std::shared_ptr<Session> session;
    bool created = false;
  };

  Created create(const json& schema_doc, const json& config_doc, std::optional<std::string> key) {
    auto schema = schema_from_json(schema_doc);
    auto cfg = config_from_json(config_doc);
    std::lock_guard lock(store_mutex_);
    if (key) {
      auto it = by_key_.find(*key);
      if (it != by_key_.end()) return {sessions_.at(it->second), false};
    }
    std::string id;
    do id = new_id();
    while (sessions_.count(id));
    auto s = std::make_shared<Session>(id, std::move(schema), std::move(cfg), key);
    write_meta(*s);
    std::ofstream(trace_path(id), std::ios::trunc).flush();
    sessions_[id] = s;
    if (key) by_key_[*key] = id;
    return {s, true};
  }

  std::shared_ptr<Session> get(const std::string& id) const {
    std::lock_guard lock(store_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFound("no session " + id);
    return it->second;
  }

  /// Records an answer. A query_index below the number answered replays the
  /// earlier answer when it agrees and conflicts otherwise.
  std::shared_ptr<Session> answer(const std::string& id, bool first_won, std::optional<std::size_t> query_index) {
    auto s = get(id);
    std::unique_lock lock(s->mutex(), std::try_to_lock);
    if (!lock.owns_lock()) throw Conflict("session " + id + " is busy with another request");
    const auto answered = s->trace().records.size();
    if (query_index && *query_index < answered) {
      if (s->trace().records[*query_index].first_won == first_won) return s;
      throw Conflict("query " + std::to_string(*query_index) + " was already answered differently");
    }
    if (query_index && *query_index > answered)
      throw Conflict("query " + std::to_string(*query_index) + " has not been served yet");
    if (s->state() == SessionState::Finished) throw Conflict("session " + id + " is finished");
    auto [next, rec] = s->preview_answer(first_won);
    append_trace(id, record_to_json(rec, answered));
    s->commit(std::move(next), std::move(rec));
    if (s->state() == SessionState::Finished) write_meta(*s);
    return s;
  }

  std::shared_ptr<Session> finish(const std::string& id) {
    auto s = get(id);
    std::unique_lock lock(s->mutex(), std::try_to_lock);
    if (!lock.owns_lock()) throw Conflict("session " + id + " is busy with another request");
    if (s->state() != SessionState::Finished) {
      s->finish();
      write_meta(*s);
    }
    return s;
  }

  std::string trace_text(const std::string& id) const {
    get(id);
    std::ifstream f(trace_path(id));
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  }

 private:
  std::filesystem::path meta_path(const std::string& id) const { return dir_ / (id + ".session.json"); }
  std::filesystem::path trace_path(const std::string& id) const { return dir_ / (id + ".trace.jsonl"); }

  static std::string new_id() {
    static std::mutex m;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(m);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
    return buf;
  }

  void write_meta(const Session& s) const {
    json j{{"id", s.id()},
           {"schema", schema_to_json(s.loop().schema())},
           {"config", config_to_json(s.loop().config())},
           {"finished", s.state() == SessionState::Finished}};
    if (s.idempotency_key()) j["idempotency_key"] = *s.idempotency_key();
    const auto tmp = meta_path(s.id()).string() + ".tmp";
    {
      std::ofstream f(tmp, std::ios::trunc);
      f << j.dump(2) << '\n';
      if (!f.flush()) throw Error("cannot write session metadata for " + s.id());
    }
    std::filesystem::rename(tmp, meta_path(s.id()));
  }

  void append_trace(const std::string& id, const json& line) const {
    std::ofstream f(trace_path(id), std::ios::app);
    f << line.dump() << '\n';
    if (!f.flush()) throw Error("cannot append to trace of " + id);
  }

  // Rebuilds a session by replaying its trace answers.
  void load(const std::string& id) {
    std::ifstream mf(meta_path(id));
    const auto meta = json::parse(mf);
    std::optional<std::string> key;
    if (meta.contains("idempotency_key")) key = meta["idempotency_key"].get<std::string>();
    auto s = std::make_shared<Session>(id, schema_from_json(meta.at("schema")), config_from_json(meta.at("config")),
                                       key);
    std::ifstream tf(trace_path(id));
    std::stringstream text;
    text << tf.rdbuf();
    const auto saved = trace_from_jsonl(text.str());
    for (std::size_t i = 0; i < saved.records.size(); ++i) {
      const auto& r = saved.records[i];
      if (!(r.queried_pair.first == s->loop().pending().first && r.queried_pair.second == s->loop().pending().second))
        throw Error("trace of session " + id + " diverges from replay at line " + std::to_string(i + 1));
      auto [next, rec] = s->preview_answer(r.first_won);
      s->commit(std::move(next), r);
    }
    if (meta.value("finished", false)) s->finish();
    sessions_[id] = s;
    if (key) by_key_[*key] = id;
  }

  std::filesystem::path dir_;
  mutable std::mutex store_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, std::string> by_key_;
};

// ---------------------------------------------------------------------------
// JSON views

inline json pending_view(const Session& s) {
  json j{{"id", s.id()},
         {"state", to_string(s.state())},
         {"answered", s.trace().records.size()},
         {"model_version", s.loop().model_version()}};
  if (s.state() == SessionState::AwaitingAnswer) {
    const auto& p = s.loop().pending();
    const auto& schema = s.loop().schema();
    j["query_index"] = s.trace().records.size();
    j["phase"] = s.loop().in_initial_phase() ? "initial" : "model";
    j["pending"] = {{"a", instance_to_json(p.first)},
                    {"b", instance_to_json(p.second)},
                    {"a_features", labelled_instance(schema, p.first)},
                    {"b_features", labelled_instance(schema, p.second)}};
  } else {
    j["pending"] = nullptr;
  }
  return j;
}

inline json recommendation_view(const Session& s, const Surrogate& model) {
  OpaqueUser user;
  const auto best = recommend(s.loop().observed(), user, &model);
  const auto p = predict(model.tree, model.posterior, best);
  return {{"instance", instance_to_json(best)},
          {"features", labelled_instance(s.loop().schema(), best)},
          {"leaf_index", p.leaf},
          {"mean", p.mean},
          {"std", std::sqrt(std::max(0.0, p.variance))}};
}

inline json model_view(const Session& s) {
  json j{{"id", s.id()}, {"model_version", s.loop().model_version()}};
  const auto& model = s.loop().model();
  if (!model) {
    j["empty"] = true;
    return j;
  }
  j["empty"] = false;
  j["explanation"] = export_explanation(model->tree, model->posterior);
  j["rules"] = render_rules(model->tree, model->posterior);
  j["recommendation"] = recommendation_view(s, *model);
  return j;
}

inline json finish_view(const Session& s) {
  json j = pending_view(s);
  if (!s.loop().observed().empty()) {
    const auto model = s.loop().model() ? *s.loop().model() : s.loop().fit_current();
    j["recommendation"] = recommendation_view(s, model);
  }
  return j;
}

// ---------------------------------------------------------------------------
// HTTP

inline void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const NotFound& e) {
    send_error(res, 404, e.what());
  } catch (const Conflict& e) {
    send_error(res, 409, e.what());
  } catch (const InvalidArgument& e) {
    send_error(res, 400, e.what());
  } catch (const json::exception& e) {
    send_error(res, 400, std::string("malformed JSON: ") + e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

/// Routes:
///   POST /sessions                   {"schema": ..., "config"?: ..., "idempotency_key"?: ...}
///   GET  /sessions/{id}/pending
///   POST /sessions/{id}/answer       {"choice": "A"|"B", "query_index"?: n}
///   GET  /sessions/{id}/model
///   POST /sessions/{id}/finish
///   GET  /sessions/{id}/trace
inline void install_routes(httplib::Server& server, SessionStore& store) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type, Idempotency-Key"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server.Post("/sessions", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = json::parse(req.body);
      if (!body.is_object() || !body.contains("schema")) throw InvalidArgument("body.schema: required");
      std::optional<std::string> key;
      if (req.has_header("Idempotency-Key")) key = req.get_header_value("Idempotency-Key");
      if (body.contains("idempotency_key")) {
        if (!body["idempotency_key"].is_string()) throw InvalidArgument("body.idempotency_key: expected a string");
        key = body["idempotency_key"].get<std::string>();
      }
      const auto created = store.create(body["schema"], body.value("config", json(nullptr)), key);
      std::shared_lock lock(created.session->mutex());
      auto view = pending_view(*created.session);
      view["schema"] = schema_to_json(created.session->loop().schema());
      view["config"] = config_to_json(created.session->loop().config());
      view["created"] = created.created;
      send_json(res, created.created ? 201 : 200, view);
    });
  });

  server.Get(R"(/sessions/([^/]+)/pending)", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto s = store.get(req.matches[1]);
      std::shared_lock lock(s->mutex());
      send_json(res, 200, pending_view(*s));
    });
  });

  server.Post(R"(/sessions/([^/]+)/answer)", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = json::parse(req.body);
      if (!body.is_object() || !body.contains("choice") || !body["choice"].is_string())
        throw InvalidArgument("body.choice: expected \"A\" or \"B\"");
      const auto choice = body["choice"].get<std::string>();
      if (choice != "A" && choice != "B") throw InvalidArgument("body.choice: expected \"A\" or \"B\"");
      std::optional<std::size_t> index;
      if (body.contains("query_index")) {
        if (!body["query_index"].is_number_integer() || body["query_index"].get<std::int64_t>() < 0)
          throw InvalidArgument("body.query_index: expected a non-negative integer");
        index = body["query_index"].get<std::size_t>();
      }
      auto s = store.answer(req.matches[1], choice == "A", index);
      std::shared_lock lock(s->mutex());
      send_json(res, 200, s->state() == SessionState::Finished ? finish_view(*s) : pending_view(*s));
    });
  });

  server.Get(R"(/sessions/([^/]+)/model)", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto s = store.get(req.matches[1]);
      std::shared_lock lock(s->mutex());
      send_json(res, 200, model_view(*s));
    });
  });

  server.Post(R"(/sessions/([^/]+)/finish)", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto s = store.finish(req.matches[1]);
      std::shared_lock lock(s->mutex());
      send_json(res, 200, finish_view(*s));
    });
  });

  server.Get(R"(/sessions/([^/]+)/trace)", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { res.set_content(store.trace_text(req.matches[1]), "application/x-ndjson"); });
  });
}

/// "host:port" from DTPBO_BIND (default 127.0.0.1:8080).
inline std::pair<std::string, int> parse_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw InvalidArgument("bind address must be host:port, got '" + bind + "'");
  const auto host = bind.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(bind.substr(colon + 1));
  } catch (const std::exception&) {
    throw InvalidArgument("bad port in bind address '" + bind + "'");
  }
  if (port < 0 || port > 65535) throw InvalidArgument("bad port in bind address '" + bind + "'");
  return {host, port};
}

}  // namespace dtpbo::service

#endif  // DTPBO_SESSION_SERVICE_HPP
