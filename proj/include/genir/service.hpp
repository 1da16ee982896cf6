#pragma once

// HTTP session service for live, human-driven retrieval sessions.
//
//   GET  /api/health
//   POST /api/sessions                  {"mode", "k"?, "max_rounds"?, "target_id"?, "visual_fraction"?}
//   GET  /api/sessions/{id}
//   POST /api/sessions/{id}/rounds      {"query"}
//   POST /api/sessions/{id}/complete    {"found_id"?}
//   GET  /api/images/{ref}              ref = synthetic/<name> | db/<id>

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "genir/error.hpp"
#include "genir/session.hpp"
#include "genir/trajectory.hpp"

namespace genir {

struct ServiceOptions {
  std::string cors_origin = "*";
  std::optional<std::filesystem::path> trajectory_log;
  std::size_t default_k = 10;
  int default_max_rounds = 10;
};

class SessionService {
 public:
  SessionService(std::shared_ptr<SessionEngine> engine, ServiceOptions options)
      : engine_(std::move(engine)), options_(std::move(options)) {
    if (!engine_) throw Error(ErrorCode::InvalidConfig, "service needs an engine");
    install_routes();
  }

  ~SessionService() { stop(); }

  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  /// Binds (port 0 = ephemeral) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  /// Blocks until stop() is called from another thread or a signal.
  void listen(const std::string& host, int port) {
    if (!server_.bind_to_port(host, port)) {
      throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
    }
    port_ = port;
    server_.listen_after_bind();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  [[nodiscard]] int port() const noexcept { return port_; }

  /// Copy of a session's current trace.
  [[nodiscard]] std::optional<SessionTrace> snapshot(const std::string& session_id) const {
    auto entry = find(session_id);
    if (!entry) return std::nullopt;
    std::lock_guard lock(entry->mu);
    return entry->trace;
  }

  [[nodiscard]] std::size_t session_count() const {
    std::lock_guard lock(sessions_mu_);
    return sessions_.size();
  }

  /// Config the service gives a new session from a request body.
  static SessionConfig config_from_request(const nlohmann::json& body, const ServiceOptions& options) {
    if (!body.is_object()) throw Error(ErrorCode::InvalidConfig, "body must be a JSON object");
    if (!body.contains("mode") || !body["mode"].is_string()) throw Error(ErrorCode::InvalidConfig, "mode is required");
    auto kind = parse_feedback_kind(body["mode"].get<std::string>());
    if (!kind) throw Error(ErrorCode::InvalidConfig, "unknown mode " + body["mode"].get<std::string>());
    FeedbackMode mode{*kind, std::nullopt};
    if (body.contains("visual_fraction")) {
      if (!body["visual_fraction"].is_number()) throw Error(ErrorCode::InvalidConfig, "visual_fraction must be a number");
      mode.visual_fraction = body["visual_fraction"].get<double>();
    }
    std::size_t k = options.default_k;
    int max_rounds = options.default_max_rounds;
    if (body.contains("k")) {
      if (!body["k"].is_number_integer() || body["k"].get<long long>() < 1) throw Error(ErrorCode::InvalidConfig, "k must be a positive integer");
      k = body["k"].get<std::size_t>();
    }
    if (body.contains("max_rounds")) {
      if (!body["max_rounds"].is_number_integer() || body["max_rounds"].get<long long>() < 1) {
        throw Error(ErrorCode::InvalidConfig, "max_rounds must be a positive integer");
      }
      max_rounds = body["max_rounds"].get<int>();
    }
    auto config = live_config(mode, max_rounds, k);
    if (body.contains("success_rule")) {
      auto rule = body["success_rule"].is_string() ? parse_success_rule(body["success_rule"].get<std::string>())
                                                   : std::nullopt;
      if (!rule) throw Error(ErrorCode::InvalidConfig, "unknown success_rule");
      config.success_rule = *rule;
    }
    return config;
  }

  static std::string image_url(std::string_view kind, const std::string& ref) {
    return "/api/images/" + std::string(kind) + "/" + httplib::detail::encode_query_param(ref);
  }

  /// JSON view of one round as returned to clients.
  [[nodiscard]] static nlohmann::json round_view(const RoundRecord& rec, const SessionTrace& trace) {
    nlohmann::json retrieved = nlohmann::json::array();
    for (const auto& e : rec.retrieved.entries) {
      retrieved.push_back({{"id", e.id}, {"image_url", image_url("db", e.id)}, {"similarity", e.similarity}});
    }
    nlohmann::json view = {
        {"round", rec.round},
        {"query", rec.query},
        {"channel", to_string(rec.channel)},
        {"synthetic_image_url",
         rec.synthetic_image_ref ? nlohmann::json(image_url("synthetic", *rec.synthetic_image_ref)) : nlohmann::json(nullptr)},
        {"retrieved", std::move(retrieved)},
        {"status", to_string(trace.status)},
        {"rounds_remaining", trace.config.round_limit() - trace.rounds.size()}};
    if (rec.rank_of_target) view["rank_of_target"] = *rec.rank_of_target;
    if (rec.label) view["label"] = *rec.label;
    if (rec.failure) {
      view["error"] = {{"stage", rec.failure->stage}, {"code", to_string(rec.failure->code)},
                       {"message", rec.failure->message}};
    }
    return view;
  }

  [[nodiscard]] static nlohmann::json session_view(const SessionTrace& trace) {
    nlohmann::json rounds = nlohmann::json::array();
    for (const auto& rec : trace.rounds) rounds.push_back(round_view(rec, trace));
    nlohmann::json view = {{"session_id", trace.session_id},
                           {"status", to_string(trace.status)},
                           {"mode", to_string(trace.config.mode.kind)},
                           {"k", trace.config.k},
                           {"max_rounds", trace.config.max_rounds},
                           {"success_rule", to_string(trace.config.success_rule)},
                           {"target_id", trace.target_id ? nlohmann::json(*trace.target_id) : nlohmann::json(nullptr)},
                           {"found_id", trace.found_id ? nlohmann::json(*trace.found_id) : nlohmann::json(nullptr)},
                           {"rounds", std::move(rounds)}};
    return view;
  }

 private:
  struct Entry {
    mutable std::mutex mu;
    SessionTrace trace;
    std::atomic<bool> busy{false};
  };

  static void reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void reply_error(httplib::Response& res, int status, const std::string& message,
                          std::optional<std::string> stage = std::nullopt) {
    nlohmann::json body = {{"error", message}};
    if (stage) body["stage"] = *stage;
    reply(res, status, body);
  }

  std::shared_ptr<Entry> find(const std::string& id) const {
    std::lock_guard lock(sessions_mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  void append_log(const SessionTrace& trace) {
    if (!options_.trajectory_log) return;
    std::lock_guard lock(log_mu_);
    std::ofstream out(*options_.trajectory_log, std::ios::binary | std::ios::app);
    write_trajectories(out, to_records(trace));
  }

  void install_routes() {
    server_.set_default_headers({{"Access-Control-Allow-Origin", options_.cors_origin}});
    server_.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });

    server_.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, {{"status", "ok"}, {"index_size", engine_->index().size()}, {"dim", engine_->index().dim()}});
    });

    server_.Post("/api/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      auto body = nlohmann::json::parse(req.body, nullptr, false);
      if (body.is_discarded()) return reply_error(res, 400, "body is not JSON");
      std::optional<std::string> target;
      if (body.is_object() && body.contains("target_id")) {
        if (!body["target_id"].is_string()) return reply_error(res, 400, "target_id must be a string");
        target = body["target_id"].get<std::string>();
      }
      try {
        auto config = config_from_request(body, options_);
        auto entry = std::make_shared<Entry>();
        entry->trace = engine_->create_session(config, target);
        const auto id = entry->trace.session_id;
        {
          std::lock_guard lock(sessions_mu_);
          sessions_.emplace(id, std::move(entry));
        }
        reply(res, 201, {{"session_id", id}});
      } catch (const Error& e) {
        reply_error(res, e.code() == ErrorCode::UnknownTarget ? 404 : 400, e.what());
      }
    });

    server_.Get(R"(/api/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto entry = find(req.matches[1]);
      if (!entry) return reply_error(res, 404, "unknown session");
      std::lock_guard lock(entry->mu);
      reply(res, 200, session_view(entry->trace));
    });

    server_.Post(R"(/api/sessions/([^/]+)/rounds)", [this](const httplib::Request& req, httplib::Response& res) {
      auto entry = find(req.matches[1]);
      if (!entry) return reply_error(res, 404, "unknown session");
      auto body = nlohmann::json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object() || !body.contains("query") || !body["query"].is_string()) {
        return reply_error(res, 400, "body must be {\"query\": text}");
      }
      if (entry->busy.exchange(true)) return reply_error(res, 409, "a round is already in flight for this session");
      struct Clear {
        std::atomic<bool>& flag;
        ~Clear() { flag.store(false); }
      } clear{entry->busy};

      std::lock_guard lock(entry->mu);
      try {
        const auto& rec = engine_->run_round(entry->trace, body["query"].get<std::string>());
        if (rec.failure) {
          auto view = round_view(rec, entry->trace);
          view["error"] = rec.failure->message;
          view["stage"] = rec.failure->stage;
          return reply(res, 502, view);
        }
        reply(res, 200, round_view(rec, entry->trace));
      } catch (const Error& e) {
        if (e.code() == ErrorCode::SessionFinished) return reply_error(res, 410, e.what());
        reply_error(res, 400, e.what());
      }
    });

    server_.Post(R"(/api/sessions/([^/]+)/complete)", [this](const httplib::Request& req, httplib::Response& res) {
      auto entry = find(req.matches[1]);
      if (!entry) return reply_error(res, 404, "unknown session");
      auto body = req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object()) return reply_error(res, 400, "body must be a JSON object");
      std::optional<std::string> found;
      if (body.contains("found_id") && !body["found_id"].is_null()) {
        if (!body["found_id"].is_string()) return reply_error(res, 400, "found_id must be a string");
        found = body["found_id"].get<std::string>();
      }
      if (entry->busy.load()) return reply_error(res, 409, "a round is in flight for this session");
      std::lock_guard lock(entry->mu);
      try {
        engine_->complete_session(entry->trace, found);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::SessionFinished) return reply_error(res, 410, e.what());
        return reply_error(res, 400, e.what());
      }
      try {
        append_log(entry->trace);
      } catch (const Error& e) {
        return reply_error(res, 500, e.what());
      }
      reply(res, 200, session_view(entry->trace));
    });

    server_.Get(R"(/api/images/(synthetic|db)/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string kind = req.matches[1];
      const std::string ref = req.matches[2];
      auto blob = kind == "synthetic" ? engine_->synthetic_images().get(ref) : engine_->database_images().find(ref);
      if (!blob) return reply_error(res, 404, "unknown image");
      res.set_content(blob->bytes, std::string(content_type(blob->format)));
    });
  }

  std::shared_ptr<SessionEngine> engine_;
  ServiceOptions options_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;

  mutable std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::mutex log_mu_;
};

}  // namespace genir
