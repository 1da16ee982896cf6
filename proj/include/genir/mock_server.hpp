#pragma once

#include <httplib.h>

#include <memory>
#include <string>
#include <thread>

#include "genir/mock_world.hpp"
#include "genir/wire.hpp"

namespace genir {

/// Serves the /v1 inference protocol backed by a MockWorld (or any other
/// InferenceBackend), so HTTP deployments can be exercised without models.
class MockBackendServer {
 public:
  explicit MockBackendServer(std::shared_ptr<InferenceBackend> backend) : backend_(std::move(backend)) {
    using wire::json;
    route(wire::kGeneratePath, [this](const json& body) {
      require_string(body, "prompt");
      if (!body.contains("seed") || !body["seed"].is_number_unsigned()) {
        throw Error(ErrorCode::InvalidArgument, "seed must be an unsigned integer");
      }
      auto out = backend_->generate(body["prompt"].get<std::string>(), body["seed"].get<std::uint64_t>());
      return wire::image_to_json(out.value);
    });
    route(wire::kEmbedImagePath, [this](const json& body) {
      return wire::embedding_to_json(backend_->embed_image(request_image(body)).value);
    });
    route(wire::kEmbedTextPath, [this](const json& body) {
      require_string(body, "text");
      return wire::embedding_to_json(backend_->embed_text(body["text"].get<std::string>()).value);
    });
    route(wire::kInitialQueryPath, [this](const json& body) {
      if (!body.contains("target")) throw Error(ErrorCode::InvalidArgument, "missing target");
      return json{{"query", backend_->initial_query(request_image(body["target"])).value}};
    });
    route(wire::kRefinePath, [this](const json& body) {
      if (!body.contains("target")) throw Error(ErrorCode::InvalidArgument, "missing target");
      require_string(body, "mode");
      auto mode = parse_refine_mode(body["mode"].get<std::string>());
      if (!mode) throw Error(ErrorCode::InvalidArgument, "unknown mode");
      auto target = request_image(body["target"]);
      std::optional<ImageBlob> feedback;
      if (body.contains("feedback") && !body["feedback"].is_null()) feedback = request_image(body["feedback"]);
      auto history = wire::history_from_json(body.value("history", json::array()));
      auto out = backend_->refine_query(target, feedback ? &*feedback : nullptr, history, *mode);
      return json{{"query", out.value}};
    });
  }

  ~MockBackendServer() { stop(); }

  MockBackendServer(const MockBackendServer&) = delete;
  MockBackendServer& operator=(const MockBackendServer&) = delete;

  /// Binds to `host` on an ephemeral port (port 0) or the given one and
  /// serves on a background thread. Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  /// Blocking variant for the CLI.
  void listen(const std::string& host, int port) {
    if (!server_.listen(host, port)) throw Error(ErrorCode::IoError, "cannot listen on " + host);
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  [[nodiscard]] int port() const noexcept { return port_; }
  [[nodiscard]] std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  template <class Handler>
  void route(const char* path, Handler handler) {
    server_.Post(path, [handler](const httplib::Request& req, httplib::Response& res) {
      auto body = wire::json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object()) {
        res.status = 400;
        res.set_content(R"({"error":"body must be a JSON object"})", "application/json");
        return;
      }
      try {
        res.set_content(handler(body).dump(), "application/json");
      } catch (const Error& e) {
        res.status = 400;
        res.set_content(wire::json{{"error", e.what()}}.dump(), "application/json");
      }
    });
  }

  static void require_string(const wire::json& body, const char* key) {
    if (!body.contains(key) || !body[key].is_string()) {
      throw Error(ErrorCode::InvalidArgument, std::string(key) + " must be a string");
    }
  }

  static ImageBlob request_image(const wire::json& j) {
    try {
      return wire::image_from_json(j, ImageOrigin::database);
    } catch (const Error& e) {
      throw Error(ErrorCode::InvalidArgument, e.detail());
    }
  }

  std::shared_ptr<InferenceBackend> backend_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace genir
