#pragma once

// Application configuration: a JSON file, then GENIR_* environment overrides,
// then command-line flags (applied by the caller).
//
// {
//   "dim": 256, "seed": 0,
//   "mock": {"noise_sigma_0": 0.8, "noise_decay": 0.8, "alpha": 0.5,
//            "verbal_sigma_0": 1.2, "description_sigma": 1.0,
//            "latency_ms": {"generate": 0, "embed": 0, "agent": 0}},
//   "endpoints": {"generator": {"url": "http://host:9000", "timeout_ms": 120000, "max_retries": 2},
//                 "image_embedder": {...}, "text_embedder": {...}, "agent": {...}},
//   "max_in_flight": 8,
//   "session": {"k": 10, "max_rounds": 10},
//   "service": {"listen": "127.0.0.1:8080", "index_path": "db.idx", "static_image_roots": ["img"],
//               "cors_origin": "*", "trajectory_log": "live.jsonl"}
// }
//
// A role whose url is empty or "mock" is served by the in-process mock world.

#include <json.hpp>

#include <array>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "genir/error.hpp"
#include "genir/gateway.hpp"
#include "genir/http_backend.hpp"
#include "genir/mock_world.hpp"

namespace genir {

struct ServiceSettings {
  std::string listen = "127.0.0.1:8080";
  std::string index_path;
  std::vector<std::string> static_image_roots;
  std::string cors_origin = "*";
  std::string trajectory_log;
};

struct AppConfig {
  std::size_t dim = kDefaultDim;
  std::uint64_t seed = 0;
  MockWorldConfig mock;
  std::array<BackendEndpoint, 4> endpoints = {default_endpoint(Role::generator), default_endpoint(Role::image_embedder),
                                              default_endpoint(Role::text_embedder), default_endpoint(Role::agent)};
  std::ptrdiff_t max_in_flight = 8;
  std::size_t k = 10;
  int max_rounds = 10;
  ServiceSettings service;

  BackendEndpoint& endpoint(Role r) { return endpoints[static_cast<std::size_t>(r)]; }
  [[nodiscard]] const BackendEndpoint& endpoint(Role r) const { return endpoints[static_cast<std::size_t>(r)]; }

  [[nodiscard]] bool uses_mock(Role r) const {
    const auto& url = endpoint(r).base_url;
    return url.empty() || url == "mock";
  }
  [[nodiscard]] bool all_mock() const {
    for (auto r : {Role::generator, Role::image_embedder, Role::text_embedder, Role::agent}) {
      if (!uses_mock(r)) return false;
    }
    return true;
  }

  /// Mock world settings with the shared dim and seed folded in.
  [[nodiscard]] MockWorldConfig world() const {
    auto w = mock;
    w.dim = dim;
    w.seed = seed;
    return w;
  }
};

namespace detail {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key) || j[key].is_null()) return;
  try {
    out = j[key].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad value for ") + key);
  }
}

}  // namespace detail

inline void apply_config_json(AppConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  detail::read_opt(j, "dim", cfg.dim);
  detail::read_opt(j, "seed", cfg.seed);
  detail::read_opt(j, "max_in_flight", cfg.max_in_flight);
  if (j.contains("mock")) {
    const auto& m = j["mock"];
    detail::read_opt(m, "noise_sigma_0", cfg.mock.noise_sigma_0);
    detail::read_opt(m, "noise_decay", cfg.mock.noise_decay);
    detail::read_opt(m, "alpha", cfg.mock.alpha);
    detail::read_opt(m, "verbal_sigma_0", cfg.mock.verbal_sigma_0);
    detail::read_opt(m, "description_sigma", cfg.mock.description_sigma);
    if (m.contains("latency_ms")) {
      detail::read_opt(m["latency_ms"], "generate", cfg.mock.latency.generate_ms);
      detail::read_opt(m["latency_ms"], "embed", cfg.mock.latency.embed_ms);
      detail::read_opt(m["latency_ms"], "agent", cfg.mock.latency.agent_ms);
    }
  }
  if (j.contains("endpoints")) {
    for (auto r : {Role::generator, Role::image_embedder, Role::text_embedder, Role::agent}) {
      const auto key = std::string(to_string(r));
      if (!j["endpoints"].contains(key)) continue;
      const auto& e = j["endpoints"][key];
      auto& ep = cfg.endpoint(r);
      detail::read_opt(e, "url", ep.base_url);
      std::int64_t timeout_ms = ep.timeout.count();
      detail::read_opt(e, "timeout_ms", timeout_ms);
      ep.timeout = std::chrono::milliseconds(timeout_ms);
      detail::read_opt(e, "max_retries", ep.max_retries);
    }
  }
  if (j.contains("session")) {
    detail::read_opt(j["session"], "k", cfg.k);
    detail::read_opt(j["session"], "max_rounds", cfg.max_rounds);
  }
  if (j.contains("service")) {
    const auto& s = j["service"];
    detail::read_opt(s, "listen", cfg.service.listen);
    detail::read_opt(s, "index_path", cfg.service.index_path);
    detail::read_opt(s, "static_image_roots", cfg.service.static_image_roots);
    detail::read_opt(s, "cors_origin", cfg.service.cors_origin);
    detail::read_opt(s, "trajectory_log", cfg.service.trajectory_log);
  }
}

/// GENIR_GENERATOR_URL, GENIR_EMBEDDER_URL (both embedders), GENIR_AGENT_URL,
/// GENIR_INDEX_PATH, GENIR_LISTEN.
inline void apply_env(AppConfig& cfg) {
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  if (auto v = env("GENIR_GENERATOR_URL")) cfg.endpoint(Role::generator).base_url = *v;
  if (auto v = env("GENIR_EMBEDDER_URL")) {
    cfg.endpoint(Role::image_embedder).base_url = *v;
    cfg.endpoint(Role::text_embedder).base_url = *v;
  }
  if (auto v = env("GENIR_AGENT_URL")) cfg.endpoint(Role::agent).base_url = *v;
  if (auto v = env("GENIR_INDEX_PATH")) cfg.service.index_path = *v;
  if (auto v = env("GENIR_LISTEN")) cfg.service.listen = *v;
}

inline AppConfig load_config(const std::optional<std::filesystem::path>& path, bool use_env = true) {
  AppConfig cfg;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path->string());
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::InvalidConfig, path->string() + " is not valid JSON");
    apply_config_json(cfg, j);
  }
  if (use_env) apply_env(cfg);
  return cfg;
}

inline GatewayOptions gateway_options(const AppConfig& cfg) {
  GatewayOptions o;
  o.dim = cfg.dim;
  o.generator_retries = cfg.endpoint(Role::generator).max_retries;
  o.embedder_retries = std::max(cfg.endpoint(Role::image_embedder).max_retries,
                                cfg.endpoint(Role::text_embedder).max_retries);
  o.agent_retries = cfg.endpoint(Role::agent).max_retries;
  return o;
}

/// Builds the gateway: mock world for roles without a url, HTTP clients for
/// the rest.
inline std::shared_ptr<Gateway> make_gateway(const AppConfig& cfg) {
  std::shared_ptr<InferenceBackend> mock;
  auto backend_for = [&](Role r) -> std::shared_ptr<InferenceBackend> {
    if (cfg.uses_mock(r)) {
      if (!mock) mock = std::make_shared<MockWorld>(cfg.world());
      return mock;
    }
    auto ep = cfg.endpoint(r);
    ep.role = r;
    return std::make_shared<HttpBackend>(ep, cfg.max_in_flight);
  };
  return std::make_shared<Gateway>(backend_for(Role::generator), backend_for(Role::image_embedder),
                                   backend_for(Role::text_embedder), backend_for(Role::agent),
                                   gateway_options(cfg));
}

/// Splits "host:port".
inline std::pair<std::string, int> parse_listen(const std::string& listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::InvalidConfig, "listen must be host:port");
  try {
    const int port = std::stoi(listen.substr(colon + 1));
    if (port < 0 || port > 65535) throw std::out_of_range("port");
    return {listen.substr(0, colon), port};
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidConfig, "bad port in " + listen);
  }
}

}  // namespace genir
