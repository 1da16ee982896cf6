#pragma once

#include <httplib.h>

#include <chrono>
#include <memory>
#include <semaphore>
#include <string>

#include "genir/error.hpp"
#include "genir/gateway.hpp"
#include "genir/wire.hpp"

namespace genir {

/// Client for one inference server speaking the /v1 protocol. Makes a single
/// attempt per call; the Gateway owns retries.
class HttpBackend final : public InferenceBackend {
 public:
  explicit HttpBackend(BackendEndpoint endpoint, std::ptrdiff_t max_in_flight = 8)
      : endpoint_(std::move(endpoint)), slots_(max_in_flight) {
    endpoint_.validate();
    if (endpoint_.base_url.empty()) {
      throw Error(ErrorCode::InvalidConfig, std::string(to_string(endpoint_.role)) + " endpoint has no url");
    }
    if (max_in_flight < 1 || max_in_flight > kMaxInFlight) {
      throw Error(ErrorCode::InvalidConfig, "max_in_flight must be within 1..256");
    }
  }

  [[nodiscard]] const BackendEndpoint& endpoint() const noexcept { return endpoint_; }

  Timed<ImageBlob> generate(const std::string& prompt, std::uint64_t seed) override {
    auto reply = post(wire::kGeneratePath, {{"prompt", prompt}, {"seed", seed}});
    return {wire::image_from_json(reply.value, ImageOrigin::generated), reply.elapsed_ms};
  }

  Timed<std::vector<float>> embed_image(const ImageBlob& blob) override {
    auto reply = post(wire::kEmbedImagePath, wire::image_to_json(blob));
    return {wire::embedding_from_json(reply.value), reply.elapsed_ms};
  }

  Timed<std::vector<float>> embed_text(const std::string& text) override {
    auto reply = post(wire::kEmbedTextPath, {{"text", text}});
    return {wire::embedding_from_json(reply.value), reply.elapsed_ms};
  }

  Timed<std::string> initial_query(const ImageBlob& target) override {
    auto reply = post(wire::kInitialQueryPath, {{"target", wire::image_to_json(target)}});
    return {wire::query_from_json(reply.value), reply.elapsed_ms};
  }

  Timed<std::string> refine_query(const ImageBlob& target, const ImageBlob* feedback,
                                  const DialogHistory& history, RefineMode mode) override {
    wire::json body = {{"target", wire::image_to_json(target)},
                       {"feedback", feedback ? wire::image_to_json(*feedback) : wire::json(nullptr)},
                       {"mode", to_string(mode)},
                       {"history", wire::history_to_json(history)}};
    auto reply = post(wire::kRefinePath, body);
    return {wire::query_from_json(reply.value), reply.elapsed_ms};
  }

 private:
  static constexpr std::ptrdiff_t kMaxInFlight = 256;

  Timed<wire::json> post(const char* path, const wire::json& body) {
    slots_.acquire();
    struct Release {
      std::counting_semaphore<kMaxInFlight>& s;
      ~Release() { s.release(); }
    } release{slots_};

    httplib::Client client(endpoint_.base_url);
    const auto timeout = endpoint_.timeout;
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

    const auto start = std::chrono::steady_clock::now();
    auto res = client.Post(path, body.dump(), "application/json");
    const auto elapsed =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    const std::string where = endpoint_.base_url + path;

    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
        throw Error(ErrorCode::BackendTimeout, where + ": " + httplib::to_string(err));
      }
      throw Error(ErrorCode::BackendUnavailable, where + ": " + httplib::to_string(err));
    }
    if (res->status >= 500) {
      throw Error(ErrorCode::BackendUnavailable, where + ": status " + std::to_string(res->status));
    }
    if (res->status < 200 || res->status >= 300) {
      throw Error(ErrorCode::BackendRejected, where + ": status " + std::to_string(res->status));
    }
    auto parsed = wire::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) throw Error(ErrorCode::MalformedResponse, where + ": body is not JSON");
    return {std::move(parsed), elapsed};
  }

  BackendEndpoint endpoint_;
  std::counting_semaphore<kMaxInFlight> slots_;
};

}  // namespace genir
