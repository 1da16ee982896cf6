#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "genir/embedding.hpp"
#include "genir/error.hpp"
#include "genir/image.hpp"

namespace genir {

inline constexpr std::size_t kMaxTextBytes = 8 * 1024;
inline constexpr int kMaxRetriesCap = 5;

enum class Role { generator, image_embedder, text_embedder, agent };

constexpr std::string_view to_string(Role r) {
  switch (r) {
    case Role::generator: return "generator";
    case Role::image_embedder: return "image_embedder";
    case Role::text_embedder: return "text_embedder";
    case Role::agent: return "agent";
  }
  return "unknown";
}

/// The image channel the simulated user reacts to when refining a query.
enum class RefineMode { generative, verbal, prediction };

constexpr std::string_view to_string(RefineMode m) {
  switch (m) {
    case RefineMode::generative: return "generative";
    case RefineMode::verbal: return "verbal";
    case RefineMode::prediction: return "prediction";
  }
  return "unknown";
}

inline std::optional<RefineMode> parse_refine_mode(std::string_view s) {
  if (s == "generative") return RefineMode::generative;
  if (s == "verbal") return RefineMode::verbal;
  if (s == "prediction") return RefineMode::prediction;
  return std::nullopt;
}

struct BackendEndpoint {
  Role role = Role::generator;
  std::string base_url;
  std::chrono::milliseconds timeout{10'000};
  int max_retries = 2;

  void validate() const {
    if (timeout.count() <= 0) throw Error(ErrorCode::InvalidConfig, "timeout must be positive");
    if (max_retries < 0 || max_retries > kMaxRetriesCap) {
      throw Error(ErrorCode::InvalidConfig, "max_retries must be within 0..5");
    }
  }
};

inline BackendEndpoint default_endpoint(Role role, std::string base_url = {}) {
  using namespace std::chrono_literals;
  return BackendEndpoint{role, std::move(base_url), role == Role::generator ? 120'000ms : 10'000ms, 2};
}

struct DialogTurn {
  int round = 0;
  std::string query;
  std::optional<std::string> feedback_summary;

  friend bool operator==(const DialogTurn&, const DialogTurn&) = default;
};

using DialogHistory = std::vector<DialogTurn>;

inline void validate_history(const DialogHistory& history) {
  if (history.empty()) throw Error(ErrorCode::InvalidArgument, "dialog history is empty");
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (history[i].round < 0 || (i > 0 && history[i].round <= history[i - 1].round) ||
        (i == 0 && history[i].round != 0)) {
      throw Error(ErrorCode::InvalidArgument, "dialog rounds must increase strictly from 0");
    }
  }
}

/// A value together with the time the backend spent producing it.
template <class T>
struct Timed {
  T value;
  std::int64_t elapsed_ms = 0;
};

/// One inference provider. A single object may serve every role (the mock
/// world does) or only some of them (an HTTP client bound to one server).
class InferenceBackend {
 public:
  virtual ~InferenceBackend() = default;

  virtual Timed<ImageBlob> generate(const std::string& prompt, std::uint64_t seed) = 0;
  virtual Timed<std::vector<float>> embed_image(const ImageBlob& blob) = 0;
  virtual Timed<std::vector<float>> embed_text(const std::string& text) = 0;
  virtual Timed<std::string> initial_query(const ImageBlob& target) = 0;
  virtual Timed<std::string> refine_query(const ImageBlob& target, const ImageBlob* feedback,
                                          const DialogHistory& history, RefineMode mode) = 0;
};

struct GatewayOptions {
  std::size_t dim = kDefaultDim;
  int generator_retries = 2;
  int embedder_retries = 2;
  int agent_retries = 2;
  std::chrono::milliseconds retry_backoff{0};
};

/// Uniform access to the generator, the two embedders and the user agent.
/// Validates inputs and replies, normalizes embeddings and retries transient
/// failures. Reentrant: holds no per-call state.
class Gateway {
 public:
  Gateway(std::shared_ptr<InferenceBackend> generator, std::shared_ptr<InferenceBackend> image_embedder,
          std::shared_ptr<InferenceBackend> text_embedder, std::shared_ptr<InferenceBackend> agent,
          GatewayOptions options)
      : generator_(std::move(generator)),
        image_embedder_(std::move(image_embedder)),
        text_embedder_(std::move(text_embedder)),
        agent_(std::move(agent)),
        options_(options) {
    if (!generator_ || !image_embedder_ || !text_embedder_ || !agent_) {
      throw Error(ErrorCode::InvalidConfig, "every gateway role needs a backend");
    }
    for (int r : {options_.generator_retries, options_.embedder_retries, options_.agent_retries}) {
      if (r < 0 || r > kMaxRetriesCap) throw Error(ErrorCode::InvalidConfig, "retries must be within 0..5");
    }
  }

  Gateway(std::shared_ptr<InferenceBackend> all_roles, GatewayOptions options)
      : Gateway(all_roles, all_roles, all_roles, all_roles, options) {}

  [[nodiscard]] std::size_t dim() const noexcept { return options_.dim; }
  [[nodiscard]] const GatewayOptions& options() const noexcept { return options_; }

  Timed<ImageBlob> generate_image(const std::string& prompt, std::uint64_t seed) {
    check_text(prompt, "prompt");
    return with_retries(options_.generator_retries, [&] {
      auto out = generator_->generate(prompt, seed);
      out.value.origin = ImageOrigin::generated;
      validate_blob(out.value);
      return out;
    });
  }

  Timed<Embedding> embed_image(const ImageBlob& blob) {
    validate_blob(blob);
    return with_retries(options_.embedder_retries, [&] {
      auto raw = image_embedder_->embed_image(blob);
      return Timed<Embedding>{to_embedding(raw.value), raw.elapsed_ms};
    });
  }

  Timed<Embedding> embed_text(const std::string& text) {
    check_text(text, "text");
    return with_retries(options_.embedder_retries, [&] {
      auto raw = text_embedder_->embed_text(text);
      return Timed<Embedding>{to_embedding(raw.value), raw.elapsed_ms};
    });
  }

  Timed<std::string> initial_query(const ImageBlob& target) {
    validate_blob(target);
    return with_retries(options_.agent_retries, [&] {
      auto out = agent_->initial_query(target);
      check_reply_text(out.value);
      return out;
    });
  }

  Timed<std::string> refine_query(const ImageBlob& target, const ImageBlob* feedback,
                                  const DialogHistory& history, RefineMode mode) {
    validate_blob(target);
    validate_history(history);
    if (mode != RefineMode::verbal && feedback == nullptr) {
      throw Error(ErrorCode::MissingFeedback, std::string(to_string(mode)) + " mode needs a feedback image");
    }
    if (mode == RefineMode::verbal) feedback = nullptr;
    if (feedback) validate_blob(*feedback);
    return with_retries(options_.agent_retries, [&] {
      auto out = agent_->refine_query(target, feedback, history, mode);
      check_reply_text(out.value);
      return out;
    });
  }

 private:
  static void check_text(const std::string& text, const char* what) {
    if (text.empty()) throw Error(ErrorCode::InvalidArgument, std::string(what) + " is empty");
    if (text.size() > kMaxTextBytes) {
      throw Error(ErrorCode::PromptTooLong, std::string(what) + " is " + std::to_string(text.size()) + " bytes");
    }
  }

  static void check_reply_text(const std::string& text) {
    if (text.empty()) throw Error(ErrorCode::MalformedResponse, "agent returned an empty query");
  }

  Embedding to_embedding(const std::vector<float>& raw) const {
    if (raw.size() != options_.dim) {
      throw Error(ErrorCode::DimensionMismatch, "backend returned dim " + std::to_string(raw.size()) +
                                                    ", gateway expects " + std::to_string(options_.dim));
    }
    try {
      return normalize(raw, options_.dim);
    } catch (const Error& e) {
      throw Error(ErrorCode::MalformedResponse, std::string("embedding: ") + e.what());
    }
  }

  template <class Fn>
  auto with_retries(int retries, Fn&& call) -> decltype(call()) {
    std::int64_t spent = 0;
    for (int attempt = 0;; ++attempt) {
      const auto start = std::chrono::steady_clock::now();
      try {
        auto out = call();
        out.elapsed_ms += spent;
        return out;
      } catch (const Error& e) {
        if (!is_transient(e.code()) || attempt >= retries) throw;
        spent += std::chrono::duration_cast<std::chrono::milliseconds>(
                     std::chrono::steady_clock::now() - start)
                     .count();
        if (options_.retry_backoff.count() > 0) std::this_thread::sleep_for(options_.retry_backoff * (attempt + 1));
      }
    }
  }

  std::shared_ptr<InferenceBackend> generator_;
  std::shared_ptr<InferenceBackend> image_embedder_;
  std::shared_ptr<InferenceBackend> text_embedder_;
  std::shared_ptr<InferenceBackend> agent_;
  GatewayOptions options_;
};

}  // namespace genir
