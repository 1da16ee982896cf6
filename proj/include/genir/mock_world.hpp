#pragma once

// Deterministic stand-in for the generator / embedder / user-agent stack.
//
// Queries written by the mock agent are machine-readable:
//     "mock-query round=<t> v=<f0>,<f1>,..."
// so the generator can recover both the intended vector and the round it was
// written for. Any other text maps to a hash-seeded gaussian vector (round 0).
//
// Noise vectors have per-component deviation sigma/sqrt(dim), so sigma is the
// expected Euclidean length of the perturbation.
//
//   generate(q_t)      = vec(q_t) + N(visual_sigma(t))        [PNG payload]
//   embed_image(img)   = normalize(vec(img))
//   embed_text(q_t)    = normalize(vec(q_t) + N(verbal_sigma(t)))
//   initial_query(I*)  = vec(I*) + N(description_sigma)
//   refine(I*, fb, h)  = q_t + alpha * (vec(I*) - belief_t)
//
// belief_t is what the simulated user believes the system understood: the
// decoded feedback image for generative/prediction feedback, or q_t blurred by
// N(verbal_sigma(t)) when only the dialog is available. The refined query is
// therefore the previous query blended toward the target with weight alpha,
// minus alpha times the channel noise of the current round.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "genir/embedding.hpp"
#include "genir/error.hpp"
#include "genir/gateway.hpp"
#include "genir/hash.hpp"
#include "genir/image.hpp"
#include "genir/index.hpp"

namespace genir {

struct MockLatency {
  std::int64_t generate_ms = 0;
  std::int64_t embed_ms = 0;
  std::int64_t agent_ms = 0;
};

struct MockWorldConfig {
  std::size_t dim = kDefaultDim;
  double noise_sigma_0 = 0.0;  // visual channel (generator) noise at round 0
  double noise_decay = 1.0;    // per-round multiplier for both channel noises
  std::uint64_t seed = 0;
  double alpha = 0.5;              // refinement blend toward the target
  double verbal_sigma_0 = 0.0;     // verbal channel noise at round 0
  double description_sigma = 0.0;  // error of the initial description
  MockLatency latency;

  void validate() const {
    if (dim == 0) throw Error(ErrorCode::InvalidConfig, "mock dim must be positive");
    if (!(noise_sigma_0 >= 0.0) || !(verbal_sigma_0 >= 0.0) || !(description_sigma >= 0.0)) {
      throw Error(ErrorCode::InvalidConfig, "mock noise must be non-negative");
    }
    if (!(noise_decay > 0.0 && noise_decay <= 1.0)) {
      throw Error(ErrorCode::InvalidConfig, "noise_decay must be in (0, 1]");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidConfig, "alpha must be in [0, 1]");
  }
};

struct DecodedQuery {
  int round = 0;
  std::vector<float> vector;
};

inline constexpr std::string_view kMockQueryPrefix = "mock-query round=";

inline std::string format_mock_query(int round, std::span<const float> v) {
  return std::string(kMockQueryPrefix) + std::to_string(round) + " v=" + format_vector(v);
}

/// Gaussian vector with per-component deviation sigma/sqrt(dim), fully
/// determined by `key`.
inline std::vector<float> seeded_noise(std::uint64_t key, std::size_t dim, double sigma) {
  std::vector<float> out(dim, 0.0f);
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(key);
  std::normal_distribution<double> gauss(0.0, sigma / std::sqrt(static_cast<double>(dim)));
  for (auto& x : out) x = static_cast<float>(gauss(rng));
  return out;
}

/// Hash-seeded stand-in vector for free text.
inline std::vector<float> hash_vector(std::string_view text, std::size_t dim) {
  return seeded_noise(hash_combine(fnv1a64(text), 0x7465787476656321ULL), dim, 1.0);
}

class MockWorld final : public InferenceBackend {
 public:
  explicit MockWorld(MockWorldConfig config) : config_(config) { config_.validate(); }

  [[nodiscard]] const MockWorldConfig& config() const noexcept { return config_; }

  [[nodiscard]] double visual_sigma(int round) const {
    return config_.noise_sigma_0 * std::pow(config_.noise_decay, round);
  }
  [[nodiscard]] double verbal_sigma(int round) const {
    return config_.verbal_sigma_0 * std::pow(config_.noise_decay, round);
  }

  [[nodiscard]] DecodedQuery decode_query(std::string_view text) const {
    if (text.starts_with(kMockQueryPrefix)) {
      auto rest = text.substr(kMockQueryPrefix.size());
      const auto sep = rest.find(" v=");
      if (sep != std::string_view::npos) {
        int round = 0;
        auto [p, ec] = std::from_chars(rest.data(), rest.data() + sep, round);
        auto vec = parse_vector(rest.substr(sep + 3));
        if (ec == std::errc{} && p == rest.data() + sep && round >= 0 && vec && vec->size() == config_.dim) {
          return {round, std::move(*vec)};
        }
      }
    }
    return {0, hash_vector(text, config_.dim)};
  }

  [[nodiscard]] std::vector<float> decode_image(const ImageBlob& blob) const {
    if (blob.format != ImageFormat::png) {
      throw Error(ErrorCode::MalformedResponse, "mock world only understands its own PNG payloads");
    }
    auto v = decode_vector_png(blob.bytes);
    if (!v) throw Error(ErrorCode::MalformedResponse, "PNG carries no vector");
    if (v->size() != config_.dim) {
      throw Error(ErrorCode::DimensionMismatch, "image vector has dim " + std::to_string(v->size()));
    }
    return std::move(*v);
  }

  /// Database image for a stored embedding.
  [[nodiscard]] ImageBlob render_database_image(std::span<const float> embedding) const {
    return make_vector_image(embedding, ImageOrigin::database);
  }

  /// Noiseless rendering of a query, i.e. what generate() returns at sigma 0.
  [[nodiscard]] ImageBlob render_query(std::string_view query) const {
    return make_vector_image(decode_query(query).vector, ImageOrigin::generated);
  }

  Timed<ImageBlob> generate(const std::string& prompt, std::uint64_t seed) override {
    auto q = decode_query(prompt);
    const auto noise =
        seeded_noise(hash_combine(config_.seed, kGenerateTag, seed), config_.dim, visual_sigma(q.round));
    for (std::size_t i = 0; i < q.vector.size(); ++i) q.vector[i] += noise[i];
    return {make_vector_image(q.vector, ImageOrigin::generated), config_.latency.generate_ms};
  }

  Timed<std::vector<float>> embed_image(const ImageBlob& blob) override {
    return {unit(decode_image(blob)), config_.latency.embed_ms};
  }

  Timed<std::vector<float>> embed_text(const std::string& text) override {
    auto q = decode_query(text);
    const auto noise = seeded_noise(hash_combine(config_.seed, kTextTag, fnv1a64(text)), config_.dim,
                                    verbal_sigma(q.round));
    for (std::size_t i = 0; i < q.vector.size(); ++i) q.vector[i] += noise[i];
    return {unit(q.vector), config_.latency.embed_ms};
  }

  Timed<std::string> initial_query(const ImageBlob& target) override {
    auto v = decode_image(target);
    const auto noise = seeded_noise(hash_combine(config_.seed, kDescribeTag, fnv1a64(target.bytes)),
                                    config_.dim, config_.description_sigma);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += noise[i];
    return {format_mock_query(0, v), config_.latency.agent_ms};
  }

  Timed<std::string> refine_query(const ImageBlob& target, const ImageBlob* feedback,
                                  const DialogHistory& history, RefineMode mode) override {
    if (history.empty()) throw Error(ErrorCode::InvalidArgument, "dialog history is empty");
    const auto& last = history.back();
    const auto goal = decode_image(target);
    auto current = decode_query(last.query);
    const int round = last.round;

    std::vector<float> belief;
    if (mode == RefineMode::verbal) {
      belief = current.vector;
      const auto noise = seeded_noise(
          hash_combine(config_.seed, kVerbalTag, fnv1a64(target.bytes), fnv1a64(last.query),
                       static_cast<std::uint64_t>(round)),
          config_.dim, verbal_sigma(round));
      for (std::size_t i = 0; i < belief.size(); ++i) belief[i] += noise[i];
    } else {
      if (feedback == nullptr) {
        throw Error(ErrorCode::MissingFeedback, std::string(to_string(mode)) + " mode needs a feedback image");
      }
      belief = decode_image(*feedback);
    }

    const auto alpha = static_cast<float>(config_.alpha);
    std::vector<float> next(current.vector.size());
    for (std::size_t i = 0; i < next.size(); ++i) {
      next[i] = current.vector[i] + alpha * (goal[i] - belief[i]);
    }
    return {format_mock_query(round + 1, next), config_.latency.agent_ms};
  }

 private:
  static constexpr std::uint64_t kGenerateTag = 0x67656e6572617465ULL;
  static constexpr std::uint64_t kTextTag = 0x74657874656d6264ULL;
  static constexpr std::uint64_t kDescribeTag = 0x6465736372696265ULL;
  static constexpr std::uint64_t kVerbalTag = 0x766572626168ULL;

  std::vector<float> unit(const std::vector<float>& v) const {
    const double norm = l2_norm(v);
    if (norm == 0.0) return v;  // the gateway reports the zero vector
    return normalize(v, config_.dim).values();
  }

  MockWorldConfig config_;
};

/// Random unit-vector database of `n` images with ids "img_000000", ...
inline EmbeddingIndex make_random_index(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::vector<ImageRecord> records;
  records.reserve(n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  char id[32];
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<float> v(dim);
    for (auto& x : v) x = gauss(rng);
    std::snprintf(id, sizeof id, "img_%06zu", i);
    records.push_back({id, {}, normalize(v, dim).values()});
  }
  return EmbeddingIndex::build(std::move(records), dim);
}

}  // namespace genir
