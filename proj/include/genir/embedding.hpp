#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "genir/error.hpp"

namespace genir {

inline constexpr std::size_t kDefaultDim = 256;
inline constexpr double kUnitNormTolerance = 1e-6;

/// Unit-norm feature vector in the shared visual space. Construct through
/// normalize(); the raw constructor is for data that is already normalized
/// (e.g. read back from an index file).
class Embedding {
 public:
  Embedding() = default;
  explicit Embedding(std::vector<float> values) : values_(std::move(values)) {}

  [[nodiscard]] std::size_t dim() const noexcept { return values_.size(); }
  [[nodiscard]] std::span<const float> view() const noexcept { return values_; }
  [[nodiscard]] const std::vector<float>& values() const noexcept { return values_; }
  [[nodiscard]] bool empty() const noexcept { return values_.empty(); }

  friend bool operator==(const Embedding&, const Embedding&) = default;

 private:
  std::vector<float> values_;
};

/// Euclidean norm with double accumulation.
inline double l2_norm(std::span<const float> v) {
  double sum = 0.0;
  for (float x : v) sum += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(sum);
}

inline void require_finite(std::span<const float> v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw Error(ErrorCode::NonFinite, "component " + std::to_string(i));
  }
}

inline Embedding normalize(std::span<const float> v, std::size_t dim) {
  if (v.size() != dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "expected " + std::to_string(dim) + ", got " + std::to_string(v.size()));
  }
  require_finite(v);
  const double norm = l2_norm(v);
  if (norm == 0.0) throw Error(ErrorCode::ZeroVector, "all components are zero");
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<float>(static_cast<double>(v[i]) / norm);
  }
  return Embedding(std::move(out));
}

inline Embedding normalize(std::span<const float> v) { return normalize(v, v.size()); }

/// Sequential single-precision dot product in component order. Every score in
/// the index goes through this one function so results are reproducible.
inline float dot(std::span<const float> a, std::span<const float> b) noexcept {
  float acc = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline float clamp_similarity(float s) noexcept { return std::clamp(s, -1.0f, 1.0f); }

/// Cosine of two unit vectors, i.e. their clamped dot product.
inline float cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  return clamp_similarity(dot(a, b));
}

inline float cosine(const Embedding& a, const Embedding& b) { return cosine(a.view(), b.view()); }

}  // namespace genir
