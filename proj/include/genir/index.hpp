#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "genir/embedding.hpp"
#include "genir/error.hpp"

namespace genir {

/// Build-time renormalization threshold. Anything further from unit norm than
/// this is rescaled; anything closer is stored bit-for-bit.
inline constexpr double kRenormalizeTolerance = kUnitNormTolerance;

struct ImageRecord {
  std::string id;
  std::string uri;
  std::vector<float> embedding;
};

struct ScoredId {
  std::string id;
  float similarity = 0.0f;

  friend bool operator==(const ScoredId&, const ScoredId&) = default;
};

struct RetrievalResult {
  std::vector<ScoredId> entries;
  std::size_t k_requested = 0;

  [[nodiscard]] const std::string* top_id() const {
    return entries.empty() ? nullptr : &entries.front().id;
  }
  friend bool operator==(const RetrievalResult&, const RetrievalResult&) = default;
};

/// Immutable exact-search index. Scores are clamped single-precision dot
/// products; ties are broken by ascending insertion order, which is also the
/// persisted record order.
class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;

  /// Validates, renormalizes where needed and freezes the records.
  static EmbeddingIndex build(std::vector<ImageRecord> records, std::size_t dim) {
    if (dim == 0) throw Error(ErrorCode::DimensionMismatch, "dim must be positive");
    if (records.empty()) throw Error(ErrorCode::EmptyInput, "no records");
    EmbeddingIndex index(dim);
    index.reserve(records.size());
    for (auto& rec : records) {
      if (rec.embedding.size() != dim) {
        throw Error(ErrorCode::DimensionMismatch,
                    rec.id + ": expected " + std::to_string(dim) + ", got " +
                        std::to_string(rec.embedding.size()));
      }
      require_finite(rec.embedding);
      const double norm = l2_norm(rec.embedding);
      if (norm == 0.0) throw Error(ErrorCode::ZeroVector, rec.id);
      if (std::abs(norm - 1.0) > kRenormalizeTolerance) {
        rec.embedding = normalize(rec.embedding, dim).values();
      }
      index.append(std::move(rec.id), std::move(rec.uri), rec.embedding);
    }
    return index;
  }

  /// Reassembles an index from already-normalized storage without touching
  /// the float payload. Used by the file loader.
  static EmbeddingIndex from_normalized(std::size_t dim, std::vector<std::string> ids,
                                        std::vector<float> data) {
    if (dim == 0) throw Error(ErrorCode::DimensionMismatch, "dim must be positive");
    if (data.size() != ids.size() * dim) {
      throw Error(ErrorCode::DimensionMismatch, "payload size does not match count * dim");
    }
    EmbeddingIndex index(dim);
    index.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      index.append(std::move(ids[i]), {}, std::span<const float>(data).subspan(i * dim, dim));
    }
    return index;
  }

  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] std::size_t size() const noexcept { return ids_.size(); }
  [[nodiscard]] bool empty() const noexcept { return ids_.empty(); }

  [[nodiscard]] const std::string& id(std::size_t pos) const { return ids_.at(pos); }
  [[nodiscard]] const std::string& uri(std::size_t pos) const { return uris_.at(pos); }
  [[nodiscard]] const std::vector<std::string>& ids() const noexcept { return ids_; }
  [[nodiscard]] std::span<const float> payload() const noexcept { return data_; }

  [[nodiscard]] std::span<const float> embedding(std::size_t pos) const {
    if (pos >= size()) throw Error(ErrorCode::OutOfRange, "position " + std::to_string(pos));
    return std::span<const float>(data_).subspan(pos * dim_, dim_);
  }

  [[nodiscard]] std::optional<std::size_t> position_of(std::string_view id) const {
    auto it = positions_.find(std::string(id));
    if (it == positions_.end()) return std::nullopt;
    return it->second;
  }

  [[nodiscard]] bool contains(std::string_view id) const { return position_of(id).has_value(); }

  [[nodiscard]] std::span<const float> embedding(std::string_view id) const {
    auto pos = position_of(id);
    if (!pos) throw Error(ErrorCode::UnknownTarget, std::string(id));
    return embedding(*pos);
  }

  [[nodiscard]] float score(std::size_t pos, std::span<const float> query) const {
    return clamp_similarity(dot(embedding(pos), query));
  }

  /// Exact top-k by cosine over every record.
  [[nodiscard]] RetrievalResult top_k(std::span<const float> query, std::size_t k) const {
    check_query(query);
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    const std::size_t keep = std::min(k, size());

    struct Candidate {
      float sim;
      std::size_t pos;
    };
    // Heap ordered so that the worst kept candidate sits on top.
    auto ranks_before = [](const Candidate& a, const Candidate& b) {
      return a.sim > b.sim || (a.sim == b.sim && a.pos < b.pos);
    };
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(ranks_before)> heap(
        ranks_before);
    for (std::size_t pos = 0; pos < size(); ++pos) {
      Candidate c{score(pos, query), pos};
      if (heap.size() < keep) {
        heap.push(c);
      } else if (ranks_before(c, heap.top())) {
        heap.pop();
        heap.push(c);
      }
    }

    std::vector<Candidate> kept;
    kept.reserve(keep);
    while (!heap.empty()) {
      kept.push_back(heap.top());
      heap.pop();
    }
    std::sort(kept.begin(), kept.end(), ranks_before);

    RetrievalResult result;
    result.k_requested = k;
    result.entries.reserve(kept.size());
    for (const auto& c : kept) result.entries.push_back({ids_[c.pos], c.sim});
    return result;
  }

  [[nodiscard]] RetrievalResult top_k(const Embedding& query, std::size_t k) const {
    return top_k(query.view(), k);
  }

  /// 1-based position of `target_id` in the full ordering used by top_k.
  [[nodiscard]] std::size_t rank_of(std::span<const float> query, std::string_view target_id) const {
    check_query(query);
    const auto target = position_of(target_id);
    if (!target) throw Error(ErrorCode::UnknownTarget, std::string(target_id));
    const float target_sim = score(*target, query);
    std::size_t ahead = 0;
    for (std::size_t pos = 0; pos < size(); ++pos) {
      const float s = score(pos, query);
      if (s > target_sim || (s == target_sim && pos < *target)) ++ahead;
    }
    return ahead + 1;
  }

  [[nodiscard]] std::size_t rank_of(const Embedding& query, std::string_view target_id) const {
    return rank_of(query.view(), target_id);
  }

  friend bool operator==(const EmbeddingIndex& a, const EmbeddingIndex& b) {
    return a.dim_ == b.dim_ && a.ids_ == b.ids_ && bitwise_equal(a.data_, b.data_);
  }

 private:
  explicit EmbeddingIndex(std::size_t dim) : dim_(dim) {}

  static bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](float x, float y) {
             return std::bit_cast<std::uint32_t>(x) == std::bit_cast<std::uint32_t>(y);
           });
  }

  void reserve(std::size_t n) {
    ids_.reserve(n);
    uris_.reserve(n);
    data_.reserve(n * dim_);
    positions_.reserve(n);
  }

  void append(std::string id, std::string uri, std::span<const float> values) {
    if (id.empty()) throw Error(ErrorCode::InvalidArgument, "empty id");
    if (!positions_.emplace(id, ids_.size()).second) throw Error(ErrorCode::DuplicateId, id);
    ids_.push_back(std::move(id));
    uris_.push_back(std::move(uri));
    data_.insert(data_.end(), values.begin(), values.end());
  }

  void check_query(std::span<const float> query) const {
    if (empty()) throw Error(ErrorCode::EmptyIndex, "index has no records");
    if (query.size() != dim_) {
      throw Error(ErrorCode::DimensionMismatch,
                  "query dim " + std::to_string(query.size()) + " vs index dim " +
                      std::to_string(dim_));
    }
  }

  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<std::string> uris_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> positions_;
};

inline EmbeddingIndex build_index(std::vector<ImageRecord> records, std::size_t dim) {
  return EmbeddingIndex::build(std::move(records), dim);
}

}  // namespace genir
