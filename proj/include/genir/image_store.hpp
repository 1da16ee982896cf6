#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "genir/image.hpp"
#include "genir/index.hpp"
#include "genir/mock_world.hpp"

namespace genir {

/// Resolves database ids to image bytes.
class DatabaseImages {
 public:
  virtual ~DatabaseImages() = default;
  [[nodiscard]] virtual std::optional<ImageBlob> find(std::string_view id) const = 0;
};

/// Renders each record's stored embedding as a vector-carrying PNG.
class MockDatabaseImages final : public DatabaseImages {
 public:
  explicit MockDatabaseImages(std::shared_ptr<const EmbeddingIndex> index) : index_(std::move(index)) {}

  [[nodiscard]] std::optional<ImageBlob> find(std::string_view id) const override {
    auto pos = index_->position_of(id);
    if (!pos) return std::nullopt;
    return make_vector_image(index_->embedding(*pos), ImageOrigin::database);
  }

 private:
  std::shared_ptr<const EmbeddingIndex> index_;
};

/// Reads images from disk: the record's uri when set, otherwise
/// `<root>/<id>.{png,jpg,jpeg}` under each configured root.
class FileDatabaseImages final : public DatabaseImages {
 public:
  FileDatabaseImages(std::shared_ptr<const EmbeddingIndex> index, std::vector<std::filesystem::path> roots)
      : index_(std::move(index)), roots_(std::move(roots)) {}

  [[nodiscard]] std::optional<ImageBlob> find(std::string_view id) const override {
    auto pos = index_->position_of(id);
    if (!pos) return std::nullopt;
    std::vector<std::filesystem::path> candidates;
    if (!index_->uri(*pos).empty()) candidates.emplace_back(index_->uri(*pos));
    for (const auto& root : roots_) {
      for (const char* ext : {".png", ".jpg", ".jpeg"}) candidates.push_back(root / (std::string(id) + ext));
    }
    for (const auto& path : candidates) {
      std::ifstream in(path, std::ios::binary);
      if (!in) continue;
      std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      if (auto format = sniff_format(bytes)) return ImageBlob{*format, std::move(bytes), ImageOrigin::database};
    }
    return std::nullopt;
  }

 private:
  std::shared_ptr<const EmbeddingIndex> index_;
  std::vector<std::filesystem::path> roots_;
};

/// Thread-safe in-memory home for generated images, keyed by reference.
class SyntheticImages {
 public:
  void put(const std::string& ref, ImageBlob blob) {
    std::lock_guard lock(mu_);
    blobs_[ref] = std::move(blob);
  }

  [[nodiscard]] std::optional<ImageBlob> get(const std::string& ref) const {
    std::lock_guard lock(mu_);
    auto it = blobs_.find(ref);
    if (it == blobs_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<ImageBlob> take(const std::string& ref) {
    std::lock_guard lock(mu_);
    auto it = blobs_.find(ref);
    if (it == blobs_.end()) return std::nullopt;
    auto out = std::move(it->second);
    blobs_.erase(it);
    return out;
  }

  [[nodiscard]] std::size_t size() const {
    std::lock_guard lock(mu_);
    return blobs_.size();
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, ImageBlob, std::less<>> blobs_;
};

}  // namespace genir
