#pragma once

#include <openssl/evp.h>
#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <functional>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "genir/genir.hpp"

namespace genir::testing {

/// Wraps another backend; tests override single methods to inject faults or
/// record calls.
class ForwardingBackend : public InferenceBackend {
 public:
  explicit ForwardingBackend(std::shared_ptr<InferenceBackend> inner) : inner_(std::move(inner)) {}

  Timed<ImageBlob> generate(const std::string& prompt, std::uint64_t seed) override {
    return inner_->generate(prompt, seed);
  }
  Timed<std::vector<float>> embed_image(const ImageBlob& blob) override { return inner_->embed_image(blob); }
  Timed<std::vector<float>> embed_text(const std::string& text) override { return inner_->embed_text(text); }
  Timed<std::string> initial_query(const ImageBlob& target) override { return inner_->initial_query(target); }
  Timed<std::string> refine_query(const ImageBlob& target, const ImageBlob* feedback, const DialogHistory& history,
                                  RefineMode mode) override {
    return inner_->refine_query(target, feedback, history, mode);
  }

 protected:
  std::shared_ptr<InferenceBackend> inner_;
};

struct MockStack {
  std::shared_ptr<const EmbeddingIndex> index;
  std::shared_ptr<MockWorld> world;
  std::shared_ptr<Gateway> gateway;
  std::shared_ptr<SyntheticImages> synthetic;
  std::shared_ptr<SessionEngine> engine;
};

inline MockStack make_stack(std::shared_ptr<const EmbeddingIndex> index, MockWorldConfig world_config,
                            std::uint64_t engine_seed = 1,
                            std::function<std::shared_ptr<InferenceBackend>(std::shared_ptr<MockWorld>)> wrap = {}) {
  MockStack s;
  s.index = std::move(index);
  world_config.dim = s.index->dim();
  s.world = std::make_shared<MockWorld>(world_config);
  std::shared_ptr<InferenceBackend> backend = wrap ? wrap(s.world) : s.world;
  GatewayOptions opts;
  opts.dim = s.index->dim();
  s.gateway = std::make_shared<Gateway>(backend, opts);
  s.synthetic = std::make_shared<SyntheticImages>();
  s.engine = std::make_shared<SessionEngine>(s.index, s.gateway, std::make_shared<MockDatabaseImages>(s.index),
                                             s.synthetic, EngineOptions{engine_seed, frozen_clock()});
  return s;
}

inline MockStack make_stack(std::size_t n, std::size_t dim, MockWorldConfig world_config,
                            std::uint64_t index_seed = 7, std::uint64_t engine_seed = 1) {
  return make_stack(std::make_shared<const EmbeddingIndex>(make_random_index(n, dim, index_seed)), world_config,
                    engine_seed);
}

inline std::vector<float> random_vector(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<float> v(dim);
  for (auto& x : v) x = g(rng);
  return v;
}

/// Full-formula cosine in double precision: dot / (|a| |b|).
inline double reference_cosine(std::span<const float> a, std::span<const float> b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  return static_cast<double>(dot / std::sqrt(na * nb));
}

struct OracleEntry {
  std::string id;
  double similarity;
  std::size_t position;
};

/// Every stored record scored in double precision, best first, ties by
/// insertion order.
inline std::vector<OracleEntry> exhaustive_ranking(const EmbeddingIndex& index, std::span<const float> query) {
  std::vector<OracleEntry> all;
  all.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    all.push_back({index.id(i), reference_cosine(index.embedding(i), query), i});
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const OracleEntry& a, const OracleEntry& b) { return a.similarity > b.similarity; });
  return all;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("genir-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

/// Digest over every regular file under `dir`, keyed by relative path.
inline std::string tree_digest(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string acc;
  for (const auto& f : files) acc += std::filesystem::relative(f, dir).string() + ":" + sha256_hex(read_file(f)) + "\n";
  return sha256_hex(acc);
}

}  // namespace genir::testing
