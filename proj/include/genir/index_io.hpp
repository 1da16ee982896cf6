#pragma once

// Binary index format, little-endian throughout:
//   magic   "GENIRIDX" (8 bytes)
//   version u32 = 1
//   dim     u32
//   count   u64
//   count x { id_len u16, id bytes (UTF-8), dim x f32 }
// No padding and no checksum.

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "genir/error.hpp"
#include "genir/index.hpp"

namespace genir {

inline constexpr std::array<char, 8> kIndexMagic = {'G', 'E', 'N', 'I', 'R', 'I', 'D', 'X'};
inline constexpr std::uint32_t kIndexVersion = 1;

namespace detail {

template <class UInt>
void put_le(std::ostream& out, UInt v) {
  std::array<char, sizeof(UInt)> bytes{};
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  }
  out.write(bytes.data(), bytes.size());
}

template <class UInt>
UInt get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(UInt)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw Error(ErrorCode::TruncatedFile, what);
  }
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline void save_index(const EmbeddingIndex& index, std::ostream& out) {
  out.write(kIndexMagic.data(), kIndexMagic.size());
  detail::put_le<std::uint32_t>(out, kIndexVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(index.dim()));
  detail::put_le<std::uint64_t>(out, index.size());
  for (std::size_t pos = 0; pos < index.size(); ++pos) {
    const auto& id = index.id(pos);
    if (id.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw Error(ErrorCode::InvalidArgument, "id longer than 65535 bytes");
    }
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (float f : index.embedding(pos)) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed");
}

inline void save_index(const EmbeddingIndex& index, const std::filesystem::path& destination) {
  std::ofstream out(destination, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + destination.string());
  save_index(index, out);
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + destination.string());
}

/// Reads an index back bit-for-bit. `expected_dim`, when given, must match the
/// header.
inline EmbeddingIndex load_index(std::istream& in, std::optional<std::size_t> expected_dim = {}) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size())) {
    throw Error(ErrorCode::TruncatedFile, "magic");
  }
  if (magic != kIndexMagic) throw Error(ErrorCode::BadMagic, std::string(magic.data(), magic.size()));
  const auto version = detail::get_le<std::uint32_t>(in, "version");
  if (version != kIndexVersion) {
    throw Error(ErrorCode::UnsupportedVersion, std::to_string(version));
  }
  const auto dim = detail::get_le<std::uint32_t>(in, "dim");
  if (dim == 0) throw Error(ErrorCode::DimensionMismatch, "header dim is 0");
  if (expected_dim && *expected_dim != dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "file dim " + std::to_string(dim) + " vs expected " + std::to_string(*expected_dim));
  }
  const auto count = detail::get_le<std::uint64_t>(in, "count");

  std::vector<std::string> ids;
  std::vector<float> data;
  // The count comes from the file; grow as records actually arrive.
  constexpr std::uint64_t kReserveCap = 1u << 20;
  ids.reserve(static_cast<std::size_t>(std::min(count, kReserveCap)));
  data.reserve(static_cast<std::size_t>(std::min(count, kReserveCap)) * dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto id_len = detail::get_le<std::uint16_t>(in, "id length");
    std::string id(id_len, '\0');
    in.read(id.data(), id_len);
    if (in.gcount() != id_len) throw Error(ErrorCode::TruncatedFile, "id of record " + std::to_string(r));
    for (std::uint32_t d = 0; d < dim; ++d) {
      data.push_back(std::bit_cast<float>(detail::get_le<std::uint32_t>(in, "embedding payload")));
    }
    ids.push_back(std::move(id));
  }
  return EmbeddingIndex::from_normalized(dim, std::move(ids), std::move(data));
}

inline EmbeddingIndex load_index(const std::filesystem::path& source,
                                 std::optional<std::size_t> expected_dim = {}) {
  std::ifstream in(source, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + source.string());
  return load_index(in, expected_dim);
}

}  // namespace genir
