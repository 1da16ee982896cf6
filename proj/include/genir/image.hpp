#pragma once

#include <openssl/evp.h>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <charconv>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "genir/error.hpp"

namespace genir {

enum class ImageFormat { png, jpeg };
enum class ImageOrigin { generated, database };

constexpr std::string_view to_string(ImageFormat f) { return f == ImageFormat::png ? "png" : "jpeg"; }
constexpr std::string_view to_string(ImageOrigin o) {
  return o == ImageOrigin::generated ? "generated" : "database";
}
constexpr std::string_view content_type(ImageFormat f) {
  return f == ImageFormat::png ? "image/png" : "image/jpeg";
}

inline std::optional<ImageFormat> parse_image_format(std::string_view s) {
  if (s == "png") return ImageFormat::png;
  if (s == "jpeg" || s == "jpg") return ImageFormat::jpeg;
  return std::nullopt;
}

inline constexpr std::string_view kPngSignature{"\x89PNG\r\n\x1a\n", 8};
inline constexpr std::string_view kJpegSignature{"\xFF\xD8\xFF", 3};

inline std::optional<ImageFormat> sniff_format(std::string_view bytes) {
  if (bytes.starts_with(kPngSignature)) return ImageFormat::png;
  if (bytes.starts_with(kJpegSignature)) return ImageFormat::jpeg;
  return std::nullopt;
}

/// Binary image payload plus its declared format and where it came from.
struct ImageBlob {
  ImageFormat format = ImageFormat::png;
  std::string bytes;
  ImageOrigin origin = ImageOrigin::generated;

  friend bool operator==(const ImageBlob&, const ImageBlob&) = default;
};

/// Non-empty payload whose header agrees with the format tag.
inline void validate_blob(const ImageBlob& blob) {
  if (blob.bytes.empty()) throw Error(ErrorCode::MalformedResponse, "empty image payload");
  auto sniffed = sniff_format(blob.bytes);
  if (!sniffed || *sniffed != blob.format) {
    throw Error(ErrorCode::MalformedResponse,
                "payload header does not match format tag " + std::string(to_string(blob.format)));
  }
}

// ---------------------------------------------------------------------------
// base64 (OpenSSL)

inline std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::optional<std::string> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) return std::nullopt;
  if (text.empty()) return std::string{};
  std::string out(3 * text.size() / 4, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) return std::nullopt;
  // EVP_DecodeBlock keeps the zero bytes that stand in for '=' padding.
  std::size_t pad = 0;
  if (text.ends_with("==")) pad = 2;
  else if (text.ends_with('=')) pad = 1;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

// ---------------------------------------------------------------------------
// Vector text: comma-separated shortest round-trip float32 literals.

inline std::string format_vector(std::span<const float> v) {
  std::string out;
  out.reserve(v.size() * 12);
  std::array<char, 32> buf{};
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out.push_back(',');
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v[i]);
    out.append(buf.data(), end);
  }
  return out;
}

inline std::optional<std::vector<float>> parse_vector(std::string_view text) {
  std::vector<float> out;
  if (text.empty()) return std::nullopt;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  while (p < end) {
    float value = 0.0f;
    auto [next, ec] = std::from_chars(p, end, value);
    if (ec != std::errc{}) return std::nullopt;
    out.push_back(value);
    p = next;
    if (p == end) break;
    if (*p != ',') return std::nullopt;
    ++p;
    if (p == end) return std::nullopt;
  }
  return out;
}

// ---------------------------------------------------------------------------
// PNG carrying a feature vector in a tEXt chunk. The image itself is a 1x1 RGB
// pixel so any viewer can open it, while the vector stays machine-exact.

inline constexpr std::string_view kVectorKeyword = "genir:vector";

namespace detail {

inline void append_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>(v & 0xFF));
}

inline std::uint32_t read_be32(std::string_view s, std::size_t at) {
  auto b = [&](std::size_t i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + i])); };
  return (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
}

inline void append_chunk(std::string& out, std::string_view type, std::string_view data) {
  append_be32(out, static_cast<std::uint32_t>(data.size()));
  std::string body;
  body.reserve(type.size() + data.size());
  body.append(type);
  body.append(data);
  out.append(body);
  const auto crc = ::crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()));
  append_be32(out, static_cast<std::uint32_t>(crc));
}

inline unsigned char channel_byte(std::span<const float> v, std::size_t i) {
  if (i >= v.size()) return 128;
  const float x = std::clamp(v[i], -1.0f, 1.0f);
  return static_cast<unsigned char>(std::lround((x + 1.0f) * 127.5f));
}

}  // namespace detail

inline std::string encode_vector_png(std::span<const float> v) {
  std::string png(kPngSignature);

  std::string ihdr;
  detail::append_be32(ihdr, 1);  // width
  detail::append_be32(ihdr, 1);  // height
  ihdr.push_back(8);             // bit depth
  ihdr.push_back(2);             // colour type: RGB
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  detail::append_chunk(png, "IHDR", ihdr);

  std::string text(kVectorKeyword);
  text.push_back('\0');
  text.append(format_vector(v));
  detail::append_chunk(png, "tEXt", text);

  const std::array<unsigned char, 4> scanline = {0, detail::channel_byte(v, 0),
                                                 detail::channel_byte(v, 1),
                                                 detail::channel_byte(v, 2)};
  uLongf packed_len = compressBound(scanline.size());
  std::string packed(packed_len, '\0');
  if (compress2(reinterpret_cast<Bytef*>(packed.data()), &packed_len, scanline.data(),
                scanline.size(), Z_BEST_COMPRESSION) != Z_OK) {
    throw Error(ErrorCode::IoError, "zlib compress failed");
  }
  packed.resize(packed_len);
  detail::append_chunk(png, "IDAT", packed);
  detail::append_chunk(png, "IEND", {});
  return png;
}

inline ImageBlob make_vector_image(std::span<const float> v, ImageOrigin origin) {
  return ImageBlob{ImageFormat::png, encode_vector_png(v), origin};
}

/// Extracts the vector from a PNG written by encode_vector_png. Returns nullopt
/// for images that do not carry one; throws MalformedResponse for a broken PNG.
inline std::optional<std::vector<float>> decode_vector_png(std::string_view png) {
  if (!png.starts_with(kPngSignature)) throw Error(ErrorCode::MalformedResponse, "not a PNG");
  std::size_t at = kPngSignature.size();
  while (at + 12 <= png.size()) {
    const std::uint32_t len = detail::read_be32(png, at);
    if (at + 12 + len > png.size()) break;
    const std::string_view type = png.substr(at + 4, 4);
    const std::string_view data = png.substr(at + 8, len);
    const std::string_view body = png.substr(at + 4, 4 + len);
    const auto crc = ::crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()));
    if (static_cast<std::uint32_t>(crc) != detail::read_be32(png, at + 8 + len)) {
      throw Error(ErrorCode::MalformedResponse, "PNG chunk CRC mismatch");
    }
    if (type == "tEXt") {
      const auto nul = data.find('\0');
      if (nul != std::string_view::npos && data.substr(0, nul) == kVectorKeyword) {
        auto v = parse_vector(data.substr(nul + 1));
        if (!v) throw Error(ErrorCode::MalformedResponse, "unparseable vector text chunk");
        return v;
      }
    }
    if (type == "IEND") return std::nullopt;
    at += 12 + len;
  }
  throw Error(ErrorCode::MalformedResponse, "truncated PNG");
}

}  // namespace genir
