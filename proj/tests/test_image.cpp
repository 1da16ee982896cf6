#include <gtest/gtest.h>

#include "support.hpp"

using namespace genir;

TEST(Base64, KnownVectors) {
  EXPECT_EQ(base64_encode(""), "");
  EXPECT_EQ(base64_encode("f"), "Zg==");
  EXPECT_EQ(base64_encode("fo"), "Zm8=");
  EXPECT_EQ(base64_encode("foo"), "Zm9v");
  EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
  EXPECT_EQ(base64_decode("Zg=="), "f");
  EXPECT_EQ(base64_decode("Zm8="), "fo");
  EXPECT_EQ(base64_decode("Zm9vYmFy"), "foobar");
  EXPECT_FALSE(base64_decode("Zm9"));
  EXPECT_FALSE(base64_decode("Z!9v"));
}

TEST(Base64, BinaryRoundTrip) {
  std::mt19937_64 rng(1);
  for (std::size_t n = 0; n < 300; ++n) {
    std::string bytes(n, '\0');
    for (auto& c : bytes) c = static_cast<char>(rng() & 0xff);
    ASSERT_EQ(base64_decode(base64_encode(bytes)), bytes) << n;
  }
}

TEST(VectorText, ShortestRoundTrip) {
  std::mt19937_64 rng(2);
  auto v = genir::testing::random_vector(rng, 64);
  v.push_back(0.0f);
  v.push_back(-1e-30f);
  v.push_back(3.4e38f);
  auto back = parse_vector(format_vector(v));
  ASSERT_TRUE(back);
  ASSERT_EQ(back->size(), v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint32_t>((*back)[i]), std::bit_cast<std::uint32_t>(v[i]));
  }
  EXPECT_FALSE(parse_vector(""));
  EXPECT_FALSE(parse_vector("1,,2"));
  EXPECT_FALSE(parse_vector("1,2,"));
  EXPECT_FALSE(parse_vector("1;2"));
}

TEST(VectorPng, RoundTripAndHeader) {
  std::vector<float> v{0.25f, -0.5f, 1.0f, 0.125f};
  auto blob = make_vector_image(v, ImageOrigin::generated);
  EXPECT_EQ(blob.format, ImageFormat::png);
  EXPECT_EQ(sniff_format(blob.bytes), ImageFormat::png);
  EXPECT_NO_THROW(validate_blob(blob));
  EXPECT_EQ(decode_vector_png(blob.bytes), v);
  // Same vector, same bytes.
  EXPECT_EQ(encode_vector_png(v), blob.bytes);
}

TEST(VectorPng, CorruptionIsDetected) {
  std::vector<float> v{0.25f, -0.5f};
  auto bytes = encode_vector_png(v);
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x5a;
  EXPECT_THROW((void)decode_vector_png(flipped), Error);
  EXPECT_THROW((void)decode_vector_png(bytes.substr(0, 20)), Error);
  EXPECT_THROW((void)decode_vector_png("GIF89a"), Error);
}

TEST(ImageBlob, ValidateRejectsMismatchedTag) {
  std::vector<float> v{1.0f};
  ImageBlob blob = make_vector_image(v, ImageOrigin::database);
  blob.format = ImageFormat::jpeg;
  EXPECT_THROW(validate_blob(blob), Error);
  EXPECT_THROW(validate_blob(ImageBlob{ImageFormat::png, "", ImageOrigin::database}), Error);
  EXPECT_NO_THROW(validate_blob(ImageBlob{ImageFormat::jpeg, "\xFF\xD8\xFF\xE0rest", ImageOrigin::database}));
  EXPECT_EQ(content_type(ImageFormat::jpeg), "image/jpeg");
}
