#include "doctest.h"

#include "eyewear/error.hpp"
#include "eyewear/image.hpp"

#include <filesystem>
#include <random>

using namespace eyewear;

TEST_CASE("PNG encode and decode are lossless") {
  std::mt19937 rng(4);
  FaceImage img(17, 23);
  for (auto& v : img.bytes()) v = static_cast<std::uint8_t>(rng());
  CHECK(decode_png(encode_png(img)) == img);
  const auto path = std::filesystem::temp_directory_path() / "eyewear-image-test.png";
  write_png(img, path);
  CHECK(read_png(path) == img);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(decode_png({1, 2, 3}), Error);
  CHECK_THROWS_AS(read_png(path), Error);
}

TEST_CASE("base64 known vectors and round trip") {
  CHECK(base64_encode({}).empty());
  CHECK(base64_encode({'M', 'a', 'n'}) == "TWFu");
  CHECK(base64_encode({'M', 'a'}) == "TWE=");
  CHECK(base64_encode({'M'}) == "TQ==");
  std::mt19937 rng(1);
  for (int n = 0; n < 50; ++n) {
    std::vector<std::uint8_t> bytes(n);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    CHECK(base64_decode(base64_encode(bytes)) == bytes);
  }
}

TEST_CASE("to_byte rounds and clamps") {
  CHECK(to_byte(0.0) == 0);
  CHECK(to_byte(1.0) == 255);
  CHECK(to_byte(-3.0) == 0);
  CHECK(to_byte(7.0) == 255);
  CHECK(to_byte(0.5) == 128);
}
