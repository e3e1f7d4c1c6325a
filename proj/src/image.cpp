#include "eyewear/image.hpp"

#include "eyewear/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace eyewear {

FaceImage::FaceImage(int height, int width, Rgb8 fill) : height_(height), width_(width) {
  if (height < 1 || width < 1) fail(ErrorCode::DimensionMismatch, "image dims must be positive");
  pixels_.resize(static_cast<std::size_t>(height) * width * 3);
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = fill[0];
    pixels_[i + 1] = fill[1];
    pixels_[i + 2] = fill[2];
  }
}

std::uint8_t to_byte(double unit) {
  const double v = std::round(std::clamp(unit, 0.0, 1.0) * 255.0);
  return static_cast<std::uint8_t>(v);
}

Rgb8 to_rgb8(const std::array<double, 3>& unit) { return {to_byte(unit[0]), to_byte(unit[1]), to_byte(unit[2])}; }

namespace {

struct PngImage {
  png_image img{};
  PngImage() {
    img.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&img); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

RawPng finish_raw(PngImage& png, const std::string& what) {
  png.img.format &= ~(PNG_FORMAT_FLAG_LINEAR | PNG_FORMAT_FLAG_COLORMAP);
  RawPng out;
  out.height = static_cast<int>(png.img.height);
  out.width = static_cast<int>(png.img.width);
  out.channels = static_cast<int>(PNG_IMAGE_SAMPLE_CHANNELS(png.img.format));
  out.samples.resize(PNG_IMAGE_SIZE(png.img));
  if (!png_image_finish_read(&png.img, nullptr, out.samples.data(), 0, nullptr)) {
    fail(ErrorCode::Io, "cannot decode " + what + ": " + png.img.message);
  }
  return out;
}

FaceImage raw_to_face(const RawPng& raw) {
  FaceImage out(raw.height, raw.width);
  const bool color = raw.channels >= 3;
  for (int r = 0; r < raw.height; ++r) {
    for (int c = 0; c < raw.width; ++c) {
      const std::size_t i = (static_cast<std::size_t>(r) * raw.width + c) * raw.channels;
      if (color) {
        out.set(r, c, {raw.samples[i], raw.samples[i + 1], raw.samples[i + 2]});
      } else {
        out.set(r, c, {raw.samples[i], raw.samples[i], raw.samples[i]});
      }
    }
  }
  return out;
}

}  // namespace

RawPng read_png_raw(const std::filesystem::path& path) {
  PngImage png;
  if (!png_image_begin_read_from_file(&png.img, path.c_str())) {
    fail(ErrorCode::Io, "cannot read " + path.string() + ": " + png.img.message);
  }
  return finish_raw(png, path.string());
}

FaceImage read_png(const std::filesystem::path& path) { return raw_to_face(read_png_raw(path)); }

FaceImage decode_png(const std::vector<std::uint8_t>& bytes) {
  PngImage png;
  if (!png_image_begin_read_from_memory(&png.img, bytes.data(), bytes.size())) {
    fail(ErrorCode::Io, std::string("cannot decode png: ") + png.img.message);
  }
  return raw_to_face(finish_raw(png, "png buffer"));
}

std::vector<std::uint8_t> encode_png(const FaceImage& image) {
  PngImage png;
  png.img.width = static_cast<png_uint_32>(image.width());
  png.img.height = static_cast<png_uint_32>(image.height());
  png.img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png.img, nullptr, &size, 0, image.bytes().data(), 0, nullptr)) {
    fail(ErrorCode::Io, std::string("png size query failed: ") + png.img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png.img, out.data(), &size, 0, image.bytes().data(), 0, nullptr)) {
    fail(ErrorCode::Io, std::string("png encode failed: ") + png.img.message);
  }
  out.resize(size);
  return out;
}

void write_png(const FaceImage& image, const std::filesystem::path& path) {
  PngImage png;
  png.img.width = static_cast<png_uint_32>(image.width());
  png.img.height = static_cast<png_uint_32>(image.height());
  png.img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png.img, path.c_str(), 0, image.bytes().data(), 0, nullptr)) {
    fail(ErrorCode::Io, "cannot write " + path.string() + ": " + png.img.message);
  }
}

void write_png(const GrayImage& image, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(image.size());
  std::transform(image.data().begin(), image.data().end(), bytes.begin(),
                 [](float v) { return to_byte(static_cast<double>(v)); });
  PngImage png;
  png.img.width = static_cast<png_uint_32>(image.width());
  png.img.height = static_cast<png_uint_32>(image.height());
  png.img.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png.img, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    fail(ErrorCode::Io, "cannot write " + path.string() + ": " + png.img.message);
  }
}

void write_mask_png(const Mask& mask, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(mask.size());
  std::transform(mask.data().begin(), mask.data().end(), bytes.begin(),
                 [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 255 : 0); });
  PngImage png;
  png.img.width = static_cast<png_uint_32>(mask.width());
  png.img.height = static_cast<png_uint_32>(mask.height());
  png.img.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png.img, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    fail(ErrorCode::Io, "cannot write " + path.string() + ": " + png.img.message);
  }
}

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  if (i < bytes.size()) {
    unsigned v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += (i + 1 < bytes.size()) ? kB64[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  std::array<int, 256> lookup;
  lookup.fill(-1);
  for (int i = 0; i < 64; ++i) lookup[static_cast<unsigned char>(kB64[i])] = i;
  std::vector<std::uint8_t> out;
  unsigned acc = 0;
  int bits = 0;
  for (char ch : text) {
    if (ch == '=' || ch == '\n' || ch == '\r' || ch == ' ') continue;
    const int v = lookup[static_cast<unsigned char>(ch)];
    if (v < 0) fail(ErrorCode::Io, "invalid base64 character");
    acc = (acc << 6) | static_cast<unsigned>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
    }
  }
  return out;
}

}  // namespace eyewear
