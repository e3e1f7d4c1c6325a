#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace eyewear {

using Rgb8 = std::array<std::uint8_t, 3>;

/// Row-major single-plane image.
template <typename T>
class Plane {
 public:
  Plane() = default;
  Plane(int height, int width, T fill = T{})
      : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width, fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool contains(int row, int col) const { return row >= 0 && col >= 0 && row < height_ && col < width_; }

  T& operator()(int row, int col) { return data_[static_cast<std::size_t>(row) * width_ + col]; }
  const T& operator()(int row, int col) const { return data_[static_cast<std::size_t>(row) * width_ + col]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using Mask = Plane<std::uint8_t>;    // 0 / 1
using AlphaMap = Plane<float>;       // [0, 1]
using GrayImage = Plane<float>;      // [0, 1]

/// 8-bit RGB face image, interleaved, row-major.
class FaceImage {
 public:
  FaceImage() = default;
  FaceImage(int height, int width, Rgb8 fill = {0, 0, 0});

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return pixels_.empty(); }

  Rgb8 at(int row, int col) const {
    const std::size_t i = index(row, col);
    return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
  }
  void set(int row, int col, Rgb8 c) {
    const std::size_t i = index(row, col);
    pixels_[i] = c[0];
    pixels_[i + 1] = c[1];
    pixels_[i + 2] = c[2];
  }
  std::uint8_t channel(int row, int col, int ch) const { return pixels_[index(row, col) + ch]; }

  std::vector<std::uint8_t>& bytes() { return pixels_; }
  const std::vector<std::uint8_t>& bytes() const { return pixels_; }

  friend bool operator==(const FaceImage&, const FaceImage&) = default;

 private:
  std::size_t index(int row, int col) const { return (static_cast<std::size_t>(row) * width_ + col) * 3; }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> pixels_;
};

enum class Label : std::uint8_t { Background = 0, Skin = 1, Frames = 2, Lenses = 3 };

using SegmentationMap = Plane<Label>;

std::uint8_t to_byte(double unit);
Rgb8 to_rgb8(const std::array<double, 3>& unit);

// PNG codec (libpng). Grayscale and RGBA inputs are expanded to RGB on read.
FaceImage read_png(const std::filesystem::path& path);
void write_png(const FaceImage& image, const std::filesystem::path& path);
void write_png(const GrayImage& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const FaceImage& image);
FaceImage decode_png(const std::vector<std::uint8_t>& bytes);

/// Raw PNG decode used for template masks: returns channel count and 8-bit samples.
struct RawPng {
  int height = 0;
  int width = 0;
  int channels = 0;  // 1 (gray), 2 (gray+alpha), 3 (rgb), 4 (rgba)
  std::vector<std::uint8_t> samples;
};
RawPng read_png_raw(const std::filesystem::path& path);
void write_mask_png(const Mask& mask, const std::filesystem::path& path);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace eyewear
