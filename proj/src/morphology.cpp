#include "eyewear/morphology.hpp"

#include "eyewear/error.hpp"

#include <cmath>
#include <vector>

namespace eyewear::morph {

std::vector<std::pair<int, int>> disk_offsets(int radius) {
  std::vector<std::pair<int, int>> out;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) out.emplace_back(dy, dx);
    }
  }
  return out;
}

Mask dilate(const Mask& mask, int radius) {
  if (radius <= 0) return mask;
  const auto offsets = disk_offsets(radius);
  Mask out(mask.height(), mask.width(), 0);
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask(r, c)) continue;
      for (auto [dy, dx] : offsets) {
        if (out.contains(r + dy, c + dx)) out(r + dy, c + dx) = 1;
      }
    }
  }
  return out;
}

Mask erode(const Mask& mask, int radius) {
  if (radius <= 0) return mask;
  const auto offsets = disk_offsets(radius);
  Mask out(mask.height(), mask.width(), 0);
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask(r, c)) continue;
      bool keep = true;
      for (auto [dy, dx] : offsets) {
        if (!mask.contains(r + dy, c + dx) || !mask(r + dy, c + dx)) {
          keep = false;
          break;
        }
      }
      out(r, c) = keep ? 1 : 0;
    }
  }
  return out;
}

std::size_t count(const Mask& mask) {
  std::size_t n = 0;
  for (auto v : mask.data()) n += v ? 1 : 0;
  return n;
}

bool is_subset(const Mask& inner, const Mask& outer) {
  if (inner.height() != outer.height() || inner.width() != outer.width()) {
    fail(ErrorCode::DimensionMismatch, "mask sizes differ");
  }
  for (std::size_t i = 0; i < inner.size(); ++i) {
    if (inner.data()[i] && !outer.data()[i]) return false;
  }
  return true;
}

Mask unite(const Mask& a, const Mask& b) {
  if (a.height() != b.height() || a.width() != b.width()) fail(ErrorCode::DimensionMismatch, "mask sizes differ");
  Mask out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = (a.data()[i] || b.data()[i]) ? 1 : 0;
  return out;
}

Mask enclosed_holes(const Mask& foreground) {
  const int h = foreground.height();
  const int w = foreground.width();
  const auto& fg = foreground.data();
  std::vector<std::uint8_t> reached(fg.size(), 0);
  std::vector<int> stack;
  stack.reserve(fg.size() / 4 + 16);
  auto seed = [&](int i) {
    if (!fg[i] && !reached[i]) {
      reached[i] = 1;
      stack.push_back(i);
    }
  };
  for (int c = 0; c < w; ++c) {
    seed(c);
    seed((h - 1) * w + c);
  }
  for (int r = 0; r < h; ++r) {
    seed(r * w);
    seed(r * w + w - 1);
  }
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    const int c = i % w;
    if (i >= w) seed(i - w);
    if (i + w < h * w) seed(i + w);
    if (c > 0) seed(i - 1);
    if (c + 1 < w) seed(i + 1);
  }
  Mask holes(h, w, 0);
  for (std::size_t i = 0; i < holes.size(); ++i) holes.data()[i] = (!fg[i] && !reached[i]) ? 1 : 0;
  return holes;
}

int blur_radius(double sigma) { return static_cast<int>(std::ceil(3.0 * sigma)); }

AlphaMap gaussian_blur(const AlphaMap& input, double sigma) {
  if (!(sigma > 0.0)) fail(ErrorCode::InvalidConfig, "blur sigma must be positive");
  const int radius = blur_radius(sigma);
  std::vector<float> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[i + radius] = static_cast<float>(v);
    total += v;
  }
  for (auto& k : kernel) k = static_cast<float>(k / total);

  const int h = input.height();
  const int w = input.width();
  AlphaMap tmp(h, w, 0.0f);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) {
        const int cc = c + i;
        if (cc >= 0 && cc < w) acc += kernel[i + radius] * input(r, cc);
      }
      tmp(r, c) = acc;
    }
  }
  AlphaMap out(h, w, 0.0f);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) {
        const int rr = r + i;
        if (rr >= 0 && rr < h) acc += kernel[i + radius] * tmp(rr, c);
      }
      out(r, c) = std::min(acc, 1.0f);
    }
  }
  return out;
}

}  // namespace eyewear::morph
