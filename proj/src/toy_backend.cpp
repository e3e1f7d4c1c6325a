#include "eyewear/toy_backend.hpp"

#include "eyewear/error.hpp"
#include "eyewear/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace eyewear::toy {

double Range::at(double z) const { return lo + (hi - lo) * std::clamp(z, 0.0, 1.0); }
double Range::coordinate(double value) const { return (value - lo) / (hi - lo); }

ToyLayout ToyLayout::standard(int layers, int channels) {
  ToyLayout l;
  const int glasses_base = (layers >= 2 && channels >= 13) ? channels : 8;
  l.presence = glasses_base;
  l.half_width = glasses_base + 1;
  l.half_height = glasses_base + 2;
  l.thickness = glasses_base + 3;
  l.squareness = glasses_base + 4;
  l.vertical_offset = glasses_base + 5;
  l.lens = {glasses_base + 6, glasses_base + 7, glasses_base + 8};
  l.lens_alpha = glasses_base + 9;
  l.frame = {glasses_base + 10, glasses_base + 11, glasses_base + 12};
  return l;
}

std::vector<int> ToyLayout::all_indices() const {
  std::vector<int> out{center_x, center_y, radius_x, radius_y, skin[0], skin[1], skin[2], eye_radius,
                       presence, half_width, half_height, thickness, squareness, vertical_offset,
                       lens[0], lens[1], lens[2], lens_alpha, frame[0], frame[1], frame[2]};
  return out;
}

std::array<int, 6> ToyLayout::glasses_variation_indices() const {
  return {half_width, half_height, thickness, squareness, vertical_offset, lens_alpha};
}

void ToyLayout::validate(int dim) const {
  const auto idx = all_indices();
  std::set<int> seen;
  for (int i : idx) {
    if (i < 0 || i >= dim) fail(ErrorCode::InvalidConfig, "layout index " + std::to_string(i) + " outside latent");
    if (!seen.insert(i).second) fail(ErrorCode::InvalidConfig, "layout index " + std::to_string(i) + " repeated");
  }
}

namespace {

void read_index(const nlohmann::json& j, const char* key, int& out) {
  if (j.contains(key)) out = j.at(key).get<int>();
}
void read_index3(const nlohmann::json& j, const char* key, std::array<int, 3>& out) {
  if (j.contains(key)) out = j.at(key).get<std::array<int, 3>>();
}

}  // namespace

ToyConfig ToyConfig::from_json(const nlohmann::json& j) {
  ToyConfig c;
  c.resolution = j.value("resolution", c.resolution);
  c.layers = j.value("layers", c.layers);
  c.channels = j.value("channels", c.channels);
  c.layout = ToyLayout::standard(c.layers, c.channels);
  if (j.contains("layout")) {
    const auto& l = j.at("layout");
    read_index(l, "center_x", c.layout.center_x);
    read_index(l, "center_y", c.layout.center_y);
    read_index(l, "radius_x", c.layout.radius_x);
    read_index(l, "radius_y", c.layout.radius_y);
    read_index3(l, "skin", c.layout.skin);
    read_index(l, "eye_radius", c.layout.eye_radius);
    read_index(l, "presence", c.layout.presence);
    read_index(l, "half_width", c.layout.half_width);
    read_index(l, "half_height", c.layout.half_height);
    read_index(l, "thickness", c.layout.thickness);
    read_index(l, "squareness", c.layout.squareness);
    read_index(l, "vertical_offset", c.layout.vertical_offset);
    read_index3(l, "lens", c.layout.lens);
    read_index(l, "lens_alpha", c.layout.lens_alpha);
    read_index3(l, "frame", c.layout.frame);
  }
  c.fit_mse_threshold = j.value("fit_mse_threshold", c.fit_mse_threshold);
  c.refine_iterations = j.value("refine_iterations", c.refine_iterations);
  c.centroid_samples = j.value("centroid_samples", c.centroid_samples);
  c.antialias = j.value("antialias", c.antialias);
  if (c.refine_iterations < 0 || c.centroid_samples < 0) fail(ErrorCode::InvalidConfig, "negative fit budget");
  if (c.resolution < 64) fail(ErrorCode::InvalidConfig, "toy resolution must be >= 64");
  if (c.layers < 1 || c.channels < 1) fail(ErrorCode::InvalidConfig, "latent dims must be positive");
  c.layout.validate(c.layers * c.channels);
  return c;
}

nlohmann::json ToyConfig::to_json() const {
  const auto& l = layout;
  return {{"resolution", resolution},
          {"layers", layers},
          {"channels", channels},
          {"layout",
           {{"center_x", l.center_x},
            {"center_y", l.center_y},
            {"radius_x", l.radius_x},
            {"radius_y", l.radius_y},
            {"skin", l.skin},
            {"eye_radius", l.eye_radius},
            {"presence", l.presence},
            {"half_width", l.half_width},
            {"half_height", l.half_height},
            {"thickness", l.thickness},
            {"squareness", l.squareness},
            {"vertical_offset", l.vertical_offset},
            {"lens", l.lens},
            {"lens_alpha", l.lens_alpha},
            {"frame", l.frame}}},
          {"fit_mse_threshold", fit_mse_threshold},
          {"refine_iterations", refine_iterations},
          {"centroid_samples", centroid_samples},
          {"antialias", antialias}};
}

ToyParams decode(const LatentCode& latent, const ToyConfig& config) {
  if (latent.layers() != config.layers || latent.channels() != config.channels) {
    fail(ErrorCode::DimensionMismatch, "latent is " + std::to_string(latent.layers()) + "x" +
                                           std::to_string(latent.channels()) + ", toy backend expects " +
                                           std::to_string(config.layers) + "x" + std::to_string(config.channels));
  }
  const auto& l = config.layout;
  const double res = config.resolution;
  auto z = [&](int i) { return latent.flat(i); };
  ToyParams p;
  p.face.cx = res * ranges::kCenterX.at(z(l.center_x));
  p.face.cy = res * ranges::kCenterY.at(z(l.center_y));
  p.face.rx = res * ranges::kRadiusX.at(z(l.radius_x));
  p.face.ry = res * ranges::kRadiusY.at(z(l.radius_y));
  for (int c = 0; c < 3; ++c) p.face.skin[c] = ranges::kSkin[c].at(z(l.skin[c]));
  p.face.eye_radius = ranges::kEyeRadius.at(z(l.eye_radius));
  auto& g = p.glasses;
  g.presence = z(l.presence);
  g.half_width = ranges::kHalfWidth.at(z(l.half_width));
  g.half_height = ranges::kHalfHeight.at(z(l.half_height));
  g.thickness = ranges::kThickness.at(z(l.thickness));
  g.squareness = exponent_from_fullness(ranges::kSquareness.at(z(l.squareness)));
  g.vertical_offset = ranges::kVerticalOffset.at(z(l.vertical_offset));
  for (int c = 0; c < 3; ++c) {
    g.lens[c] = ranges::kLensColor.at(z(l.lens[c]));
    g.frame[c] = ranges::kFrameColor.at(z(l.frame[c]));
  }
  g.lens_alpha = ranges::kLensAlpha.at(z(l.lens_alpha));
  return p;
}

LatentCode encode_params(const ToyParams& p, const ToyConfig& config) {
  LatentCode out(config.layers, config.channels);
  const auto& l = config.layout;
  const double res = config.resolution;
  auto put = [&](int i, const Range& r, double v) { out.flat(i) = std::clamp(r.coordinate(v), 0.0, 1.0); };
  put(l.center_x, ranges::kCenterX, p.face.cx / res);
  put(l.center_y, ranges::kCenterY, p.face.cy / res);
  put(l.radius_x, ranges::kRadiusX, p.face.rx / res);
  put(l.radius_y, ranges::kRadiusY, p.face.ry / res);
  for (int c = 0; c < 3; ++c) put(l.skin[c], ranges::kSkin[c], p.face.skin[c]);
  put(l.eye_radius, ranges::kEyeRadius, p.face.eye_radius);
  const auto& g = p.glasses;
  out.flat(l.presence) = g.presence;
  put(l.half_width, ranges::kHalfWidth, g.half_width);
  put(l.half_height, ranges::kHalfHeight, g.half_height);
  put(l.thickness, ranges::kThickness, g.thickness);
  put(l.squareness, ranges::kSquareness, fullness_from_exponent(g.squareness));
  put(l.vertical_offset, ranges::kVerticalOffset, g.vertical_offset);
  for (int c = 0; c < 3; ++c) {
    put(l.lens[c], ranges::kLensColor, g.lens[c]);
    put(l.frame[c], ranges::kFrameColor, g.frame[c]);
  }
  put(l.lens_alpha, ranges::kLensAlpha, g.lens_alpha);
  return out;
}

// ---------------------------------------------------------------------------
// Geometry

namespace {

bool inside_ellipse(double dx, double dy, double a, double b) {
  const double u = dx / a;
  const double v = dy / b;
  return u * u + v * v <= 1.0;
}

// Half-width of |x/a|^n + |y/b|^n <= 1 at vertical offset dy; negative when the row misses.
double superellipse_half_width(double dy, double a, double b, double n, bool strict) {
  if (a <= 0.0 || b <= 0.0) return -1.0;
  const double v = std::abs(dy) / b;
  if (strict ? v >= 1.0 : v > 1.0) return -1.0;
  return a * std::pow(1.0 - std::pow(v, n), 1.0 / n);
}

}  // namespace

FrameShape FrameShape::from(double cx, double cy, double reach, const GlassesParams& g) {
  FrameShape s;
  s.cx = cx;
  s.cy = cy;
  s.reach = reach;
  s.a = g.half_width * reach;
  s.b = g.half_height * reach;
  s.thickness = g.thickness * reach;
  s.exponent = g.squareness;
  s.rim_dy = g.vertical_offset * reach;
  s.gap = kRimGap * reach;
  return s;
}

double FrameShape::rim_x(int side) const { return cx + side * (gap / 2.0 + a); }

FrameShape::Row FrameShape::row(double y) const {
  Row r;
  r.visible = visible();
  if (!r.visible) return r;
  const double half_t = thickness / 2.0;
  const double dy = y - rim_y();
  r.left_x = rim_x(-1);
  r.right_x = rim_x(1);
  r.hole_half = superellipse_half_width(dy, a - half_t, b - half_t, exponent, true);
  r.outer_half = superellipse_half_width(dy, a + half_t, b + half_t, exponent, false);
  r.bridge = std::abs(dy) <= half_t;
  r.arms = std::abs(y - cy) <= half_t;
  r.arm_lo = cx - reach;
  r.arm_hi = cx + reach;
  return r;
}

bool FrameShape::Row::in_hole(double x) const {
  return visible && hole_half >= 0.0 && (std::abs(x - left_x) < hole_half || std::abs(x - right_x) < hole_half);
}

bool FrameShape::Row::in_frame(double x) const {
  if (!visible || in_hole(x)) return false;
  if (outer_half >= 0.0 && (std::abs(x - left_x) <= outer_half || std::abs(x - right_x) <= outer_half)) return true;
  if (bridge && x >= left_x && x <= right_x) return true;
  return arms && ((x >= arm_lo && x <= left_x) || (x >= right_x && x <= arm_hi));
}

bool FrameShape::in_hole(double x, double y) const { return row(y).in_hole(x); }
bool FrameShape::in_frame(double x, double y) const { return row(y).in_frame(x); }

std::array<int, 4> FrameShape::pixel_bounds(int height, int width) const {
  const double half_t = thickness / 2.0;
  const double top = std::min(cy - half_t, rim_y() - b - half_t);
  const double bottom = std::max(cy + half_t, rim_y() + b + half_t);
  const double left = std::min(cx - reach, rim_x(-1) - a - half_t);
  const double right = std::max(cx + reach, rim_x(1) + a + half_t);
  return {std::clamp(static_cast<int>(std::floor(top)) - 1, 0, height - 1),
          std::clamp(static_cast<int>(std::ceil(bottom)) + 1, 0, height - 1),
          std::clamp(static_cast<int>(std::floor(left)) - 1, 0, width - 1),
          std::clamp(static_cast<int>(std::ceil(right)) + 1, 0, width - 1)};
}

double exponent_from_fullness(double k) { return -std::numbers::ln2 / std::log(k); }
double fullness_from_exponent(double n) { return std::exp(-std::numbers::ln2 / n); }

bool glasses_visible(const GlassesParams& g, double rx) { return g.presence > 0.5 && g.thickness * rx > 1e-9; }

namespace {

enum class Base : std::uint8_t { Background, Skin, Eye, Mouth };

struct FaceShader {
  const FaceParams& f;

  Base base(double x, double y) const {
    if (!inside_ellipse(x - f.cx, y - f.cy, f.rx, f.ry)) return Base::Background;
    const double er = f.eye_radius * f.rx;
    for (int side = -1; side <= 1; side += 2) {
      const double dx = x - (f.cx + side * kEyeSpacing * f.rx);
      const double dy = y - f.cy;
      if (dx * dx + dy * dy <= er * er) return Base::Eye;
    }
    if (inside_ellipse(x - f.cx, y - (f.cy + kMouthDrop * f.ry), 0.28 * f.rx, 0.07 * f.ry)) return Base::Mouth;
    return Base::Skin;
  }

  std::array<double, 3> color(Base b) const {
    switch (b) {
      case Base::Background: return kBackground;
      case Base::Eye: return kEyeColor;
      case Base::Mouth: return kMouthColor;
      default: return f.skin;
    }
  }
};

std::array<double, 3> tinted(const std::array<double, 3>& c, const GlassesParams& g) {
  std::array<double, 3> out{};
  for (int k = 0; k < 3; ++k) out[k] = g.lens_alpha * g.lens[k] + (1.0 - g.lens_alpha) * c[k];
  return out;
}

}  // namespace

FaceImage render(const ToyParams& params, int resolution, bool antialias) {
  FaceImage img(resolution, resolution, to_rgb8(kBackground));
  const FaceShader face{params.face};
  const auto& g = params.glasses;
  const bool glasses = glasses_visible(g, params.face.rx);
  const auto shape = FrameShape::from(params.face.cx, params.face.cy, params.face.rx, g);
  const auto box = shape.pixel_bounds(resolution, resolution);
  const bool tint = g.lens_alpha > 0.0;

  if (!antialias) {
    std::array<Rgb8, 4> plain{}, through_lens{};
    for (int k = 0; k < 4; ++k) {
      plain[k] = to_rgb8(face.color(static_cast<Base>(k)));
      through_lens[k] = to_rgb8(tinted(face.color(static_cast<Base>(k)), g));
    }
    const Rgb8 frame = to_rgb8(g.frame);
    const auto& f = params.face;
    for (int r = 0; r < resolution; ++r) {
      const double y = r + 0.5;
      const bool row_has_glasses = glasses && r >= box[0] && r <= box[1];
      const auto spans = row_has_glasses ? shape.row(y) : FrameShape::Row{};
      // Columns farther than a pixel beyond the oval's chord are background for certain.
      const double v = (y - f.cy) / f.ry;
      int c0 = resolution, c1 = -1;
      if (std::abs(v) < 1.0 + 1.0 / f.ry) {
        const double hx = f.rx * std::sqrt(std::max(0.0, 1.0 - v * v));
        c0 = std::max(0, static_cast<int>(std::floor(f.cx - hx)) - 1);
        c1 = std::min(resolution - 1, static_cast<int>(std::ceil(f.cx + hx)) + 1);
      }
      if (row_has_glasses) {
        c0 = std::min(c0, box[2]);
        c1 = std::max(c1, box[3]);
      }
      for (int c = c0; c <= c1; ++c) {
        const double x = c + 0.5;
        const auto b = static_cast<int>(face.base(x, y));
        if (row_has_glasses && c >= box[2] && c <= box[3]) {
          if (spans.in_frame(x)) {
            img.set(r, c, frame);
            continue;
          }
          if (tint && spans.in_hole(x)) {
            img.set(r, c, through_lens[b]);
            continue;
          }
        }
        if (b != 0) img.set(r, c, plain[b]);
      }
    }
    return img;
  }

  constexpr int kSub = 4;
  for (int r = 0; r < resolution; ++r) {
    for (int c = 0; c < resolution; ++c) {
      std::array<double, 3> acc{};
      for (int sy = 0; sy < kSub; ++sy) {
        const double y = r + (sy + 0.5) / kSub;
        const auto spans = glasses ? shape.row(y) : FrameShape::Row{};
        for (int sx = 0; sx < kSub; ++sx) {
          const double x = c + (sx + 0.5) / kSub;
          auto col = face.color(face.base(x, y));
          if (spans.in_frame(x)) col = g.frame;
          else if (tint && spans.in_hole(x)) col = tinted(col, g);
          for (int k = 0; k < 3; ++k) acc[k] += col[k];
        }
      }
      for (auto& v : acc) v /= kSub * kSub;
      img.set(r, c, to_rgb8(acc));
    }
  }
  return img;
}

SegmentationMap render_labels(const ToyParams& params, int resolution) {
  SegmentationMap labels(resolution, resolution, Label::Background);
  const auto& f = params.face;
  const auto shape = FrameShape::from(f.cx, f.cy, f.rx, params.glasses);
  const bool glasses = glasses_visible(params.glasses, f.rx);
  for (int r = 0; r < resolution; ++r) {
    const double y = r + 0.5;
    const auto spans = glasses ? shape.row(y) : FrameShape::Row{};
    for (int c = 0; c < resolution; ++c) {
      const double x = c + 0.5;
      if (spans.in_frame(x)) {
        labels(r, c) = Label::Frames;
      } else if (spans.in_hole(x)) {
        labels(r, c) = Label::Lenses;
      } else if (inside_ellipse(x - f.cx, y - f.cy, f.rx, f.ry)) {
        labels(r, c) = Label::Skin;
      }
    }
  }
  return labels;
}

double superellipse_area_factor(double n) {
  const double g = std::tgamma(1.0 + 1.0 / n);
  return 4.0 * g * g / std::tgamma(1.0 + 2.0 / n);
}

double superellipse_second_moment_factor(double n) {
  return (4.0 / n) * std::tgamma(3.0 / n) * std::tgamma(1.0 + 1.0 / n) / std::tgamma(3.0 / n + 1.0 + 1.0 / n);
}

// ---------------------------------------------------------------------------
// Image analysis

namespace {

std::uint32_t pack(Rgb8 c) { return (std::uint32_t{c[0]} << 16) | (std::uint32_t{c[1]} << 8) | c[2]; }
Rgb8 unpack(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
}
std::array<double, 3> unit(Rgb8 c) { return {c[0] / 255.0, c[1] / 255.0, c[2] / 255.0}; }

template <typename Map>
std::optional<std::uint32_t> mode_of(const Map& counts) {
  std::optional<std::uint32_t> best;
  int best_count = 0;
  for (const auto& [color, n] : counts) {
    if (n > best_count) {
      best_count = n;
      best = color;
    }
  }
  return best;
}

FaceFit fit_face(const FaceImage& img) {
  const Rgb8 bg = to_rgb8(kBackground);
  const Rgb8 mouth = to_rgb8(kMouthColor);
  const int h = img.height();
  const int w = img.width();
  std::vector<int> left(h, -1), right(h, -1);
  int top = -1, bottom = -1;
  for (int r = 0; r < h; ++r) {
    int c = 0;
    while (c < w && img.at(r, c) == bg) ++c;
    if (c == w) continue;
    left[r] = c;
    int e = w - 1;
    while (img.at(r, e) == bg) --e;
    right[r] = e;
    if (top < 0) top = r;
    bottom = r;
  }
  if (top < 0 || bottom - top < 16) fail(ErrorCode::FitDiverged, "no face oval found in image");

  const double cy0 = (top + bottom + 1) / 2.0;
  const double ry0 = (bottom - top + 1) / 2.0;
  Eigen::Matrix3d normal = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  double mid_sum = 0.0;
  int rows = 0;
  std::map<std::uint32_t, int> skin_votes;
  for (int r = top; r <= bottom; ++r) {
    const double y = r + 0.5 - cy0;
    if (left[r] < 0 || std::abs(y) <= 0.6 * ry0) continue;
    const double width = right[r] - left[r] + 1;
    const Eigen::Vector3d basis(1.0, y, y * y);
    normal += basis * basis.transpose();
    rhs += basis * (width * width / 4.0);
    mid_sum += (left[r] + right[r] + 1) / 2.0;
    ++rows;
    const Rgb8 mid = img.at(r, (left[r] + right[r]) / 2);
    if (mid != mouth) ++skin_votes[pack(mid)];
  }
  if (rows < 6) fail(ErrorCode::FitDiverged, "face oval too small to fit");
  const Eigen::Vector3d coef = normal.ldlt().solve(rhs);
  const double k = -coef[2];
  if (!(k > 0.0)) fail(ErrorCode::FitDiverged, "face rows do not form an oval");
  const double offset = coef[1] / (2.0 * k);
  const double rx2 = coef[0] + k * offset * offset;
  if (!(rx2 > 16.0)) fail(ErrorCode::FitDiverged, "face oval degenerate");

  FaceFit f;
  f.cx = mid_sum / rows;
  f.cy = cy0 + offset;
  f.rx = std::sqrt(rx2);
  f.ry = std::sqrt(rx2 / k);
  const auto skin = mode_of(skin_votes);
  if (!skin) fail(ErrorCode::FitDiverged, "no skin samples");
  f.skin = unpack(*skin);
  if (!std::isfinite(f.rx) || !std::isfinite(f.ry) || f.rx > w || f.ry > h) {
    fail(ErrorCode::FitDiverged, "face oval fit out of bounds");
  }
  return f;
}

struct Roi {
  int r0, r1, c0, c1;
  int height() const { return r1 - r0 + 1; }
  int width() const { return c1 - c0 + 1; }
};

Roi glasses_roi(const FaceFit& f, int h, int w) {
  return {std::clamp(static_cast<int>(std::floor(f.cy - 0.62 * f.ry)), 0, h - 1),
          std::clamp(static_cast<int>(std::ceil(f.cy + 0.62 * f.ry)), 0, h - 1),
          std::clamp(static_cast<int>(std::floor(f.cx - 1.2 * f.rx)), 0, w - 1),
          std::clamp(static_cast<int>(std::ceil(f.cx + 1.2 * f.rx)), 0, w - 1)};
}

// Holes of the local frame mask, split into the largest left and right components.
void find_lens_holes(const Mask& local_frames, const Roi& roi, double cx, ImageAnalysis& out, int h, int w) {
  const Mask holes = morph::enclosed_holes(local_frames);
  Plane<int> labels(holes.height(), holes.width(), -1);
  struct Component {
    int size = 0;
    double sum_x = 0;
  };
  std::vector<Component> comps;
  std::vector<std::pair<int, int>> queue;
  for (int r = 0; r < holes.height(); ++r) {
    for (int c = 0; c < holes.width(); ++c) {
      if (!holes(r, c) || labels(r, c) >= 0) continue;
      const int id = static_cast<int>(comps.size());
      comps.emplace_back();
      labels(r, c) = id;
      queue.emplace_back(r, c);
      while (!queue.empty()) {
        auto [rr, cc] = queue.back();
        queue.pop_back();
        comps[id].size += 1;
        comps[id].sum_x += cc + roi.c0 + 0.5;
        constexpr int kDr[4] = {-1, 1, 0, 0};
        constexpr int kDc[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const int nr = rr + kDr[k];
          const int nc = cc + kDc[k];
          if (holes.contains(nr, nc) && holes(nr, nc) && labels(nr, nc) < 0) {
            labels(nr, nc) = id;
            queue.emplace_back(nr, nc);
          }
        }
      }
    }
  }
  std::array<int, 2> best{-1, -1};
  for (int id = 0; id < static_cast<int>(comps.size()); ++id) {
    if (comps[id].size < 3) continue;
    const int side = (comps[id].sum_x / comps[id].size) < cx ? 0 : 1;
    if (best[side] < 0 || comps[id].size > comps[best[side]].size) best[side] = id;
  }
  for (int side = 0; side < 2; ++side) {
    out.holes[side] = Mask(h, w, 0);
    out.hole_found[side] = best[side] >= 0;
    if (best[side] < 0) continue;
    for (int r = 0; r < labels.height(); ++r) {
      for (int c = 0; c < labels.width(); ++c) {
        if (labels(r, c) == best[side]) out.holes[side](r + roi.r0, c + roi.c0) = 1;
      }
    }
  }
}


struct TintEstimate {
  double alpha = 0.0;
  std::array<double, 3> lens{};
};

// Posterior mean of (alpha, lens) under a uniform prior, given that every observed color is
// the rounded blend of a known base color. Empty when no grid alpha is consistent.
std::optional<TintEstimate> tint_posterior_mean(const std::vector<std::pair<Rgb8, std::array<double, 3>>>& seen,
                                                Rgb8 skin_observed) {
  constexpr int kSteps = 4000;
  constexpr double kHalf = 0.5 / 255.0 + 1e-9;
  double total = 0.0, alpha_sum = 0.0;
  std::array<double, 3> lens_sum{};
  for (int i = 1; i <= kSteps; ++i) {
    const double a = ranges::kLensAlpha.lo + (ranges::kLensAlpha.hi - ranges::kLensAlpha.lo) * i / kSteps;
    double weight = 1.0;
    std::array<double, 3> mid{};
    for (int k = 0; k < 3 && weight > 0.0; ++k) {
      double lo = ranges::kLensColor.lo, hi = ranges::kLensColor.hi;
      for (const auto& [px, base] : seen) {
        const double p = px[k] / 255.0;
        // The skin base is itself a rounded observation.
        const bool skin = base[k] == skin_observed[k] / 255.0;
        const double b_lo = skin ? base[k] - kHalf : base[k];
        const double b_hi = skin ? base[k] + kHalf : base[k];
        lo = std::max(lo, (p - kHalf - (1.0 - a) * b_hi) / a);
        hi = std::min(hi, (p + kHalf - (1.0 - a) * b_lo) / a);
      }
      weight *= std::max(0.0, hi - lo);
      mid[k] = 0.5 * (lo + hi);
    }
    if (weight <= 0.0) continue;
    total += weight;
    alpha_sum += weight * a;
    for (int k = 0; k < 3; ++k) lens_sum[k] += weight * mid[k];
  }
  if (total <= 0.0) return std::nullopt;
  TintEstimate t;
  t.alpha = alpha_sum / total;
  for (int k = 0; k < 3; ++k) t.lens[k] = lens_sum[k] / total;
  return t;
}

}  // namespace

ImageAnalysis ToyBackend::analyze(const FaceImage& image) const {
  check_image(image);
  ImageAnalysis out;
  out.face = fit_face(image);
  const auto& f = out.face;
  const int h = image.height();
  const int w = image.width();
  out.frames = Mask(h, w, 0);
  out.holes = {Mask(h, w, 0), Mask(h, w, 0)};

  const Rgb8 bg = to_rgb8(kBackground);
  const Rgb8 eye = to_rgb8(kEyeColor);
  const Rgb8 mouth = to_rgb8(kMouthColor);
  const Roi roi = glasses_roi(f, h, w);

  Mask candidate(h, w, 0);
  std::size_t candidates = 0;
  std::map<std::uint32_t, int> arm_votes, all_votes;
  for (int r = roi.r0; r <= roi.r1; ++r) {
    const bool arm_row = std::abs(r + 0.5 - f.cy) <= 0.2 * f.rx;
    for (int c = roi.c0; c <= roi.c1; ++c) {
      const Rgb8 px = image.at(r, c);
      if (px == bg || px == f.skin || px == eye || px == mouth) continue;
      candidate(r, c) = 1;
      ++candidates;
      ++all_votes[pack(px)];
      const double x = c + 0.5;
      if (arm_row && (std::abs(x - (f.cx - f.rx)) <= 0.12 * f.rx || std::abs(x - (f.cx + f.rx)) <= 0.12 * f.rx)) {
        ++arm_votes[pack(px)];
      }
    }
  }
  if (candidates < 6) return out;
  const auto frame_color = arm_votes.empty() ? mode_of(all_votes) : mode_of(arm_votes);
  out.frame_color = unpack(*frame_color);

  Mask local(roi.height(), roi.width(), 0);
  std::size_t frame_pixels = 0;
  for (int r = roi.r0; r <= roi.r1; ++r) {
    for (int c = roi.c0; c <= roi.c1; ++c) {
      if (candidate(r, c) && image.at(r, c) == out.frame_color) {
        out.frames(r, c) = 1;
        local(r - roi.r0, c - roi.c0) = 1;
        ++frame_pixels;
      }
    }
  }
  if (frame_pixels < 6) {
    out.frames = Mask(h, w, 0);
    return out;
  }
  out.has_glasses = true;
  find_lens_holes(local, roi, f.cx, out, h, w);
  if (!out.hole_found[0] || !out.hole_found[1]) {
    ImageAnalysis closed = out;
    find_lens_holes(morph::erode(morph::dilate(local, 1), 1), roi, f.cx, closed, h, w);
    for (int side = 0; side < 2; ++side) {
      if (!out.hole_found[side] && closed.hole_found[side]) {
        out.hole_found[side] = true;
        out.holes[side] = closed.holes[side];
        for (std::size_t i = 0; i < out.holes[side].size(); ++i) {
          if (out.frames.data()[i]) out.holes[side].data()[i] = 0;
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Glasses parameter refinement

namespace {

// theta = (half_width, half_height, thickness, exponent, vertical_offset, center shift).
// The first five are in units of rx; the shift is in pixels and lets the frames settle
// on their own horizontal center rather than the slightly noisier oval fit.
using Theta = Eigen::Matrix<double, 6, 1>;

constexpr double kFar = 1e3;

// Approximate signed distance to a superellipse boundary (negative inside), with
// derivatives in (a, b, exponent, center x, center y). rho = f^(1/n) grows linearly
// along rays, so (rho - 1) / |grad rho| stays accurate a few pixels off the curve.
double superellipse_distance(double x, double y, double ux, double uy, double a, double b, double n,
                             double cutoff, std::array<double, 5>& parts) {
  parts.fill(0.0);
  if (a <= 1e-6 || b <= 1e-6) return kFar;
  const double dx = x - ux;
  const double dy = y - uy;
  if (std::abs(dx) > a + cutoff || std::abs(dy) > b + cutoff) return kFar;
  // Single precision transcendentals: ample for sub-pixel distances and much cheaper.
  const double u = std::max(std::abs(dx) / a, 1e-9);
  const double v = std::max(std::abs(dy) / b, 1e-9);
  const double lu = std::log(static_cast<float>(u));
  const double lv = std::log(static_cast<float>(v));
  const double un = std::exp(static_cast<float>(n * lu));
  const double vn = std::exp(static_cast<float>(n * lv));
  const double f = un + vn;
  const double lf = std::log(static_cast<float>(f));
  const double rho = std::exp(static_cast<float>(lf / n));
  const double k = rho / f;
  const double gx = k * (un / u) / a * (dx < 0 ? -1.0 : 1.0);
  const double gy = k * (vn / v) / b * (dy < 0 ? -1.0 : 1.0);
  const double g = std::sqrt(gx * gx + gy * gy);
  if (g < 1e-12) return f < 1.0 ? -kFar : kFar;
  const double drho_dn = rho * (-lf / (n * n) + (un * lu + vn * lv) / (n * f));
  parts = {-k * un / a / g, -k * vn / b / g, drho_dn / g, -gx / g, -gy / g};
  return (rho - 1.0) / g;
}

struct BandPixel {
  double x, y;
  double observed;
  int ring;  // Chebyshev distance to the nearest observed edge pixel
};

struct FrameModel {
  double cx, cy, rx;

  // Signed distance to the frame region (negative inside) and its gradient.
  double distance(const BandPixel& p, const Theta& t, Theta& grad) const {
    const double hw = t[0], hh = t[1], th = t[2], n = t[3], voff = t[4];
    const double cx = this->cx + t[5];
    const int side = p.x < cx ? -1 : 1;
    const double ux = cx + side * (kRimGap / 2.0 + hw) * rx;
    const double uy = cy + voff * rx;
    const double half_t = th * rx / 2.0;
    const double dux = side * rx;
    constexpr double kCutoff = 4.0;

    std::array<double, 5> po{}, ph{};
    const double d_outer =
        superellipse_distance(p.x, p.y, ux, uy, hw * rx + half_t, hh * rx + half_t, n, kCutoff, po);

    // Bridge between the rim centers, arm from the rim center to the temple.
    const double left = cx - (kRimGap / 2.0 + hw) * rx;
    const double right = cx + (kRimGap / 2.0 + hw) * rx;
    const std::array<double, 4> bridge{left - p.x, p.x - right, uy - half_t - p.y, p.y - uy - half_t};
    const std::array<double, 4> arm{side < 0 ? cx - rx - p.x : right - p.x, side < 0 ? p.x - left : p.x - cx - rx,
                                    cy - half_t - p.y, p.y - cy - half_t};
    const auto bi = std::max_element(bridge.begin(), bridge.end()) - bridge.begin();
    const auto ai = std::max_element(arm.begin(), arm.end()) - arm.begin();

    double d = d_outer;
    int which = 0;
    if (bridge[bi] < d) {
      d = bridge[bi];
      which = 1;
    }
    if (arm[ai] < d) {
      d = arm[ai];
      which = 2;
    }
    grad.setZero();
    // The hole lies inside the outer rim, so it can only matter where the union is entered.
    const double d_hole =
        d < 0.0 ? superellipse_distance(p.x, p.y, ux, uy, hw * rx - half_t, hh * rx - half_t, n, kCutoff, ph) : kFar;
    if (-d_hole > d) {
      grad << -(ph[0] * rx + ph[3] * dux), -(ph[1] * rx), (ph[0] + ph[1]) * (rx / 2.0), -ph[2], -(ph[4] * rx),
          -ph[3];
      return -d_hole;
    }
    if (which == 0) {
      grad << po[0] * rx + po[3] * dux, po[1] * rx, (po[0] + po[1]) * (rx / 2.0), po[2], po[4] * rx, po[3];
    } else if (which == 1) {
      switch (bi) {
        case 0: grad[0] = -rx; grad[5] = 1.0; break;
        case 1: grad[0] = -rx; grad[5] = -1.0; break;
        case 2: grad[2] = -rx / 2.0; grad[4] = rx; break;
        default: grad[2] = -rx / 2.0; grad[4] = -rx; break;
      }
    } else {
      switch (ai) {
        case 0: grad[0] = side < 0 ? 0.0 : rx; grad[5] = 1.0; break;
        case 1: grad[0] = side < 0 ? rx : 0.0; grad[5] = -1.0; break;
        default: grad[2] = -rx / 2.0; break;
      }
    }
    return d;
  }
};

// Squared difference between a linear-ramp coverage of the model and the observed mask.
struct Objective {
  const FrameModel& model;
  const std::vector<BandPixel>& band;
  double ramp;
  int max_ring;

  double residual(const BandPixel& p, const Theta& t, Theta& g) const {
    const double c = 0.5 - model.distance(p, t, g) / ramp;
    if (c <= 0.0 || c >= 1.0) {
      g.setZero();
      return std::clamp(c, 0.0, 1.0) - p.observed;
    }
    g *= -1.0 / ramp;
    return c - p.observed;
  }

  double cost(const Theta& t) const {
    double s = 0.0;
    Theta g;
    for (const auto& p : band) {
      if (p.ring > max_ring) continue;
      const double r = residual(p, t, g);
      s += r * r;
    }
    return s;
  }
};

Theta clamp_theta(Theta t, double rx) {
  const double min_len = 0.6 / rx;
  t[3] = std::clamp(t[3], 1.3, 12.0);
  t[4] = std::clamp(t[4], -0.6, 0.6);
  t[2] = std::clamp(t[2], min_len, 0.6);
  t[0] = std::clamp(t[0], t[2] / 2.0 + min_len, 0.7);
  t[1] = std::clamp(t[1], t[2] / 2.0 + min_len, 0.7);
  t[5] = std::clamp(t[5], -2.0, 2.0);
  return t;
}

Theta levenberg_marquardt(const Objective& obj, Theta theta, int iterations, double rx) {
  double mu = 1e-3;
  for (int it = 0; it < iterations; ++it) {
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Theta jtr = Theta::Zero();
    double cost = 0.0;
    Theta g;
    for (const auto& p : obj.band) {
      if (p.ring > obj.max_ring) continue;
      const double r = obj.residual(p, theta, g);
      if (r == 0.0 && g.isZero()) continue;
      cost += r * r;
      jtj.selfadjointView<Eigen::Lower>().rankUpdate(g);
      jtr += g * r;
    }
    if (cost == 0.0) break;
    jtj = jtj.selfadjointView<Eigen::Lower>();
    bool accepted = false;
    for (int attempt = 0; attempt < 6 && !accepted; ++attempt) {
      Eigen::Matrix<double, 6, 6> damped = jtj;
      for (int i = 0; i < 6; ++i) damped(i, i) += mu * jtj(i, i) + 1e-12;
      const Theta next = clamp_theta(theta + damped.ldlt().solve(-jtr), rx);
      if (obj.cost(next) < cost) {
        const double change = (next - theta).cwiseAbs().maxCoeff();
        theta = next;
        mu = std::max(mu / 3.0, 1e-7);
        accepted = true;
        if (change < 1e-5) return theta;
      } else {
        mu *= 4.0;
      }
    }
    if (!accepted) break;
  }
  return theta;
}

// Parameters reproducing the observed mask form, to first order, the polytope cut out by
// one side constraint per edge pixel, intersected with the generator's parameter box.
// The polytope is linearized at theta and relaxed uniformly if theta still misplaces
// pixels by up to max_violation px. With samples == 0 the analytic center is returned;
// otherwise the centroid, estimated by hit-and-run in the Dikin metric of that center.
Theta center_in_feasible_set(const FrameModel& model, const std::vector<BandPixel>& band, Theta theta,
                             double max_violation, int samples) {
  Theta lo, hi;
  lo << ranges::kHalfWidth.lo, ranges::kHalfHeight.lo, ranges::kThickness.lo,
      exponent_from_fullness(ranges::kSquareness.lo), ranges::kVerticalOffset.lo, -2.0;
  hi << ranges::kHalfWidth.hi, ranges::kHalfHeight.hi, ranges::kThickness.hi,
      exponent_from_fullness(ranges::kSquareness.hi), ranges::kVerticalOffset.hi, 2.0;
  theta = theta.cwiseMax(lo + Theta::Constant(1e-6)).cwiseMin(hi - Theta::Constant(1e-6));

  std::vector<double> slack_list;
  std::vector<Theta> rows;
  double worst = 0.0;
  Theta g;
  for (const auto& p : band) {
    if (p.ring > 0) continue;
    const double d = model.distance(p, theta, g);
    if (std::abs(d) > 2.0) continue;
    const double sign = p.observed > 0.5 ? -1.0 : 1.0;
    slack_list.push_back(sign * d);
    rows.push_back(sign * g);
    worst = std::min(worst, sign * d);
  }
  if (worst < -max_violation || rows.size() < 12) return theta;
  for (auto& v : slack_list) v += 1e-3 - worst;
  for (int i = 0; i < 6; ++i) {
    rows.push_back(Theta::Unit(i));
    slack_list.push_back(theta[i] - lo[i]);
    rows.push_back(-Theta::Unit(i));
    slack_list.push_back(hi[i] - theta[i]);
  }

  // Row i of a with slack s_i stands for s_i + a_i . delta >= 0.
  using Rows = Eigen::Matrix<double, Eigen::Dynamic, 6>;
  using Mat6 = Eigen::Matrix<double, 6, 6>;
  Eigen::Index m = static_cast<Eigen::Index>(rows.size());
  Rows a(m, 6);
  Eigen::VectorXd slack(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    a.row(i) = rows[i].transpose();
    slack[i] = slack_list[i];
  }
  auto times = [&](const Theta& x, Eigen::VectorXd& out) {
    out = a.col(0) * x[0];
    for (int j = 1; j < 6; ++j) out += a.col(j) * x[j];
  };
  Eigen::VectorXd r = slack, inv(m), as(m), trial(m);
  Rows scaled(m, 6);
  auto log_barrier = [](const Eigen::VectorXd& v) {
    if (v.minCoeff() <= 0.0) return std::numeric_limits<double>::infinity();
    return -v.array().log().sum();
  };
  auto hessian = [&]() {
    inv = r.cwiseInverse();
    for (int j = 0; j < 6; ++j) scaled.col(j) = a.col(j).cwiseProduct(inv);
    Mat6 h;
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j <= i; ++j) h(i, j) = h(j, i) = scaled.col(i).dot(scaled.col(j));
      h(i, i) += 1e-9;
    }
    return h;
  };

  Theta delta = Theta::Zero();
  double f = log_barrier(r);
  for (int it = 0; it < 20; ++it) {
    const Mat6 h = hessian();
    Theta grad;
    for (int j = 0; j < 6; ++j) grad[j] = -scaled.col(j).sum();
    const Theta step = -h.ldlt().solve(grad);
    const double decrement = -grad.dot(step);
    if (decrement < 1e-8) break;
    times(step, as);
    double t = 1.0, next = 0.0;
    for (; t > 1e-4; t *= 0.5) {
      trial = r + t * as;
      next = log_barrier(trial);
      if (next <= f - 0.25 * t * decrement) break;
    }
    if (t <= 1e-4) break;
    r.swap(trial);
    f = next;
    delta += t * step;
  }
  if (samples <= 0) return clamp_theta(theta + delta, model.rx);

  const Eigen::LLT<Mat6> llt(hessian());
  // Rows far outside the Dikin ellipsoid never bound a chord in practice.
  constexpr double kReach = 20.0;
  const Rows w = llt.matrixL().solve(a.transpose()).transpose();
  Eigen::Index kept = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (r[i] > kReach * w.row(i).norm()) continue;
    a.row(kept) = a.row(i);
    r[kept] = r[i];
    ++kept;
  }
  m = kept;
  a.conservativeResize(m, 6);
  r.conservativeResize(m);

  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform;
  constexpr int kBurnIn = 50;
  Theta x = delta, sum = Theta::Zero();
  Eigen::VectorXd au(m);
  for (int s = 0; s < kBurnIn + samples; ++s) {
    Theta z;
    for (int i = 0; i < 6; ++i) z[i] = normal(rng);
    const Theta u = llt.matrixU().solve(z);
    times(u, au);
    // Row i bounds the chord at -r_i / au_i: from below when au_i > 0, from above when
    // au_i < 0. Branch-free so the compiler can vectorize the reduction.
    double lo_t = -1e9, hi_t = 1e9;
    {
      const double* pv = au.data();
      const double* pr = r.data();
      for (Eigen::Index i = 0; i < m; ++i) {
        const double v = pv[i];
        const double t = -pr[i] / (v == 0.0 ? 1.0 : v);
        const double lo_c = v > 0.0 ? t : -1e9;
        const double hi_c = v < 0.0 ? t : 1e9;
        lo_t = lo_c > lo_t ? lo_c : lo_t;
        hi_t = hi_c < hi_t ? hi_c : hi_t;
      }
    }
    const bool open = hi_t > lo_t;
    // The chord midpoint is the expected next point; averaging it lowers the variance.
    if (s >= kBurnIn) sum += x + (open ? 0.5 * (lo_t + hi_t) : 0.0) * u;
    if (open) {
      const double step = lo_t + (hi_t - lo_t) * uniform(rng);
      x += step * u;
      r += step * au;
    }
  }
  return clamp_theta(theta + sum / samples, model.rx);
}

// Soft fit to pull the moment-based start onto the edges, then two linearized centerings.
Theta refine(const std::vector<BandPixel>& band, const FrameModel& model, Theta theta, int iterations,
             int samples) {
  theta = clamp_theta(theta, model.rx);
  theta = levenberg_marquardt({model, band, 1.0, 0}, theta, iterations, model.rx);
  constexpr double kMaxViolation = 2.0;
  theta = center_in_feasible_set(model, band, theta, kMaxViolation, 0);
  return center_in_feasible_set(model, band, theta, kMaxViolation, samples);
}

struct HoleMoments {
  double area = 0, mx = 0, my = 0, ixx = 0, iyy = 0;
};

bool row_empty(const Mask& m, int r) {
  return std::memchr(&m(r, 0), 1, static_cast<std::size_t>(m.width())) == nullptr;
}

HoleMoments moments(const Mask& m) {
  HoleMoments out;
  double sx = 0, sy = 0, sxx = 0, syy = 0;
  for (int r = 0; r < m.height(); ++r) {
    if (row_empty(m, r)) continue;
    for (int c = 0; c < m.width(); ++c) {
      if (!m(r, c)) continue;
      const double x = c + 0.5, y = r + 0.5;
      out.area += 1;
      sx += x;
      sy += y;
      sxx += x * x;
      syy += y * y;
    }
  }
  if (out.area == 0) return out;
  out.mx = sx / out.area;
  out.my = sy / out.area;
  out.ixx = sxx - out.area * out.mx * out.mx + out.area / 12.0;
  out.iyy = syy - out.area * out.my * out.my + out.area / 12.0;
  return out;
}

double exponent_from_moments(const HoleMoments& m) {
  const double q = std::sqrt(m.ixx * m.iyy) / (m.area * m.area);
  double lo = 2.0, hi = 12.0;
  auto qn = [](double n) {
    const double a = superellipse_area_factor(n);
    return superellipse_second_moment_factor(n) / (a * a);
  };
  if (q <= qn(lo)) return lo;
  if (q >= qn(hi)) return hi;
  for (int i = 0; i < 40; ++i) {
    const double mid = 0.5 * (lo + hi);
    (qn(mid) < q ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<BandPixel> boundary_band(const Mask& frames, const std::array<int, 4>& box) {
  std::vector<BandPixel> band;
  const int r0 = box[0], r1 = box[1], c0 = box[2], c1 = box[3];
  Mask edge(frames.height(), frames.width(), 0);
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const auto v = frames(r, c);
      const bool differs = (frames.contains(r - 1, c) && frames(r - 1, c) != v) ||
                           (frames.contains(r + 1, c) && frames(r + 1, c) != v) ||
                           (frames.contains(r, c - 1) && frames(r, c - 1) != v) ||
                           (frames.contains(r, c + 1) && frames(r, c + 1) != v);
      if (differs) edge(r, c) = 1;
    }
  }
  Plane<std::uint8_t> ring(frames.height(), frames.width(), 255);
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      if (!edge(r, c)) continue;
      for (int dr = -2; dr <= 2; ++dr) {
        for (int dc = -2; dc <= 2; ++dc) {
          if (!frames.contains(r + dr, c + dc)) continue;
          auto& v = ring(r + dr, c + dc);
          v = std::min<std::uint8_t>(v, static_cast<std::uint8_t>(std::max(std::abs(dr), std::abs(dc))));
        }
      }
    }
  }
  for (int r = std::max(0, r0 - 2); r <= std::min(frames.height() - 1, r1 + 2); ++r) {
    for (int c = std::max(0, c0 - 2); c <= std::min(frames.width() - 1, c1 + 2); ++c) {
      if (ring(r, c) <= 2) band.push_back({c + 0.5, r + 0.5, frames(r, c) ? 1.0 : 0.0, ring(r, c)});
    }
  }
  return band;
}

}  // namespace

ToyParams ToyBackend::fit_params(const FaceImage& image, const ImageAnalysis& an) const {
  const auto& f = an.face;
  ToyParams p;
  p.face.cx = f.cx;
  p.face.cy = f.cy;
  p.face.rx = f.rx;
  p.face.ry = f.ry;
  p.face.skin = unit(f.skin);
  // Canonical (coordinate 0) glasses for anything the image does not show.
  p.glasses.half_width = ranges::kHalfWidth.lo;
  p.glasses.half_height = ranges::kHalfHeight.lo;
  p.glasses.thickness = ranges::kThickness.lo;
  p.glasses.squareness = exponent_from_fullness(ranges::kSquareness.lo);
  p.glasses.vertical_offset = ranges::kVerticalOffset.lo;
  p.glasses.lens = {ranges::kLensColor.lo, ranges::kLensColor.lo, ranges::kLensColor.lo};
  p.glasses.lens_alpha = ranges::kLensAlpha.lo;
  p.glasses.frame = {ranges::kFrameColor.lo, ranges::kFrameColor.lo, ranges::kFrameColor.lo};

  const Rgb8 eye8 = to_rgb8(kEyeColor);
  std::optional<Rgb8> lens_eye;  // eye color as seen through tinted lenses

  if (an.has_glasses) {
    auto& g = p.glasses;
    g.presence = 1.0;
    g.frame = unit(an.frame_color);

    Theta theta;
    if (an.hole_found[0] && an.hole_found[1]) {
      const HoleMoments ml = moments(an.holes[0]);
      const HoleMoments mr = moments(an.holes[1]);
      const double n0 = 0.5 * (exponent_from_moments(ml) + exponent_from_moments(mr));
      const double ratio = superellipse_area_factor(n0) / superellipse_second_moment_factor(n0);
      const double ai = 0.5 * (std::sqrt(ml.ixx / ml.area * ratio) + std::sqrt(mr.ixx / mr.area * ratio));
      const double bi = 0.5 * (std::sqrt(ml.iyy / ml.area * ratio) + std::sqrt(mr.iyy / mr.area * ratio));
      const double hw = (mr.mx - ml.mx) / (2.0 * f.rx) - kRimGap / 2.0;
      const double voff = (0.5 * (ml.my + mr.my) - f.cy) / f.rx;
      const double t = std::max(2.0 * (hw - ai / f.rx), 1.0 / f.rx);
      theta << hw, bi / f.rx + t / 2.0, t, n0, voff, 0.5 * (ml.mx + mr.mx) - f.cx;
    } else {
      // Open rims: start from the frame pixels' extent on each side.
      double min_y = 1e9, max_y = -1e9, min_x = 1e9, max_x = -1e9;
      for (int r = 0; r < an.frames.height(); ++r) {
        for (int c = 0; c < an.frames.width(); ++c) {
          if (!an.frames(r, c)) continue;
          min_y = std::min(min_y, r + 0.5);
          max_y = std::max(max_y, r + 0.5);
          min_x = std::min(min_x, c + 0.5);
          max_x = std::max(max_x, c + 0.5);
        }
      }
      const double t = 0.08;
      const double hh = (max_y - min_y) / (2.0 * f.rx) - t / 2.0;
      theta << 0.3, std::max(hh, 0.1), t, 4.0, ((min_y + max_y) / 2.0 - f.cy) / f.rx, 0.0;
    }

    FrameModel model{f.cx, f.cy, f.rx};
    GlassesParams guess = g;
    guess.half_width = theta[0];
    guess.half_height = theta[1];
    guess.thickness = theta[2];
    guess.vertical_offset = theta[4];
    auto box = FrameShape::from(f.cx, f.cy, f.rx, guess).pixel_bounds(image.height(), image.width());
    box[0] = std::max(0, box[0] - 4);
    box[1] = std::min(image.height() - 1, box[1] + 4);
    box[2] = std::max(0, box[2] - 4);
    box[3] = std::min(image.width() - 1, box[3] + 4);
    const auto band = boundary_band(an.frames, box);
    theta = refine(band, model, theta, config_.refine_iterations, config_.centroid_samples);
    g.half_width = theta[0];
    g.half_height = theta[1];
    g.thickness = theta[2];
    g.squareness = theta[3];
    g.vertical_offset = theta[4];
    p.face.cx = f.cx + theta[5];

    // Lens tint: blended skin and blended eye colors inside the holes.
    std::map<std::uint32_t, int> votes;
    int clear_votes = 0, total = 0;
    for (int side = 0; side < 2; ++side) {
      const auto& hole = an.holes[side];
      for (int r = 0; r < hole.height(); ++r) {
        if (row_empty(hole, r)) continue;
        for (int c = 0; c < hole.width(); ++c) {
          if (!hole(r, c)) continue;
          const Rgb8 px = image.at(r, c);
          ++total;
          if (px == f.skin || px == eye8) ++clear_votes;
          else ++votes[pack(px)];
        }
      }
    }
    if (total > 0 && clear_votes * 2 < total && !votes.empty()) {
      const auto skin_seen = *mode_of(votes);
      votes.erase(skin_seen);
      const auto s = unit(f.skin);
      const auto e = unit(eye8);
      const auto ps = unit(unpack(skin_seen));
      std::optional<std::uint32_t> eye_seen;
      if (!votes.empty() && mode_of(votes) && votes[*mode_of(votes)] >= 3) eye_seen = *mode_of(votes);
      double keep = 0.0;  // 1 - alpha
      std::array<double, 3> lens{};
      if (eye_seen) {
        const auto pe = unit(unpack(*eye_seen));
        double num = 0, den = 0;
        for (int k = 0; k < 3; ++k) {
          num += (ps[k] - pe[k]) * (s[k] - e[k]);
          den += (s[k] - e[k]) * (s[k] - e[k]);
        }
        keep = std::clamp(num / den, 0.0, 1.0);
        lens_eye = unpack(*eye_seen);
      } else {
        double num = 0, den = 0;
        for (int k = 0; k < 3; ++k) {
          num += ps[k] * s[k];
          den += s[k] * s[k];
        }
        keep = std::clamp(num / den, 0.0, 1.0);
      }
      const double alpha = 1.0 - keep;
      if (alpha > 1e-6) {
        for (int k = 0; k < 3; ++k) lens[k] = (ps[k] - keep * s[k]) / alpha;
      }
      g.lens_alpha = alpha;
      g.lens = lens;
      std::vector<std::pair<Rgb8, std::array<double, 3>>> seen{{unpack(skin_seen), s}};
      if (eye_seen) seen.push_back({unpack(*eye_seen), e});
      if (const auto t = tint_posterior_mean(seen, f.skin)) {
        g.lens_alpha = t->alpha;
        g.lens = t->lens;
      }
    }
  }

  // Eye radius: the eye disk holds exactly the visible pixels nearest its center, so the
  // radius sits between the k-th and (k+1)-th visible distance for k eye-colored pixels.
  // Frame pixels, and lens pixels whose tinted eye color is unknown, are not visible.
  std::vector<double> dist;
  double eye_radius_sum = 0.0;
  int eye_sides = 0;
  int eye_pixels = 0;
  const double search = 0.14 * f.rx;
  const bool tinted_unknown = p.glasses.lens_alpha > 0.0 && !lens_eye;
  for (int e = -1; e <= 1; e += 2) {
    const double ex = p.face.cx + e * kEyeSpacing * f.rx;
    const int r0 = std::max(0, static_cast<int>(f.cy - search));
    const int r1 = std::min(image.height() - 1, static_cast<int>(f.cy + search));
    const int c0 = std::max(0, static_cast<int>(ex - search));
    const int c1 = std::min(image.width() - 1, static_cast<int>(ex + search));
    dist.clear();
    int count = 0;
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        if (an.has_glasses && an.frames(r, c)) continue;
        const bool in_lens = an.has_glasses && (an.holes[0](r, c) || an.holes[1](r, c));
        if (in_lens && tinted_unknown) continue;
        const Rgb8 px = image.at(r, c);
        if (px == eye8 || (lens_eye && px == *lens_eye)) ++count;
        dist.push_back(std::hypot(c + 0.5 - ex, r + 0.5 - f.cy));
      }
    }
    std::sort(dist.begin(), dist.end());
    if (count > 0 && static_cast<std::size_t>(count) < dist.size()) {
      eye_radius_sum += 0.5 * (dist[count - 1] + dist[count]);
      ++eye_sides;
    }
    eye_pixels += count;
  }
  p.face.eye_radius = eye_sides > 0 ? eye_radius_sum / eye_sides / f.rx
                                    : std::sqrt(eye_pixels / 2.0 / std::numbers::pi) / f.rx;
  return p;
}

// ---------------------------------------------------------------------------

ToyBackend::ToyBackend(ToyConfig config) : config_(std::move(config)) {
  config_.layout.validate(config_.layers * config_.channels);
}

BackendDims ToyBackend::dims() const {
  return {config_.layers, config_.channels, config_.resolution, config_.resolution};
}

std::string ToyBackend::fingerprint() const {
  std::ostringstream os;
  os << "toy-v1/L" << config_.layers << "xC" << config_.channels << "/R" << config_.resolution << "/layout";
  for (int i : config_.layout.all_indices()) os << '.' << i;
  if (config_.antialias) os << "/aa";
  return os.str();
}

FaceImage ToyBackend::generate(const LatentCode& latent) const {
  check_latent(latent);
  return render(decode(latent, config_), config_.resolution, config_.antialias);
}

namespace {

double image_mse(const FaceImage& a, const FaceImage& b) {
  std::uint64_t s = 0;
  const auto& x = a.bytes();
  const auto& y = b.bytes();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int d = int{x[i]} - int{y[i]};
    s += static_cast<std::uint64_t>(d * d);
  }
  return static_cast<double>(s) / (255.0 * 255.0 * static_cast<double>(x.size()));
}

}  // namespace

LatentCode ToyBackend::encode(const FaceImage& image) const {
  const ImageAnalysis an = analyze(image);
  const ToyParams params = fit_params(image, an);
  LatentCode latent = encode_params(params, config_);
  const double residual = image_mse(render(decode(latent, config_), config_.resolution), image);
  if (!(residual <= config_.fit_mse_threshold)) {
    fail(ErrorCode::FitDiverged, "re-render residual " + std::to_string(residual) + " exceeds threshold " +
                                     std::to_string(config_.fit_mse_threshold));
  }
  return latent;
}

SegmentationMap ToyBackend::parse(const FaceImage& image) const {
  const ImageAnalysis an = analyze(image);
  const Rgb8 bg = to_rgb8(kBackground);
  SegmentationMap labels(image.height(), image.width(), Label::Background);
  for (int r = 0; r < image.height(); ++r) {
    for (int c = 0; c < image.width(); ++c) {
      if (an.frames(r, c)) labels(r, c) = Label::Frames;
      else if (an.holes[0](r, c) || an.holes[1](r, c)) labels(r, c) = Label::Lenses;
      else if (image.at(r, c) != bg) labels(r, c) = Label::Skin;
    }
  }
  return labels;
}

LandmarkSet landmarks_for(const FaceFit& f, int height, int width) {
  LandmarkSet out;
  auto put = [&](int i, double x, double y) {
    out.points[i] = {std::clamp(x, 0.0, width - 1.0), std::clamp(y, 0.0, height - 1.0)};
  };
  // Jaw: left temple, around the chin, right temple.
  for (int k = 0; k <= 16; ++k) {
    const double phi = std::numbers::pi - k * std::numbers::pi / 16.0;
    put(k, f.cx + f.rx * std::cos(phi), f.cy + f.ry * std::sin(phi));
  }
  // Brows.
  for (int k = 0; k < 5; ++k) {
    const double s = 0.15 + 0.1125 * k;
    const double lift = 0.04 * std::sin(std::numbers::pi * k / 4.0);
    put(21 - k, f.cx - s * f.rx, f.cy - (0.22 + lift) * f.ry);
    put(22 + k, f.cx + s * f.rx, f.cy - (0.22 + lift) * f.ry);
  }
  // Nose bridge and base.
  for (int k = 0; k < 4; ++k) put(27 + k, f.cx, f.cy + (0.05 + 0.1 * k) * f.ry);
  for (int k = 0; k < 5; ++k) put(31 + k, f.cx + (k - 2) * 0.06 * f.rx, f.cy + 0.36 * f.ry);
  // Eyes: outer corner first for the left eye, inner corner first for the right.
  const double er = 0.07 * f.rx;
  const std::array<double, 6> angles{std::numbers::pi, 2 * std::numbers::pi / 3, std::numbers::pi / 3, 0.0, -std::numbers::pi / 3, -2 * std::numbers::pi / 3};
  for (int k = 0; k < 6; ++k) {
    put(36 + k, f.cx - kEyeSpacing * f.rx + er * std::cos(angles[k]), f.cy - er * std::sin(angles[k]));
    put(42 + k, f.cx + kEyeSpacing * f.rx + er * std::cos(angles[k]), f.cy - er * std::sin(angles[k]));
  }
  // Mouth outer (12) and inner (8) contours.
  const double my = f.cy + kMouthDrop * f.ry;
  for (int k = 0; k < 12; ++k) {
    const double phi = std::numbers::pi - k * 2 * std::numbers::pi / 12.0;
    put(48 + k, f.cx + 0.28 * f.rx * std::cos(phi), my - 0.07 * f.ry * std::sin(phi));
  }
  for (int k = 0; k < 8; ++k) {
    const double phi = std::numbers::pi - k * 2 * std::numbers::pi / 8.0;
    put(60 + k, f.cx + 0.2 * f.rx * std::cos(phi), my - 0.03 * f.ry * std::sin(phi));
  }
  return out;
}

LandmarkSet ToyBackend::landmarks(const FaceImage& image) const {
  check_image(image);
  return landmarks_for(fit_face(image), image.height(), image.width());
}

LatentCode ToyBackend::random_face(std::uint64_t seed, double margin) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(margin, 1.0 - margin);
  LatentCode out(config_.layers, config_.channels);
  const auto& l = config_.layout;
  for (int i : {l.center_x, l.center_y, l.radius_x, l.radius_y, l.skin[0], l.skin[1], l.skin[2], l.eye_radius}) {
    out.flat(i) = u(rng);
  }
  return out;
}

}  // namespace eyewear::toy
