#include "eyewear/edit.hpp"

#include "eyewear/error.hpp"
#include "eyewear/morphology.hpp"

#include <algorithm>
#include <cmath>

namespace eyewear {

BlendConfig BlendConfig::resolved(int width) const {
  BlendConfig out = *this;
  if (!(out.taper_sigma_outer > 0.0)) out.taper_sigma_outer = 0.01 * width;
  if (!(out.taper_sigma_inner > 0.0)) out.taper_sigma_inner = 0.005 * width;
  return out;
}

void BlendConfig::validate() const {
  if (!std::isfinite(taper_sigma_outer) || !std::isfinite(taper_sigma_inner)) {
    fail(ErrorCode::InvalidConfig, "blend sigmas must be finite");
  }
  if (mask_dilation < 0) fail(ErrorCode::InvalidConfig, "mask_dilation must be >= 0");
}

std::vector<double> EditConfig::grid() const {
  std::vector<double> g(grid_points);
  if (grid_points == 1) {
    g[0] = b_min;
    return g;
  }
  for (int i = 0; i < grid_points; ++i) g[i] = b_min + (b_max - b_min) * i / (grid_points - 1);
  return g;
}

void EditConfig::validate() const {
  if (!(target_area > 0.0 && target_area < 1.0)) fail(ErrorCode::InvalidConfig, "target_area must be in (0, 1)");
  if (!(failure_fraction >= 0.0)) fail(ErrorCode::InvalidConfig, "failure_fraction must be >= 0");
  if (grid_points < 1) fail(ErrorCode::InvalidConfig, "grid_points must be >= 1");
  if (!(b_min <= b_max)) fail(ErrorCode::InvalidConfig, "b_min must not exceed b_max");
  if (!(m_max_scale > 0.0)) fail(ErrorCode::InvalidConfig, "m_max_scale must be positive");
  blend.validate();
}

namespace {

const FlatVector& style_vector(const GlassesSubspace& sub, const std::string& style) {
  auto it = sub.style_inits.find(style);
  if (it == sub.style_inits.end()) fail(ErrorCode::UnknownStyle, "unknown style '" + style + "'");
  return it->second;
}

void check_axis(const GlassesSubspace& sub, int axis) {
  if (axis < 0 || axis >= sub.d_prime()) {
    fail(ErrorCode::AxisOutOfRange,
         "axis " + std::to_string(axis) + " outside [0, " + std::to_string(sub.d_prime()) + ")");
  }
}

void check_backend(const GlassesSubspace& sub, const SynthesisBackend& backend) {
  if (sub.backend_fingerprint != backend.fingerprint()) {
    fail(ErrorCode::DimensionMismatch,
         "subspace fitted for '" + sub.backend_fingerprint + "', backend is '" + backend.fingerprint() + "'");
  }
}

}  // namespace

LatentCode edit_latent(const LatentCode& w, const GlassesSubspace& sub, const std::string& style,
                       std::optional<double> b, const std::vector<EditParams>& edits) {
  const FlatVector& mu = style_vector(sub, style);
  if (!b) fail(ErrorCode::UninitializedB, "subspace position b is not set");
  if (w.layers() != sub.layers || w.channels() != sub.channels) {
    fail(ErrorCode::DimensionMismatch, "latent shape does not match the subspace");
  }
  for (const auto& e : edits) check_axis(sub, e.axis);

  FlatVector v = vectorize(w);
  v += *b * mu;
  for (const auto& e : edits) v += e.magnitude * sub.axes.col(e.axis);
  return devectorize(v, sub.layers, sub.channels);
}

double max_magnitude(const GlassesSubspace& sub, int axis, const EditConfig& cfg) {
  check_axis(sub, axis);
  return cfg.m_max_scale * std::sqrt(std::max(0.0, sub.eigenvalues[axis]));
}

EditParams clamp_edit(const GlassesSubspace& sub, EditParams e, const EditConfig& cfg) {
  if (!std::isfinite(e.magnitude)) fail(ErrorCode::InvalidConfig, "edit magnitude must be finite");
  const double m = max_magnitude(sub, e.axis, cfg);
  e.magnitude = std::clamp(e.magnitude, -m, m);
  return e;
}

double frame_area_fraction(const SegmentationMap& seg) {
  if (seg.size() == 0) return 0.0;
  const auto n = std::count(seg.data().begin(), seg.data().end(), Label::Frames);
  return static_cast<double>(n) / static_cast<double>(seg.size());
}

InitResult initialize_subspace_position(const LatentCode& w, const GlassesSubspace& sub, const std::string& style,
                                        const SynthesisBackend& backend, const EditConfig& cfg) {
  cfg.validate();
  check_backend(sub, backend);
  style_vector(sub, style);

  InitResult out;
  out.grid = cfg.grid();
  int best = -1;
  double best_residual = 0.0;
  for (double b : out.grid) {
    const double area = frame_area_fraction(backend.parse(backend.generate(edit_latent(w, sub, style, b, {}))));
    const double residual = std::abs(area - cfg.target_area);
    out.grid_areas.push_back(area);
    if (best < 0 || residual < best_residual) {
      best = static_cast<int>(out.grid_areas.size()) - 1;
      best_residual = residual;
    }
  }
  out.b = out.grid[best];
  out.area = out.grid_areas[best];
  out.residual = best_residual;
  if (out.area < cfg.failure_area()) {
    fail(ErrorCode::NoGlassesFound, "best frame area " + std::to_string(out.area) + " at b=" +
                                        std::to_string(out.b) + " is below " + std::to_string(cfg.failure_area()));
  }
  return out;
}

namespace {

Mask label_mask(const SegmentationMap& seg, bool frames, bool lenses) {
  Mask m(seg.height(), seg.width(), 0);
  for (std::size_t i = 0; i < seg.size(); ++i) {
    const Label l = seg.data()[i];
    m.data()[i] = ((frames && l == Label::Frames) || (lenses && l == Label::Lenses)) ? 1 : 0;
  }
  return m;
}

AlphaMap to_alpha(const Mask& m) {
  AlphaMap a(m.height(), m.width(), 0.0f);
  for (std::size_t i = 0; i < m.size(); ++i) a.data()[i] = m.data()[i] ? 1.0f : 0.0f;
  return a;
}

bool tinted(const std::string& style) { return style == kStyleTinted; }

}  // namespace

BlendResult blend_with_alpha(const FaceImage& original, const FaceImage& edited, const SegmentationMap& seg,
                             const std::string& style, const BlendConfig& config) {
  if (original.height() != edited.height() || original.width() != edited.width() ||
      seg.height() != original.height() || seg.width() != original.width()) {
    fail(ErrorCode::DimensionMismatch, "blend inputs differ in size");
  }
  config.validate();
  const BlendConfig cfg = config.resolved(original.width());

  const Mask core = label_mask(seg, true, tinted(style));
  const AlphaMap grown = to_alpha(morph::dilate(core, cfg.mask_dilation));
  AlphaMap alpha = morph::gaussian_blur(grown, cfg.taper_sigma_outer);
  if (!tinted(style)) {
    // Lens interiors take the narrower taper so the original eyes show through.
    const AlphaMap inner = morph::gaussian_blur(grown, cfg.taper_sigma_inner);
    for (std::size_t i = 0; i < seg.size(); ++i) {
      if (seg.data()[i] == Label::Lenses && grown.data()[i] == 0.0f) alpha.data()[i] = inner.data()[i];
    }
  }
  for (std::size_t i = 0; i < core.size(); ++i) {
    if (core.data()[i]) alpha.data()[i] = 1.0f;
  }

  BlendResult out{original, std::move(alpha)};
  auto& px = out.image.bytes();
  const auto& e = edited.bytes();
  for (std::size_t i = 0; i < out.alpha.size(); ++i) {
    const float a = out.alpha.data()[i];
    if (a == 0.0f) continue;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const std::size_t k = 3 * i + ch;
      px[k] = static_cast<std::uint8_t>(std::lround(a * e[k] + (1.0f - a) * px[k]));
    }
  }
  return out;
}

FaceImage blend(const FaceImage& original, const FaceImage& edited, const SegmentationMap& seg,
                const std::string& style, const BlendConfig& cfg) {
  return blend_with_alpha(original, edited, seg, style, cfg).image;
}

Mask blend_support(const SegmentationMap& seg, const std::string& style, const BlendConfig& config) {
  const BlendConfig cfg = config.resolved(seg.width());
  const int r = morph::blur_radius(std::max(cfg.taper_sigma_outer, cfg.taper_sigma_inner));
  // The separable kernel reaches a square, so the disk radius covers its corners.
  const int reach = cfg.mask_dilation + static_cast<int>(std::ceil(r * std::sqrt(2.0)));
  return morph::dilate(label_mask(seg, true, tinted(style)), reach);
}

namespace {

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    rethrow_with_stage(e, name);
  }
}

void finish(EditResult& r, const FaceImage& image, const std::string& style, const SynthesisBackend& backend,
            const EditConfig& cfg) {
  r.generated = stage("generate", [&] { return backend.generate(r.edited); });
  r.seg = stage("parse", [&] { return backend.parse(r.generated); });
  r.area = frame_area_fraction(r.seg);
  r.area_residual = std::abs(r.area - cfg.target_area);
  auto blended = stage("blend", [&] { return blend_with_alpha(image, r.generated, r.seg, style, cfg.blend); });
  r.image = std::move(blended.image);
  r.alpha = std::move(blended.alpha);
}

}  // namespace

EditResult edit_pipeline(const FaceImage& image, const GlassesSubspace& sub, const EditRequest& request,
                         const SynthesisBackend& backend, const EditConfig& cfg) {
  cfg.validate();
  check_backend(sub, backend);
  EditResult r;
  r.latent = request.inversion ? *request.inversion : stage("encode", [&] { return backend.encode(image); });
  if (request.b) {
    r.b = *request.b;
  } else {
    r.b = stage("initialize", [&] {
      return initialize_subspace_position(r.latent, sub, request.style, backend, cfg).b;
    });
  }
  r.edited = stage("edit", [&] { return edit_latent(r.latent, sub, request.style, r.b, request.edits); });
  finish(r, image, request.style, backend, cfg);
  return r;
}

EditResult edit_without_tsm(const FaceImage& image, const GlassesTemplate& t, const SynthesisBackend& backend,
                            const EditConfig& cfg) {
  cfg.validate();
  EditResult r;
  const auto lm = stage("landmarks", [&] { return backend.landmarks(image); });
  const auto placed = stage("place", [&] { return place_template(image, lm, t); });
  r.latent = stage("encode", [&] { return backend.encode(placed.pixels); });
  r.edited = r.latent;
  finish(r, image, t.style, backend, cfg);
  return r;
}

}  // namespace eyewear
