#pragma once

// Latent edits along the glasses subspace, subspace-position search, and blending of the
// edited render back into the original photograph.

#include "eyewear/latent.hpp"
#include "eyewear/sad.hpp"
#include "eyewear/synthesis.hpp"

#include <optional>
#include <string>
#include <vector>

namespace eyewear {

struct EditParams {
  int axis = 0;
  double magnitude = 0.0;

  friend bool operator==(const EditParams&, const EditParams&) = default;
};

/// Pixel sizes. Non-positive sigmas fall back to the width-relative defaults.
struct BlendConfig {
  double taper_sigma_outer = 0.0;  // default 1% of width
  double taper_sigma_inner = 0.0;  // default 0.5% of width, clear style only
  int mask_dilation = 2;

  BlendConfig resolved(int width) const;
  void validate() const;  // InvalidConfig
};

struct EditConfig {
  double target_area = 0.02;       // ΔA
  double failure_fraction = 0.25;  // NoGlassesFound below failure_fraction * target_area
  int grid_points = 21;
  double b_min = 0.5;
  double b_max = 1.5;
  double m_max_scale = 10.0;       // |m| <= m_max_scale * sqrt(lambda_axis)
  BlendConfig blend;

  double failure_area() const { return failure_fraction * target_area; }
  std::vector<double> grid() const;
  void validate() const;
};

/// w + b * w_mu[style] + sum_k m_k e_{axis_k}. The b-term enters once however many edits there are.
LatentCode edit_latent(const LatentCode& w, const GlassesSubspace& sub, const std::string& style,
                       std::optional<double> b, const std::vector<EditParams>& edits);

/// Largest accepted |m| for an axis.
double max_magnitude(const GlassesSubspace& sub, int axis, const EditConfig& cfg);
/// Clamps the magnitude into [-m_max, m_max]; AxisOutOfRange for a bad axis.
EditParams clamp_edit(const GlassesSubspace& sub, EditParams e, const EditConfig& cfg);

double frame_area_fraction(const SegmentationMap& seg);

struct InitResult {
  double b = 0.0;
  double area = 0.0;
  double residual = 0.0;          // |area - target|
  std::vector<double> grid;
  std::vector<double> grid_areas;
};

/// Exhaustive search over the b grid with m = 0. Ties go to the smaller b.
InitResult initialize_subspace_position(const LatentCode& w, const GlassesSubspace& sub, const std::string& style,
                                        const SynthesisBackend& backend, const EditConfig& cfg = {});

struct BlendResult {
  FaceImage image;
  AlphaMap alpha;
};

/// alpha * edited + (1 - alpha) * original; alpha = 0 pixels are copied from the original.
BlendResult blend_with_alpha(const FaceImage& original, const FaceImage& edited, const SegmentationMap& seg,
                             const std::string& style, const BlendConfig& cfg);
FaceImage blend(const FaceImage& original, const FaceImage& edited, const SegmentationMap& seg,
                const std::string& style, const BlendConfig& cfg);

/// Support of the soft mask: the dilated glasses mask grown by the taper radius.
Mask blend_support(const SegmentationMap& seg, const std::string& style, const BlendConfig& cfg);

struct EditResult {
  FaceImage image;        // blended
  FaceImage generated;    // raw render of the edited latent
  SegmentationMap seg;    // parse of the raw render
  AlphaMap alpha;
  LatentCode latent;      // inversion of the input
  LatentCode edited;
  double b = 0.0;
  double area = 0.0;      // frame area of the raw render
  double area_residual = 0.0;
};

struct EditRequest {
  std::string style;
  std::vector<EditParams> edits;
  std::optional<double> b;                // unset runs the search
  std::optional<LatentCode> inversion;    // skips the encoder when given
};

/// encode -> initialize -> edit -> generate -> parse -> blend. Errors carry the stage name.
EditResult edit_pipeline(const FaceImage& image, const GlassesSubspace& sub, const EditRequest& request,
                         const SynthesisBackend& backend, const EditConfig& cfg = {});

/// Places the template directly and re-renders its inversion, with no subspace involved.
EditResult edit_without_tsm(const FaceImage& image, const GlassesTemplate& t, const SynthesisBackend& backend,
                            const EditConfig& cfg = {});

}  // namespace eyewear
