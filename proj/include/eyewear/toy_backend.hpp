#pragma once

// Analytic face generator with a known latent layout. Every designated latent
// coordinate z maps affinely onto a parameter range, param = lo + (hi - lo) * clamp(z, 0, 1);
// glasses presence is the raw coordinate, thresholded at 0.5. All coordinates outside
// the layout are ignored by the generator and returned as zero by the encoder.

#include "eyewear/synthesis.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace eyewear::toy {

struct Range {
  double lo;
  double hi;
  double at(double z) const;
  double coordinate(double value) const;  // inverse of at(), unclamped
};

// Frozen parameter ranges. Face positions are fractions of the resolution; glasses
// lengths are fractions of the face half-width rx.
namespace ranges {
inline constexpr Range kCenterX{0.46, 0.54};
inline constexpr Range kCenterY{0.46, 0.54};
inline constexpr Range kRadiusX{0.26, 0.34};
inline constexpr Range kRadiusY{0.34, 0.42};
inline constexpr std::array<Range, 3> kSkin{{{0.62, 0.95}, {0.45, 0.75}, {0.35, 0.62}}};
inline constexpr Range kEyeRadius{0.05, 0.09};
inline constexpr Range kHalfWidth{0.22, 0.40};
inline constexpr Range kHalfHeight{0.14, 0.30};
inline constexpr Range kThickness{0.0, 0.24};
// Squareness is carried as corner fullness k = 2^(-1/n), the 45-degree radius of a unit
// superellipse with exponent n. k spans exponents 2 (ellipse) to 6; the renderer uses n.
inline constexpr Range kSquareness{0.70710678118654752, 0.89089871814033930};
inline constexpr Range kVerticalOffset{-0.10, 0.10};
inline constexpr Range kLensColor{0.0, 0.6};
inline constexpr Range kLensAlpha{0.0, 0.8};
inline constexpr Range kFrameColor{0.0, 1.0};
}  // namespace ranges

// Fixed appearance constants of the renderer.
inline constexpr std::array<double, 3> kBackground{0.16, 0.20, 0.28};
inline constexpr std::array<double, 3> kEyeColor{0.22, 0.14, 0.10};
inline constexpr std::array<double, 3> kMouthColor{0.70, 0.28, 0.30};
inline constexpr double kRimGap = 0.12;       // distance between the rims' mid-lines, in rx
inline constexpr double kEyeSpacing = 0.38;   // eye centers at cx +- kEyeSpacing * rx
inline constexpr double kMouthDrop = 0.55;    // mouth center at cy + kMouthDrop * ry

struct ToyLayout {
  int center_x = 0, center_y = 1, radius_x = 2, radius_y = 3;
  std::array<int, 3> skin{4, 5, 6};
  int eye_radius = 7;
  int presence = 64;
  int half_width = 65, half_height = 66, thickness = 67, squareness = 68, vertical_offset = 69;
  std::array<int, 3> lens{70, 71, 72};
  int lens_alpha = 73;
  std::array<int, 3> frame{74, 75, 76};

  /// Face block at the start of layer 0, glasses block at the start of layer 1
  /// (layer 0 when there is only one layer).
  static ToyLayout standard(int layers, int channels);

  std::vector<int> all_indices() const;
  /// The six shape/appearance directions that template augmentation varies.
  std::array<int, 6> glasses_variation_indices() const;
  void validate(int dim) const;
};

struct ToyConfig {
  int resolution = 256;
  int layers = 4;
  int channels = 64;
  ToyLayout layout = ToyLayout::standard(4, 64);
  double fit_mse_threshold = 0.01;  // per-pixel MSE on [0,1] values
  int refine_iterations = 1;   // soft edge-fit iterations before centering
  int centroid_samples = 300;  // hit-and-run samples for the final estimate; 0 = analytic center
  bool antialias = false;

  static ToyConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct FaceParams {
  double cx = 0, cy = 0, rx = 0, ry = 0;  // pixels
  std::array<double, 3> skin{};
  double eye_radius = 0;  // fraction of rx
};

struct GlassesParams {
  double presence = 0;
  double half_width = 0, half_height = 0, thickness = 0;  // fractions of rx
  double squareness = 2;
  double vertical_offset = 0;  // fraction of rx
  std::array<double, 3> lens{};
  double lens_alpha = 0;
  std::array<double, 3> frame{};
};

struct ToyParams {
  FaceParams face;
  GlassesParams glasses;
};

ToyParams decode(const LatentCode& latent, const ToyConfig& config);
LatentCode encode_params(const ToyParams& params, const ToyConfig& config);

/// Frame geometry in pixel units: two superellipse rings joined by a bridge, with arms
/// running from the rim centers out to the temples at cx +- reach on the row cy.
struct FrameShape {
  double cx = 0, cy = 0;
  double reach = 0;       // temple distance from cx
  double a = 0, b = 0;    // rim mid-line semi-axes
  double thickness = 0;
  double exponent = 2;
  double rim_dy = 0;      // rim centers sit at cy + rim_dy
  double gap = 0;

  static FrameShape from(double cx, double cy, double reach, const GlassesParams& g);

  /// Membership along one pixel row. Point queries below go through this as well, so
  /// per-row and per-point rasterization agree exactly.
  struct Row {
    double left_x = 0, right_x = 0;   // rim centers
    double hole_half = -1;             // hole half-width at this row, < 0 when missed
    double outer_half = -1;
    bool bridge = false, arms = false;
    double arm_lo = 0, arm_hi = 0;     // temple extents
    bool visible = false;

    bool in_hole(double x) const;
    bool in_frame(double x) const;
  };
  Row row(double y) const;

  double rim_x(int side) const;  // side -1 left, +1 right
  double rim_y() const { return cy + rim_dy; }
  bool visible() const { return thickness > 1e-9; }
  bool in_hole(double x, double y) const;
  bool in_frame(double x, double y) const;
  /// Pixel bounding box [row0,row1] x [col0,col1] (inclusive) of everything drawn.
  std::array<int, 4> pixel_bounds(int height, int width) const;
};

bool glasses_visible(const GlassesParams& g, double rx);

double exponent_from_fullness(double k);
double fullness_from_exponent(double n);

FaceImage render(const ToyParams& params, int resolution, bool antialias = false);
/// Analytic labels of the same geometry the renderer draws.
SegmentationMap render_labels(const ToyParams& params, int resolution);

/// Face oval recovered from the unoccluded top and bottom caps of the image.
struct FaceFit {
  double cx = 0, cy = 0, rx = 0, ry = 0;
  Rgb8 skin{};
};

/// Pixel-level reading of a toy-domain image shared by encode and parse.
struct ImageAnalysis {
  FaceFit face;
  bool has_glasses = false;
  Rgb8 frame_color{};
  Mask frames;                    // full-image mask
  std::array<Mask, 2> holes;      // left, right lens interiors (may be empty)
  std::array<bool, 2> hole_found{false, false};
};

class ToyBackend final : public SynthesisBackend {
 public:
  explicit ToyBackend(ToyConfig config = {});

  const ToyConfig& config() const { return config_; }

  BackendDims dims() const override;
  std::string fingerprint() const override;

  FaceImage generate(const LatentCode& latent) const override;
  LatentCode encode(const FaceImage& image) const override;
  SegmentationMap parse(const FaceImage& image) const override;
  LandmarkSet landmarks(const FaceImage& image) const override;

  ImageAnalysis analyze(const FaceImage& image) const;
  /// Encoded parameters without the residual check; used by encode().
  ToyParams fit_params(const FaceImage& image, const ImageAnalysis& analysis) const;

  /// Glasses-free face latent with all face coordinates drawn from [margin, 1 - margin].
  LatentCode random_face(std::uint64_t seed, double margin = 0.0) const;

 private:
  ToyConfig config_;
};

LandmarkSet landmarks_for(const FaceFit& face, int height, int width);

// Superellipse area helpers (unit semi-axes): integral of 1 and of x^2 over |x|^n + |y|^n <= 1.
double superellipse_area_factor(double n);
double superellipse_second_moment_factor(double n);

}  // namespace eyewear::toy
