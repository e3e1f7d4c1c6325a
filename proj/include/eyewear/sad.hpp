#pragma once

// Synthetic appearance discovery: templates are pasted onto glasses-free faces at the
// temple landmarks and the composites are embedded with the backend encoder.

#include "eyewear/latent.hpp"
#include "eyewear/synthesis.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace eyewear {

struct Tint {
  std::array<double, 3> color{};  // [0,1]
  double alpha = 0.0;
};

inline constexpr const char* kStyleClear = "clear";
inline constexpr const char* kStyleTinted = "tinted";

/// Opacity of the black shading laid over the enclosed lens regions of "tinted" templates.
inline constexpr double kTintedLensOpacity = 0.6;

struct GlassesTemplate {
  std::string name;
  Mask mask;
  std::optional<Tint> tint;
  Point2 anchor_left;
  Point2 anchor_right;
  std::string style = kStyleClear;

  void validate() const;  // MalformedTemplate
};

struct TemplateSet {
  std::vector<GlassesTemplate> templates;
  int original_count = 0;            // N
  std::vector<std::string> log;      // augmentation provenance

  int augmented_count() const { return static_cast<int>(templates.size()); }  // N+
};

/// PNG masks with a same-stem JSON sidecar, loaded in name order.
TemplateSet load_templates(const std::filesystem::path& directory);
void save_template(const GlassesTemplate& t, const std::filesystem::path& directory);

/// Originals followed, per template, by one dilation and one erosion per radius.
TemplateSet augment_templates(const TemplateSet& set, const std::vector<int>& radii);

GlassesTemplate colorize_template(GlassesTemplate t, const std::array<double, 3>& color, double alpha);

/// 28 procedurally drawn frames on a 384x192 canvas, alternating clear and tinted.
TemplateSet builtin_templates(int count = 28);

/// Similarity transform taking template coordinates to image coordinates.
struct Similarity {
  double a = 1, b = 0;    // scale * (cos, sin)
  double tx = 0, ty = 0;

  static Similarity from_pairs(Point2 src0, Point2 src1, Point2 dst0, Point2 dst1);
  Point2 apply(Point2 p) const;
  Point2 inverse(Point2 p) const;
  double scale() const;
  double angle() const;  // radians
};

struct AugmentedImage {
  FaceImage pixels;
  int source_image = 0;
  int template_index = 0;
  std::string style;
};

/// Pastes `t` so its anchors land on the temples. Only pixels inside the transformed
/// template bounds can change.
AugmentedImage place_template(const FaceImage& image, const LandmarkSet& landmarks, const GlassesTemplate& t);

struct CorpusEntry {
  LatentCode latent;
  std::string style;
  int image = 0;
  int template_index = 0;
};

struct SADCorpus {
  std::vector<CorpusEntry> entries;    // image-major, template order within an image
  std::vector<LatentCode> free_latents;  // one per image
  int templates = 0;                   // N
  int augmented_templates = 0;         // N+
  std::string backend_fingerprint;

  int images() const { return static_cast<int>(free_latents.size()); }
};

SADCorpus discover_appearances(const std::vector<FaceImage>& images, const TemplateSet& set,
                               const SynthesisBackend& backend);

/// Per-image differentials, aggregation and eigen-fit over the corpus.
GlassesSubspace fit_corpus(const SADCorpus& corpus, int d_prime, EigenPath path = EigenPath::Auto);

/// Writes entry_NNNNN.bin (little-endian f64, layer-major) per latent plus manifest.json.
void export_corpus(const SADCorpus& corpus, const std::filesystem::path& directory);
SADCorpus import_corpus(const std::filesystem::path& directory);

}  // namespace eyewear
