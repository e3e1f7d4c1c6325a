#pragma once

#include "eyewear/image.hpp"
#include "eyewear/latent.hpp"

#include "json.hpp"

#include <array>
#include <memory>
#include <string>

namespace eyewear {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// 68-point facial landmark layout (jaw 0-16, brows 17-26, nose 27-35, eyes 36-47, mouth 48-67).
struct LandmarkSet {
  std::array<Point2, 68> points{};

  static constexpr int kTempleLeft = 0;
  static constexpr int kTempleRight = 16;

  Point2 temple_left() const { return points[kTempleLeft]; }
  Point2 temple_right() const { return points[kTempleRight]; }
};

struct BackendDims {
  int layers = 0;
  int channels = 0;
  int height = 0;
  int width = 0;

  int latent_dim() const { return layers * channels; }
};

/// Generator, encoder, face parser and landmarker behind one call contract.
/// Implementations must be safe for concurrent const use.
class SynthesisBackend {
 public:
  virtual ~SynthesisBackend() = default;

  virtual BackendDims dims() const = 0;
  virtual std::string fingerprint() const = 0;

  virtual FaceImage generate(const LatentCode& latent) const = 0;
  virtual LatentCode encode(const FaceImage& image) const = 0;
  virtual SegmentationMap parse(const FaceImage& image) const = 0;
  virtual LandmarkSet landmarks(const FaceImage& image) const = 0;

 protected:
  void check_latent(const LatentCode& latent) const;
  void check_image(const FaceImage& image) const;
};

/// Builds a backend from `{"name": "toy", ...}`. Unknown names raise InvalidConfig.
std::shared_ptr<const SynthesisBackend> make_backend(const nlohmann::json& config);

}  // namespace eyewear
