#pragma once

// Shared test setups: a deterministic stub backend, hand-built subspaces and a small toy fit.

#include "eyewear/error.hpp"
#include "eyewear/sad.hpp"
#include "eyewear/toy_backend.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace fixture {

using namespace eyewear;

/// Paints floor(latent[0]) red pixels in raster order on a 16x16 gray canvas and parses
/// red as frames, so the frame area is a known step function of the first coordinate.
class StubBackend final : public SynthesisBackend {
 public:
  BackendDims dims() const override { return {2, 4, 16, 16}; }
  std::string fingerprint() const override { return "stub"; }
  FaceImage generate(const LatentCode& latent) const override {
    check_latent(latent);
    FaceImage img(16, 16, {128, 128, 128});
    const int n = static_cast<int>(std::clamp(std::floor(latent.flat(0)), 0.0, 256.0));
    for (int i = 0; i < n; ++i) img.set(i / 16, i % 16, {255, 0, 0});
    return img;
  }
  LatentCode encode(const FaceImage& image) const override {
    check_image(image);
    LatentCode z(2, 4);
    for (int i = 0; i < 256; ++i) z.flat(0) += image.at(i / 16, i % 16) == Rgb8{255, 0, 0} ? 1.0 : 0.0;
    return z;
  }
  SegmentationMap parse(const FaceImage& image) const override {
    check_image(image);
    SegmentationMap seg(16, 16, Label::Skin);
    for (int r = 0; r < 16; ++r)
      for (int c = 0; c < 16; ++c)
        if (image.at(r, c) == Rgb8{255, 0, 0}) seg(r, c) = Label::Frames;
    return seg;
  }
  LandmarkSet landmarks(const FaceImage& image) const override {
    check_image(image);
    LandmarkSet l;
    l.points[LandmarkSet::kTempleLeft] = {2, 8};
    l.points[LandmarkSet::kTempleRight] = {14, 8};
    return l;
  }
};

/// Subspace over the stub layout: axes are the first three unit vectors.
inline GlassesSubspace stub_subspace(double mu0) {
  GlassesSubspace s;
  s.layers = 2;
  s.channels = 4;
  s.axes = Eigen::MatrixXd::Identity(8, 3);
  s.eigenvalues = Eigen::Vector3d(4.0, 1.0, 0.25);
  s.style_inits["clear"] = FlatVector::Unit(8, 0) * mu0;
  s.style_centroids["clear"] = FlatVector::Unit(8, 0) * mu0;
  s.backend_fingerprint = "stub";
  return s;
}

/// Random orthonormal axes and random style vectors at the given shape.
inline GlassesSubspace random_subspace(int layers, int channels, int d_prime, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  const int d = layers * channels;
  Eigen::MatrixXd m(d, d_prime);
  for (int j = 0; j < d_prime; ++j)
    for (int i = 0; i < d; ++i) m(i, j) = n(rng);
  GlassesSubspace s;
  s.layers = layers;
  s.channels = channels;
  s.axes = Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ() * Eigen::MatrixXd::Identity(d, d_prime);
  s.eigenvalues.resize(d_prime);
  for (int i = 0; i < d_prime; ++i) s.eigenvalues[i] = 10.0 / (i + 1);
  for (const char* style : {"clear", "tinted"}) {
    FlatVector v(d);
    for (int i = 0; i < d; ++i) v[i] = n(rng);
    s.style_inits[style] = v;
    s.style_centroids[style] = 2.0 * v;
  }
  s.backend_fingerprint = "random";
  s.metadata = {3, 4, 12, "2024-01-01T00:00:00Z"};
  return s;
}

/// Toy latent with glasses: presence 1 and the other glasses coordinates in [0.05, 0.95].
inline LatentCode toy_with_glasses(const toy::ToyBackend& backend, std::uint64_t seed) {
  const auto& l = backend.config().layout;
  LatentCode z = backend.random_face(seed, 0.05);
  std::mt19937_64 rng(seed * 7919 + 1);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  z.flat(l.presence) = 1.0;
  for (int i : {l.half_width, l.half_height, l.thickness, l.squareness, l.vertical_offset, l.lens[0], l.lens[1],
                l.lens[2], l.lens_alpha, l.frame[0], l.frame[1], l.frame[2]}) {
    z.flat(i) = u(rng);
  }
  return z;
}

/// Small toy fit (6 faces, 8 templates, radii {2}, d' = 4), computed once per process.
inline const toy::ToyBackend& toy_backend() {
  static const toy::ToyBackend backend;
  return backend;
}

inline const GlassesSubspace& toy_subspace() {
  static const GlassesSubspace sub = [] {
    const auto& backend = toy_backend();
    std::vector<FaceImage> faces;
    for (int i = 0; i < 6; ++i) faces.push_back(backend.generate(backend.random_face(500 + i, 0.05)));
    const auto set = augment_templates(builtin_templates(8), {2});
    return fit_corpus(discover_appearances(faces, set, backend), 4);
  }();
  return sub;
}

inline ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  throw std::logic_error("expected an eyewear::Error");
}

}  // namespace fixture
