#include "doctest.h"

#include "eyewear/edit.hpp"
#include "eyewear/morphology.hpp"
#include "eyewear/session.hpp"

#include "../support/fixtures.hpp"

#include <random>

using namespace eyewear;
using fixture::code_of;

namespace {

LatentCode random_latent(int layers, int channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  LatentCode z(layers, channels);
  for (int i = 0; i < z.dim(); ++i) z.flat(i) = n(rng);
  return z;
}

double max_abs_diff(const LatentCode& a, const LatentCode& b) {
  return (vectorize(a) - vectorize(b)).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("b = 0 with no edits is the identity") {
  const auto sub = fixture::random_subspace(4, 16, 5, 1);
  const LatentCode w = random_latent(4, 16, 2);
  CHECK(edit_latent(w, sub, "clear", 0.0, {}) == w);
}

TEST_CASE("opposite edits cancel") {
  const auto sub = fixture::random_subspace(4, 16, 5, 1);
  const LatentCode w = random_latent(4, 16, 3);
  const LatentCode base = edit_latent(w, sub, "tinted", 0.8, {});
  const LatentCode back = edit_latent(w, sub, "tinted", 0.8, {{2, 1.7}, {2, -1.7}});
  CHECK(max_abs_diff(base, back) < 1e-12);
}

TEST_CASE("edits compose linearly over random edit lists") {
  const auto sub = fixture::random_subspace(4, 64, 6, 7);
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> len(0, 8), axis(0, 5);
  std::uniform_real_distribution<double> mag(-3, 3), bd(0.5, 1.5);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const LatentCode w = random_latent(4, 64, rng());
    const double b = bd(rng);
    std::vector<EditParams> edits(len(rng));
    Eigen::VectorXd m = Eigen::VectorXd::Zero(6);
    for (auto& e : edits) {
      e = {axis(rng), mag(rng)};
      m[e.axis] += e.magnitude;
    }
    const FlatVector expect = vectorize(w) + b * sub.style_inits.at("clear") + sub.axes * m;
    worst = std::max(worst, (vectorize(edit_latent(w, sub, "clear", b, edits)) - expect).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("the b term enters exactly once") {
  const auto sub = fixture::random_subspace(2, 8, 3, 4);
  const LatentCode w = random_latent(2, 8, 5);
  const std::vector<EditParams> zeros(7, EditParams{1, 0.0});
  const FlatVector expect = vectorize(w) + 1.3 * sub.style_inits.at("clear");
  CHECK((vectorize(edit_latent(w, sub, "clear", 1.3, zeros)) - expect).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("edit_latent error codes") {
  const auto sub = fixture::random_subspace(2, 8, 3, 4);
  const LatentCode w = random_latent(2, 8, 5);
  CHECK(code_of([&] { edit_latent(w, sub, "aviator", 1.0, {}); }) == ErrorCode::UnknownStyle);
  CHECK(code_of([&] { edit_latent(w, sub, "clear", std::nullopt, {}); }) == ErrorCode::UninitializedB);
  CHECK(code_of([&] { edit_latent(random_latent(2, 9, 1), sub, "clear", 1.0, {}); }) == ErrorCode::DimensionMismatch);
  CHECK(code_of([&] { edit_latent(w, sub, "clear", 1.0, {{3, 1.0}}); }) == ErrorCode::AxisOutOfRange);
  CHECK(code_of([&] { edit_latent(w, sub, "clear", 1.0, {{-1, 1.0}}); }) == ErrorCode::AxisOutOfRange);
}

TEST_CASE("clamp_edit bounds the magnitude by the axis eigenvalue") {
  const auto sub = fixture::stub_subspace(10);
  EditConfig cfg;
  CHECK(max_magnitude(sub, 0, cfg) == doctest::Approx(20.0));
  CHECK(clamp_edit(sub, {0, 50.0}, cfg).magnitude == doctest::Approx(20.0));
  CHECK(clamp_edit(sub, {2, -50.0}, cfg).magnitude == doctest::Approx(-5.0));
  CHECK(clamp_edit(sub, {1, 3.0}, cfg).magnitude == 3.0);
  CHECK(code_of([&] { clamp_edit(sub, {3, 1.0}, cfg); }) == ErrorCode::AxisOutOfRange);
  CHECK(code_of([&] { clamp_edit(sub, {0, std::nan("")}, cfg); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("subspace-position search picks the grid argmin") {
  fixture::StubBackend backend;
  const auto sub = fixture::stub_subspace(10);
  const LatentCode w(2, 4);
  const auto r = initialize_subspace_position(w, sub, "clear", backend);
  REQUIRE(r.grid.size() == 21);
  CHECK(r.grid.front() == 0.5);
  CHECK(r.grid.back() == 1.5);
  for (std::size_t i = 0; i < r.grid.size(); ++i)
    CHECK(r.grid_areas[i] == std::floor(10 * r.grid[i]) / 256.0);
  // floor(10 b) = 5 is closest to 0.02 * 256 = 5.12
  CHECK(r.b == 0.5);
  CHECK(r.residual == doctest::Approx(std::abs(5 / 256.0 - 0.02)));
}

TEST_CASE("subspace-position search breaks ties toward the smaller b") {
  fixture::StubBackend backend;
  const auto sub = fixture::stub_subspace(10);
  LatentCode w(2, 4);
  w.flat(0) = -4.7;  // floor(10 b - 4.7): 5 at b = 1.0, 1.05 and 6 at b = 1.1, 1.15
  EditConfig cfg;
  cfg.target_area = 5.5 / 256.0;
  CHECK(initialize_subspace_position(w, sub, "clear", backend, cfg).b == doctest::Approx(1.0));

  w.flat(0) = 9.0;
  const auto flat = fixture::stub_subspace(0);
  CHECK(initialize_subspace_position(w, flat, "clear", backend).b == 0.5);
}

TEST_CASE("subspace-position search matches an exhaustive scan on the toy backend") {
  const auto& backend = fixture::toy_backend();
  const auto& sub = fixture::toy_subspace();
  const EditConfig cfg;
  for (int s = 0; s < 3; ++s) {
    const LatentCode w = backend.random_face(40 + s, 0.05);
    const auto r = initialize_subspace_position(w, sub, "clear", backend, cfg);
    double best = 1e9, best_b = -1;
    for (double b : cfg.grid()) {
      const double area = frame_area_fraction(backend.parse(backend.generate(edit_latent(w, sub, "clear", b, {}))));
      if (std::abs(area - cfg.target_area) < best) {
        best = std::abs(area - cfg.target_area);
        best_b = b;
      }
    }
    CHECK(r.b == best_b);
    CHECK(r.residual == best);
  }
}

TEST_CASE("subspace-position search reports NoGlassesFound and checks inputs") {
  fixture::StubBackend backend;
  const LatentCode w(2, 4);
  CHECK(code_of([&] { initialize_subspace_position(w, fixture::stub_subspace(0), "clear", backend); }) ==
        ErrorCode::NoGlassesFound);
  CHECK(code_of([&] { initialize_subspace_position(w, fixture::stub_subspace(10), "tinted", backend); }) ==
        ErrorCode::UnknownStyle);
  auto other = fixture::stub_subspace(10);
  other.backend_fingerprint = "toy";
  CHECK(code_of([&] { initialize_subspace_position(w, other, "clear", backend); }) == ErrorCode::DimensionMismatch);
  EditConfig bad;
  bad.grid_points = 0;
  CHECK(code_of([&] { initialize_subspace_position(w, fixture::stub_subspace(10), "clear", backend, bad); }) ==
        ErrorCode::InvalidConfig);
}

TEST_CASE("blending respects the soft mask") {
  const auto& backend = fixture::toy_backend();
  for (std::uint64_t s = 0; s < 5; ++s) {
    const FaceImage original = backend.generate(backend.random_face(s, 0.05));
    const FaceImage edited = backend.generate(fixture::toy_with_glasses(backend, s));
    const SegmentationMap seg = backend.parse(edited);
    for (const char* style : {"clear", "tinted"}) {
      const BlendConfig cfg = BlendConfig{}.resolved(original.width());
      const BlendResult r = blend_with_alpha(original, edited, seg, style, cfg);
      const Mask support = blend_support(seg, style, cfg);
      for (int y = 0; y < original.height(); ++y)
        for (int x = 0; x < original.width(); ++x) {
          const float a = r.alpha(y, x);
          if (a < 0.0f || a > 1.0f) FAIL("alpha out of range");
          if (a == 0.0f && !(r.image.at(y, x) == original.at(y, x))) FAIL("alpha 0 pixel differs");
          if (!support(y, x) && !(r.image.at(y, x) == original.at(y, x))) FAIL("pixel outside support changed");
          if (seg(y, x) == Label::Frames && !(r.image.at(y, x) == edited.at(y, x))) FAIL("frame pixel not edited");
        }
    }
  }
}

TEST_CASE("blending with an empty or full mask") {
  const auto& backend = fixture::toy_backend();
  const FaceImage original = backend.generate(backend.random_face(1, 0.05));
  const FaceImage edited = backend.generate(fixture::toy_with_glasses(backend, 1));
  const BlendConfig cfg;
  CHECK(blend(original, edited, SegmentationMap(original.height(), original.width(), Label::Skin), "clear", cfg) ==
        original);
  CHECK(blend(original, edited, SegmentationMap(original.height(), original.width(), Label::Frames), "clear", cfg) ==
        edited);
  CHECK(code_of([&] { blend(original, FaceImage(3, 3), SegmentationMap(3, 3), "clear", cfg); }) ==
        ErrorCode::DimensionMismatch);
  BlendConfig bad;
  bad.mask_dilation = -1;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("pipeline errors carry the stage name") {
  const auto& backend = fixture::toy_backend();
  const auto& sub = fixture::toy_subspace();
  const FaceImage face = backend.generate(backend.random_face(3, 0.05));
  auto message = [&](const EditRequest& req, const FaceImage& img) {
    try {
      edit_pipeline(img, sub, req, backend);
    } catch (const Error& e) {
      return e.message();
    }
    return std::string();
  };
  CHECK(message({"clear", {}, std::nullopt, std::nullopt}, FaceImage(5, 5)).rfind("encode stage:", 0) == 0);
  CHECK(message({"aviator", {}, std::nullopt, std::nullopt}, face).rfind("initialize stage:", 0) == 0);
  CHECK(message({"aviator", {}, 1.0, std::nullopt}, face).rfind("edit stage:", 0) == 0);
  CHECK(message({"clear", {{9, 1.0}}, 1.0, std::nullopt}, face).rfind("edit stage:", 0) == 0);
}

TEST_CASE("pipeline with explicit b equals the manual composition") {
  const auto& backend = fixture::toy_backend();
  const auto& sub = fixture::toy_subspace();
  const LatentCode w = backend.random_face(8, 0.05);
  const FaceImage face = backend.generate(w);
  const std::vector<EditParams> edits{{0, 0.3}, {1, -0.2}};
  const EditResult r = edit_pipeline(face, sub, {"clear", edits, 1.0, w}, backend);
  const LatentCode edited = edit_latent(w, sub, "clear", 1.0, edits);
  CHECK(r.edited == edited);
  CHECK(r.generated == backend.generate(edited));
  CHECK(r.image == blend(face, r.generated, backend.parse(r.generated), "clear", EditConfig{}.blend.resolved(face.width())));
  CHECK(r.area == frame_area_fraction(r.seg));
}

TEST_CASE("chained session edits render the same as a one-shot edit list") {
  const auto& backend = fixture::toy_backend();
  const auto& sub = fixture::toy_subspace();
  const EditConfig cfg;
  auto session = EditSession::from_toy_seed("s", 21, backend);
  session.initialize("clear", sub, backend, cfg);
  const std::vector<EditParams> edits{{0, 0.4}, {2, -0.3}, {0, 0.1}};
  for (const auto& e : edits) {
    session.add_edit(e, sub, cfg);
    session.render(sub, backend, cfg);
  }
  const EditResult one = edit_pipeline(session.original(), sub, {"clear", edits, session.b(), session.inversion()},
                                       backend, cfg);
  CHECK(session.render(sub, backend, cfg) == one.image);
}

TEST_CASE("template bypass tracks the template size") {
  const auto& backend = fixture::toy_backend();
  const auto base = builtin_templates(4);
  const auto aug = augment_templates(base, {4});
  for (int s = 0; s < 2; ++s) {
    const FaceImage face = backend.generate(backend.random_face(60 + s, 0.05));
    for (int t = 0; t < 4; ++t) {
      const double dil = edit_without_tsm(face, aug.templates[3 * t + 1], backend).area;
      const double ero = edit_without_tsm(face, aug.templates[3 * t + 2], backend).area;
      CHECK(dil > ero);
    }
  }
}
