#include "doctest.h"

#include "eyewear/eval.hpp"

#include "../support/fixtures.hpp"

using namespace eyewear;
using fixture::code_of;

TEST_CASE("mse examples") {
  const FaceImage black(4, 4, {0, 0, 0}), white(4, 4, {255, 255, 255});
  CHECK(mse(black, black) == 0.0);
  CHECK(mse(black, white) == 1.0);
  FaceImage half = black;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 4; ++c) half.set(r, c, {255, 255, 255});
  CHECK(mse(black, half) == 0.5);
  CHECK(mse(half, black) == mse(black, half));
  CHECK(code_of([&] { mse(black, FaceImage(4, 5)); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("locality map isolates a single changed pixel") {
  const FaceImage a(6, 6, {10, 20, 30});
  FaceImage b = a;
  b.set(2, 3, {255, 20, 30});
  const GrayImage m = locality_map(a, b);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) {
      if (r == 2 && c == 3) CHECK(m(r, c) == doctest::Approx(245.0 * 245.0 / (3 * 255.0 * 255.0)));
      else CHECK(m(r, c) == 0.0f);
    }
}

TEST_CASE("mean_std") {
  CHECK(mean_std({}).mean == 0.0);
  const auto m = mean_std({1.0, 3.0});
  CHECK(m.mean == 2.0);
  CHECK(m.std == 1.0);
}

TEST_CASE("ERS is 0 when every edit succeeds and 1 when none does") {
  fixture::StubBackend backend;
  std::vector<EvalSample> corpus;
  for (int i = 0; i < 4; ++i) corpus.push_back({"s" + std::to_string(i), FaceImage(16, 16, {128, 128, 128}), LatentCode(2, 4)});
  ErsOptions opt;
  opt.style = "clear";
  CHECK(ers(corpus, fixture::stub_subspace(10), backend, opt) == 0.0);
  const auto all_fail = run_ers(corpus, fixture::stub_subspace(0), backend, opt);
  CHECK(all_fail.fraction == 1.0);
  CHECK(all_fail.failed == 4);
  CHECK(all_fail.outcomes[0].reason == "NoGlassesFound");

  opt.fixed_b = 0.1;  // floor(1) = 1 frame pixel, below the failure area
  const auto small = run_ers(corpus, fixture::stub_subspace(10), backend, opt);
  CHECK(small.fraction == 1.0);
  CHECK(small.outcomes[0].reason == "area");

  CHECK(code_of([&] { run_ers({}, fixture::stub_subspace(10), backend, opt); }) == ErrorCode::EmptyCorpus);
}

TEST_CASE("evaluate reports both variants and the threshold") {
  fixture::StubBackend backend;
  std::vector<EvalSample> corpus;
  for (int i = 0; i < 3; ++i) {
    LatentCode w(2, 4);
    w.flat(0) = -2.0 * i;  // at b = 0.5: 5, 3 and 1 frame pixels
    corpus.push_back({"s" + std::to_string(i), FaceImage(16, 16, {128, 128, 128}), w});
  }
  ErsOptions opt;
  opt.style = "clear";
  opt.embedding = [](const FaceImage&, const FaceImage&) { return 0.25; };
  const auto rep = evaluate(corpus, fixture::stub_subspace(10), backend, opt, 0.5);
  CHECK(rep.attempted == 3);
  CHECK(rep.ers_search == 0.0);
  CHECK(rep.failed_fixed == 1);
  CHECK(rep.ers_fixed == doctest::Approx(1.0 / 3));
  const auto j = rep.to_json();
  CHECK(j["images"].size() == 3);
  CHECK(j["config"]["failure_area"] == doctest::Approx(0.005));
  CHECK(j.contains("embedding_distance"));
  CHECK(rep.table().find("ERS") != std::string::npos);
}

TEST_CASE("toy benchmark needs the toy backend and is reproducible") {
  fixture::StubBackend stub;
  CHECK(code_of([&] { toy_benchmark(stub, fixture::stub_subspace(1), {}); }) == ErrorCode::InvalidConfig);
  ToyBenchmarkSpec spec;
  spec.count = 3;
  const auto a = toy_benchmark(fixture::toy_backend(), fixture::toy_subspace(), spec);
  const auto b = toy_benchmark(fixture::toy_backend(), fixture::toy_subspace(), spec);
  REQUIRE(a.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(a[i].image == b[i].image);
    CHECK(*a[i].inversion == *b[i].inversion);
  }
}
