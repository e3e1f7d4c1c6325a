#pragma once

#include "eyewear/edit.hpp"

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace eyewear {

/// Mean squared difference over pixels and channels, values scaled to [0,1].
double mse(const FaceImage& a, const FaceImage& b);

/// Per-pixel squared difference averaged over channels, in [0,1].
GrayImage locality_map(const FaceImage& a, const FaceImage& b);

struct EvalSample {
  std::string id;
  FaceImage image;
  std::optional<LatentCode> inversion;  // replaces the encoder output when set
};

/// Toy benchmark: glasses-free faces whose inversions are pushed away from the glasses
/// region, w = E(x) - delta * w_mu[style], delta uniform in [delta_min, delta_max]. The
/// face coordinates also get Gaussian jitter so the re-rendered face is an imperfect
/// reconstruction, as with a learned encoder.
struct ToyBenchmarkSpec {
  int count = 200;
  std::uint64_t seed = 2024;
  std::string style = kStyleClear;
  double delta_min = 0.0;
  double delta_max = 1.2;
  double face_jitter = 0.05;
};
std::vector<EvalSample> toy_benchmark(const SynthesisBackend& backend, const GlassesSubspace& sub,
                                      const ToyBenchmarkSpec& spec);

struct EditOutcome {
  std::string id;
  bool failed = false;
  std::string reason;  // "NoGlassesFound" or "area"
  double b = 0.0;
  double area = 0.0;
  double mse_blended = 0.0;
  double mse_unblended = 0.0;
  std::optional<double> embedding_distance;
};

/// Hook for identity metrics that need a pretrained embedding network.
using EmbeddingDistance = std::function<double(const FaceImage& original, const FaceImage& edited)>;

struct ErsOptions {
  std::string style = kStyleClear;
  std::optional<double> fixed_b;  // unset runs the subspace-position search
  std::vector<EditParams> edits;
  EditConfig config;
  EmbeddingDistance embedding;
};

struct ErsResult {
  double fraction = 0.0;
  int attempted = 0;
  int failed = 0;
  std::vector<EditOutcome> outcomes;
};

/// Failure = NoGlassesFound from the search, or final frame area below the threshold.
ErsResult run_ers(const std::vector<EvalSample>& corpus, const GlassesSubspace& sub, const SynthesisBackend& backend,
                  const ErsOptions& options);
double ers(const std::vector<EvalSample>& corpus, const GlassesSubspace& sub, const SynthesisBackend& backend,
           const ErsOptions& options);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};
MeanStd mean_std(const std::vector<double>& values);

struct EvalReport {
  std::vector<EditOutcome> per_image;  // search enabled
  MeanStd mse_blended;
  MeanStd mse_unblended;
  double ers_search = 0.0;
  double ers_fixed = 0.0;
  double fixed_b = 1.0;
  int attempted = 0;
  int failed_search = 0;
  int failed_fixed = 0;
  std::optional<MeanStd> embedding_distance;
  nlohmann::json config;

  nlohmann::json to_json() const;
  std::string table() const;
};

/// Runs the corpus with the search and with b fixed, and summarizes both.
EvalReport evaluate(const std::vector<EvalSample>& corpus, const GlassesSubspace& sub,
                    const SynthesisBackend& backend, const ErsOptions& options, double fixed_b = 1.0);

}  // namespace eyewear
