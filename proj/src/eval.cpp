#include "eyewear/eval.hpp"

#include "eyewear/error.hpp"
#include "eyewear/toy_backend.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

namespace eyewear {

namespace {

void check_same(const FaceImage& a, const FaceImage& b) {
  if (a.height() != b.height() || a.width() != b.width()) fail(ErrorCode::DimensionMismatch, "image sizes differ");
}

}  // namespace

double mse(const FaceImage& a, const FaceImage& b) {
  check_same(a, b);
  if (a.empty()) return 0.0;
  std::uint64_t total = 0;
  const auto& x = a.bytes();
  const auto& y = b.bytes();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int d = int{x[i]} - int{y[i]};
    total += static_cast<std::uint64_t>(d * d);
  }
  return static_cast<double>(total) / (255.0 * 255.0 * static_cast<double>(x.size()));
}

GrayImage locality_map(const FaceImage& a, const FaceImage& b) {
  check_same(a, b);
  GrayImage out(a.height(), a.width(), 0.0f);
  const auto& x = a.bytes();
  const auto& y = b.bytes();
  for (std::size_t p = 0; p < out.size(); ++p) {
    int sum = 0;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const int d = int{x[3 * p + ch]} - int{y[3 * p + ch]};
      sum += d * d;
    }
    out.data()[p] = static_cast<float>(sum / (3.0 * 255.0 * 255.0));
  }
  return out;
}

std::vector<EvalSample> toy_benchmark(const SynthesisBackend& backend, const GlassesSubspace& sub,
                                      const ToyBenchmarkSpec& spec) {
  const auto* toy_backend = dynamic_cast<const toy::ToyBackend*>(&backend);
  if (!toy_backend) fail(ErrorCode::InvalidConfig, "the toy benchmark needs the toy backend");
  if (spec.count <= 0) fail(ErrorCode::EmptyCorpus, "benchmark count must be positive");
  auto it = sub.style_inits.find(spec.style);
  if (it == sub.style_inits.end()) fail(ErrorCode::UnknownStyle, "unknown style '" + spec.style + "'");

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> delta(spec.delta_min, spec.delta_max);
  std::normal_distribution<double> jitter(0.0, 1.0);
  const auto& layout = toy_backend->config().layout;
  const std::vector<int> face = {layout.center_x, layout.center_y, layout.radius_x, layout.radius_y,
                                 layout.skin[0],  layout.skin[1],  layout.skin[2],  layout.eye_radius};
  std::vector<EvalSample> out;
  out.reserve(spec.count);
  for (int i = 0; i < spec.count; ++i) {
    const std::uint64_t face_seed = rng();
    const double d = delta(rng);
    EvalSample s;
    s.id = "toy-" + std::to_string(i);
    s.image = backend.generate(toy_backend->random_face(face_seed, 0.05));
    FlatVector w = vectorize(backend.encode(s.image)) - d * it->second;
    for (int k : face) w[k] += spec.face_jitter * jitter(rng);
    s.inversion = devectorize(w, sub.layers, sub.channels);
    out.push_back(std::move(s));
  }
  return out;
}

ErsResult run_ers(const std::vector<EvalSample>& corpus, const GlassesSubspace& sub, const SynthesisBackend& backend,
                  const ErsOptions& options) {
  if (corpus.empty()) fail(ErrorCode::EmptyCorpus, "no evaluation images");
  ErsResult r;
  for (const auto& sample : corpus) {
    EditOutcome o;
    o.id = sample.id;
    try {
      const EditRequest req{options.style, options.edits, options.fixed_b, sample.inversion};
      const EditResult e = edit_pipeline(sample.image, sub, req, backend, options.config);
      o.b = e.b;
      o.area = e.area;
      o.mse_blended = mse(sample.image, e.image);
      o.mse_unblended = mse(sample.image, e.generated);
      if (options.embedding) o.embedding_distance = options.embedding(sample.image, e.image);
      if (e.area < options.config.failure_area()) {
        o.failed = true;
        o.reason = "area";
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoGlassesFound) throw;
      o.failed = true;
      o.reason = "NoGlassesFound";
    }
    ++r.attempted;
    r.failed += o.failed ? 1 : 0;
    r.outcomes.push_back(std::move(o));
  }
  r.fraction = static_cast<double>(r.failed) / r.attempted;
  return r;
}

double ers(const std::vector<EvalSample>& corpus, const GlassesSubspace& sub, const SynthesisBackend& backend,
           const ErsOptions& options) {
  return run_ers(corpus, sub, backend, options).fraction;
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd m;
  if (values.empty()) return m;
  for (double v : values) m.mean += v;
  m.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - m.mean) * (v - m.mean);
  m.std = std::sqrt(ss / static_cast<double>(values.size()));
  return m;
}

EvalReport evaluate(const std::vector<EvalSample>& corpus, const GlassesSubspace& sub,
                    const SynthesisBackend& backend, const ErsOptions& options, double fixed_b) {
  ErsOptions search = options;
  search.fixed_b.reset();
  ErsOptions fixed = options;
  fixed.fixed_b = fixed_b;
  fixed.embedding = nullptr;

  const ErsResult with = run_ers(corpus, sub, backend, search);
  const ErsResult without = run_ers(corpus, sub, backend, fixed);

  EvalReport rep;
  rep.per_image = with.outcomes;
  rep.ers_search = with.fraction;
  rep.ers_fixed = without.fraction;
  rep.fixed_b = fixed_b;
  rep.attempted = with.attempted;
  rep.failed_search = with.failed;
  rep.failed_fixed = without.failed;

  std::vector<double> blended, unblended, embed;
  for (const auto& o : with.outcomes) {
    if (o.reason == "NoGlassesFound") continue;
    blended.push_back(o.mse_blended);
    unblended.push_back(o.mse_unblended);
    if (o.embedding_distance) embed.push_back(*o.embedding_distance);
  }
  rep.mse_blended = mean_std(blended);
  rep.mse_unblended = mean_std(unblended);
  if (!embed.empty()) rep.embedding_distance = mean_std(embed);

  const auto& c = options.config;
  rep.config = {{"style", options.style},
                {"target_area", c.target_area},
                {"failure_area", c.failure_area()},
                {"failure_threshold_note", "frame area below failure_fraction * target_area counts as a failed edit; "
                                           "the 0.25 fraction is a chosen default, not a measured constant"},
                {"failure_fraction", c.failure_fraction},
                {"grid_points", c.grid_points},
                {"b_range", {c.b_min, c.b_max}},
                {"fixed_b", fixed_b},
                {"edits", options.edits.size()}};
  return rep;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& o : per_image) {
    nlohmann::json j = {{"id", o.id},       {"failed", o.failed}, {"reason", o.reason},
                        {"b", o.b},         {"area", o.area},     {"mse", o.mse_blended},
                        {"mse_unblended", o.mse_unblended}};
    if (o.embedding_distance) j["embedding_distance"] = *o.embedding_distance;
    images.push_back(j);
  }
  nlohmann::json j = {{"attempted", attempted},
                      {"ers", {{"search", ers_search}, {"fixed", ers_fixed}, {"fixed_b", fixed_b}}},
                      {"failed", {{"search", failed_search}, {"fixed", failed_fixed}}},
                      {"mse", {{"mean", mse_blended.mean}, {"std", mse_blended.std}}},
                      {"mse_unblended", {{"mean", mse_unblended.mean}, {"std", mse_unblended.std}}},
                      {"config", config},
                      {"images", images}};
  if (embedding_distance) j["embedding_distance"] = {{"mean", embedding_distance->mean}, {"std", embedding_distance->std}};
  return j;
}

std::string EvalReport::table() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-26s %18s %18s\n", "", "search", "fixed b");
  os << line;
  std::snprintf(line, sizeof line, "%-26s %17.2f%% %17.2f%%\n", "edit failure rate (ERS)", 100.0 * ers_search,
                100.0 * ers_fixed);
  os << line;
  std::snprintf(line, sizeof line, "%-26s %18d %18d\n", "failed / attempted", failed_search, failed_fixed);
  os << line;
  std::snprintf(line, sizeof line, "%-26s %9.6f +- %-9.6f\n", "MSE blended", mse_blended.mean, mse_blended.std);
  os << line;
  std::snprintf(line, sizeof line, "%-26s %9.6f +- %-9.6f\n", "MSE without blending", mse_unblended.mean,
                mse_unblended.std);
  os << line;
  if (embedding_distance) {
    std::snprintf(line, sizeof line, "%-26s %9.6f +- %-9.6f\n", "embedding distance", embedding_distance->mean,
                  embedding_distance->std);
    os << line;
  }
  std::snprintf(line, sizeof line, "attempted %d, fixed b = %.2f, failure area < %.4f (chosen threshold)\n",
                attempted, fixed_b, config.value("failure_area", 0.0));
  os << line;
  return os.str();
}

}  // namespace eyewear
