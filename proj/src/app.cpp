#include "eyewear/app.hpp"

#include "eyewear/error.hpp"
#include "eyewear/morphology.hpp"
#include "eyewear/persistence.hpp"
#include "eyewear/toy_backend.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <ostream>
#include <random>

namespace eyewear::app {

using nlohmann::json;

int exit_code(ErrorCode code) { return code == ErrorCode::NoGlassesFound ? kExitEdit : kExitConfig; }

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("config key '") + key + "': " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  return p.is_absolute() || base.empty() ? p : base / p;
}

std::string epoch_timestamp() {
  const char* env = std::getenv("SOURCE_DATE_EPOCH");
  if (!env || !*env) return {};
  char* end = nullptr;
  const long long secs = std::strtoll(env, &end, 10);
  if (*end != '\0') fail(ErrorCode::InvalidConfig, "SOURCE_DATE_EPOCH is not an integer");
  const std::time_t t = static_cast<std::time_t>(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    rethrow_with_stage(e, name);
  }
}

std::vector<std::filesystem::path> pngs_in(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorCode::Io, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

FitConfig FitConfig::from_json(const json& j, const std::filesystem::path& base) {
  FitConfig c;
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, "fit config must be an object");
  if (j.contains("backend")) c.backend = j.at("backend");
  if (j.contains("images")) {
    const auto& im = j.at("images");
    c.images.kind = get_or<std::string>(im, "source", "toy");
    c.images.count = get_or<int>(im, "count", c.images.count);
    c.images.seed = get_or<std::uint64_t>(im, "seed", c.images.seed);
    if (im.contains("path")) c.images.directory = resolve(base, im.at("path").get<std::string>());
  }
  if (j.contains("templates")) {
    const auto& t = j.at("templates");
    if (t.contains("dir")) c.template_dir = resolve(base, t.at("dir").get<std::string>());
    c.builtin_templates = get_or<int>(t, "builtin", c.builtin_templates);
  }
  c.radii = get_or<std::vector<int>>(j, "radii", c.radii);
  c.d_prime = get_or<int>(j, "d_prime", c.d_prime);
  const auto path = get_or<std::string>(j, "eigen_path", "auto");
  if (path == "auto") {
    c.eigen_path = EigenPath::Auto;
  } else if (path == "svd") {
    c.eigen_path = EigenPath::Svd;
  } else if (path == "gram") {
    c.eigen_path = EigenPath::Gram;
  } else {
    fail(ErrorCode::InvalidConfig, "eigen_path must be auto, svd or gram");
  }
  c.output = resolve(base, get_or<std::string>(j, "output", c.output.string()));
  if (j.contains("corpus_export")) c.corpus_export = resolve(base, j.at("corpus_export").get<std::string>());
  c.timestamp = get_or<std::string>(j, "timestamp", "");

  if (c.images.kind != "toy" && c.images.kind != "dir") fail(ErrorCode::InvalidConfig, "images.source must be toy or dir");
  if (c.images.kind == "toy" && c.images.count <= 0) fail(ErrorCode::InvalidConfig, "images.count must be positive");
  if (c.d_prime <= 0) fail(ErrorCode::InvalidConfig, "d_prime must be positive");
  for (int r : c.radii) {
    if (r <= 0) fail(ErrorCode::InvalidConfig, "morphology radii must be positive");
  }
  return c;
}

std::vector<FaceImage> load_images(const ImageSource& source, const SynthesisBackend& backend) {
  std::vector<FaceImage> out;
  if (source.kind == "dir") {
    for (const auto& p : pngs_in(source.directory)) out.push_back(read_png(p));
    if (out.empty()) fail(ErrorCode::EmptyInput, "no PNG images in " + source.directory.string());
    return out;
  }
  const auto* toy_backend = dynamic_cast<const toy::ToyBackend*>(&backend);
  if (!toy_backend) fail(ErrorCode::InvalidConfig, "toy image source needs the toy backend");
  std::mt19937_64 rng(source.seed);
  for (int k = 0; k < source.count; ++k) out.push_back(backend.generate(toy_backend->random_face(rng(), 0.05)));
  return out;
}

TemplateSet load_template_set(const FitConfig& cfg) {
  return cfg.template_dir ? load_templates(*cfg.template_dir) : builtin_templates(cfg.builtin_templates);
}

GlassesSubspace run_fit(const FitConfig& cfg, std::ostream& log, bool verbose) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const auto backend = stage("backend", [&] { return make_backend(cfg.backend); });
  const auto images = stage("images", [&] { return load_images(cfg.images, *backend); });
  const auto set = stage("templates", [&] { return augment_templates(load_template_set(cfg), cfg.radii); });
  if (verbose) {
    log << "images K=" << images.size() << ", templates N=" << set.original_count << ", N+=" << set.augmented_count()
        << "\n";
    for (const auto& line : set.log) log << "  " << line << "\n";
  }
  SADCorpus corpus = stage("discover", [&] { return discover_appearances(images, set, *backend); });
  if (cfg.corpus_export) stage("export", [&] { export_corpus(corpus, *cfg.corpus_export); });
  GlassesSubspace sub = stage("fit", [&] { return fit_corpus(corpus, cfg.d_prime, cfg.eigen_path); });
  sub.metadata.timestamp = cfg.timestamp.empty() ? epoch_timestamp() : cfg.timestamp;
  stage("save", [&] { save_subspace(sub, cfg.output); });

  log << "eigenvalues:";
  char buf[32];
  for (Eigen::Index i = 0; i < sub.eigenvalues.size(); ++i) {
    std::snprintf(buf, sizeof buf, " %.6g", sub.eigenvalues[i]);
    log << buf;
  }
  log << "\n";
  if (verbose) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < sub.eigenvalues.size(); ++i) total += sub.eigenvalues[i];
    log << "styles:";
    for (const auto& s : sub.styles()) log << " " << s;
    std::snprintf(buf, sizeof buf, "%.2f", std::chrono::duration<double>(clock::now() - t0).count());
    log << "\nsum of retained eigenvalues " << total << ", " << buf << " s\n";
  }
  log << "wrote " << cfg.output.string() << "\n";
  return sub;
}

EditParams parse_edit(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) fail(ErrorCode::InvalidConfig, "edit '" + text + "' is not axis:magnitude");
  try {
    std::size_t used = 0;
    const int axis = std::stoi(text.substr(0, colon), &used);
    if (used != colon) throw std::invalid_argument("axis");
    const std::string mag = text.substr(colon + 1);
    const double m = std::stod(mag, &used);
    if (used != mag.size()) throw std::invalid_argument("magnitude");
    return {axis, m};
  } catch (const std::logic_error&) {
    fail(ErrorCode::InvalidConfig, "edit '" + text + "' is not axis:magnitude");
  }
}

EditConfig edit_config_from_json(const json& j) {
  EditConfig c;
  if (j.is_null()) return c;
  c.target_area = get_or<double>(j, "target_area", c.target_area);
  c.failure_fraction = get_or<double>(j, "failure_fraction", c.failure_fraction);
  c.grid_points = get_or<int>(j, "grid_points", c.grid_points);
  c.b_min = get_or<double>(j, "b_min", c.b_min);
  c.b_max = get_or<double>(j, "b_max", c.b_max);
  c.m_max_scale = get_or<double>(j, "m_max_scale", c.m_max_scale);
  if (j.contains("blend")) {
    const auto& b = j.at("blend");
    c.blend.taper_sigma_outer = get_or<double>(b, "taper_sigma_outer", c.blend.taper_sigma_outer);
    c.blend.taper_sigma_inner = get_or<double>(b, "taper_sigma_inner", c.blend.taper_sigma_inner);
    c.blend.mask_dilation = get_or<int>(b, "mask_dilation", c.blend.mask_dilation);
  }
  c.validate();
  return c;
}

EvalConfig EvalConfig::from_json(const json& j, const std::filesystem::path& base) {
  EvalConfig c;
  if (j.is_null()) return c;
  if (j.contains("corpus")) {
    const auto& k = j.at("corpus");
    c.corpus = get_or<std::string>(k, "source", "toy");
    c.toy.count = get_or<int>(k, "count", c.toy.count);
    c.toy.seed = get_or<std::uint64_t>(k, "seed", c.toy.seed);
    c.toy.style = get_or<std::string>(k, "style", c.toy.style);
    c.toy.delta_min = get_or<double>(k, "delta_min", c.toy.delta_min);
    c.toy.delta_max = get_or<double>(k, "delta_max", c.toy.delta_max);
    c.toy.face_jitter = get_or<double>(k, "face_jitter", c.toy.face_jitter);
    if (k.contains("path")) c.directory = resolve(base, k.at("path").get<std::string>());
  }
  if (c.corpus != "toy" && c.corpus != "dir") fail(ErrorCode::InvalidConfig, "eval corpus must be toy or dir");
  if (j.contains("fixed_b")) c.fixed_b = j.at("fixed_b").get<double>();
  if (j.contains("edits")) {
    for (const auto& e : j.at("edits")) c.edits.push_back(parse_edit(e.get<std::string>()));
  }
  c.edit = edit_config_from_json(j.value("edit", json()));
  c.report = resolve(base, get_or<std::string>(j, "report", c.report.string()));
  if (j.contains("locality_dir")) c.locality_dir = resolve(base, j.at("locality_dir").get<std::string>());
  return c;
}

EvalReport run_eval(const EvalConfig& cfg, const GlassesSubspace& sub, const SynthesisBackend& backend,
                    std::ostream& log) {
  std::vector<EvalSample> corpus;
  if (cfg.corpus == "toy") {
    corpus = toy_benchmark(backend, sub, cfg.toy);
  } else {
    for (const auto& p : pngs_in(cfg.directory)) corpus.push_back({p.stem().string(), read_png(p), std::nullopt});
  }
  if (corpus.empty()) fail(ErrorCode::EmptyCorpus, "evaluation corpus is empty");

  ErsOptions opt;
  opt.style = cfg.toy.style;
  opt.edits = cfg.edits;
  opt.config = cfg.edit;
  EvalReport rep = evaluate(corpus, sub, backend, opt, cfg.fixed_b.value_or(1.0));
  rep.config["corpus"] = cfg.corpus;
  if (cfg.corpus == "toy") {
    rep.config["toy"] = {{"count", cfg.toy.count},         {"seed", cfg.toy.seed},
                         {"delta_min", cfg.toy.delta_min}, {"delta_max", cfg.toy.delta_max},
                         {"face_jitter", cfg.toy.face_jitter}};
  }

  if (cfg.locality_dir) {
    std::filesystem::create_directories(*cfg.locality_dir);
    for (const auto& s : corpus) {
      try {
        const EditRequest req{opt.style, opt.edits, std::nullopt, s.inversion};
        const EditResult r = edit_pipeline(s.image, sub, req, backend, opt.config);
        write_png(locality_map(s.image, r.image), *cfg.locality_dir / (s.id + ".png"));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoGlassesFound) throw;
      }
    }
  }

  std::ofstream out(cfg.report);
  if (!out) fail(ErrorCode::Io, "cannot write " + cfg.report.string());
  out << rep.to_json().dump(2) << "\n";
  log << rep.table();
  log << "wrote " << cfg.report.string() << "\n";
  return rep;
}

ServiceOptions service_options_from_json(const json& j) {
  ServiceOptions o;
  if (j.is_null()) return o;
  o.idle_ttl = std::chrono::milliseconds(static_cast<long long>(1000.0 * get_or<double>(j, "idle_ttl_s", 1800.0)));
  if (j.contains("session_dir")) o.session_dir = j.at("session_dir").get<std::string>();
  o.axis_names = get_or<std::vector<std::string>>(j, "axis_names", {});
  o.max_upload_bytes = get_or<std::size_t>(j, "max_upload_bytes", o.max_upload_bytes);
  return o;
}

}  // namespace eyewear::app
