#pragma once

// Command workflows behind the `eyewear` binary: fit, edit, eval, serve.

#include "eyewear/edit.hpp"
#include "eyewear/eval.hpp"
#include "eyewear/sad.hpp"
#include "eyewear/service.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace eyewear::app {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;  // config, I/O and fit errors
inline constexpr int kExitEdit = 3;    // edit failures (no glasses produced)

int exit_code(ErrorCode code);

/// Glasses-free fitting images: sampled toy faces or a directory of PNGs.
struct ImageSource {
  std::string kind = "toy";  // "toy" | "dir"
  int count = 100;
  std::uint64_t seed = 1;
  std::filesystem::path directory;
};

struct FitConfig {
  nlohmann::json backend = {{"name", "toy"}};
  ImageSource images;
  std::optional<std::filesystem::path> template_dir;  // builtin set when unset
  int builtin_templates = 28;
  std::vector<int> radii = {2, 4};
  int d_prime = 6;
  EigenPath eigen_path = EigenPath::Auto;
  std::filesystem::path output = "subspace.ggss";
  std::optional<std::filesystem::path> corpus_export;
  std::string timestamp;  // recorded verbatim; SOURCE_DATE_EPOCH when empty

  /// Relative paths resolve against `base`.
  static FitConfig from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
};

std::vector<FaceImage> load_images(const ImageSource& source, const SynthesisBackend& backend);
TemplateSet load_template_set(const FitConfig& cfg);

/// SAD + subspace fit + save. Errors carry the stage name.
GlassesSubspace run_fit(const FitConfig& cfg, std::ostream& log, bool verbose);

/// "axis:magnitude" pairs, comma separated or repeated.
EditParams parse_edit(const std::string& text);

EditConfig edit_config_from_json(const nlohmann::json& j);

struct EvalConfig {
  std::string corpus = "toy";  // "toy" | "dir"
  ToyBenchmarkSpec toy;
  std::filesystem::path directory;
  std::optional<double> fixed_b = 1.0;
  std::vector<EditParams> edits;
  EditConfig edit;
  std::filesystem::path report = "eval_report.json";
  std::optional<std::filesystem::path> locality_dir;

  static EvalConfig from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
};

EvalReport run_eval(const EvalConfig& cfg, const GlassesSubspace& sub, const SynthesisBackend& backend,
                    std::ostream& log);

ServiceOptions service_options_from_json(const nlohmann::json& j);

}  // namespace eyewear::app
