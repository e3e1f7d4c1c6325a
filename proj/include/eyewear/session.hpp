#pragma once

#include "eyewear/edit.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace eyewear {

/// Where the session's original image came from; enough to rebuild it exactly.
struct SessionSource {
  std::optional<std::uint64_t> toy_seed;  // original = generate(random_face(seed))
  std::vector<std::uint8_t> png;          // otherwise the uploaded PNG bytes
};

/// One user's editing state. Every render replays the edit list from the inversion, so
/// renders are a pure function of (source, style, b, edits).
class EditSession {
 public:
  EditSession(std::string id, FaceImage original, LatentCode inversion, SessionSource source);

  static EditSession from_image(std::string id, const FaceImage& image, const SynthesisBackend& backend);
  static EditSession from_png(std::string id, const std::vector<std::uint8_t>& png, const SynthesisBackend& backend);
  /// Toy backends only: the inversion is the sampled latent itself.
  static EditSession from_toy_seed(std::string id, std::uint64_t seed, const SynthesisBackend& backend);

  /// Runs the b search for `style`; clears nothing, so existing edits are kept.
  InitResult initialize(const std::string& style, const GlassesSubspace& sub, const SynthesisBackend& backend,
                        const EditConfig& cfg);
  /// Appends with |m| clamped to m_max. Needs an initialized style.
  EditParams add_edit(EditParams e, const GlassesSubspace& sub, const EditConfig& cfg);
  /// False when there was nothing to undo.
  bool undo();

  /// Blended output of the current state (the original when uninitialized). Cached.
  const FaceImage& render(const GlassesSubspace& sub, const SynthesisBackend& backend, const EditConfig& cfg);
  LatentCode current_latent(const GlassesSubspace& sub) const;

  const std::string& id() const { return id_; }
  const FaceImage& original() const { return original_; }
  const LatentCode& inversion() const { return w_; }
  const std::optional<std::string>& style() const { return style_; }
  std::optional<double> b() const { return b_; }
  std::optional<double> area_residual() const { return area_residual_; }
  const std::vector<EditParams>& edits() const { return edits_; }

  nlohmann::json record() const;
  /// Rebuilds a session from record(); b and edits are restored verbatim, not recomputed.
  static EditSession replay(const nlohmann::json& record, const SynthesisBackend& backend);

 private:
  std::string id_;
  FaceImage original_;
  LatentCode w_;
  SessionSource source_;
  std::optional<std::string> style_;
  std::optional<double> b_;
  std::optional<double> area_residual_;
  std::vector<EditParams> edits_;
  std::optional<FaceImage> rendered_;
};

}  // namespace eyewear
