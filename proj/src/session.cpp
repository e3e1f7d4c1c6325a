#include "eyewear/session.hpp"

#include "eyewear/error.hpp"
#include "eyewear/toy_backend.hpp"

namespace eyewear {

EditSession::EditSession(std::string id, FaceImage original, LatentCode inversion, SessionSource source)
    : id_(std::move(id)), original_(std::move(original)), w_(std::move(inversion)), source_(std::move(source)) {}

EditSession EditSession::from_image(std::string id, const FaceImage& image, const SynthesisBackend& backend) {
  return from_png(std::move(id), encode_png(image), backend);
}

EditSession EditSession::from_png(std::string id, const std::vector<std::uint8_t>& png,
                                  const SynthesisBackend& backend) {
  FaceImage image = decode_png(png);
  LatentCode w = backend.encode(image);
  return EditSession(std::move(id), std::move(image), std::move(w), SessionSource{std::nullopt, png});
}

EditSession EditSession::from_toy_seed(std::string id, std::uint64_t seed, const SynthesisBackend& backend) {
  const auto* toy_backend = dynamic_cast<const toy::ToyBackend*>(&backend);
  if (!toy_backend) fail(ErrorCode::InvalidConfig, "toy_latent_seed needs the toy backend");
  LatentCode w = toy_backend->random_face(seed, 0.05);
  FaceImage image = backend.generate(w);
  return EditSession(std::move(id), std::move(image), std::move(w), SessionSource{seed, {}});
}

InitResult EditSession::initialize(const std::string& style, const GlassesSubspace& sub,
                                   const SynthesisBackend& backend, const EditConfig& cfg) {
  InitResult r = initialize_subspace_position(w_, sub, style, backend, cfg);
  style_ = style;
  b_ = r.b;
  area_residual_ = r.residual;
  rendered_.reset();
  return r;
}

EditParams EditSession::add_edit(EditParams e, const GlassesSubspace& sub, const EditConfig& cfg) {
  if (!b_ || !style_) fail(ErrorCode::UninitializedB, "initialize a style before editing");
  e = clamp_edit(sub, e, cfg);
  edits_.push_back(e);
  rendered_.reset();
  return e;
}

bool EditSession::undo() {
  if (edits_.empty()) return false;
  edits_.pop_back();
  rendered_.reset();
  return true;
}

LatentCode EditSession::current_latent(const GlassesSubspace& sub) const {
  if (!style_) return w_;
  return edit_latent(w_, sub, *style_, b_, edits_);
}

const FaceImage& EditSession::render(const GlassesSubspace& sub, const SynthesisBackend& backend,
                                     const EditConfig& cfg) {
  if (rendered_) return *rendered_;
  if (!style_) {
    rendered_ = original_;
    return *rendered_;
  }
  EditRequest req{*style_, edits_, b_, w_};
  rendered_ = edit_pipeline(original_, sub, req, backend, cfg).image;
  return *rendered_;
}

nlohmann::json EditSession::record() const {
  nlohmann::json edits = nlohmann::json::array();
  for (const auto& e : edits_) edits.push_back({{"axis", e.axis}, {"magnitude", e.magnitude}});
  nlohmann::json source;
  if (source_.toy_seed) {
    source["toy_latent_seed"] = *source_.toy_seed;
  } else {
    source["image_png_base64"] = base64_encode(source_.png);
  }
  return {{"session_id", id_},
          {"style", style_ ? nlohmann::json(*style_) : nlohmann::json(nullptr)},
          {"b", b_ ? nlohmann::json(*b_) : nlohmann::json(nullptr)},
          {"area_residual", area_residual_ ? nlohmann::json(*area_residual_) : nlohmann::json(nullptr)},
          {"edits", edits},
          {"source", source}};
}

EditSession EditSession::replay(const nlohmann::json& record, const SynthesisBackend& backend) {
  try {
    const auto id = record.at("session_id").get<std::string>();
    const auto& source = record.at("source");
    EditSession s = source.contains("toy_latent_seed")
                        ? from_toy_seed(id, source.at("toy_latent_seed").get<std::uint64_t>(), backend)
                        : from_png(id, base64_decode(source.at("image_png_base64").get<std::string>()), backend);
    if (!record.at("style").is_null()) s.style_ = record.at("style").get<std::string>();
    if (!record.at("b").is_null()) s.b_ = record.at("b").get<double>();
    if (record.contains("area_residual") && !record.at("area_residual").is_null()) {
      s.area_residual_ = record.at("area_residual").get<double>();
    }
    for (const auto& e : record.at("edits")) {
      s.edits_.push_back({e.at("axis").get<int>(), e.at("magnitude").get<double>()});
    }
    if (s.style_.has_value() != s.b_.has_value()) fail(ErrorCode::InvalidConfig, "record has style without b");
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("session record: ") + e.what());
  }
}

}  // namespace eyewear
