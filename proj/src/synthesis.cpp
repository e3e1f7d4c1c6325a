#include "eyewear/synthesis.hpp"

#include "eyewear/error.hpp"
#include "eyewear/toy_backend.hpp"

namespace eyewear {

void SynthesisBackend::check_latent(const LatentCode& latent) const {
  const auto d = dims();
  if (latent.layers() != d.layers || latent.channels() != d.channels) {
    fail(ErrorCode::DimensionMismatch, "latent is " + std::to_string(latent.layers()) + "x" +
                                           std::to_string(latent.channels()) + ", backend expects " +
                                           std::to_string(d.layers) + "x" + std::to_string(d.channels));
  }
  if (!latent.all_finite()) fail(ErrorCode::BackendFailure, "latent contains non-finite values");
}

void SynthesisBackend::check_image(const FaceImage& image) const {
  const auto d = dims();
  if (image.height() != d.height || image.width() != d.width) {
    fail(ErrorCode::DimensionMismatch, "image is " + std::to_string(image.height()) + "x" +
                                           std::to_string(image.width()) + ", backend expects " +
                                           std::to_string(d.height) + "x" + std::to_string(d.width));
  }
}

std::shared_ptr<const SynthesisBackend> make_backend(const nlohmann::json& config) {
  const std::string name = config.value("name", std::string("toy"));
  if (name == "toy") return std::make_shared<toy::ToyBackend>(toy::ToyConfig::from_json(config));
  fail(ErrorCode::InvalidConfig, "unknown synthesis backend '" + name + "'");
}

}  // namespace eyewear
