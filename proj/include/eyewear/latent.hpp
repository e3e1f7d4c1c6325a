#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace eyewear {

using FlatVector = Eigen::VectorXd;

/// Generator latent: `layers` rows of `channels` values, stored layer-major.
class LatentCode {
 public:
  using Storage = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  LatentCode() = default;
  LatentCode(int layers, int channels);
  explicit LatentCode(Storage values);

  int layers() const { return static_cast<int>(values_.rows()); }
  int channels() const { return static_cast<int>(values_.cols()); }
  int dim() const { return layers() * channels(); }

  double& at(int layer, int channel) { return values_(layer, channel); }
  double at(int layer, int channel) const { return values_(layer, channel); }
  /// Access by flat (layer-major) index.
  double& flat(int index) { return values_.data()[index]; }
  double flat(int index) const { return values_.data()[index]; }

  const Storage& values() const { return values_; }

  bool all_finite() const { return values_.allFinite(); }

  friend bool operator==(const LatentCode& a, const LatentCode& b) {
    return a.values_.rows() == b.values_.rows() && a.values_.cols() == b.values_.cols() &&
           a.values_ == b.values_;
  }

 private:
  Storage values_;
};

FlatVector vectorize(const LatentCode& latent);
LatentCode devectorize(const FlatVector& flat, int layers, int channels);

FlatVector centroid(std::span<const FlatVector> codes);

struct DifferentialBlock {
  Eigen::MatrixXd columns;  // d x N+
  std::string source_image_id;
};

struct DifferentialMatrix {
  Eigen::MatrixXd columns;  // d x (K * N+)
};

DifferentialBlock differentials(std::span<const FlatVector> codes, std::string source_image_id);
DifferentialMatrix aggregate(std::span<const DifferentialBlock> blocks);

struct FitMetadata {
  int images = 0;             // K
  int templates = 0;          // N
  int augmented_templates = 0;  // N+
  std::string timestamp;
};

struct GlassesSubspace {
  int layers = 0;
  int channels = 0;
  Eigen::MatrixXd axes;        // d x d', orthonormal columns
  Eigen::VectorXd eigenvalues;  // d', descending
  std::map<std::string, FlatVector> style_inits;
  std::map<std::string, FlatVector> style_centroids;
  std::string backend_fingerprint;
  FitMetadata metadata;

  int dim() const { return layers * channels; }
  int d_prime() const { return static_cast<int>(axes.cols()); }
  std::vector<std::string> styles() const;
};

/// Latent sets used to derive the per-style initialization vectors.
struct StyleLatents {
  std::vector<FlatVector> augmented;     // every augmented code of this style, all images
  std::vector<FlatVector> glasses_free;  // inversions of the glasses-free images
};

enum class EigenPath { Auto, Svd, Gram };

struct FitOptions {
  int layers = 0;
  int channels = 0;
  std::string backend_fingerprint;
  EigenPath path = EigenPath::Auto;
  double rank_floor = 1e-10;  // relative to the leading eigenvalue
};

GlassesSubspace fit_subspace(const DifferentialMatrix& w, int d_prime,
                             const std::map<std::string, StyleLatents>& style_data, const FitOptions& options);

/// Leading `count` principal axes and eigenvalues of W W^T (eigenvalues = squared singular values).
struct PrincipalAxes {
  Eigen::MatrixXd axes;
  Eigen::VectorXd eigenvalues;
  int effective_rank = 0;
};
PrincipalAxes principal_axes(const Eigen::MatrixXd& w, int count, EigenPath path = EigenPath::Auto,
                             double rank_floor = 1e-10);

FlatVector mean_init_vector(std::span<const FlatVector> glasses_free, const FlatVector& augmented_centroid);

}  // namespace eyewear
