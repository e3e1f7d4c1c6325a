#include "eyewear/latent.hpp"

#include "eyewear/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace eyewear {

LatentCode::LatentCode(int layers, int channels) {
  if (layers < 1 || channels < 1) {
    fail(ErrorCode::DimensionMismatch, "latent dims must be positive");
  }
  values_ = Storage::Zero(layers, channels);
}

LatentCode::LatentCode(Storage values) : values_(std::move(values)) {
  if (values_.rows() < 1 || values_.cols() < 1) {
    fail(ErrorCode::DimensionMismatch, "latent dims must be positive");
  }
}

FlatVector vectorize(const LatentCode& latent) {
  FlatVector out(latent.dim());
  std::copy_n(latent.values().data(), latent.dim(), out.data());
  return out;
}

LatentCode devectorize(const FlatVector& flat, int layers, int channels) {
  if (flat.size() != static_cast<Eigen::Index>(layers) * channels) {
    fail(ErrorCode::DimensionMismatch,
         "flat vector of length " + std::to_string(flat.size()) + " cannot form " + std::to_string(layers) +
             "x" + std::to_string(channels));
  }
  LatentCode out(layers, channels);
  std::copy_n(flat.data(), flat.size(), &out.flat(0));
  return out;
}

FlatVector centroid(std::span<const FlatVector> codes) {
  if (codes.empty()) fail(ErrorCode::EmptyInput, "centroid of an empty set");
  const auto d = codes.front().size();
  FlatVector sum = FlatVector::Zero(d);
  for (const auto& c : codes) {
    if (c.size() != d) fail(ErrorCode::DimensionMismatch, "centroid inputs differ in length");
    sum += c;
  }
  return sum / static_cast<double>(codes.size());
}

DifferentialBlock differentials(std::span<const FlatVector> codes, std::string source_image_id) {
  if (codes.size() < 2) fail(ErrorCode::EmptyInput, "differentials need at least two codes");
  const FlatVector center = centroid(codes);
  DifferentialBlock block;
  block.source_image_id = std::move(source_image_id);
  block.columns.resize(center.size(), static_cast<Eigen::Index>(codes.size()));
  for (std::size_t i = 0; i < codes.size(); ++i) {
    block.columns.col(static_cast<Eigen::Index>(i)) = codes[i] - center;
  }
  return block;
}

DifferentialMatrix aggregate(std::span<const DifferentialBlock> blocks) {
  if (blocks.empty()) fail(ErrorCode::EmptyInput, "aggregate of zero blocks");
  const auto d = blocks.front().columns.rows();
  Eigen::Index width = 0;
  for (const auto& b : blocks) {
    if (b.columns.rows() != d) fail(ErrorCode::DimensionMismatch, "blocks differ in latent dimension");
    width += b.columns.cols();
  }
  DifferentialMatrix out;
  out.columns.resize(d, width);
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    out.columns.middleCols(at, b.columns.cols()) = b.columns;
    at += b.columns.cols();
  }
  return out;
}

namespace {

// Largest-magnitude coordinate is made positive (first index wins ties).
void normalize_signs(Eigen::MatrixXd& axes) {
  for (Eigen::Index j = 0; j < axes.cols(); ++j) {
    Eigen::Index best = 0;
    axes.col(j).cwiseAbs().maxCoeff(&best);
    if (axes(best, j) < 0.0) axes.col(j) *= -1.0;
  }
}

int count_effective(const Eigen::VectorXd& eigenvalues_desc, double floor) {
  if (eigenvalues_desc.size() == 0 || !(eigenvalues_desc[0] > 0.0)) return 0;
  const double cut = floor * eigenvalues_desc[0];
  int rank = 0;
  for (Eigen::Index i = 0; i < eigenvalues_desc.size(); ++i) {
    if (eigenvalues_desc[i] > cut) ++rank;
  }
  return rank;
}

}  // namespace

PrincipalAxes principal_axes(const Eigen::MatrixXd& w, int count, EigenPath path, double rank_floor) {
  if (count < 1) fail(ErrorCode::InvalidConfig, "subspace dimension must be >= 1");
  if (w.rows() == 0 || w.cols() == 0) fail(ErrorCode::EmptyInput, "empty differential matrix");
  if (path == EigenPath::Auto) path = w.cols() < w.rows() ? EigenPath::Gram : EigenPath::Svd;

  Eigen::MatrixXd vectors;
  Eigen::VectorXd values;
  if (path == EigenPath::Svd) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(w, Eigen::ComputeThinU);
    values = svd.singularValues().array().square();
    vectors = svd.matrixU();
  } else {
    const Eigen::MatrixXd gram = w.transpose() * w;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    const Eigen::Index n = gram.rows();
    values = eig.eigenvalues().reverse();
    const Eigen::MatrixXd v = eig.eigenvectors().rowwise().reverse();
    const int usable = std::min<Eigen::Index>(n, count_effective(values.cwiseMax(0.0), rank_floor));
    vectors.resize(w.rows(), usable);
    for (int i = 0; i < usable; ++i) {
      vectors.col(i) = (w * v.col(i)) / std::sqrt(values[i]);
      vectors.col(i).normalize();
    }
  }
  values = values.cwiseMax(0.0);

  PrincipalAxes out;
  out.effective_rank = count_effective(values, rank_floor);
  if (out.effective_rank < count) {
    fail(ErrorCode::RankDeficient, "effective rank " + std::to_string(out.effective_rank) +
                                       " is below the requested " + std::to_string(count) + " axes");
  }
  out.axes = vectors.leftCols(count);
  out.eigenvalues = values.head(count);
  normalize_signs(out.axes);
  return out;
}

FlatVector mean_init_vector(std::span<const FlatVector> glasses_free, const FlatVector& augmented_centroid) {
  if (glasses_free.empty()) fail(ErrorCode::EmptyInput, "no glasses-free codes");
  const FlatVector free_mean = centroid(glasses_free);
  if (free_mean.size() != augmented_centroid.size()) {
    fail(ErrorCode::DimensionMismatch, "centroid and glasses-free codes differ in length");
  }
  return augmented_centroid - free_mean;
}

GlassesSubspace fit_subspace(const DifferentialMatrix& w, int d_prime,
                             const std::map<std::string, StyleLatents>& style_data, const FitOptions& options) {
  const auto d = w.columns.rows();
  if (options.layers * options.channels != d) {
    fail(ErrorCode::DimensionMismatch, "differential rows do not match the latent layout");
  }
  PrincipalAxes pa = principal_axes(w.columns, d_prime, options.path, options.rank_floor);

  GlassesSubspace sub;
  sub.layers = options.layers;
  sub.channels = options.channels;
  sub.axes = std::move(pa.axes);
  sub.eigenvalues = std::move(pa.eigenvalues);
  sub.backend_fingerprint = options.backend_fingerprint;
  for (const auto& [style, data] : style_data) {
    const FlatVector c = centroid(data.augmented);
    if (c.size() != d) fail(ErrorCode::DimensionMismatch, "style codes differ from subspace dimension");
    sub.style_centroids[style] = c;
    sub.style_inits[style] = mean_init_vector(data.glasses_free, c);
  }
  return sub;
}

std::vector<std::string> GlassesSubspace::styles() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : style_inits) out.push_back(name);
  return out;
}

}  // namespace eyewear
