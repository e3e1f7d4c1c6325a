#include "eyewear/persistence.hpp"

#include "binary_io.hpp"
#include "eyewear/error.hpp"

#include "json.hpp"

#include <zlib.h>

#include <cstring>

namespace eyewear {

namespace {

constexpr char kMagic[4] = {'G', 'G', 'S', 'S'};
constexpr std::size_t kHeaderBytes = 4 + 2 + 4 * 4 + 8 + 4 + 4;

std::uint32_t crc(const std::uint8_t* data, std::size_t size) {
  uLong c = crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    c = crc32(c, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

void put_vector(std::vector<std::uint8_t>& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) binary::put<double>(out, v[i]);
}

Eigen::VectorXd get_vector(binary::Reader& in, Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = in.get<double>();
  return v;
}

bool bits_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

std::vector<std::uint8_t> serialize_subspace(const GlassesSubspace& sub) {
  const Eigen::Index d = sub.dim();
  if (sub.axes.rows() != d || sub.eigenvalues.size() != sub.axes.cols()) {
    fail(ErrorCode::DimInconsistency, "subspace arrays disagree with L*C and d'");
  }
  if (sub.style_inits.size() != sub.style_centroids.size()) {
    fail(ErrorCode::DimInconsistency, "style vectors and centroids differ in count");
  }

  std::vector<std::uint8_t> payload;
  for (Eigen::Index c = 0; c < sub.axes.cols(); ++c) put_vector(payload, sub.axes.col(c));
  put_vector(payload, sub.eigenvalues);
  for (const auto& [name, mu] : sub.style_inits) {
    auto it = sub.style_centroids.find(name);
    if (it == sub.style_centroids.end()) fail(ErrorCode::DimInconsistency, "style '" + name + "' has no centroid");
    if (mu.size() != d || it->second.size() != d) fail(ErrorCode::DimInconsistency, "style vector length");
    binary::put_string(payload, name);
    put_vector(payload, mu);
    put_vector(payload, it->second);
  }

  const nlohmann::json meta = {{"backend_fingerprint", sub.backend_fingerprint},
                               {"K", sub.metadata.images},
                               {"N", sub.metadata.templates},
                               {"N+", sub.metadata.augmented_templates},
                               {"timestamp", sub.metadata.timestamp}};
  const std::string footer = meta.dump();

  std::vector<std::uint8_t> body = payload;
  body.insert(body.end(), footer.begin(), footer.end());

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  binary::put<std::uint16_t>(out, kSubspaceFormatVersion);
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(sub.layers));
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(sub.channels));
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(sub.d_prime()));
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(sub.style_inits.size()));
  binary::put<std::uint64_t>(out, payload.size());
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(footer.size()));
  binary::put<std::uint32_t>(out, crc(body.data(), body.size()));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

GlassesSubspace deserialize_subspace(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) fail(ErrorCode::BadMagic, "not a subspace file");
  if (bytes.size() < kHeaderBytes) fail(ErrorCode::ChecksumFailure, "truncated header");
  binary::Reader head(bytes.data() + 4, kHeaderBytes - 4);
  const auto version = head.get<std::uint16_t>();
  if (version != kSubspaceFormatVersion) {
    fail(ErrorCode::VersionMismatch, "format version " + std::to_string(version) + ", expected " +
                                         std::to_string(kSubspaceFormatVersion));
  }
  const auto layers = head.get<std::uint32_t>();
  const auto channels = head.get<std::uint32_t>();
  const auto d_prime = head.get<std::uint32_t>();
  const auto style_count = head.get<std::uint32_t>();
  const auto payload_bytes = head.get<std::uint64_t>();
  const auto footer_bytes = head.get<std::uint32_t>();
  const auto checksum = head.get<std::uint32_t>();

  const std::size_t available = bytes.size() - kHeaderBytes;
  if (payload_bytes > available || footer_bytes != available - payload_bytes) {
    fail(ErrorCode::ChecksumFailure, "file length disagrees with the header (truncated or padded)");
  }
  const std::uint8_t* body = bytes.data() + kHeaderBytes;
  if (crc(body, available) != checksum) fail(ErrorCode::ChecksumFailure, "CRC32 mismatch");

  const std::uint64_t d = std::uint64_t{layers} * channels;
  if (layers == 0 || channels == 0 || d_prime == 0 || d_prime > d) {
    fail(ErrorCode::DimInconsistency, "header dimensions are invalid");
  }
  // Fixed part first; style names make the rest variable, so it is walked below.
  const std::uint64_t fixed = 8 * (d * d_prime + d_prime);
  if (payload_bytes < fixed) fail(ErrorCode::DimInconsistency, "payload shorter than the header dimensions");

  GlassesSubspace sub;
  sub.layers = static_cast<int>(layers);
  sub.channels = static_cast<int>(channels);
  binary::Reader in(body, payload_bytes);
  sub.axes.resize(static_cast<Eigen::Index>(d), d_prime);
  for (std::uint32_t c = 0; c < d_prime; ++c) sub.axes.col(c) = get_vector(in, static_cast<Eigen::Index>(d));
  sub.eigenvalues = get_vector(in, d_prime);
  for (std::uint32_t s = 0; s < style_count; ++s) {
    std::string name = in.get_string();
    if (!in.ok() || in.remaining() < 16 * d) fail(ErrorCode::DimInconsistency, "payload ends inside style block");
    sub.style_inits[name] = get_vector(in, static_cast<Eigen::Index>(d));
    sub.style_centroids[name] = get_vector(in, static_cast<Eigen::Index>(d));
  }
  if (!in.ok() || in.remaining() != 0) fail(ErrorCode::DimInconsistency, "payload length disagrees with the header");
  if (sub.style_inits.size() != style_count) fail(ErrorCode::DimInconsistency, "duplicate style names");

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(body + payload_bytes, body + available);
    sub.backend_fingerprint = meta.at("backend_fingerprint").get<std::string>();
    sub.metadata.images = meta.at("K").get<int>();
    sub.metadata.templates = meta.at("N").get<int>();
    sub.metadata.augmented_templates = meta.at("N+").get<int>();
    sub.metadata.timestamp = meta.at("timestamp").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::DimInconsistency, std::string("footer metadata: ") + e.what());
  }
  return sub;
}

void save_subspace(const GlassesSubspace& sub, const std::filesystem::path& path) {
  binary::write_file(path, serialize_subspace(sub));
}

GlassesSubspace load_subspace(const std::filesystem::path& path) {
  return deserialize_subspace(binary::read_file(path));
}

bool bit_equal(const GlassesSubspace& a, const GlassesSubspace& b) {
  if (a.layers != b.layers || a.channels != b.channels || a.backend_fingerprint != b.backend_fingerprint ||
      a.metadata.images != b.metadata.images || a.metadata.templates != b.metadata.templates ||
      a.metadata.augmented_templates != b.metadata.augmented_templates ||
      a.metadata.timestamp != b.metadata.timestamp) {
    return false;
  }
  if (!bits_equal(a.axes, b.axes) || !bits_equal(a.eigenvalues, b.eigenvalues)) return false;
  auto maps_equal = [](const std::map<std::string, FlatVector>& x, const std::map<std::string, FlatVector>& y) {
    if (x.size() != y.size()) return false;
    for (auto i = x.begin(), j = y.begin(); i != x.end(); ++i, ++j) {
      if (i->first != j->first || !bits_equal(i->second, j->second)) return false;
    }
    return true;
  };
  return maps_equal(a.style_inits, b.style_inits) && maps_equal(a.style_centroids, b.style_centroids);
}

}  // namespace eyewear
