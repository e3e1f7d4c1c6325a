#pragma once

// Subspace file layout (all integers and floats little-endian):
//
//   "GGSS" | u16 version | u32 L | u32 C | u32 d' | u32 styles | u64 payload bytes |
//   u32 footer bytes | u32 CRC32(payload || footer)
//   payload: axes (d x d', column-major f64) | eigenvalues (d' f64) |
//            per style: u32 name length, name, w_mu (d f64), centroid (d f64)
//   footer:  JSON {backend_fingerprint, K, N, N+, timestamp}

#include "eyewear/latent.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace eyewear {

inline constexpr std::uint16_t kSubspaceFormatVersion = 1;

std::vector<std::uint8_t> serialize_subspace(const GlassesSubspace& sub);
/// BadMagic, VersionMismatch, ChecksumFailure, DimInconsistency.
GlassesSubspace deserialize_subspace(const std::vector<std::uint8_t>& bytes);

void save_subspace(const GlassesSubspace& sub, const std::filesystem::path& path);
GlassesSubspace load_subspace(const std::filesystem::path& path);

/// Exact equality of every stored field, floats compared bitwise.
bool bit_equal(const GlassesSubspace& a, const GlassesSubspace& b);

}  // namespace eyewear
