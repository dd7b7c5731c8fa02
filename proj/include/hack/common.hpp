#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hack {

/// Base class for every domain error raised by the library. The CLI maps
/// these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape disagreement between two inputs.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// File-system or parse failure.
class IoError : public Error {
 public:
  using Error::Error;
};

using Vertices = Eigen::Matrix3Xd;  // 3 x N, millimeters
using Faces = Eigen::Matrix3Xi;     // 3 x F
using UvCoords = Eigen::Matrix2Xd;  // 2 x N
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

/// Flat 3N view of a 3 x N vertex block (x0 y0 z0 x1 ...).
inline Eigen::Map<VectorXd> flat(Vertices& v) { return {v.data(), v.size()}; }
inline Eigen::Map<const VectorXd> flat(const Vertices& v) { return {v.data(), v.size()}; }

inline Eigen::Map<const Vertices> as_vertices(const VectorXd& flat3n) {
  return {flat3n.data(), 3, flat3n.size() / 3};
}

/// 64-bit FNV-1a over raw bytes; used for topology ids and archive hashes.
inline std::uint64_t fnv1a(const void* data, std::size_t bytes,
                           std::uint64_t seed = 14695981039346656037ull) {
  auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace hack
