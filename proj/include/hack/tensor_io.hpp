#pragma once

#include "hack/common.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace hack {

/// Dense float32 tensor in row-major order, the payload of the raw "HCK1"
/// file format: magic "HCK1", u32 rank, u32 dims[rank], little-endian f32.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t numel() const;
  bool operator==(const Tensor&) const = default;

  /// rows x cols matrix, row-major payload.
  static Tensor from_matrix(const MatrixXd& m);
  /// 3 x N vertices stored as an N x 3 tensor.
  static Tensor from_vertices(const Vertices& v);
  static Tensor from_vector(const VectorXd& v);

  MatrixXd to_matrix() const;  // requires rank 2
  Vertices to_vertices() const;  // requires dims {N, 3}
  VectorXd to_vector() const;  // any rank, flattened row-major
};

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

/// Serialized bytes exactly as written to disk.
std::vector<unsigned char> encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::vector<unsigned char>& bytes);

}  // namespace hack
