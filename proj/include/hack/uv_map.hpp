#pragma once

#include "hack/mesh.hpp"

#include <vector>

namespace hack {

struct UvResolution {
  int rows = 256;  // H, along v
  int cols = 256;  // W, along u
};

/// H x W x 3 field of millimeter displacements. Texel (r, c) lives at column
/// r * W + c of `data`.
class DisplacementMap {
 public:
  DisplacementMap() = default;
  explicit DisplacementMap(UvResolution res) : res_(res), data_(Eigen::Matrix3Xd::Zero(3, res.rows * res.cols)) {}

  UvResolution resolution() const { return res_; }
  int rows() const { return res_.rows; }
  int cols() const { return res_.cols; }

  auto texel(int r, int c) { return data_.col(r * res_.cols + c); }
  auto texel(int r, int c) const { return data_.col(r * res_.cols + c); }

  Eigen::Matrix3Xd& data() { return data_; }
  const Eigen::Matrix3Xd& data() const { return data_; }

 private:
  UvResolution res_{};
  Eigen::Matrix3Xd data_;
};

/// Nearest-texel address of every vertex at a given resolution. Construction
/// fails when two vertices land on the same texel.
class UvAtlas {
 public:
  UvAtlas() = default;
  UvAtlas(const UvCoords& uv, UvResolution res);

  UvResolution resolution() const { return res_; }
  int num_vertices() const { return static_cast<int>(row_.size()); }
  int row(int vertex) const { return row_[vertex]; }
  int col(int vertex) const { return col_[vertex]; }

  /// Vertex owning texel (r, c), or -1.
  int owner(int r, int c) const { return owner_[static_cast<std::size_t>(r * res_.cols + c)]; }

 private:
  UvResolution res_{};
  std::vector<int> row_, col_, owner_;
};

DisplacementMap scatter_to_uv(const Mesh& mesh, const Vertices& displacements, UvResolution res);
DisplacementMap scatter_to_uv(const UvAtlas& atlas, const Vertices& displacements);

/// Samples `map` at each vertex's texel center shifted by `v_shift` (UV units)
/// along v. Linear interpolation between texel rows; rows outside the map
/// read zero.
Vertices gather_from_uv(const Mesh& mesh, const DisplacementMap& map, double v_shift);
Vertices gather_from_uv(const UvAtlas& atlas, const DisplacementMap& map, double v_shift);

/// Single-vertex sample and its derivative with respect to the shift.
Eigen::Vector3d sample_shifted(const DisplacementMap& map, int row, int col, double v_shift);
Eigen::Vector3d sample_shifted_dshift(const DisplacementMap& map, int row, int col, double v_shift);

}  // namespace hack
