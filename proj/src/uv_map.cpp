#include "hack/uv_map.hpp"

#include <cmath>

namespace hack {

UvAtlas::UvAtlas(const UvCoords& uv, UvResolution res) : res_(res) {
  if (res.rows <= 0 || res.cols <= 0) throw DimensionError("uv atlas: resolution must be positive");
  const auto n = static_cast<std::size_t>(uv.cols());
  row_.resize(n);
  col_.resize(n);
  owner_.assign(static_cast<std::size_t>(res.rows * res.cols), -1);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = std::min(res.cols - 1, static_cast<int>(std::floor(uv(0, i) * res.cols)));
    const int r = std::min(res.rows - 1, static_cast<int>(std::floor(uv(1, i) * res.rows)));
    int& slot = owner_[static_cast<std::size_t>(r * res.cols + c)];
    if (slot >= 0)
      throw DimensionError("uv atlas: texel collision between vertices " + std::to_string(slot) + " and " +
                           std::to_string(i) + " at texel (" + std::to_string(r) + ", " + std::to_string(c) +
                           ")");
    slot = static_cast<int>(i);
    row_[i] = r;
    col_[i] = c;
  }
}

DisplacementMap scatter_to_uv(const UvAtlas& atlas, const Vertices& displacements) {
  require_dims(displacements.cols() == atlas.num_vertices(), "scatter_to_uv: displacement count != vertex count");
  DisplacementMap map(atlas.resolution());
  for (int i = 0; i < atlas.num_vertices(); ++i) map.texel(atlas.row(i), atlas.col(i)) = displacements.col(i);
  return map;
}

DisplacementMap scatter_to_uv(const Mesh& mesh, const Vertices& displacements, UvResolution res) {
  return scatter_to_uv(UvAtlas(mesh.uv(), res), displacements);
}

Eigen::Vector3d sample_shifted(const DisplacementMap& map, int row, int col, double v_shift) {
  if (v_shift == 0.0) return map.texel(row, col);
  const double y = row + v_shift * map.rows();
  const double y0 = std::floor(y);
  const double t = y - y0;
  const int r0 = static_cast<int>(y0);
  Eigen::Vector3d out = Eigen::Vector3d::Zero();
  if (r0 >= 0 && r0 < map.rows()) out += (1.0 - t) * map.texel(r0, col);
  if (t != 0.0 && r0 + 1 >= 0 && r0 + 1 < map.rows()) out += t * map.texel(r0 + 1, col);
  return out;
}

Eigen::Vector3d sample_shifted_dshift(const DisplacementMap& map, int row, int col, double v_shift) {
  const double y = row + v_shift * map.rows();
  const int r0 = static_cast<int>(std::floor(y));
  Eigen::Vector3d lo = Eigen::Vector3d::Zero(), hi = Eigen::Vector3d::Zero();
  if (r0 >= 0 && r0 < map.rows()) lo = map.texel(r0, col);
  if (r0 + 1 >= 0 && r0 + 1 < map.rows()) hi = map.texel(r0 + 1, col);
  return (hi - lo) * static_cast<double>(map.rows());
}

Vertices gather_from_uv(const UvAtlas& atlas, const DisplacementMap& map, double v_shift) {
  require_dims(map.rows() == atlas.resolution().rows && map.cols() == atlas.resolution().cols,
               "gather_from_uv: map resolution differs from atlas");
  Vertices out(3, atlas.num_vertices());
  for (int i = 0; i < atlas.num_vertices(); ++i) out.col(i) = sample_shifted(map, atlas.row(i), atlas.col(i), v_shift);
  return out;
}

Vertices gather_from_uv(const Mesh& mesh, const DisplacementMap& map, double v_shift) {
  return gather_from_uv(UvAtlas(mesh.uv(), map.resolution()), map, v_shift);
}

}  // namespace hack
