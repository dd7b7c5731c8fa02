#pragma once

#include "hack/mesh.hpp"

#include <Eigen/SparseCore>

namespace hack {

/// Uniform graph Laplacian L = I - D^-1 A over mesh edges. Rows sum to zero.
class LaplacianOperator {
 public:
  LaplacianOperator() = default;
  explicit LaplacianOperator(const Mesh& mesh);
  LaplacianOperator(const Faces& faces, int num_vertices);

  const Eigen::SparseMatrix<double>& matrix() const { return L_; }
  int size() const { return static_cast<int>(L_.rows()); }

 private:
  Eigen::SparseMatrix<double> L_;
  Eigen::SparseMatrix<double> LtL_;
  friend Vertices laplacian_energy_gradient(const LaplacianOperator&, const Vertices&);
};

/// ||L * field||^2 summed over the three coordinates.
double laplacian_energy(const LaplacianOperator& op, const Vertices& field);
/// d energy / d field, 3 x N.
Vertices laplacian_energy_gradient(const LaplacianOperator& op, const Vertices& field);

/// Sum of laplacian_energy over every column of a 3N x B blendshape matrix,
/// and its gradient (same shape as `deltas`).
double laplacian_energy_columns(const LaplacianOperator& op, const MatrixXd& deltas);
MatrixXd laplacian_energy_columns_gradient(const LaplacianOperator& op, const MatrixXd& deltas);

}  // namespace hack
