#pragma once

#include "hack/common.hpp"

#include <vector>

namespace hack {

/// Mean, column-orthonormal basis and explained variance of a sample set.
struct PcaSpace {
  VectorXd mean;
  MatrixXd basis;           // D x C
  VectorXd variance;        // per component, sample variance
  VectorXd variance_ratio;  // per component, fraction of total variance
  bool degenerate = false;  // total variance was zero

  int dim() const { return static_cast<int>(mean.size()); }
  int components() const { return static_cast<int>(basis.cols()); }
};

/// PCA of the columns of `samples` (D x n). Keeps min(keep, n - 1, D)
/// components; basis signs are fixed so each column's largest-magnitude
/// entry is positive.
PcaSpace fit_pca(const MatrixXd& samples, int keep);
PcaSpace fit_pca(const std::vector<VectorXd>& samples, int keep);

/// Number of leading components whose variance ratio exceeds `tol`.
int numerical_rank(const PcaSpace& space, double tol = 1e-12);
/// First `count` components only.
PcaSpace truncate(const PcaSpace& space, int count);

VectorXd project(const PcaSpace& space, const VectorXd& sample);
VectorXd reconstruct(const PcaSpace& space, const VectorXd& coeffs);

/// sum_i beta_i * basis_i, without the mean.
VectorXd synthesize_shape(const PcaSpace& space, const VectorXd& beta);

/// Running sum of variance_ratio.
VectorXd cumulative_variance(const PcaSpace& space);

/// Principal angles (radians, ascending) between the column spans of A and B.
VectorXd principal_angles(const MatrixXd& A, const MatrixXd& B);

}  // namespace hack
