#include "hack/pca.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace hack {

PcaSpace fit_pca(const MatrixXd& samples, int keep) {
  const Eigen::Index D = samples.rows(), n = samples.cols();
  if (n < 2) throw Error("fit_pca: need at least 2 samples, got " + std::to_string(n));
  require_dims(keep >= 0, "fit_pca: negative component count");
  PcaSpace s;
  s.mean = samples.rowwise().mean();
  const MatrixXd X = samples.colwise() - s.mean;
  const Eigen::Index C = std::min<Eigen::Index>({keep, n - 1, D});
  Eigen::BDCSVD<MatrixXd> svd(X, Eigen::ComputeThinU);
  const VectorXd sv = svd.singularValues();
  const double total = sv.squaredNorm();
  s.basis = svd.matrixU().leftCols(C);
  for (Eigen::Index c = 0; c < C; ++c) {
    Eigen::Index arg = 0;
    s.basis.col(c).cwiseAbs().maxCoeff(&arg);
    if (s.basis(arg, c) < 0.0) s.basis.col(c) *= -1.0;
  }
  s.variance = sv.head(C).array().square() / static_cast<double>(n - 1);
  s.degenerate = !(total > 0.0);
  s.variance_ratio = s.degenerate ? VectorXd::Zero(C) : VectorXd(sv.head(C).array().square() / total);
  return s;
}

PcaSpace fit_pca(const std::vector<VectorXd>& samples, int keep) {
  if (samples.size() < 2) throw Error("fit_pca: need at least 2 samples, got " + std::to_string(samples.size()));
  MatrixXd X(samples.front().size(), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    require_dims(samples[i].size() == X.rows(), "fit_pca: samples differ in length");
    X.col(static_cast<Eigen::Index>(i)) = samples[i];
  }
  return fit_pca(X, keep);
}

int numerical_rank(const PcaSpace& space, double tol) {
  int r = 0;
  while (r < space.components() && space.variance_ratio[r] > tol) ++r;
  return r;
}

PcaSpace truncate(const PcaSpace& space, int count) {
  require_dims(count >= 0 && count <= space.components(), "truncate: component count out of range");
  PcaSpace s;
  s.mean = space.mean;
  s.basis = space.basis.leftCols(count);
  s.variance = space.variance.head(count);
  s.variance_ratio = space.variance_ratio.head(count);
  s.degenerate = space.degenerate;
  return s;
}

VectorXd project(const PcaSpace& space, const VectorXd& sample) {
  require_dims(sample.size() == space.dim(), "project: sample length " + std::to_string(sample.size()) +
                                                 " != space dimension " + std::to_string(space.dim()));
  return space.basis.transpose() * (sample - space.mean);
}

VectorXd reconstruct(const PcaSpace& space, const VectorXd& coeffs) {
  require_dims(coeffs.size() <= space.components(), "reconstruct: too many coefficients");
  return space.mean + space.basis.leftCols(coeffs.size()) * coeffs;
}

VectorXd synthesize_shape(const PcaSpace& space, const VectorXd& beta) {
  require_dims(beta.size() <= space.components(), "synthesize_shape: |beta| " + std::to_string(beta.size()) +
                                                      " exceeds " + std::to_string(space.components()) +
                                                      " components");
  return space.basis.leftCols(beta.size()) * beta;
}

VectorXd cumulative_variance(const PcaSpace& space) {
  VectorXd c(space.variance_ratio.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = acc += space.variance_ratio[i];
  return c;
}

VectorXd principal_angles(const MatrixXd& A, const MatrixXd& B) {
  require_dims(A.rows() == B.rows(), "principal_angles: ambient dimensions differ");
  const MatrixXd Qa = Eigen::HouseholderQR<MatrixXd>(A).householderQ() * MatrixXd::Identity(A.rows(), A.cols());
  const MatrixXd Qb = Eigen::HouseholderQR<MatrixXd>(B).householderQ() * MatrixXd::Identity(B.rows(), B.cols());
  const MatrixXd M = Qa.transpose() * Qb;
  Eigen::JacobiSVD<MatrixXd> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const VectorXd cosines = svd.singularValues();
  // Small angles are better conditioned through the sine: the residual of
  // Qb's aligned directions after projecting onto span(Qa).
  const MatrixXd Vb = Qb * svd.matrixV();
  const MatrixXd R = Vb - Qa * (Qa.transpose() * Vb);
  VectorXd ang(cosines.size());
  for (Eigen::Index i = 0; i < ang.size(); ++i) {
    const double s = R.col(i).norm();
    const double c = std::min(cosines[i], 1.0);
    ang[i] = std::atan2(s, c);
  }
  std::sort(ang.data(), ang.data() + ang.size());
  return ang;
}

}  // namespace hack
