#pragma once

#include "hack/common.hpp"

#include <cmath>

namespace hack {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moments for one parameter block.
class AdamBlock {
 public:
  AdamBlock() = default;
  AdamBlock(Eigen::Index rows, Eigen::Index cols) : m_(MatrixXd::Zero(rows, cols)), v_(MatrixXd::Zero(rows, cols)) {}

  /// One update at (1-based) step `t`.
  void step(Eigen::Ref<MatrixXd> x, const Eigen::Ref<const MatrixXd>& g, double lr, long t, const AdamConfig& cfg = {}) {
    if (m_.rows() != x.rows() || m_.cols() != x.cols()) {
      m_ = MatrixXd::Zero(x.rows(), x.cols());
      v_ = MatrixXd::Zero(x.rows(), x.cols());
    }
    m_ = cfg.beta1 * m_ + (1.0 - cfg.beta1) * g;
    v_ = cfg.beta2 * v_ + (1.0 - cfg.beta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    x.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg.eps);
  }

 private:
  MatrixXd m_, v_;
};

/// Geometric interpolation from lr0 to lr1 over `epochs` steps.
inline double decayed_rate(double lr0, double lr1, long epoch, long epochs) {
  if (epochs <= 1 || lr1 <= 0.0) return lr0;
  const double t = std::min(1.0, static_cast<double>(epoch) / static_cast<double>(epochs - 1));
  return lr0 * std::pow(lr1 / lr0, t);
}

}  // namespace hack
