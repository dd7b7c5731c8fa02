#include "hack/learning.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>

namespace hack {

namespace {

/// Nearest template vertex for every scan point.
std::vector<int> nearest_vertices(const Vertices& V, const Eigen::Matrix3Xd& points) {
  std::vector<int> out(static_cast<std::size_t>(points.cols()));
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    Eigen::Index arg = 0;
    (V.colwise() - points.col(j)).colwise().squaredNorm().minCoeff(&arg);
    out[static_cast<std::size_t>(j)] = static_cast<int>(arg);
  }
  return out;
}

struct Problem {
  const HackModel& model;
  const FitTarget& target;
  const FitWeights& w;
  ParamLayout layout;
  std::vector<int> corr;  // scan mode
  double tau_max = 0.1;

  bool scan_mode() const { return !target.mesh.has_value(); }

  /// Residual vector; J filled when non-null.
  VectorXd residuals(const FullParams& p, MatrixXd* J) const {
    const Vertices v = forward(model, p).vertices();
    MatrixXd Jf;
    if (J != nullptr) Jf = forward_jacobian(model, p, layout);
    const double ss = std::sqrt(w.scan), sl = std::sqrt(w.landmark);
    const Eigen::Index nscan = scan_mode() ? 3 * static_cast<Eigen::Index>(corr.size()) : v.size();
    const Eigen::Index nl = 3 * static_cast<Eigen::Index>(target.landmark_vertices.size());
    const Eigen::Index nreg = layout.size;
    VectorXd r(nscan + nl + nreg);
    if (J != nullptr) J->setZero(r.size(), layout.size);
    if (scan_mode()) {
      for (std::size_t j = 0; j < corr.size(); ++j) {
        const auto row = static_cast<Eigen::Index>(3 * j);
        r.segment<3>(row) = ss * (v.col(corr[j]) - target.points.col(static_cast<Eigen::Index>(j)));
        if (J != nullptr) J->middleRows(row, 3) = ss * Jf.middleRows(3L * corr[j], 3);
      }
    } else {
      r.head(nscan) = ss * (flat(v) - flat(target.mesh->vertices()));
      if (J != nullptr) J->topRows(nscan) = ss * Jf;
    }
    for (std::size_t l = 0; l < target.landmark_vertices.size(); ++l) {
      const int vi = target.landmark_vertices[l];
      const auto row = nscan + static_cast<Eigen::Index>(3 * l);
      r.segment<3>(row) = sl * (v.col(vi) - target.landmarks.col(static_cast<Eigen::Index>(l)));
      if (J != nullptr) J->middleRows(row, 3) = sl * Jf.middleRows(3L * vi, 3);
    }
    // Quadratic regularizers on the free groups.
    const Eigen::Index base = nscan + nl;
    r.tail(nreg).setZero();
    auto reg = [&](int at, int count, double weight, const VectorXd& values) {
      if (at < 0) return;
      const double s = std::sqrt(weight);
      for (int i = 0; i < count; ++i) {
        r[base + at + i] = s * values[i];
        if (J != nullptr) (*J)(base + at + i, at + i) = s;
      }
    };
    reg(layout.beta, layout.num_betas, w.shape, p.beta);
    reg(layout.psi, layout.num_psi, w.expression, p.psi);
    reg(layout.theta, layout.num_theta, w.pose, p.pose.flat());
    reg(layout.eta, 1, w.larynx, VectorXd::Constant(1, p.larynx.eta));
    reg(layout.tau, 1, w.larynx, VectorXd::Constant(1, p.larynx.tau));
    return r;
  }

  void project(VectorXd& x) const {
    if (layout.psi >= 0) x.segment(layout.psi, layout.num_psi) = x.segment(layout.psi, layout.num_psi).cwiseMax(kPsiMin).cwiseMin(kPsiMax);
    if (layout.eta >= 0) x[layout.eta] = std::clamp(x[layout.eta], 0.0, kEtaMax);
    if (layout.tau >= 0) x[layout.tau] = std::clamp(x[layout.tau], -tau_max, tau_max);
  }
};

double mean_distance(const HackModel& model, const FitTarget& target, const FullParams& p) {
  const Vertices v = forward(model, p).vertices();
  if (target.mesh) return (v - target.mesh->vertices()).colwise().norm().mean();
  double sum = 0.0;
  for (Eigen::Index j = 0; j < target.points.cols(); ++j)
    sum += std::sqrt((v.colwise() - target.points.col(j)).colwise().squaredNorm().minCoeff());
  return sum / static_cast<double>(target.points.cols());
}

struct LmOutcome {
  int iterations = 0;
  bool converged = false;
};

LmOutcome levenberg_marquardt(const Problem& prob, FullParams& p, int max_iterations, double tol) {
  LmOutcome out;
  VectorXd x = prob.layout.pack(p);
  MatrixXd J;
  VectorXd r = prob.residuals(p, &J);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  for (int it = 0; it < max_iterations; ++it) {
    out.iterations = it + 1;
    const MatrixXd H = J.transpose() * J;
    const VectorXd g = J.transpose() * r;
    const VectorXd D = H.diagonal().cwiseMax(1e-12 * std::max(1.0, H.diagonal().maxCoeff()));
    bool accepted = false;
    double new_cost = cost;
    VectorXd xn;
    while (lambda < 1e16) {
      MatrixXd A = H;
      A.diagonal() += lambda * D;
      xn = x - A.ldlt().solve(g);
      prob.project(xn);
      FullParams pn = p;
      prob.layout.unpack(xn, pn);
      const VectorXd rn = prob.residuals(pn, nullptr);
      new_cost = rn.squaredNorm();
      if (std::isfinite(new_cost) && new_cost < cost) {
        accepted = true;
        break;
      }
      lambda *= 4.0;
    }
    if (!accepted) {
      out.converged = true;  // no descent direction left at this precision
      break;
    }
    const double decrease = cost - new_cost;
    const double step = (xn - x).norm();
    x = xn;
    prob.layout.unpack(x, p);
    r = prob.residuals(p, &J);
    cost = r.squaredNorm();
    lambda = std::max(lambda / 3.0, 1e-12);
    if (decrease <= tol * std::max(cost, std::numeric_limits<double>::min()) || step <= 1e-14 * (1.0 + x.norm())) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace

double fit_cost(const HackModel& model, const FitTarget& target, const FullParams& p, const FitWeights& w) {
  const Vertices v = forward(model, p).vertices();
  double c = 0.0;
  if (target.mesh) {
    c += w.scan * (v - target.mesh->vertices()).squaredNorm();
  } else {
    for (Eigen::Index j = 0; j < target.points.cols(); ++j)
      c += w.scan * (v.colwise() - target.points.col(j)).colwise().squaredNorm().minCoeff();
  }
  for (std::size_t l = 0; l < target.landmark_vertices.size(); ++l)
    c += w.landmark * (v.col(target.landmark_vertices[l]) - target.landmarks.col(static_cast<Eigen::Index>(l))).squaredNorm();
  c += w.shape * p.beta.squaredNorm() + w.expression * p.psi.squaredNorm() + w.pose * p.pose.theta.squaredNorm() +
       w.larynx * (p.larynx.eta * p.larynx.eta + p.larynx.tau * p.larynx.tau);
  return c;
}

FitReport fit_to_target(const HackModel& model, const FitTarget& target, const FullParams& init, const FitConfig& cfg) {
  if (target.mesh) {
    require_same_topology(model.template_mesh, *target.mesh, "fit_to_target");
  } else if (target.points.cols() == 0) {
    throw Error("fit_to_target: empty point cloud");
  }
  require_dims(target.landmarks.cols() == static_cast<Eigen::Index>(target.landmark_vertices.size()),
               "fit_to_target: landmark positions and vertex indices differ in count");
  for (int vi : target.landmark_vertices)
    if (vi < 0 || vi >= model.num_vertices()) throw Error("fit_to_target: landmark vertex out of range");

  unsigned groups = cfg.free_groups;
  if (!model.has_larynx()) groups &= ~(kGroupEta | kGroupTau);
  if (model.num_expressions == 0) groups &= ~kGroupPsi;
  Problem prob{model, target, cfg.weights, ParamLayout::make(model, groups), {}, 0.1};
  if (model.has_larynx()) prob.tau_max = model.larynx.tau_max;

  FitReport rep;
  rep.params = init;
  if (prob.layout.size == 0) {
    rep.converged = true;
    rep.note = "no free parameters";
  } else if (!prob.scan_mode()) {
    const LmOutcome o = levenberg_marquardt(prob, rep.params, cfg.max_iterations, cfg.tolerance);
    rep.iterations = o.iterations;
    rep.converged = o.converged;
  } else {
    const int per_round = std::max(1, cfg.max_iterations / std::max(1, cfg.icp_iterations));
    std::vector<int> previous;
    for (int round = 0; round < cfg.icp_iterations; ++round) {
      prob.corr = nearest_vertices(forward(model, rep.params).vertices(), target.points);
      if (prob.corr == previous) {
        rep.converged = true;
        break;
      }
      const LmOutcome o = levenberg_marquardt(prob, rep.params, per_round, cfg.tolerance);
      rep.iterations += o.iterations;
      previous = prob.corr;
    }
  }
  if (!rep.converged) rep.note = "iteration limit reached; returning the best parameters found";
  rep.cost = fit_cost(model, target, rep.params, cfg.weights);
  rep.mean_distance = mean_distance(model, target, rep.params);
  return rep;
}

FitReport fit_to_target(const HackModel& model, const Mesh& target, const FullParams& init, const FitConfig& cfg) {
  FitTarget t;
  t.mesh = target;
  return fit_to_target(model, t, init, cfg);
}

}  // namespace hack
