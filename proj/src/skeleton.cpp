#include "hack/skeleton.hpp"
#include "hack/kinematics_grad.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace hack {

Skeleton Skeleton::cervical(const Eigen::Matrix3Xd& rest_positions) {
  require_dims(rest_positions.cols() == kNumJoints, "skeleton: expected 8 rest joints");
  Skeleton s;
  s.names.assign(cervical_joint_names().begin(), cervical_joint_names().end());
  s.parents.resize(kNumJoints);
  for (int k = 0; k < kNumJoints; ++k) s.parents[k] = k - 1;
  s.rest = rest_positions;
  return s;
}

bool Skeleton::is_cervical_chain() const {
  if (num_joints() != kNumJoints || rest.cols() != kNumJoints || names.size() != kNumJoints) return false;
  for (int k = 0; k < kNumJoints; ++k)
    if (parents[k] != k - 1 || names[k] != cervical_joint_names()[k]) return false;
  return true;
}

std::vector<int> Skeleton::topological_order() const {
  const int K = num_joints();
  std::vector<int> order;
  std::vector<int> state(static_cast<std::size_t>(K), 0);
  order.reserve(static_cast<std::size_t>(K));
  for (int start = 0; start < K; ++start) {
    std::vector<int> stack;
    int k = start;
    while (k >= 0 && state[k] == 0) {
      state[k] = 1;
      stack.push_back(k);
      k = parents[k];
      if (k >= K) throw DimensionError("skeleton: parent index out of range");
    }
    if (k >= 0 && state[k] == 1) throw DimensionError("skeleton: parent cycle");
    for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
      state[*it] = 2;
      order.push_back(*it);
    }
  }
  return order;
}

bool PoseParams::is_principal() const {
  for (Eigen::Index k = 0; k < theta.cols(); ++k)
    if (!(theta.col(k).norm() < std::numbers::pi)) return false;
  return true;
}

std::vector<RigidTransform<double>> forward_kinematics(const Skeleton& skel, const PoseParams& pose) {
  require_dims(pose.theta.cols() == skel.num_joints(), "forward_kinematics: pose joint count != skeleton");
  return forward_kinematics<double>(skel.parents, skel.topological_order(), skel.rest, pose.theta);
}

Eigen::Matrix3Xd posed_joints(const Skeleton& skel, const std::vector<RigidTransform<double>>& world) {
  Eigen::Matrix3Xd q(3, skel.num_joints());
  for (int k = 0; k < skel.num_joints(); ++k) q.col(k) = world[k](skel.rest.col(k));
  return q;
}

void SkinningWeights::validate(int num_joints) const {
  if (W.cols() != num_joints)
    throw DimensionError("skinning weights: " + std::to_string(W.cols()) + " columns for " +
                         std::to_string(num_joints) + " joints");
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    if ((W.row(i).array() < 0.0).any())
      throw DimensionError("skinning weights: negative entry in row " + std::to_string(i));
    if (std::abs(W.row(i).sum() - 1.0) > 1e-6)
      throw DimensionError("skinning weights: row " + std::to_string(i) + " does not sum to 1");
    if ((W.row(i).array() > 0.0).count() > kMaxInfluences)
      throw DimensionError("skinning weights: row " + std::to_string(i) + " has more than 4 influences");
  }
}

void SkinningWeights::project_to_simplex(const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& mask) {
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < W.cols(); ++k) {
      double& w = W(i, k);
      if (!mask(i, k) || w < 0.0) w = 0.0;
      s += w;
    }
    if (s > 0.0) {
      W.row(i) /= s;
    } else {
      // Everything clamped away: fall back to uniform over the support.
      const double cnt = static_cast<double>(mask.row(i).count());
      for (Eigen::Index k = 0; k < W.cols(); ++k) W(i, k) = mask(i, k) ? 1.0 / cnt : 0.0;
    }
  }
}

Vertices linear_blend_skin(const Vertices& verts, const Skeleton& skel, const PoseParams& pose,
                           const SkinningWeights& weights) {
  const auto world = forward_kinematics(skel, pose);
  return linear_blend_skin<double>(verts, world, weights.W);
}

// ---------------------------------------------------------------------------
// Rotation limits

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

int joint_index(const std::string& name) {
  const auto& names = cervical_joint_names();
  for (int k = 0; k < kNumJoints; ++k)
    if (names[k] == name) return k;
  return -1;
}

int axis_index(const std::string& name) {
  const auto& names = euler_axis_names();
  for (int a = 0; a < 3; ++a)
    if (names[a] == name) return a;
  return -1;
}

}  // namespace

RotationLimits RotationLimits::defaults() {
  // Per-segment ranges (degrees) after common cervical kinematics surveys;
  // flexion column is [extension, flexion], the others are symmetric.
  static const double table[kNumJoints][6] = {
      // flex min, flex max, lateral, lateral, axial, axial
      {-4, 5, -4, 4, -2, 2},      // c7-t1
      {-7, 10, -7, 7, -6, 6},     // c6-c7
      {-8, 12, -8, 8, -7, 7},     // c5-c6
      {-8, 12, -11, 11, -7, 7},   // c4-c5
      {-6, 9, -11, 11, -7, 7},    // c3-c4
      {-4, 6, -10, 10, -3, 3},    // c2-c3
      {-10, 10, -5, 5, -40, 40},  // c1-c2
      {-15, 10, -5, 5, -5, 5},    // o-c1
  };
  RotationLimits lim;
  lim.lo.resize(kNumJoints, 3);
  lim.hi.resize(kNumJoints, 3);
  for (int k = 0; k < kNumJoints; ++k)
    for (int a = 0; a < 3; ++a) {
      lim.lo(k, a) = table[k][2 * a] * kDeg;
      lim.hi(k, a) = table[k][2 * a + 1] * kDeg;
    }
  return lim;
}

RotationLimits RotationLimits::symmetric(int num_joints, double bound) {
  RotationLimits lim;
  lim.lo = Eigen::Matrix<double, Eigen::Dynamic, 3>::Constant(num_joints, 3, -bound);
  lim.hi = Eigen::Matrix<double, Eigen::Dynamic, 3>::Constant(num_joints, 3, bound);
  return lim;
}

void RotationLimits::validate() const {
  require_dims(lo.rows() == hi.rows(), "rotation limits: lo/hi joint counts differ");
  for (Eigen::Index k = 0; k < lo.rows(); ++k)
    for (int a = 0; a < 3; ++a)
      if (!(lo(k, a) <= 0.0 && 0.0 <= hi(k, a)))
        throw DimensionError("rotation limits: joint " + std::to_string(k) + " axis " + euler_axis_names()[a] +
                             " must satisfy min <= 0 <= max");
}

RotationLimits RotationLimits::parse(const std::string& text) {
  RotationLimits lim = RotationLimits::symmetric(kNumJoints, 0.0);
  Eigen::Matrix<bool, kNumJoints, 3> seen = Eigen::Matrix<bool, kNumJoints, 3>::Constant(false);
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string joint, axis;
    double mn = 0.0, mx = 0.0;
    if (!(ls >> joint)) continue;
    if (!(ls >> axis >> mn >> mx))
      throw IoError("limits:" + std::to_string(lineno) + ": expected '<joint> <axis> <min_deg> <max_deg>'");
    const int k = joint_index(joint), a = axis_index(axis);
    if (k < 0) throw IoError("limits:" + std::to_string(lineno) + ": unknown joint '" + joint + "'");
    if (a < 0) throw IoError("limits:" + std::to_string(lineno) + ": unknown axis '" + axis + "'");
    lim.lo(k, a) = mn * kDeg;
    lim.hi(k, a) = mx * kDeg;
    seen(k, a) = true;
  }
  if (!seen.all()) throw IoError("limits: table must list every (joint, axis) pair");
  lim.validate();
  return lim;
}

RotationLimits RotationLimits::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("limits: cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

std::string RotationLimits::to_text() const {
  std::ostringstream os;
  os.precision(17);
  for (int k = 0; k < lo.rows(); ++k)
    for (int a = 0; a < 3; ++a)
      os << cervical_joint_names()[k] << ' ' << euler_axis_names()[a] << ' ' << lo(k, a) / kDeg << ' '
         << hi(k, a) / kDeg << '\n';
  return os.str();
}

void RotationLimits::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("limits: cannot write " + path.string());
  os << to_text();
}

double rotation_limit_energy(const PoseParams& pose, const RotationLimits& limits) {
  require_dims(limits.lo.rows() == pose.theta.cols(), "rotation_limit_energy: limits joint count != pose");
  double e = 0.0;
  for (Eigen::Index k = 0; k < pose.theta.cols(); ++k) {
    const Eigen::Vector3d ang = axis_angle_to_euler<double>(pose.theta.col(k)).angles;
    for (int a = 0; a < 3; ++a) e += std::max(ang[a] - limits.hi(k, a), 0.0) + std::max(limits.lo(k, a) - ang[a], 0.0);
  }
  return e;
}

Eigen::Matrix3Xd rotation_limit_energy_gradient(const PoseParams& pose, const RotationLimits& limits) {
  require_dims(limits.lo.rows() == pose.theta.cols(), "rotation_limit_energy: limits joint count != pose");
  Eigen::Matrix3Xd g = Eigen::Matrix3Xd::Zero(3, pose.theta.cols());
  for (Eigen::Index k = 0; k < pose.theta.cols(); ++k) {
    const Eigen::Vector3d r = pose.theta.col(k);
    const Eigen::Matrix3d R = rodrigues<double>(r);
    const Eigen::Vector3d ang = euler_from_matrix<double>(R).angles;
    Eigen::Vector3d dang = Eigen::Vector3d::Zero();
    for (int a = 0; a < 3; ++a) {
      if (ang[a] > limits.hi(k, a)) dang[a] = 1.0;
      if (ang[a] < limits.lo(k, a)) dang[a] = -1.0;
    }
    if (dang.isZero()) continue;
    const auto dE = euler_gradient_wrt_matrix<double>(R);
    Eigen::Matrix3d dR = Eigen::Matrix3d::Zero();
    for (int a = 0; a < 3; ++a) dR += dang[a] * dE[a];
    const auto dRdr = rodrigues_derivatives<double>(r);
    for (int a = 0; a < 3; ++a) g(a, k) = (dR.array() * dRdr[a].array()).sum();
  }
  return g;
}

bool on_rotation_limit(const PoseParams& pose, const RotationLimits& limits, double tol) {
  for (Eigen::Index k = 0; k < pose.theta.cols(); ++k) {
    const Eigen::Vector3d ang = axis_angle_to_euler<double>(pose.theta.col(k)).angles;
    for (int a = 0; a < 3; ++a)
      if (std::abs(ang[a] - limits.hi(k, a)) < tol || std::abs(ang[a] - limits.lo(k, a)) < tol) return true;
  }
  return false;
}

double adjacent_similarity_energy(const PoseParams& pose) {
  const auto& t = pose.theta;
  if (t.cols() < 2) return 0.0;
  return (t.rightCols(t.cols() - 1) - t.leftCols(t.cols() - 1)).squaredNorm();
}

Eigen::Matrix3Xd adjacent_similarity_energy_gradient(const PoseParams& pose) {
  const auto& t = pose.theta;
  Eigen::Matrix3Xd g = Eigen::Matrix3Xd::Zero(3, t.cols());
  for (Eigen::Index k = 0; k + 1 < t.cols(); ++k) {
    const Eigen::Vector3d d = 2.0 * (t.col(k) - t.col(k + 1));
    g.col(k) += d;
    g.col(k + 1) -= d;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Joint regression

Eigen::Matrix3Xd JointRegressor::regress(const VectorXd& beta) const {
  require_dims(beta.size() == matrix.cols(), "regress_joints: |beta| " + std::to_string(beta.size()) +
                                                 " != regressor width " + std::to_string(matrix.cols()));
  const VectorXd j = bias + matrix * beta;
  return Eigen::Map<const Eigen::Matrix3Xd>(j.data(), 3, j.size() / 3);
}

JointRegressorFit fit_joint_regressor(const std::vector<VectorXd>& betas, const std::vector<Eigen::Matrix3Xd>& joints,
                                      double ridge) {
  require_dims(!betas.empty() && betas.size() == joints.size(), "fit_joint_regressor: need matching non-empty pairs");
  const auto n = static_cast<Eigen::Index>(betas.size());
  const Eigen::Index B = betas.front().size();
  const Eigen::Index J = joints.front().size();
  MatrixXd X(n, B + 1);
  MatrixXd Y(n, J);
  for (Eigen::Index i = 0; i < n; ++i) {
    require_dims(betas[i].size() == B && joints[i].size() == J, "fit_joint_regressor: inconsistent pair sizes");
    X(i, 0) = 1.0;
    X.row(i).tail(B) = betas[i].transpose();
    Y.row(i) = Eigen::Map<const VectorXd>(joints[i].data(), J).transpose();
  }
  JointRegressorFit fit;
  MatrixXd coef;  // (B + 1) x J
  if (n == 1) {
    coef = MatrixXd::Zero(B + 1, J);
    coef.row(0) = Y.row(0);
  } else {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(X);
    if (qr.rank() == B + 1) {
      coef = qr.solve(Y);
    } else {
      if (!(ridge > 0.0)) throw Error("fit_joint_regressor: degenerate design matrix without regularization");
      // Ridge on the slopes only, so the bias stays the mean joint layout.
      MatrixXd A = X.transpose() * X;
      A.diagonal().tail(B).array() += ridge;
      coef = A.ldlt().solve(X.transpose() * Y);
      fit.regularized = true;
    }
  }
  fit.regressor.bias = coef.row(0).transpose();
  fit.regressor.matrix = coef.bottomRows(B).transpose();
  fit.residual_rms = std::sqrt((X * coef - Y).squaredNorm() / static_cast<double>(Y.size()));
  return fit;
}

// ---------------------------------------------------------------------------
// Vertebra alignment

Eigen::Matrix3d minimal_rotation(const Eigen::Vector3d& from, const Eigen::Vector3d& to) {
  const Eigen::Vector3d f = from.normalized(), t = to.normalized();
  const Eigen::Vector3d axis = f.cross(t);
  const double s = axis.norm(), c = f.dot(t);
  if (s < 1e-15) {
    if (c > 0.0) return Eigen::Matrix3d::Identity();
    // Antiparallel: half turn about any axis orthogonal to f.
    Eigen::Vector3d ortho = f.cross(Eigen::Vector3d::UnitX());
    if (ortho.norm() < 1e-6) ortho = f.cross(Eigen::Vector3d::UnitY());
    return rodrigues<double>(ortho.normalized() * std::numbers::pi);
  }
  return rodrigues<double>(axis / s * std::atan2(s, c));
}

std::vector<SimilarityTransform> align_vertebra_template(const VertebraLandmarks& tmpl, const VertebraLandmarks& scan) {
  require_dims(tmpl.size() == scan.size(), "align_vertebra_template: vertebra counts differ");
  std::vector<SimilarityTransform> out;
  out.reserve(tmpl.size());
  for (std::size_t v = 0; v < tmpl.size(); ++v) {
    if (tmpl[v].empty()) throw Error("align_vertebra_template: vertebra " + std::to_string(v) + " has no landmarks");
    std::map<std::string, const LandmarkPair*> scan_by_label;
    for (const auto& p : scan[v]) scan_by_label[p.label] = &p;
    double len_t = 0.0, len_s = 0.0;
    Eigen::Vector3d mid_t = Eigen::Vector3d::Zero(), mid_s = Eigen::Vector3d::Zero();
    std::vector<Eigen::Vector3d> dir_t, dir_s;
    for (const auto& pt : tmpl[v]) {
      const auto it = scan_by_label.find(pt.label);
      if (it == scan_by_label.end())
        throw Error("align_vertebra_template: scan lacks label '" + pt.label + "' on vertebra " + std::to_string(v));
      const LandmarkPair& ps = *it->second;
      const double lt = (pt.b - pt.a).norm(), ls = (ps.b - ps.a).norm();
      if (lt == 0.0 || ls == 0.0)
        throw Error("align_vertebra_template: zero-length landmark pair '" + pt.label + "' on vertebra " +
                    std::to_string(v));
      len_t += lt;
      len_s += ls;
      mid_t += 0.5 * (pt.a + pt.b);
      mid_s += 0.5 * (ps.a + ps.b);
      dir_t.push_back((pt.b - pt.a) / lt);
      dir_s.push_back((ps.b - ps.a) / ls);
    }
    const double cnt = static_cast<double>(tmpl[v].size());
    mid_t /= cnt;
    mid_s /= cnt;
    SimilarityTransform T;
    T.scale = len_s / len_t;
    Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < dir_t.size(); ++i) H += dir_s[i] * dir_t[i].transpose();
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (dir_t.size() >= 2 && sv[1] > 1e-9 * sv[0]) {
      Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
      if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) D(2, 2) = -1.0;
      T.R = svd.matrixU() * D * svd.matrixV().transpose();
    } else {
      T.R = minimal_rotation(dir_t.front(), dir_s.front());
    }
    T.t = mid_s - T.scale * (T.R * mid_t);
    out.push_back(T);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Kinematic derivatives

FkGradient forward_kinematics_backward(const Skeleton& skel, const Eigen::Matrix3Xd& theta,
                                       const std::vector<RigidTransform<double>>& world, WorldAdjoint adj) {
  const int K = skel.num_joints();
  FkGradient g;
  g.dtheta = Eigen::Matrix3Xd::Zero(3, K);
  g.drest = Eigen::Matrix3Xd::Zero(3, K);
  const auto order = skel.topological_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int k = *it;
    const int p = skel.parents[k];
    const Eigen::Vector3d r = theta.col(k);
    const Eigen::Matrix3d Rk = rodrigues<double>(r);
    const Eigen::Vector3d pk = skel.rest.col(k);
    const Eigen::Vector3d ck = pk - Rk * pk;
    const Eigen::Matrix3d Rp = p < 0 ? Eigen::Matrix3d::Identity() : world[p].R;
    if (p >= 0) {
      adj.dR[p] += adj.dR[k] * Rk.transpose() + adj.dt[k] * ck.transpose();
      adj.dt[p] += adj.dt[k];
    }
    Eigen::Matrix3d Rbar = Rp.transpose() * adj.dR[k];
    const Eigen::Vector3d cbar = Rp.transpose() * adj.dt[k];
    Rbar -= cbar * pk.transpose();
    g.drest.col(k) += cbar - Rk.transpose() * cbar;
    const auto dRdr = rodrigues_derivatives<double>(r);
    for (int a = 0; a < 3; ++a) g.dtheta(a, k) = (Rbar.array() * dRdr[a].array()).sum();
  }
  return g;
}

std::vector<TransformTangent> forward_kinematics_tangent(const Skeleton& skel, const Eigen::Matrix3Xd& theta,
                                                         const std::vector<RigidTransform<double>>& world,
                                                         const Eigen::Matrix3Xd& dtheta,
                                                         const Eigen::Matrix3Xd& drest) {
  const int K = skel.num_joints();
  std::vector<TransformTangent> d(static_cast<std::size_t>(K));
  for (int k : skel.topological_order()) {
    const int p = skel.parents[k];
    const Eigen::Vector3d r = theta.col(k);
    const Eigen::Matrix3d Rk = rodrigues<double>(r);
    const Eigen::Vector3d pk = skel.rest.col(k);
    Eigen::Matrix3d dRk = Eigen::Matrix3d::Zero();
    if (!dtheta.col(k).isZero()) {
      const auto dRdr = rodrigues_derivatives<double>(r);
      for (int a = 0; a < 3; ++a) dRk += dtheta(a, k) * dRdr[a];
    }
    const Eigen::Vector3d dpk = drest.col(k);
    const Eigen::Vector3d ck = pk - Rk * pk;
    const Eigen::Vector3d dck = dpk - dRk * pk - Rk * dpk;
    if (p < 0) {
      d[k].dR = dRk;
      d[k].dt = dck;
    } else {
      d[k].dR = d[p].dR * Rk + world[p].R * dRk;
      d[k].dt = d[p].dR * ck + world[p].R * dck + d[p].dt;
    }
  }
  return d;
}

}  // namespace hack
