#include "hack/model.hpp"

#include <cmath>
#include <sstream>

namespace hack {

void HackModel::validate() const {
  const int N = num_vertices();
  const int K = skeleton.num_joints();
  const int B = num_betas();
  auto check = [](bool ok, const std::string& a, long va, const std::string& b, long vb) {
    if (!ok)
      throw DimensionError("model: " + a + " = " + std::to_string(va) + " disagrees with " + b + " = " +
                           std::to_string(vb));
  };
  check(shape_space.dim() == 3 * N, "shape_space dim", shape_space.dim(), "3N", 3L * N);
  check(skinning.W.rows() == N, "skinning_weights N", skinning.W.rows(), "template N", N);
  check(skinning.W.cols() == K, "skinning_weights K", skinning.W.cols(), "skeleton K", K);
  check(skeleton.rest.cols() == K, "skeleton rest K", skeleton.rest.cols(), "skeleton K", K);
  check(joint_regressor.num_joints() == K, "joint_regressor K", joint_regressor.num_joints(), "skeleton K", K);
  check(joint_regressor.num_betas() == B, "joint_regressor |beta|", joint_regressor.num_betas(), "shape |beta|", B);
  check(limits.lo.rows() == K, "limits K", limits.lo.rows(), "skeleton K", K);
  if (has_expressions()) {
    check(expression_space.dim() == 3 * N * num_expressions, "expression_space dim", expression_space.dim(),
          "3N|psi|", 3L * N * num_expressions);
    check(expression_net.net.input_size() == B, "expression_net input", expression_net.net.input_size(),
          "shape |beta|", B);
    check(expression_net.net.output_size() == expression_space.components(), "expression_net output",
          expression_net.net.output_size(), "expression components", expression_space.components());
  }
  if (has_pose_blendshapes()) {
    check(pose_space.dim() == 3 * N * kPoseFeatures, "pose_space dim", pose_space.dim(), "3N*63",
          3L * N * kPoseFeatures);
    check(pose_net.net.input_size() == B, "pose_net input", pose_net.net.input_size(), "shape |beta|", B);
    check(pose_net.net.output_size() == pose_space.components(), "pose_net output", pose_net.net.output_size(),
          "pose components", pose_space.components());
  }
  if (has_larynx()) check(larynx.count() >= B, "larynx maps", larynx.count(), "shape |beta|", B);
}

FullParams FullParams::zeros(const HackModel& model) {
  FullParams p;
  p.beta = VectorXd::Zero(model.num_betas());
  p.psi = VectorXd::Zero(model.num_expressions);
  p.pose = PoseParams::zero(model.num_joints());
  p.alpha = VectorXd::Zero(model.appearance.space.components());
  return p;
}

SubjectRig make_rig(const HackModel& model, const VectorXd& beta) {
  require_dims(beta.size() == model.num_betas(), "make_rig: |beta| " + std::to_string(beta.size()) +
                                                     " != model |beta| " + std::to_string(model.num_betas()));
  SubjectRig rig;
  rig.topology = model.template_mesh.shared_topology();
  rig.skeleton = model.skeleton;
  rig.skeleton.rest = model.joint_regressor.regress(beta);
  rig.order = rig.skeleton.topological_order();
  rig.base = flat(model.template_mesh.vertices()) + synthesize_shape(model.shape_space, beta);
  rig.expression.kind = BlendshapeKind::expression;
  rig.pose.kind = BlendshapeKind::pose;
  if (model.has_expressions())
    rig.expression = personalize(model.expression_net, model.expression_space, beta, model.num_expressions,
                                 BlendshapeKind::expression);
  if (model.has_pose_blendshapes())
    rig.pose = personalize(model.pose_net, model.pose_space, beta, kPoseFeatures, BlendshapeKind::pose);
  rig.weights = model.skinning;
  if (model.has_larynx())
    rig.larynx = make_larynx_field(model.larynx, UvAtlas(model.template_mesh.uv(), model.larynx.resolution), beta);
  return rig;
}

VectorXd rig_rest(const SubjectRig& rig, const FullParams& params) {
  VectorXd rest = rig.base;
  if (rig.expression.count() > 0) {
    const VectorXd be = expression_offset(rig.expression, params.psi);
    rest += be;
  }
  if (rig.pose.count() > 0) {
    const VectorXd bp = pose_offset(rig.pose, params.pose);
    rest += bp;
  }
  if (rig.larynx) {
    const Vertices l = rig.larynx->evaluate(params.larynx);
    rest += flat(l);
  }
  return rest;
}

Vertices rig_posed(const SubjectRig& rig, const FullParams& params) {
  require_dims(params.pose.theta.cols() == rig.skeleton.num_joints(),
               "pose: " + std::to_string(params.pose.theta.cols()) + " joints for a " +
                   std::to_string(rig.skeleton.num_joints()) + "-joint skeleton");
  const VectorXd rest = rig_rest(rig, params);
  const auto world = forward_kinematics<double>(rig.skeleton.parents, rig.order, rig.skeleton.rest, params.pose.theta);
  return linear_blend_skin<double>(as_vertices(rest), world, rig.weights.W);
}

Mesh pose_rig(const SubjectRig& rig, const FullParams& params) {
  return Mesh(rig_posed(rig, params), rig.topology);
}

Mesh rest_template(const HackModel& model, const FullParams& params) {
  const SubjectRig rig = make_rig(model, params.beta);
  return Mesh(Vertices(as_vertices(rig_rest(rig, params))), rig.topology);
}

std::string describe_limit_violations(const PoseParams& pose, const RotationLimits& limits) {
  std::ostringstream os;
  constexpr double kDeg = 180.0 / std::numbers::pi;
  for (Eigen::Index k = 0; k < pose.theta.cols() && k < limits.lo.rows(); ++k) {
    const Eigen::Vector3d e = axis_angle_to_euler<double>(pose.theta.col(k)).angles;
    for (int a = 0; a < 3; ++a)
      if (e[a] < limits.lo(k, a) || e[a] > limits.hi(k, a)) {
        if (os.tellp() > 0) os << "; ";
        const std::string joint =
            k < kNumJoints ? cervical_joint_names()[static_cast<std::size_t>(k)] : "joint " + std::to_string(k);
        os << joint << ' ' << euler_axis_names()[a] << ' ' << e[a] * kDeg << " deg outside [" << limits.lo(k, a) * kDeg
           << ", " << limits.hi(k, a) * kDeg << "]";
      }
  }
  return os.str();
}

Mesh forward(const HackModel& model, const FullParams& params, const ForwardOptions& opts) {
  if (model.limits.lo.rows() == params.pose.theta.cols()) {
    const std::string v = describe_limit_violations(params.pose, model.limits);
    if (!v.empty()) {
      if (opts.strict_limits) throw Error("forward: rotation limits violated: " + v);
      if (opts.warn) opts.warn("rotation limits violated: " + v);
    }
  }
  return pose_rig(make_rig(model, params.beta), params);
}

// ---------------------------------------------------------------------------
// Parameter layout and Jacobian

ParamLayout ParamLayout::make(const HackModel& model, unsigned groups) {
  ParamLayout l;
  l.groups = groups;
  l.num_betas = model.num_betas();
  l.num_psi = model.num_expressions;
  l.num_theta = 3 * model.num_joints();
  int at = 0;
  if (groups & kGroupBeta) {
    l.beta = at;
    at += l.num_betas;
  }
  if (groups & kGroupPsi) {
    l.psi = at;
    at += l.num_psi;
  }
  if (groups & kGroupTheta) {
    l.theta = at;
    at += l.num_theta;
  }
  if (groups & kGroupEta) l.eta = at++;
  if (groups & kGroupTau) l.tau = at++;
  l.size = at;
  return l;
}

VectorXd ParamLayout::pack(const FullParams& p) const {
  VectorXd x(size);
  if (beta >= 0) x.segment(beta, num_betas) = p.beta;
  if (psi >= 0) x.segment(psi, num_psi) = p.psi;
  if (theta >= 0) x.segment(theta, num_theta) = p.pose.flat();
  if (eta >= 0) x[eta] = p.larynx.eta;
  if (tau >= 0) x[tau] = p.larynx.tau;
  return x;
}

void ParamLayout::unpack(const VectorXd& x, FullParams& p) const {
  require_dims(x.size() == size, "ParamLayout::unpack: wrong vector length");
  if (beta >= 0) p.beta = x.segment(beta, num_betas);
  if (psi >= 0) p.psi = x.segment(psi, num_psi);
  if (theta >= 0) p.pose = PoseParams::from_flat(x.segment(theta, num_theta));
  if (eta >= 0) p.larynx.eta = x[eta];
  if (tau >= 0) p.larynx.tau = x[tau];
}

std::string ParamLayout::name(int i) const {
  if (beta >= 0 && i >= beta && i < beta + num_betas) return "beta_" + std::to_string(i - beta);
  if (psi >= 0 && i >= psi && i < psi + num_psi) return "psi_" + std::to_string(i - psi);
  if (theta >= 0 && i >= theta && i < theta + num_theta) return "theta_" + std::to_string(i - theta);
  if (i == eta) return "eta";
  if (i == tau) return "tau";
  return "?";
}

namespace {

// Tangent of the skinned vertices for a rest-shape tangent and world tangents.
void lbs_tangent(const Vertices& rest, const std::vector<RigidTransform<double>>& world, const MatrixXd& W,
                 const Vertices* drest, const std::vector<TransformTangent>* dworld, Eigen::Ref<VectorXd> out) {
  const Eigen::Index N = rest.cols();
  const int K = static_cast<int>(world.size());
  for (Eigen::Index i = 0; i < N; ++i) {
    Eigen::Vector3d d = Eigen::Vector3d::Zero();
    if (drest != nullptr) d = drest->col(i);
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    for (int k = 0; k < K; ++k) {
      const double w = W(i, k);
      if (w == 0.0) continue;
      if (drest != nullptr) acc += w * ((world[k].R - Eigen::Matrix3d::Identity()) * drest->col(i));
      if (dworld != nullptr) acc += w * ((*dworld)[k].dR * rest.col(i) + (*dworld)[k].dt);
    }
    out.segment<3>(3 * i) = d + acc;
  }
}

// Columns u_c = reshape(basis_c, 3N x B) * weights.
MatrixXd contract_basis(const PcaSpace& space, const VectorXd& weights) {
  const Eigen::Index B = weights.size();
  const Eigen::Index D3 = space.dim() / B;
  MatrixXd U(D3, space.components());
  for (int c = 0; c < space.components(); ++c)
    U.col(c) = Eigen::Map<const MatrixXd>(space.basis.col(c).data(), D3, B) * weights;
  return U;
}

}  // namespace

MatrixXd forward_jacobian(const HackModel& model, const FullParams& p, const ParamLayout& layout) {
  const SubjectRig rig = make_rig(model, p.beta);
  const Vertices rest = as_vertices(rig_rest(rig, p));
  const auto world = forward_kinematics<double>(rig.skeleton.parents, rig.order, rig.skeleton.rest, p.pose.theta);
  const Eigen::Index N = rest.cols();
  const int K = rig.skeleton.num_joints();
  MatrixXd J = MatrixXd::Zero(3 * N, layout.size);
  const Eigen::Matrix3Xd zero3K = Eigen::Matrix3Xd::Zero(3, K);

  if (layout.beta >= 0) {
    MatrixXd drest = model.shape_space.basis.leftCols(layout.num_betas);
    if (rig.expression.count() > 0) {
      const MatrixXd Je = model.expression_net.net.input_jacobian(p.beta);
      drest += contract_basis(model.expression_space, p.psi) * Je;
    }
    if (rig.pose.count() > 0) {
      const MatrixXd Jp = model.pose_net.net.input_jacobian(p.beta);
      drest += contract_basis(model.pose_space, pose_features(p.pose)) * Jp;
    }
    for (int j = 0; j < layout.num_betas; ++j) {
      Vertices dr = as_vertices(drest.col(j));
      if (rig.larynx) {
        const auto& f = *rig.larynx;
        const DisplacementMap& L = model.larynx.maps[static_cast<std::size_t>(j)];
        for (int i : f.vertices)
          dr.col(i) += p.larynx.eta * sample_shifted(L, f.atlas.row(i), f.atlas.col(i), p.larynx.tau);
      }
      const VectorXd dj = model.joint_regressor.matrix.col(j);
      const Eigen::Matrix3Xd drest_joints = Eigen::Map<const Eigen::Matrix3Xd>(dj.data(), 3, K);
      const auto dworld = forward_kinematics_tangent(rig.skeleton, p.pose.theta, world, zero3K, drest_joints);
      lbs_tangent(rest, world, rig.weights.W, &dr, &dworld, J.col(layout.beta + j));
    }
  }
  if (layout.psi >= 0) {
    for (int j = 0; j < layout.num_psi; ++j) {
      const Vertices dr = as_vertices(rig.expression.deltas.col(j));
      lbs_tangent(rest, world, rig.weights.W, &dr, nullptr, J.col(layout.psi + j));
    }
  }
  if (layout.theta >= 0) {
    MatrixXd dposeoff;
    if (rig.pose.count() > 0) dposeoff = rig.pose.deltas * pose_features_jacobian(p.pose);
    for (int q = 0; q < layout.num_theta; ++q) {
      Eigen::Matrix3Xd dth = zero3K;
      dth(q % 3, q / 3) = 1.0;
      const auto dworld = forward_kinematics_tangent(rig.skeleton, p.pose.theta, world, dth, zero3K);
      if (rig.pose.count() > 0) {
        const Vertices dr = as_vertices(dposeoff.col(q));
        lbs_tangent(rest, world, rig.weights.W, &dr, &dworld, J.col(layout.theta + q));
      } else {
        lbs_tangent(rest, world, rig.weights.W, nullptr, &dworld, J.col(layout.theta + q));
      }
    }
  }
  if (rig.larynx && (layout.eta >= 0 || layout.tau >= 0)) {
    if (layout.eta >= 0) {
      LarynxParams unit = p.larynx;
      unit.eta = 1.0;
      const Vertices dr = rig.larynx->evaluate(unit);
      lbs_tangent(rest, world, rig.weights.W, &dr, nullptr, J.col(layout.eta));
    }
    if (layout.tau >= 0) {
      const Vertices dr = rig.larynx->d_tau(p.larynx);
      lbs_tangent(rest, world, rig.weights.W, &dr, nullptr, J.col(layout.tau));
    }
  }
  return J;
}

AppearanceStack appearance(const HackModel& model, const VectorXd& alpha) {
  if (!model.appearance.present()) throw Error("appearance: model has no appearance space");
  AppearanceStack s;
  s.rows = model.appearance.rows;
  s.cols = model.appearance.cols;
  s.channels = model.appearance.channels;
  s.data = reconstruct(model.appearance.space, alpha);
  return s;
}

}  // namespace hack
