#include "doctest.h"
#include "fixtures.hpp"
#include "hack/kinematics_grad.hpp"
#include "hack/skeleton.hpp"

#include <random>

using namespace hack;

namespace {

Eigen::Matrix3Xd chain_rest() {
  Eigen::Matrix3Xd rest(3, kNumJoints);
  for (int k = 0; k < kNumJoints; ++k) rest.col(k) << 0.5 * k, 1.0 + 0.2 * k, 100.0 + 15.0 * k;
  return rest;
}

PoseParams random_pose(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  PoseParams p = PoseParams::zero();
  for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta.data()[i] = u(rng);
  return p;
}

/// World transforms by explicit composition along the chain, as 4x4 matrices.
std::vector<Eigen::Matrix4d> naive_world(const Eigen::Matrix3Xd& rest, const PoseParams& pose) {
  std::vector<Eigen::Matrix4d> out;
  Eigen::Matrix4d acc = Eigen::Matrix4d::Identity();
  for (int k = 0; k < kNumJoints; ++k) {
    const Eigen::Vector3d r = pose.theta.col(k);
    const Eigen::Matrix3d R =
        r.norm() > 0 ? Eigen::AngleAxisd(r.norm(), r.normalized()).toRotationMatrix() : Eigen::Matrix3d::Identity();
    Eigen::Matrix4d to = Eigen::Matrix4d::Identity(), back = Eigen::Matrix4d::Identity(),
                    rot = Eigen::Matrix4d::Identity();
    to.topRightCorner<3, 1>() = rest.col(k);
    back.topRightCorner<3, 1>() = -rest.col(k);
    rot.topLeftCorner<3, 3>() = R;
    acc = acc * to * rot * back;
    out.push_back(acc);
  }
  return out;
}

double naive_limit_energy(const PoseParams& pose, const RotationLimits& lim) {
  double e = 0.0;
  for (int k = 0; k < pose.theta.cols(); ++k) {
    const Eigen::Vector3d a = axis_angle_to_euler<double>(Eigen::Vector3d(pose.theta.col(k))).angles;
    for (int j = 0; j < 3; ++j) {
      if (a[j] < lim.lo(k, j)) e += lim.lo(k, j) - a[j];
      if (a[j] > lim.hi(k, j)) e += a[j] - lim.hi(k, j);
    }
  }
  return e;
}

}  // namespace

TEST_CASE("forward kinematics matches explicit composition") {
  const Skeleton skel = Skeleton::cervical(chain_rest());
  std::mt19937_64 rng(11);
  for (int i = 0; i < 50; ++i) {
    const PoseParams pose = random_pose(rng, 0.4);
    const auto world = forward_kinematics(skel, pose);
    const auto ref = naive_world(skel.rest, pose);
    for (int k = 0; k < kNumJoints; ++k) {
      CHECK((world[k].R - ref[k].topLeftCorner<3, 3>()).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((world[k].t - ref[k].topRightCorner<3, 1>()).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("a root rotation carries every joint rigidly") {
  const Skeleton skel = Skeleton::cervical(chain_rest());
  PoseParams pose = PoseParams::zero();
  pose.theta.col(0) << 0.0, 0.0, M_PI / 2;
  const Eigen::Matrix3Xd q = posed_joints(skel, forward_kinematics(skel, pose));
  const Eigen::Matrix3d Rz = Eigen::AngleAxisd(M_PI / 2, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  for (int k = 0; k < kNumJoints; ++k) {
    const Eigen::Vector3d expect = Rz * (skel.rest.col(k) - skel.rest.col(0)) + skel.rest.col(0);
    CHECK((q.col(k) - expect).norm() < 1e-12);
  }
}

TEST_CASE("skinning at zero pose is bitwise the input") {
  const auto& truth = fixtures::small_truth();
  const Vertices& v = truth.model.template_mesh.vertices();
  const Vertices out = linear_blend_skin(v, truth.model.skeleton, PoseParams::zero(), truth.model.skinning);
  CHECK(out == v);
}

TEST_CASE("one-hot skinning equals the joint transform") {
  const Skeleton skel = Skeleton::cervical(chain_rest());
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-80.0, 80.0);
  const int n = 40;
  Vertices v(3, n);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = u(rng);
  SkinningWeights w;
  w.W = MatrixXd::Zero(n, kNumJoints);
  for (int i = 0; i < n; ++i) w.W(i, i % kNumJoints) = 1.0;
  const PoseParams pose = random_pose(rng, 0.3);
  const Vertices out = linear_blend_skin(v, skel, pose, w);
  const auto ref = naive_world(skel.rest, pose);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector4d h = ref[i % kNumJoints] * v.col(i).homogeneous();
    CHECK((out.col(i) - h.head<3>()).norm() < 1e-9);
  }
}

TEST_CASE("skinning weights validation") {
  SkinningWeights w;
  w.W = MatrixXd::Zero(2, kNumJoints);
  w.W(0, 0) = 1.0;
  w.W.row(1).head(4).setConstant(0.25);
  CHECK_NOTHROW(w.validate(kNumJoints));
  w.W(0, 0) = 0.9;
  CHECK_THROWS_AS(w.validate(kNumJoints), DimensionError);
  w.W(0, 0) = 1.0;
  w.W.row(1).head(5).setConstant(0.2);
  CHECK_THROWS_AS(w.validate(kNumJoints), DimensionError);
  w.W.row(1).setZero();
  w.W(1, 1) = 1.5;
  w.W(1, 2) = -0.5;
  CHECK_THROWS_AS(w.validate(kNumJoints), DimensionError);
}

TEST_CASE("simplex projection keeps the support and normalizes") {
  SkinningWeights w;
  w.W = MatrixXd::Zero(1, kNumJoints);
  w.W(0, 1) = 0.5;
  w.W(0, 2) = 0.5;
  const auto support = w.support();
  w.W(0, 1) = -0.2;
  w.W(0, 2) = 0.6;
  w.W(0, 5) = 0.3;
  w.project_to_simplex(support);
  CHECK(w.W(0, 1) == 0.0);
  CHECK(w.W(0, 2) == doctest::Approx(1.0));
  CHECK(w.W(0, 5) == 0.0);
}

TEST_CASE("limit energy matches a naive loop and is zero inside") {
  const RotationLimits lim = RotationLimits::defaults();
  std::mt19937_64 rng(13);
  for (int i = 0; i < 100; ++i) {
    const PoseParams pose = random_pose(rng, 0.4);
    CHECK(std::abs(rotation_limit_energy(pose, lim) - naive_limit_energy(pose, lim)) < 1e-12);
  }
  CHECK(rotation_limit_energy(PoseParams::zero(), lim) == 0.0);
}

TEST_CASE("limit and similarity gradients match central differences") {
  const RotationLimits lim = RotationLimits::defaults();
  std::mt19937_64 rng(14);
  const double h = 1e-7;
  int checked = 0;
  while (checked < 20) {
    const PoseParams pose = random_pose(rng, 0.4);
    if (on_rotation_limit(pose, lim, 1e-4)) continue;
    ++checked;
    const Eigen::Matrix3Xd g = rotation_limit_energy_gradient(pose, lim);
    const Eigen::Matrix3Xd gs = adjacent_similarity_energy_gradient(pose);
    for (Eigen::Index j = 0; j < pose.theta.size(); ++j) {
      PoseParams p = pose, m = pose;
      p.theta.data()[j] += h;
      m.theta.data()[j] -= h;
      const double fd = (rotation_limit_energy(p, lim) - rotation_limit_energy(m, lim)) / (2 * h);
      CHECK(std::abs(g.data()[j] - fd) < 1e-6);
      const double fds = (adjacent_similarity_energy(p) - adjacent_similarity_energy(m)) / (2 * h);
      CHECK(std::abs(gs.data()[j] - fds) < 1e-6);
    }
  }
}

TEST_CASE("similarity energy matches a naive loop") {
  std::mt19937_64 rng(15);
  const PoseParams pose = random_pose(rng, 1.0);
  double e = 0.0;
  for (int k = 0; k + 1 < kNumJoints; ++k) e += (pose.theta.col(k) - pose.theta.col(k + 1)).squaredNorm();
  CHECK(std::abs(adjacent_similarity_energy(pose) - e) < 1e-12);
}

TEST_CASE("limit table text round trip") {
  const RotationLimits lim = RotationLimits::defaults();
  const RotationLimits back = RotationLimits::parse(lim.to_text());
  CHECK((back.lo - lim.lo).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((back.hi - lim.hi).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(RotationLimits::parse("c7-t1 flexion 5 -4\n"), Error);
}

TEST_CASE("kinematics adjoint matches central differences") {
  const Skeleton skel = Skeleton::cervical(chain_rest());
  std::mt19937_64 rng(16);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Eigen::Matrix3d> A(kNumJoints);
  std::vector<Eigen::Vector3d> b(kNumJoints);
  for (int k = 0; k < kNumJoints; ++k) {
    A[k] = Eigen::Matrix3d::NullaryExpr([&] { return n(rng); });
    b[k] = Eigen::Vector3d::NullaryExpr([&] { return n(rng); });
  }
  auto loss = [&](const Eigen::Matrix3Xd& rest, const Eigen::Matrix3Xd& theta) {
    Skeleton s = skel;
    s.rest = rest;
    const auto w = forward_kinematics(s, PoseParams{theta});
    double L = 0.0;
    for (int k = 0; k < kNumJoints; ++k) L += (A[k].cwiseProduct(w[k].R)).sum() + b[k].dot(w[k].t);
    return L;
  };
  const PoseParams pose = random_pose(rng, 0.5);
  const auto world = forward_kinematics(skel, pose);
  WorldAdjoint adj(kNumJoints);
  adj.dR = A;
  adj.dt = b;
  const FkGradient g = forward_kinematics_backward(skel, pose.theta, world, adj);
  const double h = 1e-6;
  for (Eigen::Index j = 0; j < pose.theta.size(); ++j) {
    Eigen::Matrix3Xd p = pose.theta, m = pose.theta;
    p.data()[j] += h;
    m.data()[j] -= h;
    CHECK(std::abs(g.dtheta.data()[j] - (loss(skel.rest, p) - loss(skel.rest, m)) / (2 * h)) < 1e-5);
    Eigen::Matrix3Xd rp = skel.rest, rm = skel.rest;
    rp.data()[j] += h;
    rm.data()[j] -= h;
    CHECK(std::abs(g.drest.data()[j] - (loss(rp, pose.theta) - loss(rm, pose.theta)) / (2 * h)) < 1e-5);
  }
}

TEST_CASE("joint regressor recovers a planted affine map") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  const int nb = 5, samples = 20;
  const MatrixXd M = MatrixXd::NullaryExpr(3 * kNumJoints, nb, [&] { return n(rng); });
  const VectorXd bias = VectorXd::NullaryExpr(3 * kNumJoints, [&] { return 100 * n(rng); });
  std::vector<VectorXd> betas;
  std::vector<Eigen::Matrix3Xd> joints;
  for (int s = 0; s < samples; ++s) {
    betas.push_back(VectorXd::NullaryExpr(nb, [&] { return n(rng); }));
    const VectorXd j = bias + M * betas.back();
    joints.push_back(Eigen::Map<const Eigen::Matrix3Xd>(j.data(), 3, kNumJoints));
  }
  const JointRegressorFit fit = fit_joint_regressor(betas, joints);
  CHECK_FALSE(fit.regularized);
  CHECK(fit.residual_rms < 1e-9);
  CHECK((fit.regressor.matrix - M).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((fit.regressor.bias - bias).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("vertebra alignment recovers a planted similarity") {
  std::mt19937_64 rng(18);
  std::normal_distribution<double> n(0.0, 10.0);
  SimilarityTransform truth;
  truth.scale = 1.3;
  truth.R = Eigen::AngleAxisd(0.4, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
  truth.t = Eigen::Vector3d(5, -2, 7);
  VertebraLandmarks tmpl(1), scan(1);
  for (int i = 0; i < 3; ++i) {
    LandmarkPair p{"pair" + std::to_string(i), Eigen::Vector3d(n(rng), n(rng), n(rng)), Eigen::Vector3d()};
    p.b = p.a + Eigen::Vector3d(n(rng), n(rng), n(rng));
    tmpl[0].push_back(p);
    scan[0].push_back({p.label, truth(p.a), truth(p.b)});
  }
  VertebraLandmarks t1{{tmpl[0][0]}}, s1{{scan[0][0]}};
  const auto one = align_vertebra_template(t1, s1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].scale == doctest::Approx(truth.scale).epsilon(1e-12));
  for (const auto& p : t1[0]) {
    CHECK((one[0](p.a) - truth(p.a)).norm() < 1e-9);
    CHECK((one[0](p.b) - truth(p.b)).norm() < 1e-9);
  }
  const auto many = align_vertebra_template(tmpl, scan);
  CHECK(many[0].scale == doctest::Approx(truth.scale).epsilon(1e-12));
  CHECK((many[0].R - truth.R).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((many[0].t - truth.t).norm() < 1e-9);
}

TEST_CASE("minimal rotation maps one direction to the other") {
  const Eigen::Vector3d a = Eigen::Vector3d(1, 2, 3).normalized(), b = Eigen::Vector3d(-2, 1, 0.5).normalized();
  const Eigen::Matrix3d R = minimal_rotation(a, b);
  CHECK((R * a - b).norm() < 1e-12);
  CHECK((R.transpose() * R - Eigen::Matrix3d::Identity()).norm() < 1e-12);
  CHECK((minimal_rotation(a, -a) * a + a).norm() < 1e-12);
}
