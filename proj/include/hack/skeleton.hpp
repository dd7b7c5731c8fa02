#pragma once

#include "hack/common.hpp"
#include "hack/rotation.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace hack {

inline constexpr int kNumJoints = 8;
inline constexpr int kPoseDims = 3 * kNumJoints;

/// Cervical joints from the root (c7-t1) to the skull (o-c1).
inline const std::array<std::string, kNumJoints>& cervical_joint_names() {
  static const std::array<std::string, kNumJoints> names = {"c7-t1", "c6-c7", "c5-c6", "c4-c5",
                                                            "c3-c4", "c2-c3", "c1-c2", "o-c1"};
  return names;
}

/// Kinematic tree with rest joint positions in millimeters. The cervical
/// skeleton is the 8-joint chain; the generic functions below also accept
/// any forest where parents[k] < 0 marks a root.
struct Skeleton {
  std::vector<std::string> names;
  std::vector<int> parents;
  Eigen::Matrix3Xd rest;  // 3 x K

  int num_joints() const { return static_cast<int>(parents.size()); }

  /// The canonical chain with the given rest joints.
  static Skeleton cervical(const Eigen::Matrix3Xd& rest_positions);
  /// K == 8, canonical names, each joint's parent is its predecessor.
  bool is_cervical_chain() const;
  /// Joint indices ordered so every parent precedes its children.
  std::vector<int> topological_order() const;
};

/// Axis-angle rotation per joint, 3 x K, radians.
struct PoseParams {
  Eigen::Matrix3Xd theta;

  static PoseParams zero(int num_joints = kNumJoints) { return {Eigen::Matrix3Xd::Zero(3, num_joints)}; }
  /// Joint-major flat view (theta_{3k + axis}).
  VectorXd flat() const { return Eigen::Map<const VectorXd>(theta.data(), theta.size()); }
  static PoseParams from_flat(const VectorXd& v) { return {Eigen::Map<const Eigen::Matrix3Xd>(v.data(), 3, v.size() / 3)}; }
  /// Every rotation magnitude below pi.
  bool is_principal() const;
};

template <typename Scalar>
struct RigidTransform {
  Mat3<Scalar> R = Mat3<Scalar>::Identity();
  Vec3<Scalar> t = Vec3<Scalar>::Zero();

  Vec3<Scalar> operator()(const Vec3<Scalar>& x) const { return R * x + t; }
  RigidTransform operator*(const RigidTransform& o) const { return {R * o.R, R * o.t + t}; }
};

/// World transform of every joint. Joint k rotates about its rest position
/// in its parent's frame: G_k = G_parent * [R_k | p_k - R_k p_k].
template <typename Scalar>
std::vector<RigidTransform<Scalar>> forward_kinematics(const std::vector<int>& parents,
                                                       const std::vector<int>& order,
                                                       const Eigen::Matrix<Scalar, 3, Eigen::Dynamic>& rest,
                                                       const Eigen::Matrix<Scalar, 3, Eigen::Dynamic>& theta) {
  const int K = static_cast<int>(parents.size());
  std::vector<RigidTransform<Scalar>> world(static_cast<std::size_t>(K));
  for (int k : order) {
    RigidTransform<Scalar> local;
    local.R = rodrigues<Scalar>(theta.col(k));
    const Vec3<Scalar> p = rest.col(k);
    local.t = p - local.R * p;
    world[k] = parents[k] < 0 ? local : world[parents[k]] * local;
  }
  return world;
}

std::vector<RigidTransform<double>> forward_kinematics(const Skeleton& skel, const PoseParams& pose);

/// Posed joint positions q_k = G_k(p_k).
Eigen::Matrix3Xd posed_joints(const Skeleton& skel, const std::vector<RigidTransform<double>>& world);

/// Per-vertex skinning weights, N x K. Rows are convex combinations with at
/// most four nonzero entries.
struct SkinningWeights {
  MatrixXd W;

  static constexpr int kMaxInfluences = 4;
  /// Throws DimensionError naming the first violated invariant.
  void validate(int num_joints) const;
  /// Clamp to >= 0, zero entries outside `support`, renormalize rows.
  void project_to_simplex(const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& support);
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> support() const { return W.array() > 0.0; }
};

/// v'_i = v_i + sum_k W_ik ((R_k - I) v_i + t_k), which equals
/// sum_k W_ik G_k(v_i) for row-stochastic W and is the identity, bit for bit,
/// when every G_k is the identity.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, Eigen::Dynamic> linear_blend_skin(const Eigen::Matrix<Scalar, 3, Eigen::Dynamic>& verts,
                                                          const std::vector<RigidTransform<Scalar>>& world,
                                                          const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& W) {
  const Eigen::Index n = verts.cols();
  const int K = static_cast<int>(world.size());
  require_dims(W.rows() == n && W.cols() == K, "linear_blend_skin: weights must be N x K");
  std::vector<Mat3<Scalar>> A(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) A[k] = world[k].R - Mat3<Scalar>::Identity();
  Eigen::Matrix<Scalar, 3, Eigen::Dynamic> out = verts;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3<Scalar> v = verts.col(i);
    Vec3<Scalar> d = Vec3<Scalar>::Zero();
    for (int k = 0; k < K; ++k) {
      const Scalar w = W(i, k);
      if (w != Scalar(0)) d += w * (A[k] * v + world[k].t);
    }
    out.col(i) += d;
  }
  return out;
}

Vertices linear_blend_skin(const Vertices& verts, const Skeleton& skel, const PoseParams& pose,
                           const SkinningWeights& weights);

/// Per joint and Euler axis (flexion/extension about x, lateral bending about
/// y, axial rotation about z): allowed [min, max] in radians.
struct RotationLimits {
  Eigen::Matrix<double, Eigen::Dynamic, 3> lo;
  Eigen::Matrix<double, Eigen::Dynamic, 3> hi;

  static RotationLimits defaults();
  static RotationLimits symmetric(int num_joints, double bound);
  void validate() const;

  /// Plain-text table, one `<joint> <axis> <min_deg> <max_deg>` per line.
  static RotationLimits load(const std::filesystem::path& path);
  static RotationLimits parse(const std::string& text);
  std::string to_text() const;
  void save(const std::filesystem::path& path) const;
};

inline const std::array<std::string, 3>& euler_axis_names() {
  static const std::array<std::string, 3> names = {"flexion", "lateral", "axial"};
  return names;
}

/// Sum over joints and axes of the L1 excess of each Euler angle beyond its
/// limit. Zero iff every angle is inside.
double rotation_limit_energy(const PoseParams& pose, const RotationLimits& limits);
/// Gradient with respect to theta (3 x K). Angles sitting exactly on a limit
/// use the one-sided (inside) derivative.
Eigen::Matrix3Xd rotation_limit_energy_gradient(const PoseParams& pose, const RotationLimits& limits);
/// True when some Euler angle lies within `tol` of a limit (non-smooth point).
bool on_rotation_limit(const PoseParams& pose, const RotationLimits& limits, double tol);

/// sum_k ||theta_k - theta_{k+1}||^2 over consecutive joints.
double adjacent_similarity_energy(const PoseParams& pose);
Eigen::Matrix3Xd adjacent_similarity_energy_gradient(const PoseParams& pose);

/// Affine map from identity coefficients to rest joints: bias + M * beta.
struct JointRegressor {
  MatrixXd matrix;  // 3K x |beta|
  VectorXd bias;    // 3K

  int num_joints() const { return static_cast<int>(bias.size() / 3); }
  int num_betas() const { return static_cast<int>(matrix.cols()); }
  Eigen::Matrix3Xd regress(const VectorXd& beta) const;
};

struct JointRegressorFit {
  JointRegressor regressor;
  double residual_rms = 0.0;  // mm, per joint coordinate
  bool regularized = false;
};

/// Least squares fit of E_joint; ridge (lambda = 1e-6) when the design is
/// underdetermined.
JointRegressorFit fit_joint_regressor(const std::vector<VectorXd>& betas,
                                      const std::vector<Eigen::Matrix3Xd>& joints, double ridge = 1e-6);

/// One labeled feature point pair on a vertebra.
struct LandmarkPair {
  std::string label;
  Eigen::Vector3d a;
  Eigen::Vector3d b;
};
/// Landmark pairs per vertebra, outer index = vertebra.
using VertebraLandmarks = std::vector<std::vector<LandmarkPair>>;

/// x -> scale * R * x + t.
struct SimilarityTransform {
  double scale = 1.0;
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  Eigen::Vector3d operator()(const Eigen::Vector3d& x) const { return scale * (R * x) + t; }
};

/// Smallest rotation taking unit direction `from` to unit direction `to`.
Eigen::Matrix3d minimal_rotation(const Eigen::Vector3d& from, const Eigen::Vector3d& to);

/// Per vertebra: scale from pair lengths, translation between pair
/// midpoints, rotation aligning pair directions (minimal rotation for a
/// single pair, orthogonal Procrustes over directions for several).
std::vector<SimilarityTransform> align_vertebra_template(const VertebraLandmarks& template_landmarks,
                                                         const VertebraLandmarks& scan_landmarks);

}  // namespace hack
