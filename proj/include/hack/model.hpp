#pragma once

#include "hack/blendshapes.hpp"
#include "hack/kinematics_grad.hpp"
#include "hack/larynx.hpp"
#include "hack/mesh.hpp"
#include "hack/pca.hpp"
#include "hack/skeleton.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

namespace hack {

/// UV texture stack generator: one PCA over the concatenated channels.
struct AppearanceModel {
  PcaSpace space;
  int rows = 0;
  int cols = 0;
  int channels = 0;  // diffuse, specular and normal: 9

  bool present() const { return space.dim() > 0; }
};

struct AppearanceStack {
  int rows = 0, cols = 0, channels = 0;
  VectorXd data;  // (r, c, ch), row-major

  double at(int r, int c, int ch) const { return data[(static_cast<Eigen::Index>(r) * cols + c) * channels + ch]; }
};

struct HackModel {
  Mesh template_mesh;        // larynx-removed mean identity at rest
  PcaSpace shape_space;      // mean is the flattened template
  JointRegressor joint_regressor;
  Skeleton skeleton;         // rest = joints of the mean identity
  SkinningWeights skinning;
  int num_expressions = 0;
  PcaSpace expression_space;  // over flattened 3N x |psi| sets
  MappingNetwork expression_net;
  PcaSpace pose_space;        // over flattened 3N x 63 sets; empty before dynamic learning
  MappingNetwork pose_net;
  LarynxBasis larynx;
  RotationLimits limits;
  AppearanceModel appearance;

  int num_vertices() const { return template_mesh.num_vertices(); }
  int num_betas() const { return shape_space.components(); }
  int num_joints() const { return skeleton.num_joints(); }
  bool has_expressions() const { return num_expressions > 0 && expression_space.dim() > 0; }
  bool has_pose_blendshapes() const { return pose_space.dim() > 0; }
  bool has_larynx() const { return larynx.count() > 0; }

  /// Throws DimensionError naming the first inconsistent pair of fields.
  void validate() const;
};

struct FullParams {
  VectorXd beta;
  VectorXd psi;
  PoseParams pose;
  LarynxParams larynx;
  VectorXd alpha;

  static FullParams zeros(const HackModel& model);
};

/// Everything that depends on beta only, ready for per-frame evaluation.
/// Retargeting builds the same structure from a foreign rest mesh.
struct SubjectRig {
  std::shared_ptr<const Topology> topology;
  Skeleton skeleton;
  std::vector<int> order;
  VectorXd base;            // 3N
  BlendshapeSet expression; // 3N x |psi|, may be empty
  BlendshapeSet pose;       // 3N x 63, may be empty
  SkinningWeights weights;
  std::optional<LarynxField> larynx;

  int num_vertices() const { return static_cast<int>(base.size() / 3); }
};

SubjectRig make_rig(const HackModel& model, const VectorXd& beta);

/// ((((base + B_E) + B_P) + L) for one frame, 3N.
VectorXd rig_rest(const SubjectRig& rig, const FullParams& params);
/// Skinned vertices of the rig at `params`.
Vertices rig_posed(const SubjectRig& rig, const FullParams& params);
Mesh pose_rig(const SubjectRig& rig, const FullParams& params);

struct ForwardOptions {
  bool strict_limits = false;
  std::function<void(const std::string&)> warn;
};

/// T = T_bar + B_S + B_E + B_P + L.
Mesh rest_template(const HackModel& model, const FullParams& params);
/// LBS(T, J(beta), theta, W).
Mesh forward(const HackModel& model, const FullParams& params, const ForwardOptions& opts = {});

/// Human-readable description of limit violations, empty when inside.
std::string describe_limit_violations(const PoseParams& pose, const RotationLimits& limits);

enum ParamGroup : unsigned {
  kGroupBeta = 1u,
  kGroupPsi = 2u,
  kGroupTheta = 4u,
  kGroupEta = 8u,
  kGroupTau = 16u,
  kGroupAll = 31u,
};

/// Flat ordering of the free parameters: beta, psi, theta (joint-major), eta, tau.
struct ParamLayout {
  unsigned groups = 0;
  int num_betas = 0, num_psi = 0, num_theta = 0;
  int beta = -1, psi = -1, theta = -1, eta = -1, tau = -1;
  int size = 0;

  static ParamLayout make(const HackModel& model, unsigned groups);
  VectorXd pack(const FullParams& p) const;
  void unpack(const VectorXd& x, FullParams& p) const;
  std::string name(int index) const;
};

/// d vertices / d params, 3N x layout.size.
MatrixXd forward_jacobian(const HackModel& model, const FullParams& params, const ParamLayout& layout);

AppearanceStack appearance(const HackModel& model, const VectorXd& alpha);

/// Model archive: a directory with manifest.json and one HCK1 file per tensor.
void save_model(const HackModel& model, const std::filesystem::path& dir);
HackModel load_model(const std::filesystem::path& dir);

inline constexpr int kArchiveVersion = 1;

}  // namespace hack
