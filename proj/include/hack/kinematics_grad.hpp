#pragma once

#include "hack/skeleton.hpp"

#include <vector>

namespace hack {

/// Adjoints of the world transforms (dL/dR_k^w, dL/dt_k^w).
struct WorldAdjoint {
  std::vector<Eigen::Matrix3d> dR;
  std::vector<Eigen::Vector3d> dt;

  explicit WorldAdjoint(int K = 0)
      : dR(static_cast<std::size_t>(K), Eigen::Matrix3d::Zero()), dt(static_cast<std::size_t>(K), Eigen::Vector3d::Zero()) {}
};

struct FkGradient {
  Eigen::Matrix3Xd dtheta;  // 3 x K
  Eigen::Matrix3Xd drest;   // 3 x K
};

/// Pulls world-transform adjoints back to pose and rest-joint gradients.
FkGradient forward_kinematics_backward(const Skeleton& skel, const Eigen::Matrix3Xd& theta,
                                       const std::vector<RigidTransform<double>>& world, WorldAdjoint adj);

struct TransformTangent {
  Eigen::Matrix3d dR = Eigen::Matrix3d::Zero();
  Eigen::Vector3d dt = Eigen::Vector3d::Zero();
};

/// Directional derivative of every world transform along (dtheta, drest).
std::vector<TransformTangent> forward_kinematics_tangent(const Skeleton& skel, const Eigen::Matrix3Xd& theta,
                                                         const std::vector<RigidTransform<double>>& world,
                                                         const Eigen::Matrix3Xd& dtheta,
                                                         const Eigen::Matrix3Xd& drest);

}  // namespace hack
