#pragma once

#include "hack/mesh.hpp"
#include "hack/skeleton.hpp"

namespace hack {

/// Spine capsules between consecutive posed joints, sampled at
/// `samples_per_segment` points each (plus the last joint), radius in mm.
struct CollisionConfig {
  int samples_per_segment = 4;
  double radius = 8.0;
};

struct CollisionGradient {
  double energy = 0.0;
  Vertices dskin;          // 3 x N
  Eigen::Matrix3Xd djoints;  // 3 x K, with respect to posed joint positions
};

/// Sample points along the chain of posed joints.
Eigen::Matrix3Xd spine_samples(const Eigen::Matrix3Xd& posed_joints, const CollisionConfig& cfg = {});

/// Sum over spine samples x of max(sd(x) + r, 0)^2, where sd is the signed
/// distance from x to the plane of the skin triangle nearest to x (chosen
/// among the triangles around the nearest skin vertex), positive outside.
double collision_energy(const Topology& topo, const Vertices& skin, const Eigen::Matrix3Xd& posed_joints,
                        const CollisionConfig& cfg = {});
CollisionGradient collision_energy_gradient(const Topology& topo, const Vertices& skin,
                                            const Eigen::Matrix3Xd& posed_joints, const CollisionConfig& cfg = {});

/// Convenience form: joints posed by forward kinematics.
double collision_energy(const Mesh& skin, const Skeleton& skel, const PoseParams& pose, const CollisionConfig& cfg = {});

}  // namespace hack
