#pragma once

#include "hack/mlp.hpp"
#include "hack/pca.hpp"
#include "hack/skeleton.hpp"

#include <array>
#include <vector>

namespace hack {

/// Rotation-matrix features of the non-root joints.
inline constexpr int kPoseFeatures = 9 * (kNumJoints - 1);

/// Expression activations are clamped to this range.
inline constexpr double kPsiMin = 0.0;
inline constexpr double kPsiMax = 1.5;

enum class BlendshapeKind { expression, pose };

/// Displacement fields stored as columns of a 3N x B matrix.
struct BlendshapeSet {
  MatrixXd deltas;
  BlendshapeKind kind = BlendshapeKind::expression;

  int count() const { return static_cast<int>(deltas.cols()); }
  int num_vertices() const { return static_cast<int>(deltas.rows() / 3); }

  /// Column-major vec of the 3N x B matrix, the sample layout for PCA.
  VectorXd flatten() const { return Eigen::Map<const VectorXd>(deltas.data(), deltas.size()); }
  static BlendshapeSet unflatten(const VectorXd& v, int count, BlendshapeKind kind);
};

/// sum_j psi_j E_j.
VectorXd expression_offset(const BlendshapeSet& set, const VectorXd& psi);

/// vec(R_k) - vec(I), row-major, for joints 1..K-1: feature 9(k-1) + 3r + c.
VectorXd pose_features(const PoseParams& pose);
/// d features / d theta, kPoseFeatures x 3K.
MatrixXd pose_features_jacobian(const PoseParams& pose);
/// sum_n features_n P_n; zero at the rest pose.
VectorXd pose_offset(const BlendshapeSet& set, const PoseParams& pose);

/// Maps identity coefficients to PCA weights of a blendshape-set space.
struct MappingNetwork {
  Mlp net;
  bool trained = false;

  /// |beta| -> 64 -> 64 -> C, ReLU.
  static MappingNetwork create(int num_betas, int components, std::mt19937_64& rng, int hidden = 64);
};

/// mean + basis * net(beta), reshaped to 3N x count.
BlendshapeSet personalize(const MappingNetwork& net, const PcaSpace& space, const VectorXd& beta, int count,
                          BlendshapeKind kind);
BlendshapeSet personalize_expressions(const MappingNetwork& net, const PcaSpace& space, const VectorXd& beta,
                                      int count);

struct MappingTrainResult {
  MappingNetwork network;
  TrainReport report;
};

/// Fits a network from identity coefficients to the projections of each
/// identity's blendshape set onto `space`.
MappingTrainResult train_mapping_network(const std::vector<VectorXd>& betas, const std::vector<BlendshapeSet>& sets,
                                         const PcaSpace& space, const MlpTrainConfig& cfg, std::mt19937_64& rng,
                                         int hidden = 64);

}  // namespace hack
