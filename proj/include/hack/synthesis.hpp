#pragma once

#include "hack/mlp.hpp"
#include "hack/model.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace hack {

/// H x W image of unit normals; pixel (r, c) at data[(r * W + c) * 3 + ch].
struct NormalMapFrame {
  int rows = 0, cols = 0;
  std::vector<float> data;
  int frame = 0;
  std::string subject;

  float at(int r, int c, int ch) const { return data[(static_cast<std::size_t>(r) * cols + c) * 3 + ch]; }
  float& at(int r, int c, int ch) { return data[(static_cast<std::size_t>(r) * cols + c) * 3 + ch]; }
};

/// Generic larynx normal pattern, fixed at 70 x 70 x 3.
struct LarynxKernel {
  static constexpr int kSize = 70;
  NormalMapFrame image;

  /// Normals of a smooth elliptical bump.
  static LarynxKernel bump(double height = 15.0, double sigma_rows = 14.0, double sigma_cols = 10.0);
};

struct TrackResult {
  double tau = 0.0;       // rows, argmax row minus tau0
  int row = 0, col = 0;   // argmax position
  double response = 0.0;  // correlation at the argmax
};

/// Valid-mode raw cross-correlation of the kernel over the frame; the
/// maximum with the smallest row (then column) wins.
TrackResult track_larynx(const NormalMapFrame& frame, const LarynxKernel& kernel, double tau0);
/// Zero-mean normalized variant of the response.
TrackResult track_larynx_normalized(const NormalMapFrame& frame, const LarynxKernel& kernel, double tau0);

/// Head orientation (axis-angle of the o-c1 world rotation) to full pose.
struct OrientationNet {
  Mlp net;
  RotationLimits limits;
  bool trained = false;

  /// 3 -> 512 -> 512 -> 3K.
  static OrientationNet create(const RotationLimits& limits, std::mt19937_64& rng, int hidden = 512,
                               int num_joints = kNumJoints);
};

/// Saturates every Euler angle smoothly into its [lo, hi] range; identity
/// away from the bounds.
PoseParams soft_clamp_pose(const PoseParams& pose, const RotationLimits& limits, double margin_fraction = 0.1);

PoseParams orientation_to_pose(const OrientationNet& net, const Eigen::Vector3d& head_rotation);
/// World rotation of the last joint as an axis-angle vector.
Eigen::Vector3d head_orientation(const Skeleton& skel, const PoseParams& pose);

TrainReport train_orientation_net(OrientationNet& net, const std::vector<Eigen::Vector3d>& orientations,
                                  const std::vector<PoseParams>& poses, const MlpTrainConfig& cfg);

/// Two-layer gated recurrent predictor of tau from [psi(k), tau(k-1)], with a
/// linear skip readout on the same input.
class SequencePredictor {
 public:
  struct Config {
    int hidden = 16;
    int layers = 2;
    double ridge = 1e-8;
    MlpTrainConfig train{1e-3, 0.0, 200, 50, 0.0, {}};
    std::uint64_t seed = 1;
  };

  SequencePredictor() = default;
  SequencePredictor(int num_psi, const Config& cfg);

  int num_psi() const { return num_psi_; }
  bool trained() const { return trained_; }

  /// Fits the skip readout by ridge least squares, then trains everything
  /// with backpropagation through time (teacher forcing).
  TrainReport fit(const std::vector<MatrixXd>& psi_clips, const std::vector<VectorXd>& tau_clips);

  /// Autoregressive rollout: psi is |psi| x T; history seeds tau(k-1) (its
  /// last value, zero if empty). Returns T predictions.
  VectorXd rollout(const MatrixXd& psi, const VectorXd& history) const;

  /// Teacher-forced one-step predictions and loss.
  double sequence_loss(const MatrixXd& psi, const VectorXd& tau) const;

  struct Gru {
    MatrixXd Wz, Wr, Wh;  // hidden x input
    MatrixXd Uz, Ur, Uh;  // hidden x hidden
    VectorXd bz, br, bh;
  };
  std::vector<Gru> layers;
  VectorXd skip;        // input + 1 (bias last)
  VectorXd head;        // hidden
  VectorXd in_scale;    // per input channel

 private:
  double step(std::vector<VectorXd>& h, const VectorXd& x) const;
  double clip_loss_grad(const MatrixXd& psi, const VectorXd& tau, SequencePredictor* grad) const;
  int num_psi_ = 0;
  bool trained_ = false;
  Config cfg_{};
};

VectorXd predict_larynx_sequence(const SequencePredictor& predictor, const MatrixXd& psi, const VectorXd& history);

/// A rig sharing the template topology and joint names, e.g. another species.
struct RigTarget {
  SubjectRig rig;
};

RigTarget rig_target_from_model(const HackModel& model, const VectorXd& beta);
/// Rest mesh, skeleton and weights of a foreign character; optional
/// expression blendshapes (3N x |psi|).
RigTarget make_rig_target(const Mesh& rest, const Skeleton& skeleton, const SkinningWeights& weights,
                          const BlendshapeSet* expression = nullptr);

/// Poses the target rig with the source pose (and expressions when the
/// target has them).
Mesh retarget_pose(const HackModel& source, const FullParams& params, const RigTarget& target,
                   const BlendshapeSet* target_pose_blendshapes = nullptr);

}  // namespace hack
