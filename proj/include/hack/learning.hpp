#pragma once

#include "hack/collision.hpp"
#include "hack/laplacian.hpp"
#include "hack/larynx.hpp"
#include "hack/mlp.hpp"
#include "hack/model.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace hack {

/// Weights of the seven dynamic-stage penalties.
struct LossWeights {
  double rec = 1e5;
  double rot = 1e6;
  double sim = 5e3;
  double col = 5e5;
  double tem = 1e6;
  double smo = 5e-2;
  double ski = 1.0;

  void validate() const;
};

/// lambda_v * sum_t [lambda1 * max(|v'|-eps, 0)^2 + lambda2 * (v'')^2].
struct TemporalTerm {
  double lambda_v = 1.0;
  double lambda1 = 1.0;
  double lambda2 = 0.0;
  double eps = 0.0;
};

struct TemporalConfig {
  TemporalTerm psi{1.0, 1.0, 0.01, 0.1};
  TemporalTerm theta{1.0, 1.0, 5000.0, 0.15};
  TemporalTerm eta{1.0, 1.0, 10.0, 0.005};
  TemporalTerm tau{1.0, 1.0, 1.0, 0.001};
  /// Derivatives per second (scaled by fps) instead of per frame.
  bool per_second = false;
};

/// First derivatives are forward differences over T-1 pairs, second
/// derivatives central differences over T-2 triples. Needs >= 3 frames.
double temporal_energy(const VectorXd& series, const TemporalTerm& term, double fps, bool per_second = false);
VectorXd temporal_energy_gradient(const VectorXd& series, const TemporalTerm& term, double fps,
                                  bool per_second = false);
/// Sum over the rows of a channels x T block.
double temporal_energy(const MatrixXd& series, const TemporalTerm& term, double fps, bool per_second = false);
MatrixXd temporal_energy_gradient(const MatrixXd& series, const TemporalTerm& term, double fps,
                                  bool per_second = false);

/// Frames of one subject: ground-truth or initial parameters and/or target
/// meshes registered to the template.
struct SequenceClip {
  std::string subject;
  int identity = -1;
  double fps = 30.0;
  std::vector<FullParams> params;
  std::vector<Mesh> targets;

  int num_frames() const { return static_cast<int>(std::max(params.size(), targets.size())); }
  void validate() const;
};

/// sum over frames of sum_i ||forward(params)_i - target_i||^2.
double reconstruction_energy(const HackModel& model, const std::vector<FullParams>& params,
                             const std::vector<Mesh>& targets);

// ---------------------------------------------------------------- static stage

struct StaticInputs {
  std::vector<Mesh> neutrals;                    // larynx-removed neutral identities
  std::vector<Vertices> larynx_displacements;    // per identity, 3 x N
  std::vector<int> annotated;                    // identities with joint annotations
  std::vector<Eigen::Matrix3Xd> joint_annotations;
  std::vector<std::vector<Mesh>> expression_scans;  // per identity: |psi| scans, may be empty
  std::vector<AppearanceStack> textures;            // per identity, may be empty
  SkinningWeights skinning;                         // artist prior
  RotationLimits limits = RotationLimits::defaults();
};

struct StaticConfig {
  int shape_components = 50;
  int expression_components = 50;
  int appearance_components = 50;
  double rank_tol = 1e-12;      // drop components below this variance ratio
  UvResolution larynx_resolution{256, 256};
  LarynxFitOptions larynx{};
  MlpTrainConfig mapping{1e-4, 0.0, 10000, 500, 0.0, {}};
  int mapping_hidden = 64;
  std::uint64_t seed = 0;
};

struct StaticResult {
  HackModel model;
  std::vector<VectorXd> betas;   // projections of the training neutrals
  double max_reconstruction_error = 0.0;  // mm
  double joint_residual_rms = 0.0;        // mm
  std::vector<std::string> warnings;
  TrainReport mapping_report;
};

StaticResult learn_static(const StaticInputs& inputs, const StaticConfig& cfg);

// ---------------------------------------------------------------- dynamic stage

/// Learnable state of one subject.
struct SubjectState {
  VectorXd beta;
  MatrixXd pose_deltas;        // 3N x 63
  MatrixXd expression_deltas;  // 3N x |psi|
  MatrixXd psi;                // |psi| x T
  MatrixXd theta;              // 3K x T
  VectorXd eta;                // T
  VectorXd tau;                // T
  double fps = 30.0;

  int num_frames() const { return static_cast<int>(theta.cols()); }
  FullParams frame(int t) const;
};

struct DynamicState {
  std::vector<SubjectState> subjects;
  MatrixXd weights;  // N x K
};

struct EnergyTerms {
  double rec = 0, rot = 0, sim = 0, col = 0, tem = 0, smo = 0, ski = 0;
  double total() const { return rec + rot + sim + col + tem + smo + ski; }
};

/// Which parts of the state receive gradients.
struct DynamicFreeMask {
  bool theta = true, psi = true, eta = true, tau = true;
  bool pose_deltas = true;
  bool weights = true;
  bool expression_deltas = false;
};

/// The combined dynamic objective over all subjects, with reverse-mode
/// gradients. Targets are fixed; beta-dependent quantities are cached.
class DynamicObjective {
 public:
  DynamicObjective(const HackModel& model, const std::vector<SequenceClip>& clips, const MatrixXd& prior_weights,
                   const LossWeights& weights, const TemporalConfig& temporal, const CollisionConfig& collision = {});

  /// State at the clips' parameters, prior weights and the model's pose
  /// blendshapes for each beta (zero when the model has no pose space).
  DynamicState initial_state() const;

  EnergyTerms evaluate(const DynamicState& s) const;
  /// Energy terms and the gradient of their (weighted) sum.
  EnergyTerms evaluate(const DynamicState& s, DynamicState* grad, const DynamicFreeMask& mask = {}) const;

  int num_subjects() const { return static_cast<int>(subjects_.size()); }
  const LossWeights& loss_weights() const { return weights_; }
  const HackModel& model() const { return *model_; }
  /// Posed vertices of one frame.
  Vertices posed(const DynamicState& s, int subject, int frame) const;

 private:
  struct Cached {
    VectorXd beta;
    VectorXd base;
    Skeleton skeleton;
    std::vector<int> order;
    std::optional<LarynxField> larynx;
    MatrixXd targets;  // 3N x T
    MatrixXd expression;
    MatrixXd pose;  // warm start, empty when the model has no pose space
    double fps = 30.0;
    std::vector<FullParams> init;
  };
  double subject_terms(const DynamicState& s, int si, EnergyTerms& e, DynamicState* grad,
                       const DynamicFreeMask& mask) const;

  const HackModel* model_;
  std::vector<Cached> subjects_;
  MatrixXd prior_;
  LossWeights weights_;
  TemporalConfig temporal_;
  CollisionConfig collision_;
  LaplacianOperator laplacian_;
};

struct GradientCheckOptions {
  double step = 1e-5;
  int max_coords_per_block = 64;  // sampled (seeded) beyond this many entries
  double smooth_tol = 1e-4;       // distance to a rotation limit treated as a kink
  std::uint64_t seed = 1;
};

struct GradientCheckReport {
  double max_relative_error = 0.0;
  int checked = 0;
  bool skipped = false;
  std::string note;
  std::string worst;  // name of the worst coordinate
};

/// Central differences of the total objective against the analytic gradient
/// over the free entries of `state`.
GradientCheckReport objective_gradient_check(const DynamicObjective& objective, const DynamicState& state,
                                             const DynamicFreeMask& mask = {}, const GradientCheckOptions& opts = {});

struct DynamicConfig {
  LossWeights weights{};
  TemporalConfig temporal{};
  CollisionConfig collision{};
  int epochs = 2000;
  double lr = 1e-3;
  double lr_final = 1e-5;
  /// Multipliers of the global rate per parameter group.
  double lr_theta = 1.0, lr_psi = 1.0, lr_eta = 1.0, lr_tau = 0.1;
  double lr_pose_deltas = 10.0;  // millimeters
  double lr_weights = 0.1;
  double lr_expression = 1.0;
  bool finetune_expressions = false;
  /// Levenberg-Marquardt iterations registering each frame's theta, eta and
  /// tau to its target before the first epoch; 0 keeps the clip values.
  int init_fit_iterations = 20;
  int patience = 0;              // epochs without improvement before stopping, 0 = never
  int pose_components = 6;
  MlpTrainConfig mapping{1e-4, 0.0, 10000, 500, 0.0, {}};
  int mapping_hidden = 64;
  bool train_pose_net = true;
  std::uint64_t seed = 0;
};

struct DynamicResult {
  HackModel model;            // with refined W, pose space and M_P
  DynamicState state;         // best state seen
  std::vector<EnergyTerms> history;
  int best_epoch = 0;
  EnergyTerms best{};
  TrainReport pose_net_report;
  std::vector<std::string> warnings;
};

/// Tab-separated epoch line: epoch, rec, rot, sim, col, tem, smo, ski, total.
std::string format_epoch_line(int epoch, const EnergyTerms& e);
std::string epoch_log_header();

DynamicResult learn_dynamic(const HackModel& static_model, const std::vector<SequenceClip>& clips,
                            const SkinningWeights& prior, const DynamicConfig& cfg,
                            const std::function<void(const std::string&)>& log = {});

// ---------------------------------------------------------------- fitting

struct FitWeights {
  double scan = 2.0;
  double landmark = 0.01;
  double shape = 5e-5;
  double expression = 0.0;
  double pose = 0.0;
  double larynx = 0.0;
};

struct FitConfig {
  unsigned free_groups = kGroupAll;
  FitWeights weights{};
  int max_iterations = 100;
  double tolerance = 1e-12;   // relative cost decrease that counts as converged
  int icp_iterations = 10;    // correspondence updates in scan mode
};

struct FitReport {
  FullParams params;
  double mean_distance = 0.0;  // mm, per vertex (mesh) or per point (scan)
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string note;
};

struct FitTarget {
  std::optional<Mesh> mesh;
  Eigen::Matrix3Xd points;             // scan mode when no mesh
  std::vector<int> landmark_vertices;  // optional
  Eigen::Matrix3Xd landmarks;          // 3 x L, matches landmark_vertices
};

FitReport fit_to_target(const HackModel& model, const FitTarget& target, const FullParams& init, const FitConfig& cfg);
FitReport fit_to_target(const HackModel& model, const Mesh& target, const FullParams& init, const FitConfig& cfg);

/// Cost minimized by fit_to_target for a mesh target.
double fit_cost(const HackModel& model, const FitTarget& target, const FullParams& params, const FitWeights& w);

}  // namespace hack
