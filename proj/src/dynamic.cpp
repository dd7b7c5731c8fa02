#include "hack/learning.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace hack {

FullParams SubjectState::frame(int t) const {
  FullParams p;
  p.beta = beta;
  p.psi = psi.col(t);
  p.pose = PoseParams::from_flat(theta.col(t));
  p.larynx = {eta[t], tau[t]};
  return p;
}

DynamicObjective::DynamicObjective(const HackModel& model, const std::vector<SequenceClip>& clips,
                                   const MatrixXd& prior_weights, const LossWeights& weights,
                                   const TemporalConfig& temporal, const CollisionConfig& collision)
    : model_(&model), prior_(prior_weights), weights_(weights), temporal_(temporal), collision_(collision),
      laplacian_(model.template_mesh) {
  weights_.validate();
  const int N = model.num_vertices();
  const int K = model.num_joints();
  require_dims(prior_.rows() == N && prior_.cols() == K, "dynamic objective: prior weights must be N x K");
  if (model.limits.lo.rows() != K) throw Error("dynamic objective: rotation limits table missing");
  if (clips.empty()) throw Error("dynamic objective: no clips");
  for (const SequenceClip& clip : clips) {
    clip.validate();
    if (clip.targets.empty() || clip.params.size() != clip.targets.size())
      throw Error("dynamic objective: clip " + clip.subject + " needs target meshes and initial parameters");
    if (clip.num_frames() < 3) throw Error("dynamic objective: clip " + clip.subject + " has fewer than 3 frames");
    Cached c;
    c.beta = clip.params.front().beta;
    const SubjectRig rig = make_rig(model, c.beta);
    c.base = rig.base;
    c.skeleton = rig.skeleton;
    c.order = rig.order;
    c.larynx = rig.larynx;
    c.expression = rig.expression.deltas;
    c.pose = rig.pose.deltas;
    c.fps = clip.fps;
    c.init = clip.params;
    c.targets.resize(3L * N, clip.num_frames());
    for (int t = 0; t < clip.num_frames(); ++t) {
      require_same_topology(model.template_mesh, clip.targets[t], "dynamic objective");
      c.targets.col(t) = flat(clip.targets[t].vertices());
    }
    subjects_.push_back(std::move(c));
  }
}

DynamicState DynamicObjective::initial_state() const {
  DynamicState s;
  s.weights = prior_;
  const int N = model_->num_vertices();
  for (const Cached& c : subjects_) {
    SubjectState ss;
    const int T = static_cast<int>(c.init.size());
    ss.beta = c.beta;
    ss.fps = c.fps;
    ss.pose_deltas = c.pose.size() > 0 ? c.pose : MatrixXd::Zero(3L * N, kPoseFeatures);
    ss.expression_deltas = c.expression;
    ss.psi.resize(c.expression.cols(), T);
    ss.theta.resize(3L * model_->num_joints(), T);
    ss.eta.resize(T);
    ss.tau.resize(T);
    for (int t = 0; t < T; ++t) {
      const FullParams& p = c.init[static_cast<std::size_t>(t)];
      if (ss.psi.rows() > 0) {
        require_dims(p.psi.size() == ss.psi.rows(), "dynamic objective: |psi| differs from the model");
        ss.psi.col(t) = p.psi;
      }
      ss.theta.col(t) = p.pose.flat();
      ss.eta[t] = p.larynx.eta;
      ss.tau[t] = p.larynx.tau;
    }
    s.subjects.push_back(std::move(ss));
  }
  return s;
}

EnergyTerms DynamicObjective::evaluate(const DynamicState& s) const { return evaluate(s, nullptr, {}); }

namespace {

/// Rest vertices of every frame: base + E psi + P f(theta) + larynx.
MatrixXd rest_block(const VectorXd& base, const SubjectState& st, const MatrixXd& features,
                    const std::optional<LarynxField>& larynx) {
  const int T = st.num_frames();
  MatrixXd R = base.replicate(1, T);
  if (st.expression_deltas.cols() > 0) R.noalias() += st.expression_deltas * st.psi;
  R.noalias() += st.pose_deltas * features;
  if (larynx)
    for (int t = 0; t < T; ++t) {
      const LarynxParams lp{st.eta[t], st.tau[t]};
      larynx->check(lp);
      for (int i : larynx->vertices)
        R.col(t).segment<3>(3L * i) +=
            lp.eta * sample_shifted(larynx->map, larynx->atlas.row(i), larynx->atlas.col(i), lp.tau);
    }
  return R;
}

MatrixXd feature_block(const SubjectState& st) {
  MatrixXd F(kPoseFeatures, st.num_frames());
  for (int t = 0; t < st.num_frames(); ++t) F.col(t) = pose_features(PoseParams::from_flat(st.theta.col(t)));
  return F;
}

}  // namespace

Vertices DynamicObjective::posed(const DynamicState& s, int si, int t) const {
  const Cached& c = subjects_.at(static_cast<std::size_t>(si));
  const SubjectState& st = s.subjects.at(static_cast<std::size_t>(si));
  const MatrixXd R = rest_block(c.base, st, feature_block(st), c.larynx);
  const auto world = forward_kinematics<double>(c.skeleton.parents, c.order, c.skeleton.rest,
                                                Eigen::Matrix3Xd(PoseParams::from_flat(st.theta.col(t)).theta));
  return linear_blend_skin<double>(as_vertices(VectorXd(R.col(t))), world, s.weights);
}

double DynamicObjective::subject_terms(const DynamicState& s, int si, EnergyTerms& e, DynamicState* grad,
                                       const DynamicFreeMask& mask) const {
  const Cached& c = subjects_[static_cast<std::size_t>(si)];
  const SubjectState& st = s.subjects[static_cast<std::size_t>(si)];
  const int T = st.num_frames();
  const int N = model_->num_vertices();
  const int K = model_->num_joints();
  const MatrixXd& W = s.weights;
  require_dims(st.theta.rows() == 3L * K && T == c.targets.cols() && st.eta.size() == T && st.tau.size() == T &&
                   st.psi.cols() == T && st.pose_deltas.rows() == 3L * N && st.pose_deltas.cols() == kPoseFeatures,
               "dynamic objective: subject " + std::to_string(si) + " state has wrong sizes");
  const MatrixXd F = feature_block(st);
  const MatrixXd R = rest_block(c.base, st, F, c.larynx);
  const LossWeights& w = weights_;

  MatrixXd dR;
  if (grad) dR.setZero(3L * N, T);
  SubjectState* g = grad ? &grad->subjects[static_cast<std::size_t>(si)] : nullptr;
  std::vector<Eigen::Matrix3d> A(static_cast<std::size_t>(K));
  std::vector<Eigen::Vector3d> y(static_cast<std::size_t>(K));

  for (int t = 0; t < T; ++t) {
    const Eigen::Matrix3Xd theta = PoseParams::from_flat(st.theta.col(t)).theta;
    const auto world = forward_kinematics<double>(c.skeleton.parents, c.order, c.skeleton.rest, theta);
    for (int k = 0; k < K; ++k) A[k] = world[k].R - Eigen::Matrix3d::Identity();
    const Vertices x = as_vertices(VectorXd(R.col(t)));
    Vertices v(3, N);
    for (int i = 0; i < N; ++i) {
      Eigen::Vector3d d = Eigen::Vector3d::Zero();
      for (int k = 0; k < K; ++k) {
        const double wik = W(i, k);
        if (wik != 0.0) d += wik * (A[k] * x.col(i) + world[k].t);
      }
      v.col(i) = x.col(i) + d;
    }
    const Vertices target = as_vertices(VectorXd(c.targets.col(t)));
    const Vertices r = v - target;
    e.rec += w.rec * r.squaredNorm();

    Vertices dv;
    Eigen::Matrix3Xd djoints;
    if (w.col > 0.0) {
      const Eigen::Matrix3Xd q = posed_joints(c.skeleton, world);
      if (grad) {
        const CollisionGradient cg = collision_energy_gradient(*model_->template_mesh.shared_topology(), v, q,
                                                               collision_);
        e.col += w.col * cg.energy;
        dv = 2.0 * w.rec * r + w.col * cg.dskin;
        djoints = w.col * cg.djoints;
      } else {
        e.col += w.col * collision_energy(model_->template_mesh.topology(), v, q, collision_);
      }
    } else if (grad) {
      dv = 2.0 * w.rec * r;
    }
    if (!grad) continue;

    // Skinning adjoint.
    WorldAdjoint adj(K);
    auto dx = dR.col(t);
    for (int i = 0; i < N; ++i) {
      const Eigen::Vector3d xi = x.col(i);
      const Eigen::Vector3d di = dv.col(i);
      Eigen::Vector3d dxi = di;
      for (int k = 0; k < K; ++k) {
        y[k] = A[k] * xi + world[k].t;
        if (mask.weights) grad->weights(i, k) += di.dot(y[k]);
        const double wik = W(i, k);
        if (wik == 0.0) continue;
        dxi += wik * (A[k].transpose() * di);
        adj.dR[k] += wik * di * xi.transpose();
        adj.dt[k] += wik * di;
      }
      dx.segment<3>(3L * i) = dxi;
    }
    if (djoints.size() > 0)
      for (int k = 0; k < K; ++k) {
        adj.dR[k] += djoints.col(k) * c.skeleton.rest.col(k).transpose();
        adj.dt[k] += djoints.col(k);
      }
    if (mask.theta) {
      const FkGradient fk = forward_kinematics_backward(c.skeleton, theta, world, adj);
      g->theta.col(t) += Eigen::Map<const VectorXd>(fk.dtheta.data(), fk.dtheta.size());
    }
    if (c.larynx && (mask.eta || mask.tau)) {
      const LarynxField& L = *c.larynx;
      double deta = 0.0, dtau = 0.0;
      for (int i : L.vertices) {
        const Eigen::Vector3d di = dx.segment<3>(3L * i);
        deta += di.dot(sample_shifted(L.map, L.atlas.row(i), L.atlas.col(i), st.tau[t]));
        dtau += st.eta[t] * di.dot(sample_shifted_dshift(L.map, L.atlas.row(i), L.atlas.col(i), st.tau[t]));
      }
      if (mask.eta) g->eta[t] += deta;
      if (mask.tau) g->tau[t] += dtau;
    }
  }

  // Per-frame pose penalties.
  for (int t = 0; t < T; ++t) {
    const PoseParams pose = PoseParams::from_flat(st.theta.col(t));
    e.rot += w.rot * rotation_limit_energy(pose, model_->limits);
    e.sim += w.sim * adjacent_similarity_energy(pose);
    if (grad && mask.theta) {
      const Eigen::Matrix3Xd gr =
          w.rot * rotation_limit_energy_gradient(pose, model_->limits) + w.sim * adjacent_similarity_energy_gradient(pose);
      g->theta.col(t) += Eigen::Map<const VectorXd>(gr.data(), gr.size());
    }
  }

  // Temporal smoothness.
  const TemporalConfig& tc = temporal_;
  double tem = temporal_energy(st.theta, tc.theta, st.fps, tc.per_second) +
               temporal_energy(MatrixXd(st.eta.transpose()), tc.eta, st.fps, tc.per_second) +
               temporal_energy(MatrixXd(st.tau.transpose()), tc.tau, st.fps, tc.per_second);
  if (st.psi.rows() > 0) tem += temporal_energy(st.psi, tc.psi, st.fps, tc.per_second);
  e.tem += w.tem * tem;
  e.smo += w.smo * laplacian_energy_columns(laplacian_, st.pose_deltas);

  if (!grad) return 0.0;
  if (mask.theta) g->theta += w.tem * temporal_energy_gradient(st.theta, tc.theta, st.fps, tc.per_second);
  if (mask.eta)
    g->eta += w.tem * temporal_energy_gradient(st.eta, tc.eta, st.fps, tc.per_second);
  if (mask.tau)
    g->tau += w.tem * temporal_energy_gradient(st.tau, tc.tau, st.fps, tc.per_second);
  if (mask.psi && st.psi.rows() > 0) {
    g->psi += w.tem * temporal_energy_gradient(st.psi, tc.psi, st.fps, tc.per_second);
    g->psi.noalias() += st.expression_deltas.transpose() * dR;
  }
  if (mask.expression_deltas && st.psi.rows() > 0) g->expression_deltas.noalias() += dR * st.psi.transpose();
  if (mask.pose_deltas) {
    g->pose_deltas.noalias() += dR * F.transpose();
    g->pose_deltas += w.smo * laplacian_energy_columns_gradient(laplacian_, st.pose_deltas);
  }
  if (mask.theta) {
    const MatrixXd dF = st.pose_deltas.transpose() * dR;
    for (int t = 0; t < T; ++t) {
      const MatrixXd J = pose_features_jacobian(PoseParams::from_flat(st.theta.col(t)));
      g->theta.col(t).noalias() += J.transpose() * dF.col(t);
    }
  }
  return 0.0;
}

EnergyTerms DynamicObjective::evaluate(const DynamicState& s, DynamicState* grad, const DynamicFreeMask& mask) const {
  require_dims(static_cast<int>(s.subjects.size()) == num_subjects(), "dynamic objective: subject count differs");
  require_dims(s.weights.rows() == prior_.rows() && s.weights.cols() == prior_.cols(),
               "dynamic objective: weights must be N x K");
  if (grad) {
    grad->weights = MatrixXd::Zero(s.weights.rows(), s.weights.cols());
    grad->subjects.clear();
    for (const SubjectState& st : s.subjects) {
      SubjectState z;
      z.beta = st.beta;
      z.fps = st.fps;
      z.pose_deltas = MatrixXd::Zero(st.pose_deltas.rows(), st.pose_deltas.cols());
      z.expression_deltas = MatrixXd::Zero(st.expression_deltas.rows(), st.expression_deltas.cols());
      z.psi = MatrixXd::Zero(st.psi.rows(), st.psi.cols());
      z.theta = MatrixXd::Zero(st.theta.rows(), st.theta.cols());
      z.eta = VectorXd::Zero(st.eta.size());
      z.tau = VectorXd::Zero(st.tau.size());
      grad->subjects.push_back(std::move(z));
    }
  }
  EnergyTerms e;
  for (int si = 0; si < num_subjects(); ++si) subject_terms(s, si, e, grad, mask);
  e.ski = weights_.ski * (s.weights - prior_).squaredNorm();
  if (grad && mask.weights) grad->weights += 2.0 * weights_.ski * (s.weights - prior_);
  return e;
}

// ------------------------------------------------------------ gradient check

namespace {

struct Coord {
  double* value;
  const double* analytic;
  std::string name;
};

void add_block(std::vector<Coord>& out, double* x, const double* g, Eigen::Index n, const std::string& name,
               int max_coords, std::mt19937_64& rng) {
  if (n == 0) return;
  std::vector<Eigen::Index> idx;
  if (n <= max_coords) {
    for (Eigen::Index i = 0; i < n; ++i) idx.push_back(i);
  } else {
    std::uniform_int_distribution<Eigen::Index> u(0, n - 1);
    for (int i = 0; i < max_coords; ++i) idx.push_back(u(rng));
  }
  for (Eigen::Index i : idx) out.push_back({x + i, g + i, name + "[" + std::to_string(i) + "]"});
}

}  // namespace

GradientCheckReport objective_gradient_check(const DynamicObjective& objective, const DynamicState& state,
                                             const DynamicFreeMask& mask, const GradientCheckOptions& opts) {
  GradientCheckReport rep;
  const RotationLimits& lim = objective.model().limits;
  for (const SubjectState& st : state.subjects)
    for (int t = 0; t < st.num_frames(); ++t)
      if (on_rotation_limit(PoseParams::from_flat(st.theta.col(t)), lim, opts.smooth_tol)) {
        rep.skipped = true;
        rep.note = "non-smooth point: a rotation sits on its limit";
        return rep;
      }
  DynamicState grad;
  objective.evaluate(state, &grad, mask);
  DynamicState x = state;
  std::mt19937_64 rng(opts.seed);
  std::vector<Coord> coords;
  const int mc = opts.max_coords_per_block;
  for (std::size_t s = 0; s < x.subjects.size(); ++s) {
    SubjectState& xs = x.subjects[s];
    const SubjectState& gs = grad.subjects[s];
    const std::string p = "subject" + std::to_string(s) + ".";
    if (mask.theta) add_block(coords, xs.theta.data(), gs.theta.data(), xs.theta.size(), p + "theta", mc, rng);
    if (mask.psi) add_block(coords, xs.psi.data(), gs.psi.data(), xs.psi.size(), p + "psi", mc, rng);
    if (mask.eta) add_block(coords, xs.eta.data(), gs.eta.data(), xs.eta.size(), p + "eta", mc, rng);
    if (mask.tau) add_block(coords, xs.tau.data(), gs.tau.data(), xs.tau.size(), p + "tau", mc, rng);
    if (mask.pose_deltas)
      add_block(coords, xs.pose_deltas.data(), gs.pose_deltas.data(), xs.pose_deltas.size(), p + "pose_deltas", mc,
                rng);
    if (mask.expression_deltas)
      add_block(coords, xs.expression_deltas.data(), gs.expression_deltas.data(), xs.expression_deltas.size(),
                p + "expression_deltas", mc, rng);
  }
  if (mask.weights) add_block(coords, x.weights.data(), grad.weights.data(), x.weights.size(), "weights", mc, rng);

  std::vector<double> fd(coords.size());
  double gmax = 0.0;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    double* v = coords[i].value;
    const double orig = *v;
    const double h = opts.step * std::max(1.0, std::abs(orig));
    *v = orig + h;
    const double ep = objective.evaluate(x).total();
    *v = orig - h;
    const double em = objective.evaluate(x).total();
    *v = orig;
    fd[i] = (ep - em) / (2.0 * h);
    gmax = std::max({gmax, std::abs(fd[i]), std::abs(*coords[i].analytic)});
  }
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const double a = *coords[i].analytic;
    const double denom = std::max({std::abs(a), std::abs(fd[i]), 1e-6 * gmax, 1e-300});
    const double err = std::abs(a - fd[i]) / denom;
    if (err > rep.max_relative_error || rep.worst.empty()) {
      rep.max_relative_error = std::max(rep.max_relative_error, err);
      if (err >= rep.max_relative_error) rep.worst = coords[i].name;
    }
  }
  rep.checked = static_cast<int>(coords.size());
  return rep;
}

// -------------------------------------------------------------- learn_dynamic

std::string epoch_log_header() { return "epoch\trec\trot\tsim\tcol\ttem\tsmo\tski\ttotal"; }

std::string format_epoch_line(int epoch, const EnergyTerms& e) {
  std::ostringstream os;
  os << std::setprecision(9) << epoch << '\t' << e.rec << '\t' << e.rot << '\t' << e.sim << '\t' << e.col << '\t'
     << e.tem << '\t' << e.smo << '\t' << e.ski << '\t' << e.total();
  return os.str();
}

namespace {

/// Per-frame LM registration of theta, eta and tau under the initial model.
std::vector<SequenceClip> register_frames(const HackModel& model, const std::vector<SequenceClip>& clips,
                                          const SkinningWeights& prior, int iterations) {
  HackModel rig = model;
  rig.skinning = prior;
  FitConfig fc;
  fc.free_groups = kGroupTheta | (model.has_larynx() ? kGroupEta | kGroupTau : 0u);
  fc.weights = {1.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  fc.max_iterations = iterations;
  std::vector<SequenceClip> out = clips;
  for (SequenceClip& clip : out)
    for (std::size_t t = 0; t < clip.params.size() && t < clip.targets.size(); ++t)
      clip.params[t] = fit_to_target(rig, clip.targets[t], clip.params[t], fc).params;
  return out;
}

}  // namespace

DynamicResult learn_dynamic(const HackModel& static_model, const std::vector<SequenceClip>& clips,
                            const SkinningWeights& prior, const DynamicConfig& cfg,
                            const std::function<void(const std::string&)>& log) {
  prior.validate(static_model.num_joints());
  const std::vector<SequenceClip> registered =
      cfg.init_fit_iterations > 0 ? register_frames(static_model, clips, prior, cfg.init_fit_iterations) : clips;
  const DynamicObjective objective(static_model, registered, prior.W, cfg.weights, cfg.temporal, cfg.collision);
  DynamicResult res;
  DynamicState state = objective.initial_state();
  const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> support = prior.support();
  const double tau_max = static_model.has_larynx() ? static_model.larynx.tau_max : 0.1;

  DynamicFreeMask mask;
  mask.expression_deltas = cfg.finetune_expressions;
  struct SubjectAdam {
    AdamBlock theta, psi, eta, tau, pose, expr;
  };
  std::vector<SubjectAdam> adam(state.subjects.size());
  AdamBlock adam_w;
  if (log) log(epoch_log_header());

  DynamicState grad;
  double best_total = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const EnergyTerms e = objective.evaluate(state, &grad, mask);
    if (!std::isfinite(e.total()))
      throw Error("learn_dynamic: objective diverged at epoch " + std::to_string(epoch));
    res.history.push_back(e);
    if (log) log(format_epoch_line(epoch, e));
    if (e.total() < best_total) {
      best_total = e.total();
      res.best = e;
      res.best_epoch = epoch;
      res.state = state;
    } else if (cfg.patience > 0 && epoch - res.best_epoch >= cfg.patience) {
      break;
    }
    if (epoch + 1 == cfg.epochs) break;
    const double lr = decayed_rate(cfg.lr, cfg.lr_final, epoch, cfg.epochs);
    const long step = epoch + 1;
    for (std::size_t s = 0; s < state.subjects.size(); ++s) {
      SubjectState& x = state.subjects[s];
      const SubjectState& g = grad.subjects[s];
      SubjectAdam& a = adam[s];
      a.theta.step(x.theta, g.theta, lr * cfg.lr_theta, step);
      if (x.psi.size() > 0) {
        a.psi.step(x.psi, g.psi, lr * cfg.lr_psi, step);
        x.psi = x.psi.cwiseMax(kPsiMin).cwiseMin(kPsiMax);
      }
      a.eta.step(x.eta, g.eta, lr * cfg.lr_eta, step);
      x.eta = x.eta.cwiseMax(0.0).cwiseMin(kEtaMax);
      a.tau.step(x.tau, g.tau, lr * cfg.lr_tau, step);
      x.tau = x.tau.cwiseMax(-tau_max).cwiseMin(tau_max);
      a.pose.step(x.pose_deltas, g.pose_deltas, lr * cfg.lr_pose_deltas, step);
      if (cfg.finetune_expressions && x.expression_deltas.size() > 0)
        a.expr.step(x.expression_deltas, g.expression_deltas, lr * cfg.lr_expression, step);
    }
    adam_w.step(state.weights, grad.weights, lr * cfg.lr_weights, step);
    SkinningWeights sw{state.weights};
    sw.project_to_simplex(support);
    state.weights = std::move(sw.W);
  }

  // Pose blendshape space and its mapping network.
  res.model = static_model;
  res.model.skinning.W = res.state.weights;
  if (cfg.finetune_expressions)
    res.warnings.push_back("expression blendshapes were fine-tuned per subject; M_E is unchanged");
  const int subjects = static_cast<int>(res.state.subjects.size());
  if (subjects >= 2 && cfg.train_pose_net) {
    std::vector<VectorXd> betas;
    std::vector<BlendshapeSet> sets;
    MatrixXd P(3L * static_model.num_vertices() * kPoseFeatures, subjects);
    for (int s = 0; s < subjects; ++s) {
      const SubjectState& st = res.state.subjects[static_cast<std::size_t>(s)];
      BlendshapeSet set{st.pose_deltas, BlendshapeKind::pose};
      P.col(s) = set.flatten();
      sets.push_back(std::move(set));
      betas.push_back(st.beta);
    }
    res.model.pose_space = fit_pca(P, std::min(cfg.pose_components, subjects - 1));
    std::mt19937_64 rng(cfg.seed);
    MappingTrainResult mt = train_mapping_network(betas, sets, res.model.pose_space, cfg.mapping, rng, cfg.mapping_hidden);
    res.model.pose_net = std::move(mt.network);
    res.pose_net_report = std::move(mt.report);
  } else {
    res.warnings.push_back("pose blendshape space needs at least two subjects; M_P not trained");
  }
  res.model.validate();
  return res;
}

}  // namespace hack
