#include "hack/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

namespace hack {

// ------------------------------------------------------------------ tracking

namespace {

void check_track_inputs(const NormalMapFrame& frame, const LarynxKernel& kernel) {
  const NormalMapFrame& k = kernel.image;
  require_dims(k.rows == LarynxKernel::kSize && k.cols == LarynxKernel::kSize,
               "track_larynx: kernel must be 70 x 70 x 3");
  require_dims(frame.data.size() == static_cast<std::size_t>(frame.rows * frame.cols * 3),
               "track_larynx: frame buffer does not match its size");
  if (frame.rows < k.rows || frame.cols < k.cols)
    throw DimensionError("track_larynx: frame " + std::to_string(frame.rows) + "x" + std::to_string(frame.cols) +
                         " is smaller than the 70x70 kernel");
}

template <typename Score>
TrackResult argmax_response(const NormalMapFrame& frame, const LarynxKernel& kernel, double tau0, Score score) {
  check_track_inputs(frame, kernel);
  TrackResult best;
  best.response = -std::numeric_limits<double>::infinity();
  for (int r = 0; r + kernel.image.rows <= frame.rows; ++r)
    for (int c = 0; c + kernel.image.cols <= frame.cols; ++c) {
      const double s = score(r, c);
      if (s > best.response) {
        best.response = s;
        best.row = r;
        best.col = c;
      }
    }
  best.tau = best.row - tau0;
  return best;
}

}  // namespace

TrackResult track_larynx(const NormalMapFrame& frame, const LarynxKernel& kernel, double tau0) {
  const NormalMapFrame& k = kernel.image;
  return argmax_response(frame, kernel, tau0, [&](int r0, int c0) {
    double s = 0.0;
    for (int r = 0; r < k.rows; ++r) {
      const float* f = &frame.data[(static_cast<std::size_t>(r0 + r) * frame.cols + c0) * 3];
      const float* g = &k.data[static_cast<std::size_t>(r) * k.cols * 3];
      for (int i = 0; i < k.cols * 3; ++i) s += static_cast<double>(f[i]) * g[i];
    }
    return s;
  });
}

TrackResult track_larynx_normalized(const NormalMapFrame& frame, const LarynxKernel& kernel, double tau0) {
  const NormalMapFrame& k = kernel.image;
  const std::size_t n = k.data.size();
  double kmean = 0.0;
  for (float v : k.data) kmean += v;
  kmean /= static_cast<double>(n);
  double knorm = 0.0;
  for (float v : k.data) knorm += (v - kmean) * (v - kmean);
  knorm = std::sqrt(knorm);
  return argmax_response(frame, kernel, tau0, [&](int r0, int c0) {
    double sum = 0.0, sq = 0.0, cross = 0.0;
    for (int r = 0; r < k.rows; ++r) {
      const float* f = &frame.data[(static_cast<std::size_t>(r0 + r) * frame.cols + c0) * 3];
      const float* g = &k.data[static_cast<std::size_t>(r) * k.cols * 3];
      for (int i = 0; i < k.cols * 3; ++i) {
        sum += f[i];
        sq += static_cast<double>(f[i]) * f[i];
        cross += static_cast<double>(f[i]) * (g[i] - kmean);
      }
    }
    const double var = sq - sum * sum / static_cast<double>(n);
    const double denom = std::sqrt(std::max(var, 0.0)) * knorm;
    return denom > 0 ? cross / denom : 0.0;
  });
}

// --------------------------------------------------------------- orientation

OrientationNet OrientationNet::create(const RotationLimits& limits, std::mt19937_64& rng, int hidden, int num_joints) {
  OrientationNet o;
  o.net = Mlp::create({3, hidden, hidden, 3 * num_joints}, rng);
  o.limits = limits;
  return o;
}

PoseParams soft_clamp_pose(const PoseParams& pose, const RotationLimits& limits, double margin_fraction) {
  require_dims(limits.lo.rows() == pose.theta.cols(), "soft_clamp_pose: limits and pose joint counts differ");
  PoseParams out = pose;
  for (Eigen::Index k = 0; k < pose.theta.cols(); ++k) {
    const Eigen::Vector3d e = axis_angle_to_euler<double>(pose.theta.col(k)).angles;
    Eigen::Vector3d c = e;
    bool changed = false;
    for (int a = 0; a < 3; ++a) {
      const double lo = limits.lo(k, a), hi = limits.hi(k, a);
      const double m = margin_fraction * (hi - lo);
      if (m <= 0) {
        c[a] = std::clamp(e[a], lo, hi);
      } else if (e[a] > hi - m) {
        c[a] = hi - m + m * std::tanh((e[a] - (hi - m)) / m);
      } else if (e[a] < lo + m) {
        c[a] = lo + m - m * std::tanh(((lo + m) - e[a]) / m);
      }
      changed = changed || c[a] != e[a];
    }
    if (changed) out.theta.col(k) = euler_to_axis_angle<double>(c);
  }
  return out;
}

PoseParams orientation_to_pose(const OrientationNet& net, const Eigen::Vector3d& head_rotation) {
  if (!net.trained) throw Error("orientation_to_pose: the orientation network is untrained");
  const VectorXd y = net.net(head_rotation);
  return soft_clamp_pose(PoseParams::from_flat(y), net.limits);
}

Eigen::Vector3d head_orientation(const Skeleton& skel, const PoseParams& pose) {
  const auto world = forward_kinematics(skel, pose);
  return rotation_log<double>(world.back().R);
}

TrainReport train_orientation_net(OrientationNet& net, const std::vector<Eigen::Vector3d>& orientations,
                                  const std::vector<PoseParams>& poses, const MlpTrainConfig& cfg) {
  if (orientations.empty() || orientations.size() != poses.size())
    throw Error("train_orientation_net: need matching, non-empty orientation and pose lists");
  const Eigen::Index n = static_cast<Eigen::Index>(orientations.size());
  MatrixXd X(3, n), Y(net.net.output_size(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X.col(i) = orientations[static_cast<std::size_t>(i)];
    const VectorXd f = poses[static_cast<std::size_t>(i)].flat();
    require_dims(f.size() == Y.rows(), "train_orientation_net: pose size does not match the network output");
    Y.col(i) = f;
  }
  net.net.fit_normalization(X, Y);
  TrainReport rep = train_mlp(net.net, X, Y, cfg);
  net.trained = true;
  return rep;
}

// ------------------------------------------------------- sequence predictor

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct StepCache {
  VectorXd x, h_prev, z, r, hh, h;
};

}  // namespace

SequencePredictor::SequencePredictor(int num_psi, const Config& cfg) : num_psi_(num_psi), cfg_(cfg) {
  if (num_psi < 1) throw Error("SequencePredictor: need at least one expression channel");
  std::mt19937_64 rng(cfg.seed);
  const int in = num_psi + 1;
  auto init = [&](int rows, int cols) {
    const double a = std::sqrt(3.0 / cols);
    std::uniform_real_distribution<double> u(-a, a);
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
  };
  for (int l = 0; l < cfg.layers; ++l) {
    const int lin = l == 0 ? in : cfg.hidden;
    Gru g;
    g.Wz = init(cfg.hidden, lin);
    g.Wr = init(cfg.hidden, lin);
    g.Wh = init(cfg.hidden, lin);
    g.Uz = init(cfg.hidden, cfg.hidden);
    g.Ur = init(cfg.hidden, cfg.hidden);
    g.Uh = init(cfg.hidden, cfg.hidden);
    g.bz = VectorXd::Zero(cfg.hidden);
    g.br = VectorXd::Zero(cfg.hidden);
    g.bh = VectorXd::Zero(cfg.hidden);
    layers.push_back(std::move(g));
  }
  skip = VectorXd::Zero(in + 1);
  head = VectorXd::Zero(cfg.hidden);
  in_scale = VectorXd::Ones(in);
}

double SequencePredictor::step(std::vector<VectorXd>& h, const VectorXd& x) const {
  VectorXd in = x.cwiseQuotient(in_scale);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Gru& g = layers[l];
    const VectorXd z = (g.Wz * in + g.Uz * h[l] + g.bz).unaryExpr(&sigmoid);
    const VectorXd r = (g.Wr * in + g.Ur * h[l] + g.br).unaryExpr(&sigmoid);
    const VectorXd hh = (g.Wh * in + g.Uh * r.cwiseProduct(h[l]) + g.bh).array().tanh().matrix();
    h[l] = (VectorXd::Ones(z.size()) - z).cwiseProduct(h[l]) + z.cwiseProduct(hh);
    in = h[l];
  }
  const Eigen::Index n = x.size();
  return head.dot(in) + skip.head(n).dot(x) + skip[n];
}

VectorXd SequencePredictor::rollout(const MatrixXd& psi, const VectorXd& history) const {
  if (psi.cols() == 0) throw Error("predict_larynx_sequence: empty expression sequence");
  require_dims(psi.rows() == num_psi_, "predict_larynx_sequence: expected " + std::to_string(num_psi_) +
                                           " expression channels, got " + std::to_string(psi.rows()));
  std::vector<VectorXd> h(layers.size(), VectorXd::Zero(cfg_.hidden));
  VectorXd out(psi.cols());
  double prev = history.size() > 0 ? history[history.size() - 1] : 0.0;
  VectorXd x(num_psi_ + 1);
  for (Eigen::Index k = 0; k < psi.cols(); ++k) {
    x.head(num_psi_) = psi.col(k);
    x[num_psi_] = prev;
    prev = step(h, x);
    out[k] = prev;
  }
  return out;
}

double SequencePredictor::clip_loss_grad(const MatrixXd& psi, const VectorXd& tau, SequencePredictor* grad) const {
  const Eigen::Index T = psi.cols();
  const std::size_t L = layers.size();
  const int H = cfg_.hidden;
  const int n = num_psi_ + 1;
  std::vector<std::vector<StepCache>> cache(L, std::vector<StepCache>(static_cast<std::size_t>(T)));
  std::vector<VectorXd> h(L, VectorXd::Zero(H));
  VectorXd err(T);
  std::vector<VectorXd> xs(static_cast<std::size_t>(T));
  double loss = 0.0;
  for (Eigen::Index k = 0; k < T; ++k) {
    VectorXd x(n);
    x.head(num_psi_) = psi.col(k);
    x[num_psi_] = k > 0 ? tau[k - 1] : 0.0;
    xs[static_cast<std::size_t>(k)] = x;
    VectorXd in = x.cwiseQuotient(in_scale);
    for (std::size_t l = 0; l < L; ++l) {
      const Gru& g = layers[l];
      StepCache& c = cache[l][static_cast<std::size_t>(k)];
      c.x = in;
      c.h_prev = h[l];
      c.z = (g.Wz * in + g.Uz * h[l] + g.bz).unaryExpr(&sigmoid);
      c.r = (g.Wr * in + g.Ur * h[l] + g.br).unaryExpr(&sigmoid);
      c.hh = (g.Wh * in + g.Uh * c.r.cwiseProduct(h[l]) + g.bh).array().tanh().matrix();
      h[l] = (VectorXd::Ones(H) - c.z).cwiseProduct(h[l]) + c.z.cwiseProduct(c.hh);
      c.h = h[l];
      in = h[l];
    }
    const double y = head.dot(in) + skip.head(n).dot(x) + skip[n];
    err[k] = y - tau[k];
    loss += err[k] * err[k];
  }
  if (grad == nullptr) return loss;

  // Backward through time; the inputs are teacher-forced so tau does not
  // feed back into the graph.
  std::vector<VectorXd> dh(L, VectorXd::Zero(H));
  for (Eigen::Index k = T - 1; k >= 0; --k) {
    const double dy = 2.0 * err[k];
    const VectorXd& x = xs[static_cast<std::size_t>(k)];
    grad->head += dy * cache[L - 1][static_cast<std::size_t>(k)].h;
    grad->skip.head(n) += dy * x;
    grad->skip[n] += dy;
    VectorXd dout = dy * head;
    for (std::size_t li = L; li-- > 0;) {
      const Gru& g = layers[li];
      Gru& gg = grad->layers[li];
      const StepCache& c = cache[li][static_cast<std::size_t>(k)];
      const VectorXd dhl = dh[li] + dout;
      const VectorXd dhh = dhl.cwiseProduct(c.z);
      const VectorXd dz = dhl.cwiseProduct(c.hh - c.h_prev);
      VectorXd dhprev = dhl.cwiseProduct(VectorXd::Ones(H) - c.z);
      const VectorXd ah = dhh.cwiseProduct((VectorXd::Ones(H) - c.hh.cwiseAbs2()));
      const VectorXd az = dz.cwiseProduct(c.z.cwiseProduct(VectorXd::Ones(H) - c.z));
      const VectorXd rh = c.r.cwiseProduct(c.h_prev);
      const VectorXd drh = g.Uh.transpose() * ah;
      const VectorXd dr = drh.cwiseProduct(c.h_prev);
      dhprev += drh.cwiseProduct(c.r);
      const VectorXd ar = dr.cwiseProduct(c.r.cwiseProduct(VectorXd::Ones(H) - c.r));
      gg.Wz += az * c.x.transpose();
      gg.Wr += ar * c.x.transpose();
      gg.Wh += ah * c.x.transpose();
      gg.Uz += az * c.h_prev.transpose();
      gg.Ur += ar * c.h_prev.transpose();
      gg.Uh += ah * rh.transpose();
      gg.bz += az;
      gg.br += ar;
      gg.bh += ah;
      dhprev += g.Uz.transpose() * az + g.Ur.transpose() * ar;
      dh[li] = dhprev;
      dout = g.Wz.transpose() * az + g.Wr.transpose() * ar + g.Wh.transpose() * ah;
    }
  }
  return loss;
}

double SequencePredictor::sequence_loss(const MatrixXd& psi, const VectorXd& tau) const {
  require_dims(psi.rows() == num_psi_ && psi.cols() == tau.size(), "sequence_loss: psi and tau sizes differ");
  return clip_loss_grad(psi, tau, nullptr) / std::max<Eigen::Index>(1, tau.size());
}

TrainReport SequencePredictor::fit(const std::vector<MatrixXd>& psi_clips, const std::vector<VectorXd>& tau_clips) {
  if (psi_clips.empty() || psi_clips.size() != tau_clips.size())
    throw Error("SequencePredictor::fit: need matching, non-empty clip lists");
  const int n = num_psi_ + 1;
  Eigen::Index total = 0;
  for (std::size_t c = 0; c < psi_clips.size(); ++c) {
    require_dims(psi_clips[c].rows() == num_psi_ && psi_clips[c].cols() == tau_clips[c].size(),
                 "SequencePredictor::fit: clip " + std::to_string(c) + " has mismatched sizes");
    if (psi_clips[c].cols() == 0) throw Error("SequencePredictor::fit: empty clip");
    total += psi_clips[c].cols();
  }

  // Ridge warm start of the skip readout; the bias is not penalized.
  MatrixXd A(total, n + 1);
  VectorXd b(total);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < psi_clips.size(); ++c)
    for (Eigen::Index k = 0; k < psi_clips[c].cols(); ++k, ++row) {
      A.row(row).head(num_psi_) = psi_clips[c].col(k).transpose();
      A(row, num_psi_) = k > 0 ? tau_clips[c][k - 1] : 0.0;
      A(row, n) = 1.0;
      b[row] = tau_clips[c][k];
    }
  in_scale = A.leftCols(n).cwiseAbs().colwise().maxCoeff().transpose();
  for (Eigen::Index i = 0; i < in_scale.size(); ++i)
    if (in_scale[i] <= 0) in_scale[i] = 1.0;
  MatrixXd G = A.transpose() * A;
  const double scale = std::max(1.0, G.diagonal().maxCoeff());
  for (int i = 0; i < n; ++i) G(i, i) += cfg_.ridge * scale;
  skip = G.ldlt().solve(A.transpose() * b);
  head.setZero();

  auto total_loss = [&]() {
    double l = 0.0;
    for (std::size_t c = 0; c < psi_clips.size(); ++c) l += clip_loss_grad(psi_clips[c], tau_clips[c], nullptr);
    return l / static_cast<double>(total);
  };

  TrainReport rep;
  rep.best_loss = total_loss();
  rep.best_epoch = 0;
  rep.losses.push_back(rep.best_loss);
  SequencePredictor best = *this;
  std::vector<AdamBlock> adam(layers.size() * 9 + 2);
  const MlpTrainConfig& tc = cfg_.train;
  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    SequencePredictor grad = *this;
    for (auto& g : grad.layers)
      for (MatrixXd* m : {&g.Wz, &g.Wr, &g.Wh, &g.Uz, &g.Ur, &g.Uh}) m->setZero();
    for (auto& g : grad.layers)
      for (VectorXd* v : {&g.bz, &g.br, &g.bh}) v->setZero();
    grad.skip.setZero();
    grad.head.setZero();
    for (std::size_t c = 0; c < psi_clips.size(); ++c) clip_loss_grad(psi_clips[c], tau_clips[c], &grad);
    const double inv = 1.0 / static_cast<double>(total);
    const double lr = decayed_rate(tc.lr, tc.lr_final, epoch - 1, tc.max_epochs);
    std::size_t slot = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      Gru& p = layers[l];
      Gru& g = grad.layers[l];
      for (auto [x, dx] : {std::pair{&p.Wz, &g.Wz}, {&p.Wr, &g.Wr}, {&p.Wh, &g.Wh}, {&p.Uz, &g.Uz},
                           {&p.Ur, &g.Ur}, {&p.Uh, &g.Uh}})
        adam[slot++].step(*x, *dx * inv, lr, epoch, tc.adam);
      for (auto [x, dx] : {std::pair{&p.bz, &g.bz}, {&p.br, &g.br}, {&p.bh, &g.bh}})
        adam[slot++].step(*x, *dx * inv, lr, epoch, tc.adam);
    }
    adam[slot++].step(skip, grad.skip * inv, lr, epoch, tc.adam);
    adam[slot++].step(head, grad.head * inv, lr, epoch, tc.adam);
    const double loss = total_loss();
    if (!std::isfinite(loss)) throw Error("SequencePredictor::fit: loss diverged at epoch " + std::to_string(epoch));
    rep.losses.push_back(loss);
    rep.epochs = epoch;
    if (loss < rep.best_loss) {
      rep.best_loss = loss;
      rep.best_epoch = epoch;
      best = *this;
    } else if (tc.patience > 0 && epoch - rep.best_epoch >= tc.patience) {
      rep.early_stopped = true;
      break;
    }
  }
  *this = best;
  trained_ = true;
  return rep;
}

VectorXd predict_larynx_sequence(const SequencePredictor& predictor, const MatrixXd& psi, const VectorXd& history) {
  if (!predictor.trained()) throw Error("predict_larynx_sequence: predictor is untrained");
  return predictor.rollout(psi, history);
}

// ---------------------------------------------------------------- retarget

RigTarget rig_target_from_model(const HackModel& model, const VectorXd& beta) { return {make_rig(model, beta)}; }

RigTarget make_rig_target(const Mesh& rest, const Skeleton& skeleton, const SkinningWeights& weights,
                          const BlendshapeSet* expression) {
  weights.validate(skeleton.num_joints());
  require_dims(weights.W.rows() == rest.num_vertices(),
               "rig target: " + std::to_string(weights.W.rows()) + " weight rows for " +
                   std::to_string(rest.num_vertices()) + " vertices");
  RigTarget t;
  t.rig.topology = rest.shared_topology();
  t.rig.skeleton = skeleton;
  t.rig.order = skeleton.topological_order();
  t.rig.base = flat(rest.vertices());
  t.rig.weights = weights;
  t.rig.expression.kind = BlendshapeKind::expression;
  t.rig.pose.kind = BlendshapeKind::pose;
  if (expression != nullptr) {
    require_dims(expression->deltas.rows() == 3L * rest.num_vertices(),
                 "rig target: expression blendshapes do not match the rest mesh");
    t.rig.expression = *expression;
  }
  return t;
}

Mesh retarget_pose(const HackModel& source, const FullParams& params, const RigTarget& target,
                   const BlendshapeSet* target_pose_blendshapes) {
  if (!target.rig.topology || target.rig.topology->id != source.template_mesh.topology_id())
    throw DimensionError("retarget_pose: target topology differs from the source template");
  if (target.rig.skeleton.names != source.skeleton.names)
    throw DimensionError("retarget_pose: target joint names differ from the source skeleton");
  require_dims(params.pose.theta.cols() == target.rig.skeleton.num_joints(),
               "retarget_pose: pose joint count differs from the target skeleton");
  if (target.rig.expression.count() > 0)
    require_dims(params.psi.size() == target.rig.expression.count(),
                 "retarget_pose: |psi| differs from the target expression blendshapes");
  if (target_pose_blendshapes == nullptr) return pose_rig(target.rig, params);
  require_dims(target_pose_blendshapes->deltas.rows() == target.rig.base.size() &&
                   target_pose_blendshapes->count() == kPoseFeatures,
               "retarget_pose: pose blendshapes must be 3N x 63");
  SubjectRig rig = target.rig;
  rig.pose = *target_pose_blendshapes;
  return pose_rig(rig, params);
}

}  // namespace hack
