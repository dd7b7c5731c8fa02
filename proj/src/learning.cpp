#include "hack/learning.hpp"

#include <cmath>

namespace hack {

void LossWeights::validate() const {
  for (double w : {rec, rot, sim, col, tem, smo, ski})
    if (!(w >= 0.0)) throw Error("loss weights must be non-negative");
}

// ------------------------------------------------------------------ temporal

namespace {

void check_series(Eigen::Index frames, const TemporalTerm& term, double fps) {
  if (frames < 3) throw Error("temporal_energy: need at least 3 frames, got " + std::to_string(frames));
  if (!(term.eps >= 0.0)) throw Error("temporal_energy: eps must be non-negative");
  if (!(fps > 0.0)) throw Error("temporal_energy: fps must be positive");
}

}  // namespace

double temporal_energy(const VectorXd& v, const TemporalTerm& term, double fps, bool per_second) {
  check_series(v.size(), term, fps);
  const double s = per_second ? fps : 1.0;
  const Eigen::Index T = v.size();
  double e1 = 0.0, e2 = 0.0;
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    const double excess = std::max(std::abs((v[t + 1] - v[t]) * s) - term.eps, 0.0);
    e1 += excess * excess;
  }
  for (Eigen::Index t = 1; t + 1 < T; ++t) {
    const double dd = (v[t + 1] - 2.0 * v[t] + v[t - 1]) * s * s;
    e2 += dd * dd;
  }
  return term.lambda_v * (term.lambda1 * e1 + term.lambda2 * e2);
}

VectorXd temporal_energy_gradient(const VectorXd& v, const TemporalTerm& term, double fps, bool per_second) {
  check_series(v.size(), term, fps);
  const double s = per_second ? fps : 1.0;
  const Eigen::Index T = v.size();
  VectorXd g = VectorXd::Zero(T);
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    const double d = (v[t + 1] - v[t]) * s;
    const double excess = std::abs(d) - term.eps;
    if (excess <= 0.0) continue;
    const double gd = term.lambda_v * term.lambda1 * 2.0 * excess * (d > 0 ? 1.0 : -1.0) * s;
    g[t + 1] += gd;
    g[t] -= gd;
  }
  for (Eigen::Index t = 1; t + 1 < T; ++t) {
    const double dd = (v[t + 1] - 2.0 * v[t] + v[t - 1]) * s * s;
    const double gd = term.lambda_v * term.lambda2 * 2.0 * dd * s * s;
    g[t + 1] += gd;
    g[t] -= 2.0 * gd;
    g[t - 1] += gd;
  }
  return g;
}

double temporal_energy(const MatrixXd& series, const TemporalTerm& term, double fps, bool per_second) {
  double e = 0.0;
  for (Eigen::Index r = 0; r < series.rows(); ++r)
    e += temporal_energy(VectorXd(series.row(r).transpose()), term, fps, per_second);
  return e;
}

MatrixXd temporal_energy_gradient(const MatrixXd& series, const TemporalTerm& term, double fps, bool per_second) {
  MatrixXd g(series.rows(), series.cols());
  for (Eigen::Index r = 0; r < series.rows(); ++r)
    g.row(r) = temporal_energy_gradient(VectorXd(series.row(r).transpose()), term, fps, per_second).transpose();
  return g;
}

// -------------------------------------------------------------- sequences

void SequenceClip::validate() const {
  if (!(fps > 0.0)) throw Error("clip " + subject + ": fps must be positive");
  if (!params.empty() && !targets.empty() && params.size() != targets.size())
    throw DimensionError("clip " + subject + ": " + std::to_string(params.size()) + " parameter frames but " +
                         std::to_string(targets.size()) + " target meshes");
  for (std::size_t t = 1; t < targets.size(); ++t) require_same_topology(targets[0], targets[t], "clip");
}

double reconstruction_energy(const HackModel& model, const std::vector<FullParams>& params,
                             const std::vector<Mesh>& targets) {
  require_dims(params.size() == targets.size(), "reconstruction_energy: " + std::to_string(params.size()) +
                                                    " parameter frames but " + std::to_string(targets.size()) +
                                                    " targets");
  double e = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    require_same_topology(model.template_mesh, targets[t], "reconstruction_energy");
    const Mesh m = forward(model, params[t]);
    e += (m.vertices() - targets[t].vertices()).squaredNorm();
  }
  return e;
}

// ------------------------------------------------------------------ static

namespace {

PcaSpace clip_to_rank(const PcaSpace& space, double tol, const std::string& what, std::vector<std::string>& warnings) {
  const int rank = numerical_rank(space, tol);
  if (rank >= 1 && rank < space.components()) {
    warnings.push_back(what + ": kept " + std::to_string(rank) + " of " + std::to_string(space.components()) +
                       " components (numerical rank)");
    return truncate(space, rank);
  }
  return space;
}

}  // namespace

StaticResult learn_static(const StaticInputs& in, const StaticConfig& cfg) {
  if (in.neutrals.empty()) throw Error("learn_static: no neutral meshes");
  const Mesh& first = in.neutrals.front();
  for (const Mesh& m : in.neutrals) require_same_topology(first, m, "learn_static");
  const int N = first.num_vertices();
  const auto n = static_cast<Eigen::Index>(in.neutrals.size());
  StaticResult res;
  HackModel& model = res.model;

  // Identity space.
  MatrixXd X(3L * N, n);
  for (Eigen::Index i = 0; i < n; ++i) X.col(i) = flat(in.neutrals[static_cast<std::size_t>(i)].vertices());
  PcaSpace shape = fit_pca(X, cfg.shape_components);
  shape = clip_to_rank(shape, cfg.rank_tol, "shape space", res.warnings);
  model.template_mesh = Mesh(Vertices(as_vertices(shape.mean)), first.shared_topology());
  model.shape_space = shape;
  for (Eigen::Index i = 0; i < n; ++i) {
    res.betas.push_back(project(shape, X.col(i)));
    const VectorXd rec = reconstruct(shape, res.betas.back());
    const Vertices diff = as_vertices(VectorXd(rec - X.col(i)));
    res.max_reconstruction_error = std::max(res.max_reconstruction_error, diff.colwise().norm().maxCoeff());
  }

  // Skeleton.
  if (in.annotated.empty() || in.annotated.size() != in.joint_annotations.size())
    throw Error("learn_static: joint annotations missing or inconsistent with the annotated identity list");
  std::vector<VectorXd> jb;
  for (int id : in.annotated) {
    if (id < 0 || id >= n) throw Error("learn_static: annotated identity " + std::to_string(id) + " out of range");
    jb.push_back(res.betas[static_cast<std::size_t>(id)]);
  }
  const JointRegressorFit jr = fit_joint_regressor(jb, in.joint_annotations);
  if (jr.regularized) res.warnings.push_back("joint regressor: underdetermined design, ridge applied");
  model.joint_regressor = jr.regressor;
  res.joint_residual_rms = jr.residual_rms;
  model.skeleton = Skeleton::cervical(model.joint_regressor.regress(VectorXd::Zero(shape.components())));
  in.skinning.validate(model.skeleton.num_joints());
  require_dims(in.skinning.W.rows() == N, "learn_static: skinning weights have " +
                                              std::to_string(in.skinning.W.rows()) + " rows for " +
                                              std::to_string(N) + " vertices");
  model.skinning = in.skinning;
  in.limits.validate();
  model.limits = in.limits;

  // Larynx.
  if (!in.larynx_displacements.empty()) {
    require_dims(static_cast<Eigen::Index>(in.larynx_displacements.size()) == n,
                 "learn_static: one larynx displacement per identity is required");
    LarynxFit lf = fit_larynx_basis(res.betas, in.larynx_displacements, model.template_mesh, cfg.larynx_resolution,
                                    cfg.larynx);
    if (!lf.warning.empty()) res.warnings.push_back(lf.warning);
    model.larynx = std::move(lf.basis);
  }

  std::mt19937_64 rng(cfg.seed);

  // Person-specific expressions.
  std::vector<VectorXd> eb;
  std::vector<BlendshapeSet> sets;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(in.expression_scans.size()) && i < n; ++i) {
    const auto& scans = in.expression_scans[static_cast<std::size_t>(i)];
    if (scans.empty()) continue;
    BlendshapeSet s;
    s.kind = BlendshapeKind::expression;
    s.deltas.resize(3L * N, static_cast<Eigen::Index>(scans.size()));
    for (std::size_t j = 0; j < scans.size(); ++j) {
      require_same_topology(first, scans[j], "learn_static expression scan");
      s.deltas.col(static_cast<Eigen::Index>(j)) =
          flat(scans[j].vertices()) - flat(in.neutrals[static_cast<std::size_t>(i)].vertices());
    }
    if (!sets.empty() && s.count() != sets.front().count())
      throw DimensionError("learn_static: identities have different expression counts");
    sets.push_back(std::move(s));
    eb.push_back(res.betas[static_cast<std::size_t>(i)]);
  }
  if (sets.size() >= 2) {
    MatrixXd E(sets.front().deltas.size(), static_cast<Eigen::Index>(sets.size()));
    for (std::size_t i = 0; i < sets.size(); ++i) E.col(static_cast<Eigen::Index>(i)) = sets[i].flatten();
    model.num_expressions = sets.front().count();
    model.expression_space = clip_to_rank(fit_pca(E, cfg.expression_components), cfg.rank_tol, "expression space",
                                          res.warnings);
    MappingTrainResult mt =
        train_mapping_network(eb, sets, model.expression_space, cfg.mapping, rng, cfg.mapping_hidden);
    model.expression_net = std::move(mt.network);
    res.mapping_report = std::move(mt.report);
  } else if (!sets.empty()) {
    res.warnings.push_back("expression space needs at least two identities with scans; skipped");
  }

  // Appearance.
  if (in.textures.size() >= 2) {
    const AppearanceStack& t0 = in.textures.front();
    MatrixXd A(t0.data.size(), static_cast<Eigen::Index>(in.textures.size()));
    for (std::size_t i = 0; i < in.textures.size(); ++i) {
      const AppearanceStack& t = in.textures[i];
      require_dims(t.rows == t0.rows && t.cols == t0.cols && t.channels == t0.channels,
                   "learn_static: textures differ in size");
      A.col(static_cast<Eigen::Index>(i)) = t.data;
    }
    model.appearance.space =
        clip_to_rank(fit_pca(A, cfg.appearance_components), cfg.rank_tol, "appearance space", res.warnings);
    model.appearance.rows = t0.rows;
    model.appearance.cols = t0.cols;
    model.appearance.channels = t0.channels;
  }
  model.validate();
  return res;
}

}  // namespace hack
