#include "doctest.h"
#include "fixtures.hpp"
#include "hack/collision.hpp"
#include "hack/laplacian.hpp"
#include "hack/learning.hpp"

#include <set>

using namespace hack;

namespace {

double naive_temporal(const VectorXd& x, const TemporalTerm& term, double fps, bool per_second) {
  const double s1 = per_second ? fps : 1.0, s2 = per_second ? fps * fps : 1.0;
  double e = 0.0;
  for (Eigen::Index t = 0; t + 1 < x.size(); ++t) {
    const double v = s1 * (x[t + 1] - x[t]);
    const double m = std::max(std::abs(v) - term.eps, 0.0);
    e += term.lambda1 * m * m;
  }
  for (Eigen::Index t = 1; t + 1 < x.size(); ++t) {
    const double a = s2 * (x[t + 1] - 2.0 * x[t] + x[t - 1]);
    e += term.lambda2 * a * a;
  }
  return term.lambda_v * e;
}

double naive_laplacian(const Mesh& mesh, const Vertices& f) {
  std::vector<std::set<int>> nbr(static_cast<std::size_t>(mesh.num_vertices()));
  for (int c = 0; c < mesh.num_faces(); ++c)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        if (a != b) nbr[mesh.faces()(a, c)].insert(mesh.faces()(b, c));
  double e = 0.0;
  for (int i = 0; i < mesh.num_vertices(); ++i) {
    Eigen::Vector3d m = Eigen::Vector3d::Zero();
    for (int j : nbr[i]) m += f.col(j);
    e += (f.col(i) - m / static_cast<double>(nbr[i].size())).squaredNorm();
  }
  return e;
}

std::vector<SequenceClip> short_clips(int frames) {
  std::vector<SequenceClip> clips = fixtures::small_truth().clips;
  for (auto& c : clips) {
    c.params.resize(static_cast<std::size_t>(frames));
    c.targets.resize(static_cast<std::size_t>(frames));
  }
  return clips;
}

}  // namespace

TEST_CASE("default loss weights") {
  const LossWeights w;
  CHECK(w.rec == 1e5);
  CHECK(w.rot == 1e6);
  CHECK(w.sim == 5e3);
  CHECK(w.col == 5e5);
  CHECK(w.tem == 1e6);
  CHECK(w.smo == 5e-2);
  CHECK(w.ski == 1.0);
  LossWeights bad;
  bad.tem = -1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("temporal energy matches a naive loop") {
  std::mt19937_64 rng(71);
  std::normal_distribution<double> g(0.0, 0.2);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int i = 0; i < 200; ++i) {
    const VectorXd x = VectorXd::NullaryExpr(3 + i % 20, [&] { return g(rng); });
    const TemporalTerm term{u(rng), u(rng), u(rng), 0.1 * u(rng)};
    for (bool ps : {false, true}) {
      const double ref = naive_temporal(x, term, 30.0, ps);
      CHECK(std::abs(temporal_energy(x, term, 30.0, ps) - ref) <= 1e-12 * std::max(1.0, ref));
    }
  }
  CHECK_THROWS_AS(temporal_energy(VectorXd(VectorXd::Zero(2)), TemporalTerm{}, 30.0), Error);
}

TEST_CASE("temporal gradient matches central differences") {
  std::mt19937_64 rng(72);
  std::normal_distribution<double> g(0.0, 0.2);
  const TemporalTerm term{1.5, 0.7, 3.0, 0.05};
  const VectorXd x = VectorXd::NullaryExpr(12, [&] { return g(rng); });
  const VectorXd grad = temporal_energy_gradient(x, term, 30.0);
  const double h = 1e-7;
  for (int i = 0; i < x.size(); ++i) {
    VectorXd p = x, m = x;
    p[i] += h;
    m[i] -= h;
    CHECK(std::abs(grad[i] - (temporal_energy(p, term, 30.0) - temporal_energy(m, term, 30.0)) / (2 * h)) < 1e-6);
  }
}

TEST_CASE("laplacian energy matches a naive neighbor loop") {
  const Mesh& mesh = fixtures::small_truth().model.template_mesh;
  const LaplacianOperator op(mesh);
  std::mt19937_64 rng(73);
  std::normal_distribution<double> g(0.0, 1.0);
  const Vertices f = Vertices::NullaryExpr(3, mesh.num_vertices(), [&] { return g(rng); });
  CHECK(std::abs(laplacian_energy(op, f) - naive_laplacian(mesh, f)) < 1e-12 * naive_laplacian(mesh, f));
  const Vertices grad = laplacian_energy_gradient(op, f);
  const double h = 1e-6;
  for (int j = 0; j < 20; ++j) {
    Vertices p = f, m = f;
    p.data()[j * 7] += h;
    m.data()[j * 7] -= h;
    CHECK(std::abs(grad.data()[j * 7] - (laplacian_energy(op, p) - laplacian_energy(op, m)) / (2 * h)) < 1e-5);
  }
  const Vertices c = Vertices::Constant(3, mesh.num_vertices(), 4.0);
  CHECK(laplacian_energy(op, c) < 1e-20);
}

TEST_CASE("collision energy vanishes at rest and grows when the skin touches the spine") {
  const HackModel& model = fixtures::small_truth().model;
  const Vertices& v = model.template_mesh.vertices();
  const Eigen::Matrix3Xd q = model.skeleton.rest;
  const Topology& topo = model.template_mesh.topology();
  CHECK(collision_energy(topo, v, q) == 0.0);
  Vertices squeezed = v;
  for (int i = 0; i < v.cols(); ++i) {
    Eigen::Vector3d d = v.col(i);
    d.head<2>() *= 0.05;
    squeezed.col(i) = d;
  }
  CHECK(collision_energy(topo, squeezed, q) > 0.0);
}

TEST_CASE("dynamic terms equal weighted naive sums") {
  const auto& truth = fixtures::small_truth();
  const std::vector<SequenceClip> clips = short_clips(6);
  const LossWeights w;
  const TemporalConfig tc;
  const DynamicObjective obj(truth.model, clips, truth.model.skinning.W, w, tc);
  DynamicState s = obj.initial_state();
  std::mt19937_64 rng(74);
  std::normal_distribution<double> g(0.0, 0.1);
  for (auto& st : s.subjects) st.theta += MatrixXd::NullaryExpr(st.theta.rows(), st.theta.cols(), [&] { return g(rng); });
  const EnergyTerms e = obj.evaluate(s);
  double rot = 0.0, sim = 0.0, tem = 0.0, smo = 0.0;
  const LaplacianOperator op(truth.model.template_mesh);
  for (const auto& st : s.subjects) {
    for (int t = 0; t < st.num_frames(); ++t) {
      const PoseParams p = PoseParams::from_flat(st.theta.col(t));
      rot += rotation_limit_energy(p, truth.model.limits);
      for (int k = 0; k + 1 < kNumJoints; ++k) sim += (p.theta.col(k) - p.theta.col(k + 1)).squaredNorm();
    }
    for (int r = 0; r < st.theta.rows(); ++r) tem += naive_temporal(st.theta.row(r).transpose(), tc.theta, st.fps, false);
    for (int r = 0; r < st.psi.rows(); ++r) tem += naive_temporal(st.psi.row(r).transpose(), tc.psi, st.fps, false);
    tem += naive_temporal(st.eta, tc.eta, st.fps, false) + naive_temporal(st.tau, tc.tau, st.fps, false);
    for (int b = 0; b < st.pose_deltas.cols(); ++b)
      smo += naive_laplacian(truth.model.template_mesh, Vertices(as_vertices(VectorXd(st.pose_deltas.col(b)))));
  }
  CHECK(std::abs(e.rot - w.rot * rot) <= 1e-12 * std::max(1.0, e.rot));
  CHECK(std::abs(e.sim - w.sim * sim) <= 1e-12 * std::max(1.0, e.sim));
  CHECK(std::abs(e.tem - w.tem * tem) <= 1e-12 * std::max(1.0, e.tem));
  CHECK(std::abs(e.smo - w.smo * smo) <= 1e-12 * std::max(1.0, e.smo));
  CHECK(e.ski == 0.0);
}

TEST_CASE("true parameters reconstruct the clip targets") {
  const auto& truth = fixtures::small_truth();
  const SequenceClip& c = truth.clips[0];
  double scale = 0.0;
  for (const auto& m : c.targets) scale += m.vertices().squaredNorm();
  CHECK(reconstruction_energy(truth.model, c.params, c.targets) < 1e-20 * scale);
}

TEST_CASE("dynamic objective gradient matches central differences") {
  const auto& truth = fixtures::small_truth();
  const DynamicObjective obj(truth.model, short_clips(4), truth.model.skinning.W, LossWeights{}, TemporalConfig{});
  DynamicState s = obj.initial_state();
  std::mt19937_64 rng(75);
  std::normal_distribution<double> g(0.0, 0.02);
  for (auto& st : s.subjects) {
    st.theta += MatrixXd::NullaryExpr(st.theta.rows(), st.theta.cols(), [&] { return g(rng); });
    st.pose_deltas += MatrixXd::NullaryExpr(st.pose_deltas.rows(), st.pose_deltas.cols(), [&] { return g(rng); });
    // Keep every slide strictly between texel rows, where the lookup is smooth.
    const double rows = truth.model.larynx.resolution.rows;
    for (Eigen::Index t = 0; t < st.tau.size(); ++t) st.tau[t] = (std::floor(st.tau[t] * rows) + 0.37) / rows;
    st.eta.array() += 0.2;
  }
  GradientCheckOptions opts;
  opts.max_coords_per_block = 16;
  const GradientCheckReport r = objective_gradient_check(obj, s, DynamicFreeMask{}, opts);
  INFO(r.note, " worst ", r.worst);
  if (!r.skipped) {
    CHECK(r.checked > 0);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("fitting recovers pose and larynx from a model-generated target") {
  const auto& truth = fixtures::small_truth();
  const FullParams& p = truth.clips[0].params[10];
  FullParams init = p;
  init.pose = PoseParams::zero();
  init.larynx = {0.5, 0.0};
  FitConfig cfg;
  cfg.free_groups = kGroupTheta | kGroupEta | kGroupTau;
  cfg.weights = {1, 0, 0, 0, 0, 0};
  cfg.max_iterations = 100;
  const FitReport r = fit_to_target(truth.model, forward(truth.model, p), init, cfg);
  CHECK(r.mean_distance < 1e-6);
  CHECK((r.params.pose.theta - p.pose.theta).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("clip validation") {
  SequenceClip c = fixtures::small_truth().clips[0];
  CHECK_NOTHROW(c.validate());
  c.targets.pop_back();
  CHECK_THROWS_AS(c.validate(), Error);
}
