#include "doctest.h"
#include "fixtures.hpp"
#include "hack/archive.hpp"
#include "hack/model.hpp"

using namespace hack;

namespace {

FullParams random_params(const HackModel& model, std::mt19937_64& rng, double theta_scale = 0.05) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FullParams p = FullParams::zeros(model);
  for (Eigen::Index i = 0; i < p.beta.size(); ++i) p.beta[i] = g(rng);
  for (Eigen::Index i = 0; i < p.psi.size(); ++i) p.psi[i] = u(rng);
  for (Eigen::Index i = 0; i < p.pose.theta.size(); ++i) p.pose.theta.data()[i] = theta_scale * g(rng);
  p.larynx = {u(rng), (2 * u(rng) - 1) * 0.5 * model.larynx.tau_max};
  return p;
}

}  // namespace

TEST_CASE("zero parameters reproduce the template exactly") {
  const HackModel& model = fixtures::small_truth().model;
  const FullParams p = FullParams::zeros(model);
  CHECK(forward(model, p).vertices() == model.template_mesh.vertices());
  CHECK(rest_template(model, p).vertices() == model.template_mesh.vertices());
}

TEST_CASE("forward equals an explicit sum of offsets followed by skinning") {
  const HackModel& model = fixtures::small_truth().model;
  std::mt19937_64 rng(51);
  for (int i = 0; i < 10; ++i) {
    const FullParams p = random_params(model, rng);
    const SubjectRig rig = make_rig(model, p.beta);
    VectorXd rest = flat(model.template_mesh.vertices()) + model.shape_space.basis * p.beta;
    rest += rig.expression.deltas * p.psi;
    rest += rig.pose.deltas * pose_features(p.pose);
    const Vertices lar = larynx_offset(model.larynx, model.template_mesh, p.larynx, p.beta);
    rest += flat(lar);
    Skeleton skel = model.skeleton;
    skel.rest = model.joint_regressor.regress(p.beta);
    const Vertices expect = linear_blend_skin(Vertices(as_vertices(rest)), skel, p.pose, model.skinning);
    const Vertices got = forward(model, p).vertices();
    CHECK(fixtures::max_abs(got - expect) < 1e-9);
    CHECK(fixtures::max_abs(rest_template(model, p).vertices() - as_vertices(rest)) < 1e-9);
  }
}

TEST_CASE("forward is pose_rig of make_rig bit for bit") {
  const HackModel& model = fixtures::small_truth().model;
  std::mt19937_64 rng(52);
  const FullParams p = random_params(model, rng);
  CHECK(forward(model, p).vertices() == pose_rig(make_rig(model, p.beta), p).vertices());
}

TEST_CASE("forward jacobian matches central differences") {
  const HackModel& model = fixtures::small_truth().model;
  std::mt19937_64 rng(53);
  const FullParams p = random_params(model, rng);
  const ParamLayout layout = ParamLayout::make(model, kGroupAll);
  const MatrixXd J = forward_jacobian(model, p, layout);
  REQUIRE(J.cols() == layout.size);
  const VectorXd x = layout.pack(p);
  const double h = 1e-6;
  for (int j = 0; j < layout.size; ++j) {
    FullParams pp = p, pm = p;
    VectorXd xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    layout.unpack(xp, pp);
    layout.unpack(xm, pm);
    const VectorXd fd = (flat(forward(model, pp).vertices()) - flat(forward(model, pm).vertices())) / (2 * h);
    const double scale = std::max(fd.cwiseAbs().maxCoeff(), 1.0);
    INFO(layout.name(j));
    CHECK((J.col(j) - fd).cwiseAbs().maxCoeff() < 1e-5 * scale);
  }
}

TEST_CASE("parameter layout packs and unpacks") {
  const HackModel& model = fixtures::small_truth().model;
  std::mt19937_64 rng(54);
  const FullParams p = random_params(model, rng);
  for (unsigned groups : {unsigned(kGroupAll), unsigned(kGroupTheta), unsigned(kGroupBeta | kGroupTau)}) {
    const ParamLayout l = ParamLayout::make(model, groups);
    FullParams q = FullParams::zeros(model);
    l.unpack(l.pack(p), q);
    CHECK(l.pack(q) == l.pack(p));
  }
  const ParamLayout all = ParamLayout::make(model, kGroupAll);
  CHECK(all.size == model.num_betas() + model.num_expressions + 3 * model.num_joints() + 2);
}

TEST_CASE("strict limits turn violations into errors") {
  const HackModel& model = fixtures::small_truth().model;
  FullParams p = FullParams::zeros(model);
  p.pose.theta(0, 0) = 1.0;
  CHECK_FALSE(describe_limit_violations(p.pose, model.limits).empty());
  std::string warned;
  ForwardOptions warn;
  warn.warn = [&](const std::string& m) { warned = m; };
  CHECK_NOTHROW(forward(model, p, warn));
  CHECK_FALSE(warned.empty());
  ForwardOptions strict;
  strict.strict_limits = true;
  CHECK_THROWS_AS(forward(model, p, strict), Error);
}

TEST_CASE("parameter dimension mismatches are rejected") {
  const HackModel& model = fixtures::small_truth().model;
  FullParams p = FullParams::zeros(model);
  p.beta = VectorXd::Zero(model.num_betas() + 1);
  CHECK_THROWS_AS(forward(model, p), DimensionError);
  p = FullParams::zeros(model);
  p.pose = PoseParams::zero(3);
  CHECK_THROWS_AS(forward(model, p), DimensionError);
}

TEST_CASE("model consistency validation") {
  HackModel model = fixtures::small_truth().model;
  CHECK_NOTHROW(model.validate());
  model.skinning.W.conservativeResize(model.num_vertices() - 1, Eigen::NoChange);
  CHECK_THROWS_AS(model.validate(), DimensionError);
}

TEST_CASE("zero appearance coefficients give the mean texture") {
  const HackModel& model = fixtures::small_truth().model;
  REQUIRE(model.appearance.present());
  const AppearanceStack a = appearance(model, VectorXd::Zero(model.appearance.space.components()));
  CHECK(a.data == model.appearance.space.mean);
  CHECK(a.channels == 9);
}

TEST_CASE("model archive round trip is lossless after the first save") {
  fixtures::TempDir dir("model");
  const HackModel& model = fixtures::small_truth().model;
  save_model(model, dir.path() / "a");
  const HackModel once = load_model(dir.path() / "a");
  save_model(once, dir.path() / "b");
  const HackModel twice = load_model(dir.path() / "b");
  CHECK(hash_directory(dir.path() / "a") == hash_directory(dir.path() / "b"));
  CHECK(once.template_mesh.vertices() == twice.template_mesh.vertices());
  CHECK(once.skinning.W == twice.skinning.W);
  std::mt19937_64 rng(55);
  const FullParams p = random_params(model, rng);
  CHECK(forward(once, p).vertices() == forward(twice, p).vertices());
  CHECK(fixtures::max_abs(forward(once, p).vertices() - forward(model, p).vertices()) < 1e-3);
}
