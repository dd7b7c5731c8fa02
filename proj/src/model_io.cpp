#include "hack/archive.hpp"
#include "hack/model.hpp"

namespace hack {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "hack-model";

Tensor map_tensor(const DisplacementMap& m) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols()), 3u};
  t.data.assign(m.data().data(), m.data().data() + m.data().size());
  return t;
}

DisplacementMap tensor_map(const Tensor& t) {
  require_dims(t.dims.size() == 3 && t.dims[2] == 3, "larynx map tensor must be H x W x 3");
  DisplacementMap m(UvResolution{static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1])});
  for (std::size_t i = 0; i < t.data.size(); ++i) m.data().data()[i] = t.data[i];
  return m;
}

Tensor faces_tensor(const Faces& f) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(f.cols()), 3u};
  for (Eigen::Index i = 0; i < f.size(); ++i) t.data.push_back(static_cast<float>(f.data()[i]));
  return t;
}

Faces tensor_faces(const Tensor& t) {
  require_dims(t.dims.size() == 2 && t.dims[1] == 3, "faces tensor must be F x 3");
  Faces f(3, t.dims[0]);
  for (std::size_t i = 0; i < t.data.size(); ++i) f.data()[i] = static_cast<int>(t.data[i]);
  return f;
}

Tensor uv_tensor(const UvCoords& uv) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(uv.cols()), 2u};
  for (Eigen::Index i = 0; i < uv.size(); ++i) t.data.push_back(static_cast<float>(uv.data()[i]));
  return t;
}

UvCoords tensor_uv(const Tensor& t) {
  require_dims(t.dims.size() == 2 && t.dims[1] == 2, "uv tensor must be N x 2");
  UvCoords uv(2, t.dims[0]);
  for (std::size_t i = 0; i < t.data.size(); ++i) uv.data()[i] = t.data[i];
  return uv;
}

void put_pca(ArchiveWriter& w, const std::string& prefix, const PcaSpace& s, bool with_mean) {
  if (with_mean) w.put(prefix + "_mean", Tensor::from_vector(s.mean), prefix + " mean");
  w.put(prefix + "_basis", Tensor::from_matrix(s.basis), prefix + " orthonormal basis");
  w.put(prefix + "_variance", Tensor::from_vector(s.variance), prefix + " component variance");
  w.put(prefix + "_variance_ratio", Tensor::from_vector(s.variance_ratio), prefix + " explained variance ratio");
  w.meta()["spaces"][prefix] = {{"degenerate", s.degenerate}};
}

PcaSpace get_pca(const ArchiveReader& r, const std::string& prefix, const VectorXd* mean) {
  PcaSpace s;
  s.mean = mean != nullptr ? *mean : r.get(prefix + "_mean").to_vector();
  s.basis = r.get(prefix + "_basis").to_matrix();
  s.variance = r.get(prefix + "_variance").to_vector();
  s.variance_ratio = r.get(prefix + "_variance_ratio").to_vector();
  s.degenerate = r.meta()["spaces"][prefix].value("degenerate", false);
  if (s.basis.rows() != s.mean.size())
    throw DimensionError("load_model: " + prefix + "_basis has " + std::to_string(s.basis.rows()) +
                         " rows but the mean has length " + std::to_string(s.mean.size()));
  return s;
}

void put_net(ArchiveWriter& w, const std::string& prefix, const MappingNetwork& n) {
  const Mlp& m = n.net;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    w.put(prefix + "_layer" + std::to_string(l) + "_weight", Tensor::from_matrix(m.weights[l]), prefix + " weights");
    w.put(prefix + "_layer" + std::to_string(l) + "_bias", Tensor::from_vector(m.biases[l]), prefix + " biases");
  }
  w.put(prefix + "_in_shift", Tensor::from_vector(m.in_shift), prefix + " input shift");
  w.put(prefix + "_in_scale", Tensor::from_vector(m.in_scale), prefix + " input scale");
  w.put(prefix + "_out_shift", Tensor::from_vector(m.out_shift), prefix + " output shift");
  w.put(prefix + "_out_scale", Tensor::from_vector(m.out_scale), prefix + " output scale");
  w.meta()["networks"][prefix] = {{"widths", m.widths()}, {"trained", n.trained}};
}

MappingNetwork get_net(const ArchiveReader& r, const std::string& prefix) {
  const auto& meta = r.meta()["networks"][prefix];
  const auto widths = meta["widths"].get<std::vector<int>>();
  MappingNetwork n;
  n.net = Mlp::zeros(widths);
  n.trained = meta.value("trained", false);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    n.net.weights[l] = r.get(prefix + "_layer" + std::to_string(l) + "_weight").to_matrix();
    n.net.biases[l] = r.get(prefix + "_layer" + std::to_string(l) + "_bias").to_vector();
  }
  n.net.in_shift = r.get(prefix + "_in_shift").to_vector();
  n.net.in_scale = r.get(prefix + "_in_scale").to_vector();
  n.net.out_shift = r.get(prefix + "_out_shift").to_vector();
  n.net.out_scale = r.get(prefix + "_out_scale").to_vector();
  return n;
}

void expect_dim(long a, long b, const std::string& what_a, const std::string& what_b, const char* sym) {
  if (a != b)
    throw DimensionError(std::string("load_model: ") + sym + " mismatch between " + what_a + " (" + sym + "=" +
                         std::to_string(a) + ") and " + what_b + " (" + sym + "=" + std::to_string(b) + ")");
}

}  // namespace

void save_model(const HackModel& model, const fs::path& dir) {
  model.validate();
  ArchiveWriter w(dir, kFormat, kArchiveVersion);
  const int N = model.num_vertices();
  const int K = model.num_joints();
  w.meta()["dims"] = {{"N", N},
                      {"F", model.template_mesh.num_faces()},
                      {"K", K},
                      {"beta", model.num_betas()},
                      {"psi", model.num_expressions},
                      {"pose_features", kPoseFeatures},
                      {"expression_components", model.expression_space.components()},
                      {"pose_components", model.pose_space.components()},
                      {"larynx_maps", model.larynx.count()},
                      {"larynx_rows", model.larynx.resolution.rows},
                      {"larynx_cols", model.larynx.resolution.cols}};
  w.meta()["skeleton"] = {{"names", model.skeleton.names}, {"parents", model.skeleton.parents}};
  w.meta()["networks"] = json::object();
  w.meta()["spaces"] = json::object();

  w.put("template_vertices", Tensor::from_vertices(model.template_mesh.vertices()), "universal template T_bar (mm)");
  w.put("faces", faces_tensor(model.template_mesh.faces()), "triangle indices");
  w.put("uv", uv_tensor(model.template_mesh.uv()), "per-vertex texture coordinates");
  put_pca(w, "shape", model.shape_space, false);
  w.put("joint_regressor_matrix", Tensor::from_matrix(model.joint_regressor.matrix), "joint regressor slope");
  w.put("joint_regressor_bias", Tensor::from_vector(model.joint_regressor.bias), "mean-shape rest joints");
  w.put("skinning_weights", Tensor::from_matrix(model.skinning.W), "LBS weights N x K");
  w.put("limits_lo", Tensor::from_matrix(model.limits.lo), "rotation limit minimum (rad)");
  w.put("limits_hi", Tensor::from_matrix(model.limits.hi), "rotation limit maximum (rad)");
  if (model.has_expressions()) {
    put_pca(w, "expression", model.expression_space, true);
    put_net(w, "expression_net", model.expression_net);
  }
  if (model.has_pose_blendshapes()) {
    put_pca(w, "pose", model.pose_space, true);
    put_net(w, "pose_net", model.pose_net);
  }
  if (model.has_larynx()) {
    for (int i = 0; i < model.larynx.count(); ++i)
      w.put("larynx_map_" + std::to_string(i), map_tensor(model.larynx.maps[static_cast<std::size_t>(i)]),
            "larynx basis map");
    Tensor mask;
    mask.dims = {static_cast<std::uint32_t>(model.larynx.resolution.rows),
                 static_cast<std::uint32_t>(model.larynx.resolution.cols)};
    for (auto b : model.larynx.mask) mask.data.push_back(b ? 1.0f : 0.0f);
    w.put("larynx_mask", mask, "larynx region mask");
    w.put("larynx_variance_ratio", Tensor::from_vector(model.larynx.variance_ratio), "larynx map PCA variance ratio");
    w.meta()["larynx"] = {{"tau_max", model.larynx.tau_max}, {"degenerate", model.larynx.degenerate}};
  }
  if (model.appearance.present()) {
    put_pca(w, "appearance", model.appearance.space, true);
    w.meta()["appearance"] = {
        {"rows", model.appearance.rows}, {"cols", model.appearance.cols}, {"channels", model.appearance.channels}};
  }
  w.finish();
}

HackModel load_model(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json")) throw IoError("load_model: missing manifest in " + dir.string());
  const ArchiveReader r(dir, kFormat, kArchiveVersion);
  const json& meta = r.meta();
  HackModel m;

  const Vertices tv = r.get("template_vertices").to_vertices();
  const Faces faces = tensor_faces(r.get("faces"));
  const UvCoords uv = tensor_uv(r.get("uv"));
  const long N = tv.cols();
  expect_dim(N, meta["dims"].value("N", -1L), "template_vertices", "manifest dims", "N");
  expect_dim(N, uv.cols(), "template_vertices", "uv", "N");
  m.template_mesh = Mesh(tv, faces, uv);

  const VectorXd mean = flat(tv);
  m.shape_space = get_pca(r, "shape", &mean);
  m.joint_regressor.matrix = r.get("joint_regressor_matrix").to_matrix();
  m.joint_regressor.bias = r.get("joint_regressor_bias").to_vector();
  m.skinning.W = r.get("skinning_weights").to_matrix();
  expect_dim(N, m.skinning.W.rows(), "template_vertices", "skinning_weights", "N");

  m.skeleton.names = meta["skeleton"]["names"].get<std::vector<std::string>>();
  m.skeleton.parents = meta["skeleton"]["parents"].get<std::vector<int>>();
  const long K = m.skeleton.num_joints();
  expect_dim(K, m.skinning.W.cols(), "skeleton", "skinning_weights", "K");
  expect_dim(3 * K, m.joint_regressor.bias.size(), "skeleton (3K)", "joint_regressor_bias", "K");
  expect_dim(m.shape_space.components(), m.joint_regressor.matrix.cols(), "shape_basis", "joint_regressor_matrix",
             "|beta|");
  m.skeleton.rest = Eigen::Map<const Eigen::Matrix3Xd>(m.joint_regressor.bias.data(), 3, K);
  m.limits.lo = r.get("limits_lo").to_matrix();
  m.limits.hi = r.get("limits_hi").to_matrix();
  expect_dim(K, m.limits.lo.rows(), "skeleton", "limits_lo", "K");

  m.num_expressions = meta["dims"].value("psi", 0);
  if (r.has("expression_basis")) {
    m.expression_space = get_pca(r, "expression", nullptr);
    m.expression_net = get_net(r, "expression_net");
    expect_dim(3 * N * m.num_expressions, m.expression_space.dim(), "template_vertices (3N|psi|)",
               "expression_mean", "N");
  }
  if (r.has("pose_basis")) {
    m.pose_space = get_pca(r, "pose", nullptr);
    m.pose_net = get_net(r, "pose_net");
    expect_dim(3 * N * kPoseFeatures, m.pose_space.dim(), "template_vertices (3N*63)", "pose_mean", "N");
  }
  const int maps = meta["dims"].value("larynx_maps", 0);
  if (maps > 0) {
    m.larynx.resolution = {meta["dims"].value("larynx_rows", 0), meta["dims"].value("larynx_cols", 0)};
    for (int i = 0; i < maps; ++i) m.larynx.maps.push_back(tensor_map(r.get("larynx_map_" + std::to_string(i))));
    const Tensor mask = r.get("larynx_mask");
    for (float v : mask.data) m.larynx.mask.push_back(v != 0.0f ? 1 : 0);
    m.larynx.variance_ratio = r.get("larynx_variance_ratio").to_vector();
    m.larynx.tau_max = meta["larynx"].value("tau_max", 0.1);
    m.larynx.degenerate = meta["larynx"].value("degenerate", false);
  }
  if (r.has("appearance_basis")) {
    m.appearance.space = get_pca(r, "appearance", nullptr);
    m.appearance.rows = meta["appearance"].value("rows", 0);
    m.appearance.cols = meta["appearance"].value("cols", 0);
    m.appearance.channels = meta["appearance"].value("channels", 0);
  }
  m.validate();
  return m;
}

}  // namespace hack
