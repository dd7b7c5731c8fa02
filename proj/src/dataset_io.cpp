#include "hack/archive.hpp"
#include "hack/dataset.hpp"
#include "hack/params_io.hpp"

#include <cstdio>

namespace hack {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kDatasetFormat = "hack-dataset";
constexpr int kDatasetVersion = 1;

std::string numbered(const std::string& stem, int i, const std::string& ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%03d", i);
  return stem + "_" + buf + ext;
}

Tensor stack_vertices(const std::vector<Vertices>& items) {
  Tensor t;
  const std::uint32_t n = items.empty() ? 0u : static_cast<std::uint32_t>(items.front().cols());
  t.dims = {static_cast<std::uint32_t>(items.size()), n, 3u};
  for (const Vertices& v : items) {
    require_dims(v.cols() == n, "dataset: vertex blocks differ in size");
    for (Eigen::Index i = 0; i < v.size(); ++i) t.data.push_back(static_cast<float>(v.data()[i]));
  }
  return t;
}

std::vector<Vertices> unstack_vertices(const Tensor& t) {
  require_dims(t.dims.size() == 3 && t.dims[2] == 3, "dataset: expected an M x N x 3 tensor");
  std::vector<Vertices> out;
  const std::size_t block = static_cast<std::size_t>(t.dims[1]) * 3;
  for (std::uint32_t m = 0; m < t.dims[0]; ++m) {
    Vertices v(3, t.dims[1]);
    for (std::size_t i = 0; i < block; ++i) v.data()[i] = t.data[m * block + i];
    out.push_back(std::move(v));
  }
  return out;
}

Tensor frames_tensor(const std::vector<NormalMapFrame>& frames) {
  Tensor t;
  const NormalMapFrame& f0 = frames.front();
  t.dims = {static_cast<std::uint32_t>(frames.size()), static_cast<std::uint32_t>(f0.rows),
            static_cast<std::uint32_t>(f0.cols), 3u};
  for (const auto& f : frames) t.data.insert(t.data.end(), f.data.begin(), f.data.end());
  return t;
}

std::vector<NormalMapFrame> tensor_frames(const Tensor& t, const std::string& subject) {
  require_dims(t.dims.size() == 4 && t.dims[3] == 3, "dataset: normal maps must be T x H x W x 3");
  std::vector<NormalMapFrame> out;
  const std::size_t block = static_cast<std::size_t>(t.dims[1]) * t.dims[2] * 3;
  for (std::uint32_t i = 0; i < t.dims[0]; ++i) {
    NormalMapFrame f;
    f.rows = static_cast<int>(t.dims[1]);
    f.cols = static_cast<int>(t.dims[2]);
    f.frame = static_cast<int>(i);
    f.subject = subject;
    f.data.assign(t.data.begin() + static_cast<std::ptrdiff_t>(i * block),
                  t.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * block));
    out.push_back(std::move(f));
  }
  return out;
}

json config_json(const SyntheticConfig& c) {
  return {{"rings", c.rings},
          {"segments", c.segments},
          {"num_betas", c.num_betas},
          {"num_expressions", c.num_expressions},
          {"identities", c.identities},
          {"annotated", c.annotated},
          {"expression_components", c.expression_components},
          {"pose_components", c.pose_components},
          {"appearance_components", c.appearance_components},
          {"appearance_size", c.appearance_size},
          {"dynamic_subjects", c.dynamic_subjects},
          {"clip_frames", c.clip_frames},
          {"fps", c.fps},
          {"noise_sigma", c.noise_sigma},
          {"tau_max", c.tau_max},
          {"pulse_amplitude", c.pulse_amplitude},
          {"pulse_frames", c.pulse_frames},
          {"uv_size", c.uv_size},
          {"normal_rows", c.normal_rows},
          {"normal_cols", c.normal_cols},
          {"normal_rows_per_tau", c.normal_rows_per_tau},
          {"landmarks", c.landmarks},
          {"normal_maps", c.normal_maps},
          {"seed", c.seed}};
}

SyntheticConfig config_from_json(const json& j) {
  SyntheticConfig c;
  c.rings = j.at("rings");
  c.segments = j.at("segments");
  c.num_betas = j.at("num_betas");
  c.num_expressions = j.at("num_expressions");
  c.identities = j.at("identities");
  c.annotated = j.at("annotated");
  c.expression_components = j.at("expression_components");
  c.pose_components = j.at("pose_components");
  c.appearance_components = j.at("appearance_components");
  c.appearance_size = j.at("appearance_size");
  c.dynamic_subjects = j.at("dynamic_subjects");
  c.clip_frames = j.at("clip_frames");
  c.fps = j.at("fps");
  c.noise_sigma = j.at("noise_sigma");
  c.tau_max = j.at("tau_max");
  c.pulse_amplitude = j.at("pulse_amplitude");
  c.pulse_frames = j.at("pulse_frames");
  c.uv_size = j.at("uv_size");
  c.normal_rows = j.at("normal_rows");
  c.normal_cols = j.at("normal_cols");
  c.normal_rows_per_tau = j.at("normal_rows_per_tau");
  c.landmarks = j.at("landmarks");
  c.normal_maps = j.at("normal_maps");
  c.seed = j.at("seed");
  return c;
}

}  // namespace

void save_dataset(const SyntheticTruth& truth, const fs::path& dir) {
  fs::create_directories(dir / "neutral");
  fs::create_directories(dir / "clips");
  save_model(truth.model, dir / "model");
  ArchiveWriter w(dir, kDatasetFormat, kDatasetVersion);
  json& meta = w.meta();
  meta["config"] = config_json(truth.config);
  meta["identities"] = truth.neutrals.size();
  meta["annotated"] = truth.annotated;
  meta["dynamic_identities"] = truth.dynamic_identities;
  meta["normal_rest_row"] = truth.normal_rest_row;
  meta["landmark_vertices"] = truth.landmark_vertices;
  meta["clips"] = json::array();

  for (std::size_t i = 0; i < truth.neutrals.size(); ++i)
    save_obj(truth.neutrals[i], dir / "neutral" / numbered("identity", static_cast<int>(i), ".obj"));
  {
    std::vector<FullParams> rows;
    for (const VectorXd& b : truth.betas) {
      FullParams p;
      p.beta = b;
      p.pose = PoseParams::zero(0);
      rows.push_back(p);
    }
    write_params_csv(dir / "betas.csv", rows);
  }
  w.put("larynx_displacements", stack_vertices(truth.larynx_displacements), "per-identity larynx offsets (mm)");
  w.put("joint_annotations", stack_vertices(std::vector<Vertices>(truth.joint_annotations.begin(),
                                                                   truth.joint_annotations.end())),
        "annotated rest joints (mm)");
  for (std::size_t i = 0; i < truth.expression_scans.size(); ++i) {
    std::vector<Vertices> deltas;
    for (const Mesh& s : truth.expression_scans[i]) deltas.push_back(s.vertices() - truth.neutrals[i].vertices());
    if (!deltas.empty())
      w.put(numbered("expression_deltas", static_cast<int>(i), ""), stack_vertices(deltas),
            "expression scan minus neutral (mm)");
  }
  if (!truth.textures.empty()) {
    Tensor t;
    const AppearanceStack& a = truth.textures.front();
    t.dims = {static_cast<std::uint32_t>(truth.textures.size()), static_cast<std::uint32_t>(a.rows),
              static_cast<std::uint32_t>(a.cols), static_cast<std::uint32_t>(a.channels)};
    for (const auto& s : truth.textures)
      for (Eigen::Index i = 0; i < s.data.size(); ++i) t.data.push_back(static_cast<float>(s.data[i]));
    w.put("textures", t, "per-identity texture stacks");
  }
  for (std::size_t c = 0; c < truth.clips.size(); ++c) {
    const SequenceClip& clip = truth.clips[c];
    const std::string stem = clip.subject;
    write_params_csv(dir / "clips" / (stem + ".csv"), clip.params);
    std::vector<Vertices> targets;
    for (const Mesh& m : clip.targets) targets.push_back(m.vertices());
    w.put(stem + "_targets", stack_vertices(targets), "registered clip meshes (mm)");
    if (c < truth.normal_maps.size() && !truth.normal_maps[c].empty())
      w.put(stem + "_normals", frames_tensor(truth.normal_maps[c]), "normal-map frames");
    meta["clips"].push_back({{"subject", clip.subject}, {"identity", clip.identity}, {"fps", clip.fps},
                             {"frames", clip.num_frames()}});
  }
  Tensor k;
  k.dims = {LarynxKernel::kSize, LarynxKernel::kSize, 3u};
  k.data = truth.kernel.image.data;
  w.put("larynx_kernel", k, "generic larynx normal pattern");
  save_obj(truth.long_neck_rest, dir / "long_neck.obj");
  w.put("long_neck_joints", Tensor::from_vertices(truth.long_neck_skeleton.rest), "long-neck rest joints (mm)");
  w.finish();
}

SyntheticTruth load_dataset(const fs::path& dir) {
  ArchiveReader r(dir, kDatasetFormat, kDatasetVersion);
  const json& meta = r.meta();
  SyntheticTruth t;
  t.config = config_from_json(meta.at("config"));
  t.model = load_model(dir / "model");
  const auto topo = t.model.template_mesh.shared_topology();
  const int n = meta.at("identities");
  for (const FullParams& p : read_params_csv(dir / "betas.csv")) t.betas.push_back(p.beta);
  if (static_cast<int>(t.betas.size()) != n) throw IoError(dir.string() + ": betas.csv row count differs");
  for (int i = 0; i < n; ++i) {
    const Mesh m = load_obj(dir / "neutral" / numbered("identity", i, ".obj"));
    require_same_topology(t.model.template_mesh, m, "load_dataset");
    t.neutrals.emplace_back(m.vertices(), topo);
  }
  t.larynx_displacements = unstack_vertices(r.get("larynx_displacements"));
  t.annotated = meta.at("annotated").get<std::vector<int>>();
  for (const Vertices& v : unstack_vertices(r.get("joint_annotations"))) t.joint_annotations.push_back(v);
  for (int i = 0; i < n; ++i) {
    std::vector<Mesh> scans;
    const std::string name = numbered("expression_deltas", i, "");
    if (r.has(name))
      for (const Vertices& d : unstack_vertices(r.get(name)))
        scans.emplace_back(Vertices(t.neutrals[static_cast<std::size_t>(i)].vertices() + d), topo);
    t.expression_scans.push_back(std::move(scans));
  }
  if (r.has("textures")) {
    const Tensor tx = r.get("textures");
    const std::size_t block = static_cast<std::size_t>(tx.dims[1]) * tx.dims[2] * tx.dims[3];
    for (std::uint32_t i = 0; i < tx.dims[0]; ++i) {
      AppearanceStack s;
      s.rows = static_cast<int>(tx.dims[1]);
      s.cols = static_cast<int>(tx.dims[2]);
      s.channels = static_cast<int>(tx.dims[3]);
      s.data.resize(static_cast<Eigen::Index>(block));
      for (std::size_t j = 0; j < block; ++j) s.data[static_cast<Eigen::Index>(j)] = tx.data[i * block + j];
      t.textures.push_back(std::move(s));
    }
  }
  t.dynamic_identities = meta.at("dynamic_identities").get<std::vector<int>>();
  t.normal_rest_row = meta.at("normal_rest_row");
  t.landmark_vertices = meta.at("landmark_vertices").get<std::vector<int>>();
  for (const json& c : meta.at("clips")) {
    SequenceClip clip;
    clip.subject = c.at("subject");
    clip.identity = c.at("identity");
    clip.fps = c.at("fps");
    clip.params = read_params_csv(dir / "clips" / (clip.subject + ".csv"));
    for (const Vertices& v : unstack_vertices(r.get(clip.subject + "_targets"))) clip.targets.emplace_back(v, topo);
    clip.validate();
    if (r.has(clip.subject + "_normals"))
      t.normal_maps.push_back(tensor_frames(r.get(clip.subject + "_normals"), clip.subject));
    else
      t.normal_maps.emplace_back();
    t.clips.push_back(std::move(clip));
  }
  const Tensor k = r.get("larynx_kernel");
  t.kernel.image.rows = LarynxKernel::kSize;
  t.kernel.image.cols = LarynxKernel::kSize;
  t.kernel.image.data = k.data;
  const Mesh ln = load_obj(dir / "long_neck.obj");
  t.long_neck_rest = Mesh(ln.vertices(), topo);
  t.long_neck_skeleton = Skeleton::cervical(r.get("long_neck_joints").to_vertices());
  return t;
}

}  // namespace hack
