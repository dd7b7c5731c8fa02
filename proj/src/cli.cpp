#include "hack/cli.hpp"

#include "hack/archive.hpp"
#include "hack/dataset.hpp"
#include "hack/learning.hpp"
#include "hack/params_io.hpp"
#include "hack/synthesis.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;

namespace hack {
namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config, out, model, data, params, target;
  std::optional<std::uint64_t> seed;
  bool strict_limits = false;
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Collects the run log; the reproducibility header comes first.
class RunLog {
 public:
  RunLog(const std::string& command, std::uint64_t seed, const KeyValueConfig& cfg, std::ostream& echo)
      : echo_(echo) {
    const std::string text = cfg.to_text();
    line("# hack " + std::string(kVersion));
    line("# command " + command);
    line("# seed " + std::to_string(seed));
    line("# config-hash " + hex64(fnv1a(text.data(), text.size())));
  }
  void line(const std::string& s) {
    text_ += s + "\n";
    echo_ << s << "\n";
  }
  void write(const fs::path& path) const { write_text_file(path, text_); }

 private:
  std::string text_;
  std::ostream& echo_;
};

KeyValueConfig load_config(const Options& o) {
  return o.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(o.config);
}

std::uint64_t resolve_seed(const Options& o, const KeyValueConfig& cfg, std::uint64_t fallback) {
  return o.seed ? *o.seed : cfg.get_u64("seed", fallback);
}

/// Every config key must have been consumed by the subcommand.
void reject_unused(const KeyValueConfig& cfg) {
  const auto unused = cfg.unused();
  if (unused.empty()) return;
  std::string msg = "unknown config key";
  for (const auto& k : unused) msg += " '" + k + "'";
  throw UsageError(msg);
}

void need(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required option ") + flag);
}

fs::path prepare_out(const Options& o) {
  need(o.out, "--out");
  fs::create_directories(o.out);
  return o.out;
}

std::string num(double v) { return format_double(v); }

unsigned parse_groups(const std::string& text) {
  if (text == "all") return kGroupAll;
  if (text == "none" || text.empty()) return 0u;
  unsigned g = 0;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "beta") g |= kGroupBeta;
    else if (item == "psi") g |= kGroupPsi;
    else if (item == "theta") g |= kGroupTheta;
    else if (item == "eta") g |= kGroupEta;
    else if (item == "tau") g |= kGroupTau;
    else throw UsageError("unknown parameter group '" + item + "' (beta, psi, theta, eta, tau, all, none)");
  }
  return g;
}

MlpTrainConfig mlp_config(const KeyValueConfig& cfg, const std::string& prefix, MlpTrainConfig base) {
  base.lr = cfg.get(prefix + "lr", base.lr);
  base.lr_final = cfg.get(prefix + "lr_final", base.lr_final);
  base.max_epochs = cfg.get(prefix + "epochs", base.max_epochs);
  base.patience = cfg.get(prefix + "patience", base.patience);
  base.weight_decay = cfg.get(prefix + "weight_decay", base.weight_decay);
  return base;
}

void write_clip_params(const fs::path& dir, const std::string& subject, const std::vector<FullParams>& frames) {
  fs::create_directories(dir);
  write_params_csv(dir / (subject + ".csv"), frames);
}

std::string frame_name(std::size_t t) {
  std::ostringstream os;
  os << "frame_" << std::setw(4) << std::setfill('0') << t << ".obj";
  return os.str();
}

// ------------------------------------------------------------------ gen-data

int cmd_gen_data(const Options& o, std::ostream& out) {
  KeyValueConfig cfg = load_config(o);
  SyntheticConfig sc;
  sc.rings = cfg.get("rings", sc.rings);
  sc.segments = cfg.get("segments", sc.segments);
  sc.num_betas = cfg.get("num_betas", sc.num_betas);
  sc.num_expressions = cfg.get("num_expressions", sc.num_expressions);
  sc.identities = cfg.get("identities", sc.identities);
  sc.annotated = cfg.get("annotated", sc.annotated);
  sc.expression_components = cfg.get("expression_components", sc.expression_components);
  sc.pose_components = cfg.get("pose_components", sc.pose_components);
  sc.appearance_components = cfg.get("appearance_components", sc.appearance_components);
  sc.appearance_size = cfg.get("appearance_size", sc.appearance_size);
  sc.dynamic_subjects = cfg.get("dynamic_subjects", sc.dynamic_subjects);
  sc.clip_frames = cfg.get("clip_frames", sc.clip_frames);
  sc.fps = cfg.get("fps", sc.fps);
  sc.noise_sigma = cfg.get("noise_sigma", sc.noise_sigma);
  sc.tau_max = cfg.get("tau_max", sc.tau_max);
  sc.pulse_amplitude = cfg.get("pulse_amplitude", sc.pulse_amplitude);
  sc.pulse_frames = cfg.get("pulse_frames", sc.pulse_frames);
  sc.uv_size = cfg.get("uv_size", sc.uv_size);
  sc.normal_rows = cfg.get("normal_rows", sc.normal_rows);
  sc.normal_cols = cfg.get("normal_cols", sc.normal_cols);
  sc.normal_rows_per_tau = cfg.get("normal_rows_per_tau", sc.normal_rows_per_tau);
  sc.landmarks = cfg.get("landmarks", sc.landmarks);
  sc.normal_maps = cfg.get("normal_maps", sc.normal_maps);
  sc.seed = resolve_seed(o, cfg, sc.seed);
  reject_unused(cfg);
  const fs::path dir = prepare_out(o);

  RunLog log("gen-data", sc.seed, cfg, out);
  const SyntheticTruth truth = generate_dataset(sc);
  save_dataset(truth, dir);
  log.line("vertices\t" + std::to_string(truth.model.num_vertices()));
  log.line("identities\t" + std::to_string(truth.neutrals.size()));
  log.line("clips\t" + std::to_string(truth.clips.size()));
  log.line("archive-hash\t" + hex64(hash_directory(dir)));
  log.write(dir / "run.log");
  return 0;
}

// -------------------------------------------------------------- train-static

int cmd_train_static(const Options& o, std::ostream& out) {
  need(o.data, "--data");
  KeyValueConfig cfg = load_config(o);
  const SyntheticTruth data = load_dataset(o.data);
  StaticConfig sc;
  sc.shape_components = cfg.get("shape_components", sc.shape_components);
  sc.expression_components = cfg.get("expression_components", sc.expression_components);
  sc.appearance_components = cfg.get("appearance_components", sc.appearance_components);
  sc.rank_tol = cfg.get("rank_tol", sc.rank_tol);
  const int res = cfg.get("larynx_resolution", data.config.uv_size);
  sc.larynx_resolution = {res, res};
  sc.mapping = mlp_config(cfg, "mapping_", sc.mapping);
  sc.mapping_hidden = cfg.get("mapping_hidden", sc.mapping_hidden);
  sc.seed = resolve_seed(o, cfg, sc.seed);
  StaticInputs inputs = data.static_inputs();
  const std::string limits = cfg.get("limits", "");
  if (!limits.empty()) inputs.limits = RotationLimits::load(limits);
  reject_unused(cfg);
  const fs::path dir = prepare_out(o);

  RunLog log("train-static", sc.seed, cfg, out);
  const StaticResult r = learn_static(inputs, sc);
  save_model(r.model, dir);
  log.line("shape_components\t" + std::to_string(r.model.num_betas()));
  log.line("max_reconstruction_error_mm\t" + num(r.max_reconstruction_error));
  log.line("joint_residual_rms_mm\t" + num(r.joint_residual_rms));
  log.line("mapping_epochs\t" + std::to_string(r.mapping_report.epochs));
  log.line("mapping_best_loss\t" + num(r.mapping_report.best_loss));
  for (const auto& w : r.warnings) log.line("warning\t" + w);
  log.write(dir / "run.log");
  return 0;
}

// ------------------------------------------------------------- train-dynamic

int cmd_train_dynamic(const Options& o, std::ostream& out) {
  need(o.model, "--model");
  need(o.data, "--data");
  KeyValueConfig cfg = load_config(o);
  const HackModel model = load_model(o.model);
  const SyntheticTruth data = load_dataset(o.data);

  DynamicConfig dc;
  dc.epochs = cfg.get("epochs", dc.epochs);
  dc.lr = cfg.get("lr", dc.lr);
  dc.lr_final = cfg.get("lr_final", dc.lr_final);
  dc.lr_theta = cfg.get("lr_theta", dc.lr_theta);
  dc.lr_psi = cfg.get("lr_psi", dc.lr_psi);
  dc.lr_eta = cfg.get("lr_eta", dc.lr_eta);
  dc.lr_tau = cfg.get("lr_tau", dc.lr_tau);
  dc.lr_pose_deltas = cfg.get("lr_pose_deltas", dc.lr_pose_deltas);
  dc.lr_weights = cfg.get("lr_weights", dc.lr_weights);
  dc.lr_expression = cfg.get("lr_expression", dc.lr_expression);
  dc.finetune_expressions = cfg.get("finetune_expressions", dc.finetune_expressions);
  dc.init_fit_iterations = cfg.get("init_fit_iterations", dc.init_fit_iterations);
  dc.patience = cfg.get("patience", dc.patience);
  dc.pose_components = cfg.get("pose_components", dc.pose_components);
  dc.train_pose_net = cfg.get("train_pose_net", dc.train_pose_net);
  dc.mapping = mlp_config(cfg, "mapping_", dc.mapping);
  dc.mapping_hidden = cfg.get("mapping_hidden", dc.mapping_hidden);
  LossWeights& w = dc.weights;
  w.rec = cfg.get("w_rec", w.rec);
  w.rot = cfg.get("w_rot", w.rot);
  w.sim = cfg.get("w_sim", w.sim);
  w.col = cfg.get("w_col", w.col);
  w.tem = cfg.get("w_tem", w.tem);
  w.smo = cfg.get("w_smo", w.smo);
  w.ski = cfg.get("w_ski", w.ski);
  dc.temporal.per_second = cfg.get("temporal_per_second", dc.temporal.per_second);
  PerturbSpec ps;
  ps.theta = cfg.get("init_theta_noise", 0.0);
  ps.psi = cfg.get("init_psi_noise", 0.0);
  ps.eta = cfg.get("init_eta_noise", 0.0);
  ps.tau = cfg.get("init_tau_noise", 0.0);
  dc.seed = resolve_seed(o, cfg, dc.seed);
  ps.seed = dc.seed + 1;
  reject_unused(cfg);
  const fs::path dir = prepare_out(o);

  RunLog log("train-dynamic", dc.seed, cfg, out);
  if (data.clips.empty()) throw Error("train-dynamic: the dataset has no clips");
  // Identity coefficients in this model's shape space, from each subject's neutral.
  std::vector<SequenceClip> clips = data.clips;
  for (SequenceClip& c : clips) {
    if (c.identity < 0 || c.identity >= static_cast<int>(data.neutrals.size()))
      throw Error("train-dynamic: clip " + c.subject + " has no neutral identity");
    const VectorXd beta = project(model.shape_space, flat(data.neutrals[static_cast<std::size_t>(c.identity)].vertices()));
    for (FullParams& p : c.params) p.beta = beta;
  }
  const std::vector<SequenceClip> init = perturb(clips, model, ps);
  std::string training = "# hack " + std::string(kVersion) + "\n# seed " + std::to_string(dc.seed) + "\n";
  const DynamicResult r = learn_dynamic(model, init, model.skinning, dc, [&](const std::string& l) { training += l + "\n"; });
  write_text_file(dir / "training.log", training);
  save_model(r.model, dir);
  for (std::size_t s = 0; s < r.state.subjects.size(); ++s) {
    const SubjectState& st = r.state.subjects[s];
    std::vector<FullParams> frames;
    for (int t = 0; t < st.num_frames(); ++t) frames.push_back(st.frame(t));
    write_clip_params(dir / "clips", clips[s].subject, frames);
  }
  log.line("epochs\t" + std::to_string(r.history.size()));
  log.line("best_epoch\t" + std::to_string(r.best_epoch));
  log.line("best_total\t" + num(r.best.total()));
  log.line("pose_components\t" + std::to_string(r.model.pose_space.components()));
  for (const auto& msg : r.warnings) log.line("warning\t" + msg);
  log.write(dir / "run.log");
  return 0;
}

// ----------------------------------------------------------------------- fit

int cmd_fit(const Options& o, std::ostream& out) {
  need(o.model, "--model");
  need(o.target, "--target");
  KeyValueConfig cfg = load_config(o);
  const HackModel model = load_model(o.model);
  FitConfig fc;
  fc.free_groups = parse_groups(cfg.get("free", std::string("all")));
  fc.weights.scan = cfg.get("w_scan", fc.weights.scan);
  fc.weights.landmark = cfg.get("w_landmark", fc.weights.landmark);
  fc.weights.shape = cfg.get("w_shape", fc.weights.shape);
  fc.weights.expression = cfg.get("w_expression", fc.weights.expression);
  fc.weights.pose = cfg.get("w_pose", fc.weights.pose);
  fc.weights.larynx = cfg.get("w_larynx", fc.weights.larynx);
  fc.max_iterations = cfg.get("max_iterations", fc.max_iterations);
  fc.tolerance = cfg.get("tolerance", fc.tolerance);
  fc.icp_iterations = cfg.get("icp_iterations", fc.icp_iterations);
  const std::uint64_t seed = resolve_seed(o, cfg, 0);
  reject_unused(cfg);
  const fs::path dir = prepare_out(o);

  RunLog log("fit", seed, cfg, out);
  FullParams init = FullParams::zeros(model);
  if (!o.params.empty()) {
    const auto rows = read_params_csv(o.params);
    if (rows.empty()) throw Error("fit: " + o.params + " has no rows");
    init = rows.front();
  }
  const Mesh loaded = load_obj(o.target);
  FitTarget target;
  if (loaded.num_vertices() == model.num_vertices() && loaded.faces() == model.template_mesh.faces()) {
    target.mesh = model.template_mesh.with_vertices(loaded.vertices());
    log.line("mode\tmesh");
  } else {
    target.points = loaded.vertices();
    log.line("mode\tscan");
  }
  const FitReport r = fit_to_target(model, target, init, fc);
  write_params_csv(dir / "params.csv", {r.params});
  save_obj(forward(model, r.params), dir / "fit.obj");
  log.line("mean_distance_mm\t" + num(r.mean_distance));
  log.line("cost\t" + num(r.cost));
  log.line("iterations\t" + std::to_string(r.iterations));
  log.line(std::string("converged\t") + (r.converged ? "yes" : "no"));
  if (!r.note.empty()) log.line("note\t" + r.note);
  log.write(dir / "run.log");
  return 0;
}

// ------------------------------------------------------------------- animate

int cmd_animate(const Options& o, std::ostream& out) {
  need(o.model, "--model");
  need(o.params, "--params");
  KeyValueConfig cfg = load_config(o);
  const std::uint64_t seed = resolve_seed(o, cfg, 0);
  reject_unused(cfg);
  const HackModel model = load_model(o.model);
  const auto frames = read_params_csv(o.params);
  const fs::path dir = prepare_out(o);

  RunLog log("animate", seed, cfg, out);
  ForwardOptions fo;
  fo.strict_limits = o.strict_limits;
  std::size_t t = 0;
  fo.warn = [&](const std::string& m) { log.line("warning\tframe " + std::to_string(t) + ": " + m); };
  for (; t < frames.size(); ++t) save_obj(forward(model, frames[t], fo), dir / frame_name(t));
  log.line("frames\t" + std::to_string(frames.size()));
  log.write(dir / "run.log");
  return 0;
}

// -------------------------------------------------------------- track-larynx

int cmd_track_larynx(const Options& o, std::ostream& out) {
  need(o.data, "--data");
  KeyValueConfig cfg = load_config(o);
  const bool normalized = cfg.get("normalized", false);
  const std::uint64_t seed = resolve_seed(o, cfg, 0);
  reject_unused(cfg);
  const SyntheticTruth data = load_dataset(o.data);
  const fs::path dir = prepare_out(o);

  RunLog log("track-larynx", seed, cfg, out);
  if (data.normal_maps.empty()) throw Error("track-larynx: the dataset has no normal maps");
  std::string csv = "subject,frame,tau_rows,tau_uv,row,col,response\n";
  const double rows_per_tau = data.config.normal_rows_per_tau;
  for (std::size_t s = 0; s < data.normal_maps.size(); ++s) {
    const auto& frames = data.normal_maps[s];
    if (frames.empty()) continue;
    // The first frame of each clip is the rest reference.
    const TrackResult rest = normalized ? track_larynx_normalized(frames.front(), data.kernel, 0.0)
                                        : track_larynx(frames.front(), data.kernel, 0.0);
    const double tau0 = rest.row;
    for (const NormalMapFrame& f : frames) {
      const TrackResult r =
          normalized ? track_larynx_normalized(f, data.kernel, tau0) : track_larynx(f, data.kernel, tau0);
      csv += f.subject + "," + std::to_string(f.frame) + "," + num(r.tau) + "," + num(r.tau / rows_per_tau) + "," +
             std::to_string(r.row) + "," + std::to_string(r.col) + "," + num(r.response) + "\n";
    }
    log.line("subject\t" + frames.front().subject + "\ttau0_row\t" + std::to_string(rest.row));
  }
  write_text_file(dir / "tau.csv", csv);
  log.write(dir / "run.log");
  return 0;
}

// -------------------------------------------------------------- synth-larynx

int cmd_synth_larynx(const Options& o, std::ostream& out) {
  need(o.data, "--data");
  KeyValueConfig cfg = load_config(o);
  SequencePredictor::Config pc;
  pc.hidden = cfg.get("hidden", pc.hidden);
  pc.layers = cfg.get("layers", pc.layers);
  pc.ridge = cfg.get("ridge", pc.ridge);
  pc.train = mlp_config(cfg, "", pc.train);
  pc.seed = resolve_seed(o, cfg, pc.seed);
  reject_unused(cfg);
  const SyntheticTruth data = load_dataset(o.data);
  const fs::path dir = prepare_out(o);

  RunLog log("synth-larynx", pc.seed, cfg, out);
  if (data.clips.empty()) throw Error("synth-larynx: the dataset has no clips");
  std::vector<MatrixXd> psi;
  std::vector<VectorXd> tau;
  for (const SequenceClip& c : data.clips) {
    MatrixXd p(data.model.num_expressions, c.num_frames());
    VectorXd t(c.num_frames());
    for (int k = 0; k < c.num_frames(); ++k) {
      p.col(k) = c.params[static_cast<std::size_t>(k)].psi;
      t[k] = c.params[static_cast<std::size_t>(k)].larynx.tau;
    }
    psi.push_back(std::move(p));
    tau.push_back(std::move(t));
  }
  // Hold out the last clip unless it is the only one.
  const std::size_t train_count = psi.size() > 1 ? psi.size() - 1 : psi.size();
  SequencePredictor pred(data.model.num_expressions, pc);
  const TrainReport rep = pred.fit({psi.begin(), psi.begin() + static_cast<long>(train_count)},
                                   {tau.begin(), tau.begin() + static_cast<long>(train_count)});
  log.line("train_clips\t" + std::to_string(train_count));
  log.line("best_loss\t" + num(rep.best_loss));

  if (!o.params.empty()) {
    std::vector<FullParams> frames = read_params_csv(o.params);
    MatrixXd p(pred.num_psi(), static_cast<Eigen::Index>(frames.size()));
    for (std::size_t k = 0; k < frames.size(); ++k) {
      require_dims(frames[k].psi.size() == pred.num_psi(), "synth-larynx: |psi| differs from the dataset");
      p.col(static_cast<Eigen::Index>(k)) = frames[k].psi;
    }
    const VectorXd t = predict_larynx_sequence(pred, p, VectorXd());
    for (std::size_t k = 0; k < frames.size(); ++k) frames[k].larynx.tau = t[static_cast<Eigen::Index>(k)];
    write_params_csv(dir / "predicted.csv", frames);
  } else {
    for (std::size_t c = train_count == psi.size() ? 0 : train_count; c < psi.size(); ++c) {
      const VectorXd t = predict_larynx_sequence(pred, psi[c], VectorXd());
      const double rms = std::sqrt((t - tau[c]).squaredNorm() / static_cast<double>(t.size()));
      const double ref = std::sqrt(tau[c].squaredNorm() / static_cast<double>(t.size()));
      log.line("heldout\t" + data.clips[c].subject + "\trms\t" + num(rms) + "\trelative\t" +
               num(ref > 0 ? rms / ref : rms));
      std::vector<FullParams> frames = data.clips[c].params;
      for (std::size_t k = 0; k < frames.size(); ++k) frames[k].larynx.tau = t[static_cast<Eigen::Index>(k)];
      write_clip_params(dir / "predicted", data.clips[c].subject, frames);
    }
  }
  log.write(dir / "run.log");
  return 0;
}

// ---------------------------------------------------------------- synth-pose

int cmd_synth_pose(const Options& o, std::ostream& out) {
  need(o.model, "--model");
  need(o.data, "--data");
  KeyValueConfig cfg = load_config(o);
  const int hidden = cfg.get("hidden", 512);
  const MlpTrainConfig tc = mlp_config(cfg, "", MlpTrainConfig{1e-3, 1e-5, 300, 300, 0.0, {}});
  const double margin = cfg.get("clamp_margin", 0.1);
  const std::uint64_t seed = resolve_seed(o, cfg, 1);
  reject_unused(cfg);
  const HackModel model = load_model(o.model);
  const SyntheticTruth data = load_dataset(o.data);
  const fs::path dir = prepare_out(o);

  RunLog log("synth-pose", seed, cfg, out);
  std::vector<Eigen::Vector3d> orient;
  std::vector<PoseParams> poses;
  for (const SequenceClip& c : data.clips) {
    const Skeleton skel = make_rig(model, c.params.front().beta).skeleton;
    for (const FullParams& p : c.params) {
      orient.push_back(head_orientation(skel, p.pose));
      poses.push_back(p.pose);
    }
  }
  if (poses.empty()) throw Error("synth-pose: the dataset has no clip poses");
  std::mt19937_64 rng(seed);
  OrientationNet net = OrientationNet::create(model.limits, rng, hidden, model.num_joints());
  const TrainReport rep = train_orientation_net(net, orient, poses, tc);
  log.line("samples\t" + std::to_string(poses.size()));
  log.line("best_loss\t" + num(rep.best_loss));

  std::vector<FullParams> frames;
  if (!o.params.empty()) {
    frames = read_params_csv(o.params);
  } else {
    frames = data.clips.front().params;
  }
  const Skeleton skel = make_rig(model, frames.empty() ? VectorXd::Zero(model.num_betas()) : frames.front().beta).skeleton;
  double err = 0.0;
  for (FullParams& p : frames) {
    const PoseParams raw = orientation_to_pose(net, head_orientation(skel, p.pose));
    const PoseParams pose = soft_clamp_pose(raw, model.limits, margin);
    err += (pose.theta - p.pose.theta).squaredNorm();
    p.pose = pose;
  }
  if (!frames.empty())
    log.line("pose_rms_rad\t" + num(std::sqrt(err / (static_cast<double>(frames.size()) * 3 * model.num_joints()))));
  write_params_csv(dir / "poses.csv", frames);
  log.write(dir / "run.log");
  return 0;
}

// ------------------------------------------------------------------ retarget

int cmd_retarget(const Options& o, std::ostream& out) {
  need(o.model, "--model");
  need(o.params, "--params");
  KeyValueConfig cfg = load_config(o);
  const std::uint64_t seed = resolve_seed(o, cfg, 0);
  reject_unused(cfg);
  const HackModel model = load_model(o.model);
  const auto frames = read_params_csv(o.params);
  const fs::path dir = prepare_out(o);

  RunLog log("retarget", seed, cfg, out);
  std::optional<RigTarget> fixed;
  if (!o.data.empty()) {
    const SyntheticTruth data = load_dataset(o.data);
    fixed = make_rig_target(data.long_neck_rest, data.long_neck_skeleton, model.skinning);
    log.line("target\tlong-neck rig");
  } else {
    log.line("target\tsource rig");
  }
  ForwardOptions fo;
  fo.strict_limits = o.strict_limits;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const std::string v = describe_limit_violations(frames[t].pose, model.limits);
    if (!v.empty()) {
      if (o.strict_limits) throw Error("retarget: frame " + std::to_string(t) + ": rotation limits violated: " + v);
      log.line("warning\tframe " + std::to_string(t) + ": rotation limits violated: " + v);
    }
    const RigTarget target = fixed ? *fixed : rig_target_from_model(model, frames[t].beta);
    save_obj(retarget_pose(model, frames[t], target), dir / frame_name(t));
  }
  log.line("frames\t" + std::to_string(frames.size()));
  log.write(dir / "run.log");
  return 0;
}

// ---------------------------------------------------------------- pca-report

int cmd_pca_report(const Options& o, std::ostream& out) {
  need(o.data, "--data");
  KeyValueConfig cfg = load_config(o);
  const double test_fraction = cfg.get("test_fraction", 0.1);
  const int max_components = cfg.get("max_components", 50);
  const std::uint64_t seed = resolve_seed(o, cfg, 0);
  reject_unused(cfg);
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw UsageError("test_fraction must be in (0, 1)");
  const SyntheticTruth data = load_dataset(o.data);
  const fs::path dir = prepare_out(o);

  RunLog log("pca-report", seed, cfg, out);
  const int n = static_cast<int>(data.neutrals.size());
  if (n < 3) throw Error("pca-report: need at least 3 identities, got " + std::to_string(n));
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const int n_test = std::clamp(static_cast<int>(std::lround(test_fraction * n)), 1, n - 2);
  const int n_train = n - n_test;
  const int N = data.neutrals.front().num_vertices();
  MatrixXd train(3L * N, n_train), test(3L * N, n_test);
  for (int i = 0; i < n_train; ++i) train.col(i) = flat(data.neutrals[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])].vertices());
  for (int i = 0; i < n_test; ++i)
    test.col(i) = flat(data.neutrals[static_cast<std::size_t>(idx[static_cast<std::size_t>(n_train + i)])].vertices());
  const PcaSpace space = fit_pca(train, max_components);
  const VectorXd cum = cumulative_variance(space);

  // Per-sample RMS vertex error after projecting onto the leading c
  // components. Squared residuals come from subtracting each component's
  // captured energy in turn (Pythagoras), so they never grow with c.
  struct Residuals {
    MatrixXd coef;       // components x samples
    VectorXd remaining;  // squared residual per sample
  };
  auto start = [&](const MatrixXd& X) {
    const MatrixXd D = X.colwise() - space.mean;
    return Residuals{space.basis.transpose() * D, D.colwise().squaredNorm().transpose()};
  };
  auto rms_error = [&](Residuals& r, int c) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < r.remaining.size(); ++j) {
      if (c > 0) r.remaining[j] = std::max(r.remaining[j] - r.coef(c - 1, j) * r.coef(c - 1, j), 0.0);
      sum += std::sqrt(r.remaining[j] / N);
    }
    return sum / static_cast<double>(r.remaining.size());
  };
  auto mean_distance = [&](const MatrixXd& X, int c) {
    double dist = 0.0;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      const VectorXd d = X.col(j) - space.mean;
      const VectorXd r = d - space.basis.leftCols(c) * (space.basis.leftCols(c).transpose() * d);
      dist += as_vertices(r).colwise().norm().mean();
    }
    return dist / static_cast<double>(X.cols());
  };
  Residuals train_res = start(train), test_res = start(test);
  std::string csv = "components,cumulative_variance,train_rms_mm,test_rms_mm,test_mean_distance_mm\n";
  double prev = std::numeric_limits<double>::infinity();
  bool monotone = true;
  for (int c = 0; c <= space.components(); ++c) {
    const double tr = rms_error(train_res, c);
    const double te = rms_error(test_res, c);
    monotone = monotone && te <= prev;
    prev = te;
    csv += std::to_string(c) + "," + num(c == 0 ? 0.0 : cum[c - 1]) + "," + num(tr) + "," + num(te) + "," +
           num(mean_distance(test, c)) + "\n";
  }
  write_text_file(dir / "pca_report.csv", csv);
  log.line("train\t" + std::to_string(n_train));
  log.line("test\t" + std::to_string(n_test));
  log.line("components\t" + std::to_string(space.components()));
  log.line(std::string("test_error_monotone\t") + (monotone ? "yes" : "no"));
  log.write(dir / "run.log");
  return 0;
}

// -------------------------------------------------------------------- verify

class Checks {
 public:
  explicit Checks(RunLog& log) : log_(log) {}
  void add(const std::string& name, bool ok, const std::string& detail) {
    log_.line(std::string(ok ? "PASS" : "FAIL") + "\t" + name + "\t" + detail);
    failed_ += ok ? 0 : 1;
  }
  /// Runs `body`; an exception counts as a failure with its message.
  template <typename F>
  void run(const std::string& name, F&& body) {
    try {
      body();
    } catch (const std::exception& e) {
      add(name, false, std::string("threw: ") + e.what());
    }
  }
  int failed() const { return failed_; }

 private:
  RunLog& log_;
  int failed_ = 0;
};

FullParams random_params(const HackModel& model, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FullParams p = FullParams::zeros(model);
  for (Eigen::Index i = 0; i < p.beta.size(); ++i) {
    const double sd = model.shape_space.variance.size() > i ? std::sqrt(model.shape_space.variance[i]) : 1.0;
    p.beta[i] = scale * sd * n(rng);
  }
  for (Eigen::Index i = 0; i < p.psi.size(); ++i) p.psi[i] = 0.5 * u(rng);
  const RotationLimits& lim = model.limits;
  for (int k = 0; k < model.num_joints(); ++k) {
    Eigen::Vector3d e;
    for (int a = 0; a < 3; ++a) e[a] = lim.lo(k, a) + (0.2 + 0.6 * u(rng)) * (lim.hi(k, a) - lim.lo(k, a));
    p.pose.theta.col(k) = euler_to_axis_angle<double>(e);
  }
  if (model.has_larynx()) p.larynx = {0.5 + u(rng), (u(rng) - 0.5) * model.larynx.tau_max};
  return p;
}

int cmd_verify(const Options& o, std::ostream& out) {
  need(o.model, "--model");
  KeyValueConfig cfg = load_config(o);
  const double fd_tol = cfg.get("fd_tolerance", 1e-4);
  const double ortho_tol = cfg.get("orthonormality_tolerance", 1e-5);
  const std::uint64_t seed = resolve_seed(o, cfg, 1);
  reject_unused(cfg);
  const fs::path dir = prepare_out(o);

  RunLog log("verify", seed, cfg, out);
  Checks checks(log);
  std::mt19937_64 rng(seed);
  const HackModel model = load_model(o.model);

  checks.run("model-consistent", [&] {
    model.validate();
    checks.add("model-consistent", true, std::to_string(model.num_vertices()) + " vertices");
  });
  checks.run("neutrality", [&] {
    const Mesh m = forward(model, FullParams::zeros(model));
    const double dev = (m.vertices() - model.template_mesh.vertices()).cwiseAbs().maxCoeff();
    checks.add("neutrality", dev == 0.0, "max deviation " + num(dev) + " mm");
  });
  checks.run("zero-pose-skinning", [&] {
    const Vertices v = model.template_mesh.vertices();
    const Vertices s = linear_blend_skin(v, model.skeleton, PoseParams::zero(model.num_joints()), model.skinning);
    checks.add("zero-pose-skinning", s == v, "bitwise identity");
  });
  checks.run("skinning-weights", [&] {
    model.skinning.validate(model.num_joints());
    checks.add("skinning-weights", true, "rows convex, at most 4 influences");
  });
  checks.run("rotation-limits", [&] {
    model.limits.validate();
    const double e = rotation_limit_energy(PoseParams::zero(model.num_joints()), model.limits);
    checks.add("rotation-limits", e == 0.0, "zero pose energy " + num(e));
  });
  checks.run("shape-space", [&] {
    const MatrixXd& B = model.shape_space.basis;
    const double ortho = (B.transpose() * B - MatrixXd::Identity(B.cols(), B.cols())).cwiseAbs().maxCoeff();
    const VectorXd& r = model.shape_space.variance_ratio;
    bool sorted = true;
    for (Eigen::Index i = 1; i < r.size(); ++i) sorted = sorted && r[i] <= r[i - 1];
    checks.add("shape-space", ortho <= ortho_tol && sorted && r.sum() <= 1.0 + 1e-6,
               "orthonormality " + num(ortho) + ", ratios non-increasing: " + (sorted ? "yes" : "no"));
  });
  checks.run("euler-round-trip", [&] {
    std::uniform_real_distribution<double> u(-1.2, 1.2);
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
      const Eigen::Vector3d e(u(rng), u(rng), u(rng));
      const auto back = axis_angle_to_euler<double>(euler_to_axis_angle<double>(e));
      worst = std::max(worst, (back.angles - e).cwiseAbs().maxCoeff());
    }
    checks.add("euler-round-trip", worst < 1e-9, "max error " + num(worst) + " rad");
  });
  checks.run("forward-jacobian", [&] {
    const FullParams p = random_params(model, rng, 0.5);
    const ParamLayout layout = ParamLayout::make(model, kGroupAll);
    const MatrixXd J = forward_jacobian(model, p, layout);
    const VectorXd x0 = layout.pack(p);
    double worst = 0.0;
    for (int c = 0; c < layout.size; ++c) {
      const double h = 1e-6 * std::max(1.0, std::abs(x0[c]));
      FullParams a = p, b = p;
      VectorXd xa = x0, xb = x0;
      xa[c] += h;
      xb[c] -= h;
      layout.unpack(xa, a);
      layout.unpack(xb, b);
      const VectorXd fd = (flat(forward(model, a).vertices()) - flat(forward(model, b).vertices())) / (2.0 * h);
      const double scale = std::max({J.col(c).norm(), fd.norm(), 1e-12});
      worst = std::max(worst, (J.col(c) - fd).norm() / scale);
    }
    checks.add("forward-jacobian", worst < fd_tol, "max relative error " + num(worst));
  });
  if (model.has_larynx()) {
    checks.run("larynx-linearity", [&] {
      const FullParams p = random_params(model, rng, 1.0);
      const double tau = p.larynx.tau;
      const Vertices a = larynx_offset(model.larynx, model.template_mesh, {1.0, tau}, p.beta);
      const Vertices b = larynx_offset(model.larynx, model.template_mesh, {1.7, tau}, p.beta);
      const Vertices c = larynx_offset(model.larynx, model.template_mesh, {1.0, tau}, 2.0 * p.beta);
      const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
      const double e1 = (b - 1.7 * a).cwiseAbs().maxCoeff() / scale;
      const double e2 = (c - 2.0 * a).cwiseAbs().maxCoeff() / scale;
      checks.add("larynx-linearity", e1 < 1e-10 && e2 < 1e-10, "eta " + num(e1) + ", beta " + num(e2));
    });
  }
  checks.run("archive-round-trip", [&] {
    const fs::path a = dir / "verify_tmp_a", b = dir / "verify_tmp_b";
    fs::remove_all(a);
    fs::remove_all(b);
    save_model(model, a);
    save_model(load_model(a), b);
    const bool same = hash_directory(a) == hash_directory(b);
    const FullParams p = random_params(model, rng, 0.5);
    const bool fwd = forward(load_model(a), p).vertices() == forward(model, p).vertices();
    fs::remove_all(a);
    fs::remove_all(b);
    checks.add("archive-round-trip", same && fwd, std::string("bitwise: ") + (same ? "yes" : "no") +
                                                      ", forward equal: " + (fwd ? "yes" : "no"));
  });
  if (!o.data.empty()) {
    const SyntheticTruth data = load_dataset(o.data);
    checks.run("clip-limits", [&] {
      double e = 0.0;
      for (const SequenceClip& c : data.clips)
        for (const FullParams& p : c.params) e += rotation_limit_energy(p.pose, data.model.limits);
      checks.add("clip-limits", e == 0.0, "limit energy " + num(e));
    });
    checks.run("clip-targets", [&] {
      double worst = 0.0;
      for (const SequenceClip& c : data.clips)
        for (std::size_t t = 0; t < c.params.size(); t += 10)
          worst = std::max(worst, (forward(data.model, c.params[t]).vertices() - c.targets[t].vertices())
                                      .cwiseAbs()
                                      .maxCoeff());
      checks.add("clip-targets", worst <= 1e-4 + 6.0 * data.config.noise_sigma,
                 "max target deviation " + num(worst) + " mm");
    });
    checks.run("tracker", [&] {
      int frames = 0, wrong = 0;
      for (std::size_t c = 0; c < data.normal_maps.size() && c < data.clips.size(); ++c)
        for (const NormalMapFrame& f : data.normal_maps[c]) {
          const TrackResult r = track_larynx(f, data.kernel, data.normal_rest_row);
          const double tau = data.clips[c].params.at(static_cast<std::size_t>(f.frame)).larynx.tau;
          wrong += r.tau == std::round(tau * data.config.normal_rows_per_tau) ? 0 : 1;
          ++frames;
        }
      checks.add("tracker", wrong == 0, std::to_string(wrong) + " of " + std::to_string(frames) + " frames off");
    });
  }
  log.line("failed\t" + std::to_string(checks.failed()));
  log.write(dir / "run.log");
  if (checks.failed() > 0) throw Error("verify: " + std::to_string(checks.failed()) + " check(s) failed");
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Head-and-neck model toolkit", "hack"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Options o;

  struct Spec {
    const char* name;
    const char* help;
    int (*fn)(const Options&, std::ostream&);
    bool params, target;
  };
  const Spec specs[] = {
      {"gen-data", "Generate a synthetic dataset", cmd_gen_data, false, false},
      {"train-static", "Learn the static model from a dataset", cmd_train_static, false, false},
      {"train-dynamic", "Learn skinning and pose blendshapes from clips", cmd_train_dynamic, false, false},
      {"fit", "Fit parameters to a target mesh or point cloud", cmd_fit, true, true},
      {"animate", "Params CSV to an OBJ sequence", cmd_animate, true, false},
      {"track-larynx", "Track the larynx slide in normal maps", cmd_track_larynx, false, false},
      {"synth-larynx", "Predict larynx slides from expressions", cmd_synth_larynx, true, false},
      {"synth-pose", "Map head orientation to a cervical pose", cmd_synth_pose, true, false},
      {"retarget", "Transfer poses onto another rig", cmd_retarget, true, false},
      {"pca-report", "Shape space compactness and generalization", cmd_pca_report, false, false},
      {"verify", "Run the model invariant checks", cmd_verify, false, false},
  };
  std::vector<std::pair<CLI::App*, const Spec*>> subs;
  for (const Spec& s : specs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", o.config, "key=value configuration file");
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--model", o.model, "model archive directory");
    sub->add_option("--data", o.data, "dataset directory");
    sub->add_flag("--strict-limits", o.strict_limits, "treat rotation limit violations as errors");
    if (s.params) sub->add_option("--params", o.params, "params CSV");
    if (s.target) sub->add_option("--target", o.target, "target OBJ");
    subs.emplace_back(sub, &s);
  }

  std::vector<std::string> argv_store{"hack"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  }

  for (const auto& [sub, spec] : subs) {
    if (!sub->parsed()) continue;
    try {
      return spec->fn(o, out);
    } catch (const UsageError& e) {
      err << "usage error: " << e.what() << "\n" << sub->help();
      return 2;
    } catch (const Error& e) {
      err << "error: " << e.what() << "\n";
      return 1;
    } catch (const fs::filesystem_error& e) {
      err << "error: " << e.what() << "\n";
      return 1;
    }
  }
  err << app.help();
  return 2;
}

}  // namespace hack
