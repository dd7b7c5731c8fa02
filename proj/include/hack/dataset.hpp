#pragma once

#include "hack/learning.hpp"
#include "hack/model.hpp"
#include "hack/synthesis.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hack {

struct SyntheticConfig {
  int rings = 50;        // N = rings * segments + 2
  int segments = 40;
  int num_betas = 10;
  int num_expressions = 8;
  int identities = 40;
  int annotated = 30;    // identities with joint annotations
  int expression_components = 5;
  int pose_components = 3;
  int appearance_components = 6;
  int appearance_size = 16;
  int dynamic_subjects = 4;
  int clip_frames = 120;
  double fps = 30.0;
  double noise_sigma = 0.0;  // mm, on generated meshes
  double tau_max = 0.1;
  double pulse_amplitude = 0.03;  // UV
  int pulse_frames = 24;
  int uv_size = 64;
  int normal_rows = 96, normal_cols = 80;
  double normal_rows_per_tau = 400.0;  // image rows per UV unit of slide
  int landmarks = 20;
  bool normal_maps = true;
  std::uint64_t seed = 7;

  int num_vertices() const { return rings * segments + 2; }
  /// Throws Error on inconsistent settings.
  void validate() const;
};

struct SyntheticTruth {
  SyntheticConfig config;
  HackModel model;                        // the planted model
  std::vector<VectorXd> betas;            // per identity
  std::vector<Mesh> neutrals;             // larynx-removed neutral meshes
  std::vector<Vertices> larynx_displacements;  // eta = 1, tau = 0
  std::vector<int> annotated;
  std::vector<Eigen::Matrix3Xd> joint_annotations;
  std::vector<std::vector<Mesh>> expression_scans;  // neutral + E_j per identity
  std::vector<AppearanceStack> textures;
  std::vector<int> dynamic_identities;
  std::vector<SequenceClip> clips;        // true params and target meshes
  std::vector<std::vector<NormalMapFrame>> normal_maps;  // per clip
  int normal_rest_row = 0;                // tau0 of the tracker
  LarynxKernel kernel;
  std::vector<int> landmark_vertices;
  Mesh long_neck_rest;                    // same topology, stretched neck
  Skeleton long_neck_skeleton;

  StaticInputs static_inputs() const;
};

/// Head-and-neck surface of revolution: rings x segments grid plus two poles,
/// outward-facing triangles, one UV texel per vertex.
Mesh synthetic_base_mesh(const SyntheticConfig& cfg);

SyntheticTruth generate_dataset(const SyntheticConfig& cfg);

struct PerturbSpec {
  double theta = 0.0;  // rad, per axis-angle component
  double psi = 0.0;
  double eta = 0.0;
  double tau = 0.0;
  double beta = 0.0;
  std::uint64_t seed = 11;
};

/// Truth plus seeded Gaussian noise, resampled until every value is inside
/// its valid range (limits, [0, 1.5], [0, 2], |tau| <= tau_max).
std::vector<SequenceClip> perturb(const std::vector<SequenceClip>& truth, const HackModel& model,
                                  const PerturbSpec& spec);

/// Directory with manifest.json, OBJs, tensors and params CSVs; the planted
/// model goes to `dir/model`.
void save_dataset(const SyntheticTruth& truth, const std::filesystem::path& dir);
SyntheticTruth load_dataset(const std::filesystem::path& dir);

}  // namespace hack
