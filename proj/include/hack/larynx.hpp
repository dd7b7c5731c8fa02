#pragma once

#include "hack/pca.hpp"
#include "hack/uv_map.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hack {

/// Larynx size multiplier and vertical slide (UV v units).
struct LarynxParams {
  double eta = 0.0;
  double tau = 0.0;
};

inline constexpr double kEtaMax = 2.0;

/// Per-identity-component displacement maps L_i sharing one region mask.
struct LarynxBasis {
  UvResolution resolution{};
  std::vector<DisplacementMap> maps;
  std::vector<std::uint8_t> mask;  // rows * cols, 1 inside the larynx region
  double tau_max = 0.1;
  VectorXd variance_ratio;  // of the map PCA the basis was fitted from
  bool degenerate = false;

  int count() const { return static_cast<int>(maps.size()); }
  bool in_mask(int r, int c) const { return mask[static_cast<std::size_t>(r * resolution.cols + c)] != 0; }
};

/// sum_i beta_i L_i.
DisplacementMap combine_larynx_maps(const LarynxBasis& basis, const VectorXd& beta);

/// Combined map of one identity bound to a mesh atlas; evaluates the larynx
/// offset and its parameter derivatives. Only masked vertices move.
struct LarynxField {
  UvAtlas atlas;
  DisplacementMap map;
  std::vector<int> vertices;  // ascending, inside the mask
  double tau_max = 0.1;

  int num_vertices() const { return atlas.num_vertices(); }
  /// eta * map(u, v + tau) at every masked vertex, zero elsewhere.
  Vertices evaluate(const LarynxParams& p) const;
  /// d offset / d tau (masked vertices only).
  Vertices d_tau(const LarynxParams& p) const;
  void check(const LarynxParams& p) const;
};

LarynxField make_larynx_field(const LarynxBasis& basis, const UvAtlas& atlas, const VectorXd& beta);

/// eta * sum_i beta_i L_i(u, v + tau) per vertex; zero outside the mask.
Vertices larynx_offset(const LarynxBasis& basis, const UvAtlas& atlas, const LarynxParams& params,
                       const VectorXd& beta);
Vertices larynx_offset(const LarynxBasis& basis, const Mesh& mesh, const LarynxParams& params, const VectorXd& beta);

struct LarynxFitOptions {
  int dilation = 2;        // mask growth in texels
  double tau_max = 0.1;
  double rank_tol = 1e-10; // relative singular value threshold
};

struct LarynxFit {
  LarynxBasis basis;
  PcaSpace map_space;      // PCA over the scattered training maps
  bool rank_deficient = false;
  std::string warning;
};

/// Scatters each identity's larynx displacement into UV space, runs PCA over
/// the maps, and regresses the maps on beta inside the leading |beta|
/// principal subspace.
LarynxFit fit_larynx_basis(const std::vector<VectorXd>& betas, const std::vector<Vertices>& displacements,
                           const Mesh& mesh, UvResolution res, const LarynxFitOptions& opts = {});

/// Millimeters of vertical travel on `mesh` for a slide of `tau`, from the
/// mean spacing between vertices on vertically adjacent texels.
double tau_to_millimeters(const Mesh& mesh, const UvAtlas& atlas, double tau);

/// Aligns clips at their onset valley, peak and offset valley, resamples the
/// rise and fall to common lengths, and averages. Throws when a clip has no
/// peak.
VectorXd swallow_curve(const std::vector<VectorXd>& clips);

}  // namespace hack
