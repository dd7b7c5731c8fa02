#include "hack/larynx.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace hack {

DisplacementMap combine_larynx_maps(const LarynxBasis& basis, const VectorXd& beta) {
  require_dims(beta.size() <= basis.count(), "larynx: |beta| " + std::to_string(beta.size()) + " exceeds basis count " +
                                                 std::to_string(basis.count()));
  DisplacementMap out(basis.resolution);
  for (Eigen::Index i = 0; i < beta.size(); ++i) out.data() += beta[i] * basis.maps[static_cast<std::size_t>(i)].data();
  return out;
}

void LarynxField::check(const LarynxParams& p) const {
  if (!(std::abs(p.tau) <= tau_max))
    throw Error("larynx: |tau| = " + std::to_string(std::abs(p.tau)) + " exceeds tau_max " + std::to_string(tau_max));
}

Vertices LarynxField::evaluate(const LarynxParams& p) const {
  check(p);
  Vertices out = Vertices::Zero(3, num_vertices());
  for (int i : vertices) out.col(i) = p.eta * sample_shifted(map, atlas.row(i), atlas.col(i), p.tau);
  return out;
}

Vertices LarynxField::d_tau(const LarynxParams& p) const {
  Vertices out = Vertices::Zero(3, num_vertices());
  for (int i : vertices) out.col(i) = p.eta * sample_shifted_dshift(map, atlas.row(i), atlas.col(i), p.tau);
  return out;
}

LarynxField make_larynx_field(const LarynxBasis& basis, const UvAtlas& atlas, const VectorXd& beta) {
  const UvResolution ar = atlas.resolution(), br = basis.resolution;
  require_dims(ar.rows == br.rows && ar.cols == br.cols, "larynx: atlas resolution differs from basis resolution");
  LarynxField f;
  f.atlas = atlas;
  f.map = combine_larynx_maps(basis, beta);
  f.tau_max = basis.tau_max;
  for (int i = 0; i < atlas.num_vertices(); ++i)
    if (basis.in_mask(atlas.row(i), atlas.col(i))) f.vertices.push_back(i);
  return f;
}

Vertices larynx_offset(const LarynxBasis& basis, const UvAtlas& atlas, const LarynxParams& params,
                       const VectorXd& beta) {
  return make_larynx_field(basis, atlas, beta).evaluate(params);
}

Vertices larynx_offset(const LarynxBasis& basis, const Mesh& mesh, const LarynxParams& params, const VectorXd& beta) {
  return larynx_offset(basis, UvAtlas(mesh.uv(), basis.resolution), params, beta);
}

LarynxFit fit_larynx_basis(const std::vector<VectorXd>& betas, const std::vector<Vertices>& displacements,
                           const Mesh& mesh, UvResolution res, const LarynxFitOptions& opts) {
  if (betas.empty()) throw Error("fit_larynx_basis: no training identities");
  require_dims(betas.size() == displacements.size(), "fit_larynx_basis: betas and displacements differ in count");
  const UvAtlas atlas(mesh.uv(), res);
  const auto n = static_cast<Eigen::Index>(betas.size());
  const Eigen::Index B = betas.front().size();
  const Eigen::Index D = 3 * static_cast<Eigen::Index>(res.rows) * res.cols;
  MatrixXd M(D, n), Bm(B, n);
  for (Eigen::Index s = 0; s < n; ++s) {
    require_dims(betas[s].size() == B, "fit_larynx_basis: inconsistent |beta|");
    const DisplacementMap m = scatter_to_uv(atlas, displacements[static_cast<std::size_t>(s)]);
    M.col(s) = Eigen::Map<const VectorXd>(m.data().data(), D);
    Bm.col(s) = betas[s];
  }

  LarynxFit fit;
  fit.map_space = fit_pca(M, static_cast<int>(B));
  const int k = fit.map_space.components();

  // Least squares M ~ L * Bm, then restricted to the principal subspace.
  const Eigen::JacobiSVD<MatrixXd> svd(Bm.transpose(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd sv = svd.singularValues();
  const double cut = sv.size() > 0 ? opts.rank_tol * sv[0] : 0.0;
  VectorXd inv = VectorXd::Zero(sv.size());
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > cut) {
      inv[i] = 1.0 / sv[i];
      ++rank;
    }
  const MatrixXd pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();  // B x n
  MatrixXd L = M * pinv.transpose();                                                     // D x B
  const MatrixXd U = fit.map_space.basis.leftCols(k);
  L = U * (U.transpose() * L);

  if (rank < B) {
    fit.rank_deficient = true;
    fit.warning = "fit_larynx_basis: identity coefficients have rank " + std::to_string(rank) + " < " +
                  std::to_string(B) + "; minimum-norm solution used";
  }
  if (fit.map_space.degenerate) {
    fit.warning += (fit.warning.empty() ? "" : "; ") + std::string("fit_larynx_basis: training maps have zero variance");
  }

  LarynxBasis& basis = fit.basis;
  basis.resolution = res;
  basis.tau_max = opts.tau_max;
  basis.variance_ratio = fit.map_space.variance_ratio;
  basis.degenerate = fit.map_space.degenerate;

  // Mask: union of nonzero training texels, dilated.
  std::vector<std::uint8_t> support(static_cast<std::size_t>(res.rows * res.cols), 0);
  for (int t = 0; t < res.rows * res.cols; ++t)
    for (Eigen::Index s = 0; s < n && !support[t]; ++s)
      if (M.col(s).segment(3 * t, 3).cwiseAbs().maxCoeff() > 0.0) support[t] = 1;
  basis.mask.assign(support.size(), 0);
  for (int r = 0; r < res.rows; ++r)
    for (int c = 0; c < res.cols; ++c) {
      if (!support[static_cast<std::size_t>(r * res.cols + c)]) continue;
      for (int dr = -opts.dilation; dr <= opts.dilation; ++dr)
        for (int dc = -opts.dilation; dc <= opts.dilation; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr >= 0 && rr < res.rows && cc >= 0 && cc < res.cols)
            basis.mask[static_cast<std::size_t>(rr * res.cols + cc)] = 1;
        }
    }

  basis.maps.reserve(static_cast<std::size_t>(B));
  for (Eigen::Index i = 0; i < B; ++i) {
    DisplacementMap m(res);
    m.data() = Eigen::Map<const Eigen::Matrix3Xd>(L.col(i).data(), 3, res.rows * res.cols);
    for (int t = 0; t < res.rows * res.cols; ++t)
      if (!basis.mask[static_cast<std::size_t>(t)]) m.data().col(t).setZero();
    basis.maps.push_back(std::move(m));
  }
  return fit;
}

double tau_to_millimeters(const Mesh& mesh, const UvAtlas& atlas, double tau) {
  const UvResolution res = atlas.resolution();
  double sum = 0.0;
  int cnt = 0;
  for (int i = 0; i < atlas.num_vertices(); ++i) {
    const int r = atlas.row(i) + 1;
    if (r >= res.rows) continue;
    const int j = atlas.owner(r, atlas.col(i));
    if (j < 0) continue;
    sum += (mesh.vertices().col(j) - mesh.vertices().col(i)).norm();
    ++cnt;
  }
  if (cnt == 0) throw Error("tau_to_millimeters: no vertically adjacent texels");
  return tau * res.rows * (sum / cnt);
}

namespace {

struct PulseMarks {
  Eigen::Index onset, peak, offset;
};

PulseMarks find_pulse(const VectorXd& x) {
  if (x.size() < 3) throw Error("swallow_curve: clip too short");
  Eigen::Index peak = 0;
  const double hi = x.maxCoeff(&peak);
  const double lo = x.minCoeff();
  if (!(hi - lo > 1e-12 * std::max(1.0, std::abs(hi)))) throw Error("swallow_curve: no detectable peak");
  PulseMarks m{0, peak, x.size() - 1};
  // Nearest occurrence of the minimum on each side of the peak.
  const double pre_min = x.head(peak + 1).minCoeff();
  for (Eigen::Index i = peak; i >= 0; --i)
    if (x[i] == pre_min) {
      m.onset = i;
      break;
    }
  const double post_min = x.tail(x.size() - peak).minCoeff();
  for (Eigen::Index i = peak; i < x.size(); ++i)
    if (x[i] == post_min) {
      m.offset = i;
      break;
    }
  return m;
}

// Samples x on [a, b] at m + 1 evenly spaced positions.
VectorXd resample(const VectorXd& x, Eigen::Index a, Eigen::Index b, Eigen::Index m) {
  VectorXd out(m + 1);
  const Eigen::Index len = b - a;
  for (Eigen::Index j = 0; j <= m; ++j) {
    if (len == m) {
      out[j] = x[a + j];
      continue;
    }
    const double pos = m == 0 ? static_cast<double>(a) : a + static_cast<double>(j) * len / m;
    const auto i0 = static_cast<Eigen::Index>(std::floor(pos));
    const Eigen::Index i1 = std::min(i0 + 1, b);
    const double t = pos - i0;
    out[j] = (1.0 - t) * x[i0] + t * x[i1];
  }
  return out;
}

}  // namespace

VectorXd swallow_curve(const std::vector<VectorXd>& clips) {
  if (clips.empty()) throw Error("swallow_curve: no clips");
  std::vector<PulseMarks> marks;
  double rise = 0.0, fall = 0.0;
  Eigen::Index before = std::numeric_limits<Eigen::Index>::max(), after = before;
  for (const auto& c : clips) {
    marks.push_back(find_pulse(c));
    const auto& m = marks.back();
    rise += static_cast<double>(m.peak - m.onset);
    fall += static_cast<double>(m.offset - m.peak);
    before = std::min(before, m.onset);
    after = std::min(after, c.size() - 1 - m.offset);
  }
  const auto nr = static_cast<Eigen::Index>(std::lround(rise / static_cast<double>(clips.size())));
  const auto nf = static_cast<Eigen::Index>(std::lround(fall / static_cast<double>(clips.size())));
  VectorXd acc = VectorXd::Zero(before + nr + nf + after + 1);
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const auto& x = clips[i];
    const auto& m = marks[i];
    VectorXd y(acc.size());
    y.head(before) = x.segment(m.onset - before, before);
    y.segment(before, nr + 1) = resample(x, m.onset, m.peak, nr);
    y.segment(before + nr, nf + 1) = resample(x, m.peak, m.offset, nf);
    y.tail(after) = x.segment(m.offset + 1, after);
    acc += y;
  }
  return acc / static_cast<double>(clips.size());
}

}  // namespace hack
