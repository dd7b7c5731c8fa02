#include "hack/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include <Eigen/QR>

namespace hack {

namespace {

using Rng = std::mt19937_64;
constexpr double kPi = 3.14159265358979323846;
constexpr double kHeight = 240.0;  // mm, pole to pole

double f32(double x) { return static_cast<double>(static_cast<float>(x)); }

template <typename M>
void round_f32(M& m) {
  m = m.unaryExpr([](double x) { return f32(x); });
}

double gauss(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }
double uniform(Rng& rng, double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }

double legendre(int l, double x) {
  switch (l) {
    case 0: return 1.0;
    case 1: return x;
    case 2: return 0.5 * (3 * x * x - 1);
    default: return 0.5 * (5 * x * x * x - 3 * x);
  }
}

/// Cylindrical frame of every template vertex.
struct Frame {
  VectorXd phi, s;
  Eigen::Matrix3Xd radial, tangent;
};

Frame make_frame(const Vertices& V) {
  Frame f;
  const Eigen::Index n = V.cols();
  f.phi.resize(n);
  f.s.resize(n);
  f.radial.setZero(3, n);
  f.tangent.setZero(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = V(0, i), y = V(1, i);
    f.phi[i] = std::atan2(y, x);
    f.s[i] = V(2, i) / kHeight;
    if (std::hypot(x, y) > 1e-9) {
      f.radial.col(i) << std::cos(f.phi[i]), std::sin(f.phi[i]), 0.0;
      f.tangent.col(i) << -std::sin(f.phi[i]), std::cos(f.phi[i]), 0.0;
    }
  }
  return f;
}

/// Low-order harmonic field (azimuthal order <= 2, Legendre degree <= 3 in
/// height) along the radial, tangential and vertical directions.
Vertices smooth_field(const Frame& f, Rng& rng, const VectorXd& window) {
  const Eigen::Index n = f.phi.size();
  Vertices out = Vertices::Zero(3, n);
  for (int dir = 0; dir < 3; ++dir) {
    for (int m = 0; m <= 2; ++m) {
      const double phase = uniform(rng, 0.0, 2 * kPi);
      for (int l = 0; l <= 3; ++l) {
        const double c = gauss(rng) / (1.0 + m + l) * (dir == 0 ? 1.0 : 0.5);
        for (Eigen::Index i = 0; i < n; ++i) {
          const double v = c * std::cos(m * f.phi[i] + phase) * legendre(l, 2 * f.s[i] - 1) * window[i];
          if (dir == 0)
            out.col(i) += v * f.radial.col(i);
          else if (dir == 1)
            out.col(i) += v * f.tangent.col(i);
          else
            out(2, i) += v;
        }
      }
    }
  }
  return out;
}

MatrixXd orthonormal_columns(const MatrixXd& A) {
  Eigen::HouseholderQR<MatrixXd> qr(A);
  MatrixXd Q = qr.householderQ() * MatrixXd::Identity(A.rows(), A.cols());
  for (Eigen::Index c = 0; c < Q.cols(); ++c) {
    Eigen::Index arg = 0;
    Q.col(c).cwiseAbs().maxCoeff(&arg);
    if (Q(arg, c) < 0) Q.col(c) *= -1.0;
  }
  return Q;
}

/// Network computing out = A * beta exactly through ReLU(x) - ReLU(-x).
MappingNetwork linear_network(const MatrixXd& A, int hidden = 64) {
  const int B = static_cast<int>(A.cols());
  const int C = static_cast<int>(A.rows());
  require_dims(2 * B <= hidden, "linear_network: hidden layer too narrow");
  MappingNetwork m;
  m.net = Mlp::zeros({B, hidden, hidden, C});
  for (int b = 0; b < B; ++b) {
    m.net.weights[0](b, b) = 1.0;
    m.net.weights[0](B + b, b) = -1.0;
  }
  for (int h = 0; h < 2 * B; ++h) m.net.weights[1](h, h) = 1.0;
  m.net.weights[2].leftCols(B) = A;
  m.net.weights[2].middleCols(B, B) = -A;
  m.trained = true;
  return m;
}

VectorXd ratio_of(const VectorXd& variance) {
  const double total = variance.sum();
  return total > 0 ? VectorXd(variance / total) : VectorXd(VectorXd::Zero(variance.size()));
}

double ring_height(int ring, int rings) { return kHeight * (ring + 1) / (rings + 1); }

double profile_radius(double s) {
  const double head = std::exp(-std::pow((s - 0.8) / 0.12, 2));
  return (50.0 + 36.0 * head) * std::pow(std::sin(kPi * s), 0.35);
}

Eigen::Matrix3Xd planted_joints() {
  Eigen::Matrix3Xd J(3, kNumJoints);
  for (int k = 0; k < kNumJoints; ++k) J.col(k) << 0.0, -12.0 + 3.0 * std::sin(kPi * k / 7.0), 30.0 + 18.0 * k;
  return J;
}

/// Hat weights over the heights of the bone midpoints, at most two joints per
/// vertex, quantized to 2^-16 so rows sum to one exactly in float.
MatrixXd planted_weights(const Vertices& V, const Eigen::Matrix3Xd& J) {
  const int K = static_cast<int>(J.cols());
  std::vector<double> centers(static_cast<std::size_t>(K));
  for (int k = 0; k + 1 < K; ++k) centers[k] = 0.5 * (J(2, k) + J(2, k + 1));
  centers[K - 1] = J(2, K - 1) + 9.0;
  MatrixXd W = MatrixXd::Zero(V.cols(), K);
  for (Eigen::Index i = 0; i < V.cols(); ++i) {
    const double z = V(2, i);
    if (z <= centers[0]) {
      W(i, 0) = 1.0;
      continue;
    }
    if (z >= centers[K - 1]) {
      W(i, K - 1) = 1.0;
      continue;
    }
    int k = 0;
    while (z > centers[k + 1]) ++k;
    double a = (z - centers[k]) / (centers[k + 1] - centers[k]);
    a = std::round(a * 65536.0) / 65536.0;
    W(i, k) = 1.0 - a;
    W(i, k + 1) = a;
  }
  return W;
}

RotationLimits planted_limits() {
  RotationLimits L = RotationLimits::defaults();
  round_f32(L.lo);
  round_f32(L.hi);
  return L;
}

LarynxBasis planted_larynx(const SyntheticConfig& cfg, Rng& rng) {
  LarynxBasis lb;
  lb.resolution = {cfg.uv_size, cfg.uv_size};
  lb.tau_max = cfg.tau_max;
  const int col_offset = (cfg.uv_size - cfg.segments) / 2;
  const int row_offset = (cfg.uv_size - cfg.rings) / 2;
  // Anterior neck: azimuth pi/2, about 100 mm up.
  const double center_col = col_offset + cfg.segments / 4.0;
  const double center_row = row_offset + 100.0 * (cfg.rings + 1) / kHeight - 1.0;
  VectorXd variance(cfg.num_betas);
  for (int b = 0; b < cfg.num_betas; ++b) {
    DisplacementMap m(lb.resolution);
    const double rc = center_row + uniform(rng, -1.0, 1.0);
    const double cc = center_col + uniform(rng, -1.0, 1.0);
    const double sr = uniform(rng, 2.5, 3.5);
    const double sc = uniform(rng, 1.5, 2.2);
    const double amp = b == 0 ? 0.012 : 0.004 * gauss(rng);
    const double lift = 0.15 * gauss(rng);
    for (int r = 0; r < lb.resolution.rows; ++r)
      for (int c = 0; c < lb.resolution.cols; ++c) {
        const double g = std::exp(-0.5 * (std::pow((r - rc) / sr, 2) + std::pow((c - cc) / sc, 2)));
        if (g < 1e-3) continue;
        m.texel(r, c) << 0.0, f32(amp * g), f32(amp * lift * g);
      }
    variance[b] = m.data().squaredNorm();
    lb.maps.push_back(std::move(m));
  }
  lb.mask.assign(static_cast<std::size_t>(lb.resolution.rows * lb.resolution.cols), 0);
  for (int r = 0; r < lb.resolution.rows; ++r)
    for (int c = 0; c < lb.resolution.cols; ++c) {
      bool hit = false;
      for (int dr = -2; dr <= 2 && !hit; ++dr)
        for (int dc = -2; dc <= 2 && !hit; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= lb.resolution.rows || cc >= lb.resolution.cols) continue;
          for (const auto& m : lb.maps)
            if (!m.texel(rr, cc).isZero()) {
              hit = true;
              break;
            }
        }
      lb.mask[static_cast<std::size_t>(r * lb.resolution.cols + c)] = hit ? 1 : 0;
    }
  lb.variance_ratio = ratio_of(variance);
  round_f32(lb.variance_ratio);
  return lb;
}

/// PCA space with an orthonormal basis of windowed smooth sets.
PcaSpace planted_set_space(const Frame& f, Rng& rng, int count, int components,
                           const std::function<VectorXd(int)>& window, double mean_amp) {
  const Eigen::Index n3 = 3 * f.phi.size();
  PcaSpace sp;
  sp.mean.resize(n3 * count);
  for (int j = 0; j < count; ++j) {
    const Vertices field = smooth_field(f, rng, window(j)) * mean_amp;
    sp.mean.segment(n3 * j, n3) = flat(field);
  }
  MatrixXd raw(n3 * count, components);
  for (int c = 0; c < components; ++c)
    for (int j = 0; j < count; ++j) {
      const Vertices field = smooth_field(f, rng, window(j));
      raw.col(c).segment(n3 * j, n3) = flat(field);
    }
  sp.basis = orthonormal_columns(raw);
  round_f32(sp.mean);
  round_f32(sp.basis);
  return sp;
}

MatrixXd planted_mapping(Rng& rng, int components, int betas, const VectorXd& beta_sigma, double target) {
  MatrixXd A(components, betas);
  const double scale = target / beta_sigma.norm();
  for (int c = 0; c < components; ++c)
    for (int b = 0; b < betas; ++b) A(c, b) = gauss(rng) * scale * std::pow(0.7, c);
  round_f32(A);
  return A;
}

void fill_space_variance(PcaSpace& sp, const MatrixXd& A, const std::vector<VectorXd>& betas) {
  MatrixXd w(A.rows(), static_cast<Eigen::Index>(betas.size()));
  for (std::size_t i = 0; i < betas.size(); ++i) w.col(static_cast<Eigen::Index>(i)) = A * betas[i];
  const VectorXd mean = w.rowwise().mean();
  sp.variance = (w.colwise() - mean).rowwise().squaredNorm() / std::max<double>(1.0, betas.size() - 1.0);
  round_f32(sp.variance);
  sp.variance_ratio = ratio_of(sp.variance);
  round_f32(sp.variance_ratio);
}

/// Euler trajectories inside the limits, converted to axis-angle.
MatrixXd pose_trajectory(const RotationLimits& lim, int frames, double fps, Rng& rng) {
  const int K = static_cast<int>(lim.lo.rows());
  MatrixXd theta(3 * K, frames);
  std::vector<std::array<double, 6>> waves(static_cast<std::size_t>(3 * K));
  for (auto& w : waves)
    w = {uniform(rng, 0.2, 0.5), uniform(rng, 0, 2 * kPi), uniform(rng, 0.1, 0.3), uniform(rng, 0, 2 * kPi),
         uniform(rng, 0.5, 0.9), 0.0};
  for (int t = 0; t < frames; ++t) {
    for (int k = 0; k < K; ++k) {
      Eigen::Vector3d e;
      for (int a = 0; a < 3; ++a) {
        const auto& w = waves[static_cast<std::size_t>(3 * k + a)];
        const double mid = 0.5 * (lim.lo(k, a) + lim.hi(k, a));
        const double half = 0.5 * (lim.hi(k, a) - lim.lo(k, a));
        const double tt = t / fps;
        const double wave = w[4] * std::sin(2 * kPi * w[0] * tt + w[1]) +
                            (1.0 - w[4]) * std::sin(2 * kPi * w[2] * tt + w[3]);
        e[a] = mid + 0.45 * half * wave;
      }
      theta.col(t).segment<3>(3 * k) = euler_to_axis_angle<double>(e);
    }
  }
  return theta;
}

Eigen::Vector3d bump_normal(double r, double c, double height, double sr, double sc, double r0, double c0) {
  const double g = height * std::exp(-0.5 * (std::pow((r - r0) / sr, 2) + std::pow((c - c0) / sc, 2)));
  const double dr = -g * (r - r0) / (sr * sr);
  const double dc = -g * (c - c0) / (sc * sc);
  return Eigen::Vector3d(-dc, -dr, 1.0).normalized();
}

NormalMapFrame noise_frame(int rows, int cols, Rng& rng) {
  NormalMapFrame f;
  f.rows = rows;
  f.cols = cols;
  f.data.resize(static_cast<std::size_t>(rows * cols * 3));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const Eigen::Vector3d n = Eigen::Vector3d(0.35 * gauss(rng), 0.35 * gauss(rng), 1.0).normalized();
      for (int ch = 0; ch < 3; ++ch) f.at(r, c, ch) = static_cast<float>(n[ch]);
    }
  return f;
}

}  // namespace

LarynxKernel LarynxKernel::bump(double height, double sigma_rows, double sigma_cols) {
  LarynxKernel k;
  k.image.rows = kSize;
  k.image.cols = kSize;
  k.image.data.resize(static_cast<std::size_t>(kSize * kSize * 3));
  const double mid = 0.5 * (kSize - 1);
  for (int r = 0; r < kSize; ++r)
    for (int c = 0; c < kSize; ++c) {
      const Eigen::Vector3d n = bump_normal(r, c, height, sigma_rows, sigma_cols, mid, mid);
      for (int ch = 0; ch < 3; ++ch) k.image.at(r, c, ch) = static_cast<float>(n[ch]);
    }
  return k;
}

void SyntheticConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error("synthetic config: " + m); };
  if (rings < 4 || segments < 4) fail("need at least 4 rings and 4 segments");
  if (segments > uv_size || rings + 2 > uv_size) fail("uv_size too small for the vertex grid");
  if (num_betas < 1 || identities < 2) fail("need |beta| >= 1 and at least 2 identities");
  if (num_betas > identities - 1) fail("|beta| > identities - 1: the shape space cannot be recovered at full rank");
  if (2 * num_betas > 64) fail("|beta| must be <= 32");
  if (annotated < 1 || annotated > identities) fail("annotated count out of range");
  if (dynamic_subjects < 0 || dynamic_subjects > identities) fail("dynamic subject count out of range");
  if (clip_frames < 3 && dynamic_subjects > 0) fail("clips need at least 3 frames");
  if (fps <= 0) fail("fps must be positive");
  if (noise_sigma < 0) fail("noise sigma must be non-negative");
  if (pulse_frames < 2 || (dynamic_subjects > 0 && pulse_frames + 4 > clip_frames)) fail("pulse longer than the clip");
  if (std::abs(pulse_amplitude) > tau_max) fail("pulse amplitude exceeds tau_max");
  if (normal_rows < LarynxKernel::kSize || normal_cols < LarynxKernel::kSize) fail("normal maps smaller than the kernel");
  if (landmarks < 0 || landmarks > num_vertices()) fail("landmark count out of range");
}

Mesh synthetic_base_mesh(const SyntheticConfig& cfg) {
  const int R = cfg.rings, S = cfg.segments;
  const int N = cfg.num_vertices();
  const int bottom = R * S, top = R * S + 1;
  Vertices V(3, N);
  UvCoords uv(2, N);
  const int col_offset = (cfg.uv_size - S) / 2;
  const int row_offset = (cfg.uv_size - R) / 2;
  const double texel = 1.0 / cfg.uv_size;
  for (int i = 0; i < R; ++i) {
    const double z = ring_height(i, R);
    const double r = profile_radius(z / kHeight);
    for (int j = 0; j < S; ++j) {
      const double phi = 2 * kPi * j / S;
      const int v = i * S + j;
      V.col(v) << r * std::cos(phi), 0.9 * r * std::sin(phi), z;
      uv.col(v) << (col_offset + j + 0.5) * texel, (row_offset + i + 0.5) * texel;
    }
  }
  V.col(bottom) << 0.0, 0.0, 0.0;
  V.col(top) << 0.0, 0.0, kHeight;
  uv.col(bottom) << 0.5 * texel, 0.5 * texel;
  uv.col(top) << 0.5 * texel, (cfg.uv_size - 0.5) * texel;
  round_f32(V);

  std::vector<Eigen::Vector3i> tris;
  for (int i = 0; i + 1 < R; ++i)
    for (int j = 0; j < S; ++j) {
      const int a = i * S + j, b = i * S + (j + 1) % S;
      const int c = (i + 1) * S + (j + 1) % S, d = (i + 1) * S + j;
      tris.emplace_back(a, b, c);
      tris.emplace_back(a, c, d);
    }
  for (int j = 0; j < S; ++j) {
    tris.emplace_back(bottom, (j + 1) % S, j);
    tris.emplace_back(top, (R - 1) * S + j, (R - 1) * S + (j + 1) % S);
  }
  Faces F(3, static_cast<Eigen::Index>(tris.size()));
  for (std::size_t f = 0; f < tris.size(); ++f) F.col(static_cast<Eigen::Index>(f)) = tris[f];
  return Mesh(V, F, uv);
}

SyntheticTruth generate_dataset(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SyntheticTruth out;
  out.config = cfg;
  const int B = cfg.num_betas;
  const int N = cfg.num_vertices();
  const Eigen::Index n3 = 3L * N;

  // Planted model.
  HackModel& m = out.model;
  m.template_mesh = synthetic_base_mesh(cfg);
  const Frame frame = make_frame(m.template_mesh.vertices());
  const VectorXd ones = VectorXd::Ones(N);

  MatrixXd raw(n3, B);
  for (int b = 0; b < B; ++b) raw.col(b) = flat(smooth_field(frame, rng, ones));
  VectorXd sigma(B);
  for (int b = 0; b < B; ++b) sigma[b] = 300.0 * std::pow(0.8, b);
  m.shape_space.mean = flat(m.template_mesh.vertices());
  m.shape_space.basis = orthonormal_columns(raw);
  round_f32(m.shape_space.basis);
  m.shape_space.variance = sigma.cwiseAbs2();
  round_f32(m.shape_space.variance);
  m.shape_space.variance_ratio = ratio_of(m.shape_space.variance);
  round_f32(m.shape_space.variance_ratio);

  Eigen::Matrix3Xd joints = planted_joints();
  round_f32(joints);
  m.joint_regressor.bias = Eigen::Map<const VectorXd>(joints.data(), joints.size());
  m.joint_regressor.matrix.resize(3 * kNumJoints, B);
  for (Eigen::Index i = 0; i < m.joint_regressor.matrix.size(); ++i)
    m.joint_regressor.matrix.data()[i] = 0.004 * gauss(rng);
  round_f32(m.joint_regressor.matrix);
  m.skeleton = Skeleton::cervical(joints);
  m.skinning.W = planted_weights(m.template_mesh.vertices(), joints);
  m.limits = planted_limits();

  m.num_expressions = cfg.num_expressions;
  auto face_window = [&](int j) {
    VectorXd w(N);
    const double pj = kPi / 2 + 0.5 * std::sin(1.7 * j);
    const double sj = 0.7 + 0.2 * (0.5 + 0.5 * std::cos(2.3 * j));
    for (int i = 0; i < N; ++i) {
      double dphi = std::remainder(frame.phi[i] - pj, 2 * kPi);
      w[i] = std::exp(-std::pow(dphi / 0.5, 2) - std::pow((frame.s[i] - sj) / 0.08, 2));
    }
    return w;
  };
  m.expression_space = planted_set_space(frame, rng, cfg.num_expressions, cfg.expression_components, face_window, 6.0);
  auto joint_window = [&](int feature) {
    const int k = 1 + feature / 9;
    VectorXd w(N);
    for (int i = 0; i < N; ++i)
      w[i] = std::exp(-std::pow((m.template_mesh.vertices()(2, i) - joints(2, k)) / 20.0, 2));
    return w;
  };
  m.pose_space = planted_set_space(frame, rng, kPoseFeatures, cfg.pose_components, joint_window, 3.0);
  const MatrixXd A_e = planted_mapping(rng, cfg.expression_components, B, sigma, 100.0);
  const MatrixXd A_p = planted_mapping(rng, cfg.pose_components, B, sigma, 300.0);
  m.expression_net = linear_network(A_e);
  m.pose_net = linear_network(A_p);
  m.larynx = planted_larynx(cfg, rng);

  // Appearance: smooth channels over a small texture.
  {
    const int R = cfg.appearance_size, C = cfg.appearance_size, ch = 9;
    const Eigen::Index D = static_cast<Eigen::Index>(R) * C * ch;
    auto texture_field = [&](double amp) {
      VectorXd v(D);
      for (int k = 0; k < ch; ++k) {
        const double a = gauss(rng), b = gauss(rng), p = uniform(rng, 0, 2 * kPi);
        for (int r = 0; r < R; ++r)
          for (int c = 0; c < C; ++c)
            v[(static_cast<Eigen::Index>(r) * C + c) * ch + k] =
                amp * (a * std::cos(kPi * r / R + p) + b * std::sin(2 * kPi * c / C + p));
      }
      return v;
    };
    PcaSpace& sp = m.appearance.space;
    sp.mean = VectorXd::Constant(D, 0.5) + texture_field(0.05);
    MatrixXd rawa(D, cfg.appearance_components);
    for (int c = 0; c < cfg.appearance_components; ++c) rawa.col(c) = texture_field(1.0);
    sp.basis = orthonormal_columns(rawa);
    sp.variance.resize(cfg.appearance_components);
    for (int c = 0; c < cfg.appearance_components; ++c) sp.variance[c] = std::pow(2.0 * std::pow(0.7, c), 2);
    round_f32(sp.mean);
    round_f32(sp.basis);
    round_f32(sp.variance);
    sp.variance_ratio = ratio_of(sp.variance);
    round_f32(sp.variance_ratio);
    m.appearance.rows = R;
    m.appearance.cols = C;
    m.appearance.channels = ch;
  }

  // Identities.
  out.betas.resize(static_cast<std::size_t>(cfg.identities));
  VectorXd mean_beta = VectorXd::Zero(B);
  for (auto& b : out.betas) {
    b.resize(B);
    for (int i = 0; i < B; ++i) b[i] = sigma[i] * gauss(rng);
    mean_beta += b;
  }
  mean_beta /= cfg.identities;
  for (auto& b : out.betas) b -= mean_beta;
  fill_space_variance(m.expression_space, A_e, out.betas);
  fill_space_variance(m.pose_space, A_p, out.betas);
  m.validate();

  auto add_noise = [&](Vertices V) {
    if (cfg.noise_sigma > 0)
      for (Eigen::Index i = 0; i < V.size(); ++i) V.data()[i] += cfg.noise_sigma * gauss(rng);
    return V;
  };
  const UvAtlas atlas(m.template_mesh.uv(), m.larynx.resolution);
  for (int id = 0; id < cfg.identities; ++id) {
    const VectorXd& beta = out.betas[static_cast<std::size_t>(id)];
    VectorXd base = flat(m.template_mesh.vertices()) + synthesize_shape(m.shape_space, beta);
    const Vertices neutral = as_vertices(base);
    out.neutrals.emplace_back(add_noise(neutral), m.template_mesh.shared_topology());
    out.larynx_displacements.push_back(larynx_offset(m.larynx, atlas, LarynxParams{1.0, 0.0}, beta));
    const BlendshapeSet ex = personalize_expressions(m.expression_net, m.expression_space, beta, cfg.num_expressions);
    std::vector<Mesh> scans;
    for (int j = 0; j < cfg.num_expressions; ++j) {
      const VectorXd v = base + ex.deltas.col(j);
      scans.emplace_back(add_noise(as_vertices(v)), m.template_mesh.shared_topology());
    }
    out.expression_scans.push_back(std::move(scans));
    if (id < cfg.annotated) {
      out.annotated.push_back(id);
      out.joint_annotations.push_back(m.joint_regressor.regress(beta));
    }
    VectorXd alpha(cfg.appearance_components);
    for (int c = 0; c < cfg.appearance_components; ++c) alpha[c] = std::sqrt(m.appearance.space.variance[c]) * gauss(rng);
    out.textures.push_back(appearance(m, alpha));
  }

  // Dynamic subjects: the identities with the most prominent larynx.
  std::vector<int> order(static_cast<std::size_t>(cfg.identities));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return out.betas[a][0] > out.betas[b][0]; });
  out.dynamic_identities.assign(order.begin(), order.begin() + cfg.dynamic_subjects);

  out.kernel = LarynxKernel::bump();
  out.normal_rest_row = (cfg.normal_rows - LarynxKernel::kSize) / 4;
  const int kernel_col = (cfg.normal_cols - LarynxKernel::kSize) / 2;
  for (int s = 0; s < cfg.dynamic_subjects; ++s) {
    const int id = out.dynamic_identities[static_cast<std::size_t>(s)];
    SequenceClip clip;
    clip.subject = "subject_" + std::to_string(s);
    clip.identity = id;
    clip.fps = cfg.fps;
    const int T = cfg.clip_frames;
    const MatrixXd theta = pose_trajectory(m.limits, T, cfg.fps, rng);
    MatrixXd psi(cfg.num_expressions, T);
    for (int j = 0; j < cfg.num_expressions; ++j) {
      const double f = uniform(rng, 0.2, 0.6), p = uniform(rng, 0, 2 * kPi);
      for (int t = 0; t < T; ++t) psi(j, t) = 0.05 + 0.3 * (1.0 + std::sin(2 * kPi * f * t / cfg.fps + p));
    }
    const double eta_phase = uniform(rng, 0, 2 * kPi);
    const int slack = T - cfg.pulse_frames - 2;
    const int start = 1 + static_cast<int>(std::uniform_int_distribution<int>(slack / 4, 3 * slack / 4)(rng));
    const SubjectRig rig = make_rig(m, out.betas[static_cast<std::size_t>(id)]);
    for (int t = 0; t < T; ++t) {
      FullParams p = FullParams::zeros(m);
      p.beta = out.betas[static_cast<std::size_t>(id)];
      p.psi = psi.col(t);
      p.pose = PoseParams::from_flat(theta.col(t));
      p.larynx.eta = 1.0 + 0.15 * std::sin(2 * kPi * 0.1 * t / cfg.fps + eta_phase);
      const int u = t - start;
      p.larynx.tau = (u >= 0 && u <= cfg.pulse_frames)
                         ? cfg.pulse_amplitude * 0.5 * (1.0 - std::cos(2 * kPi * u / cfg.pulse_frames))
                         : 0.0;
      clip.targets.emplace_back(add_noise(rig_posed(rig, p)), m.template_mesh.shared_topology());
      clip.params.push_back(std::move(p));
    }
    if (cfg.normal_maps) {
      std::vector<NormalMapFrame> frames;
      for (int t = 0; t < T; ++t) {
        NormalMapFrame f = noise_frame(cfg.normal_rows, cfg.normal_cols, rng);
        f.frame = t;
        f.subject = clip.subject;
        const int row =
            out.normal_rest_row + static_cast<int>(std::lround(clip.params[t].larynx.tau * cfg.normal_rows_per_tau));
        for (int r = 0; r < LarynxKernel::kSize; ++r)
          for (int c = 0; c < LarynxKernel::kSize; ++c)
            for (int ch = 0; ch < 3; ++ch) f.at(row + r, kernel_col + c, ch) = out.kernel.image.at(r, c, ch);
        frames.push_back(std::move(f));
      }
      out.normal_maps.push_back(std::move(frames));
    }
    out.clips.push_back(std::move(clip));
  }

  // Landmarks spread over the face.
  for (int l = 0; l < cfg.landmarks; ++l) {
    const int ring = std::min(cfg.rings - 1, static_cast<int>(cfg.rings * (0.62 + 0.3 * (l % 5) / 4.0)));
    const int seg = (cfg.segments / 4 + (l / 5) * 2 - 3 + cfg.segments) % cfg.segments;
    out.landmark_vertices.push_back(ring * cfg.segments + seg);
  }
  std::sort(out.landmark_vertices.begin(), out.landmark_vertices.end());
  out.landmark_vertices.erase(std::unique(out.landmark_vertices.begin(), out.landmark_vertices.end()),
                              out.landmark_vertices.end());

  // Long-necked rig: the cervical span stretched twofold.
  {
    const double z0 = joints(2, 0), z1 = joints(2, kNumJoints - 1);
    auto stretch = [&](double z) { return z < z0 ? z : (z <= z1 ? z0 + 2.0 * (z - z0) : z + (z1 - z0)); };
    Vertices V = m.template_mesh.vertices();
    for (Eigen::Index i = 0; i < V.cols(); ++i) V(2, i) = stretch(V(2, i));
    out.long_neck_rest = Mesh(V, m.template_mesh.shared_topology());
    Eigen::Matrix3Xd J = joints;
    for (int k = 0; k < kNumJoints; ++k) J(2, k) = stretch(J(2, k));
    out.long_neck_skeleton = Skeleton::cervical(J);
  }
  return out;
}

StaticInputs SyntheticTruth::static_inputs() const {
  StaticInputs in;
  in.neutrals = neutrals;
  in.larynx_displacements = larynx_displacements;
  in.annotated = annotated;
  in.joint_annotations = joint_annotations;
  in.expression_scans = expression_scans;
  in.textures = textures;
  in.skinning = model.skinning;
  in.limits = model.limits;
  return in;
}

std::vector<SequenceClip> perturb(const std::vector<SequenceClip>& truth, const HackModel& model,
                                  const PerturbSpec& spec) {
  Rng rng(spec.seed);
  std::vector<SequenceClip> out = truth;
  const double tau_max = model.has_larynx() ? model.larynx.tau_max : 0.1;
  auto draw = [&](double value, double sigma, double lo, double hi) {
    if (sigma <= 0) return value;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const double v = value + sigma * gauss(rng);
      if (v >= lo && v <= hi) return v;
    }
    return std::clamp(value, lo, hi);
  };
  for (auto& clip : out)
    for (auto& p : clip.params) {
      if (spec.beta > 0)
        for (Eigen::Index i = 0; i < p.beta.size(); ++i) p.beta[i] += spec.beta * gauss(rng);
      for (Eigen::Index i = 0; i < p.psi.size(); ++i) p.psi[i] = draw(p.psi[i], spec.psi, kPsiMin, kPsiMax);
      p.larynx.eta = draw(p.larynx.eta, spec.eta, 0.0, kEtaMax);
      p.larynx.tau = draw(p.larynx.tau, spec.tau, -tau_max, tau_max);
      if (spec.theta > 0) {
        for (int k = 0; k < p.pose.theta.cols(); ++k) {
          const Eigen::Vector3d orig = p.pose.theta.col(k);
          for (int attempt = 0; attempt < 1000; ++attempt) {
            Eigen::Vector3d cand = orig;
            for (int a = 0; a < 3; ++a) cand[a] += spec.theta * gauss(rng);
            PoseParams single = PoseParams::zero(1);
            single.theta.col(0) = cand;
            RotationLimits lk;
            lk.lo = model.limits.lo.row(k);
            lk.hi = model.limits.hi.row(k);
            if (rotation_limit_energy(single, lk) == 0.0) {
              p.pose.theta.col(k) = cand;
              break;
            }
          }
        }
      }
    }
  return out;
}

}  // namespace hack
