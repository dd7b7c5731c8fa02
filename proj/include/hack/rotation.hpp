#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <numbers>

namespace hack {

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;

template <typename Scalar>
Mat3<Scalar> skew(const Vec3<Scalar>& v) {
  Mat3<Scalar> m;
  m << Scalar(0), -v.z(), v.y(), v.z(), Scalar(0), -v.x(), -v.y(), v.x(), Scalar(0);
  return m;
}

/// Rotation matrix of an axis-angle vector. The zero vector maps to the
/// identity exactly.
template <typename Scalar>
Mat3<Scalar> rodrigues(const Vec3<Scalar>& r) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Scalar angle2 = r.squaredNorm();
  if (angle2 == Scalar(0)) return Mat3<Scalar>::Identity();
  const Mat3<Scalar> k = skew(r);
  Scalar a, b;  // sin(t)/t, (1 - cos t)/t^2
  if (angle2 < Scalar(1e-12)) {
    a = Scalar(1) - angle2 / Scalar(6);
    b = Scalar(0.5) - angle2 / Scalar(24);
  } else {
    const Scalar angle = sqrt(angle2);
    a = sin(angle) / angle;
    b = (Scalar(1) - cos(angle)) / angle2;
  }
  return Mat3<Scalar>::Identity() + a * k + b * k * k;
}

/// dR/dr_a for a = 0, 1, 2 (Gallego & Yezzi closed form; [e_a]x at zero).
template <typename Scalar>
std::array<Mat3<Scalar>, 3> rodrigues_derivatives(const Vec3<Scalar>& r) {
  std::array<Mat3<Scalar>, 3> d;
  const Scalar angle2 = r.squaredNorm();
  if (angle2 < Scalar(1e-16)) {
    for (int a = 0; a < 3; ++a) d[a] = skew<Scalar>(Vec3<Scalar>::Unit(a));
    return d;
  }
  const Mat3<Scalar> R = rodrigues(r);
  const Mat3<Scalar> k = skew(r);
  const Mat3<Scalar> IminusR = Mat3<Scalar>::Identity() - R;
  for (int a = 0; a < 3; ++a) {
    const Vec3<Scalar> c = r.cross(IminusR.col(a));
    d[a] = ((r[a] * k + skew(c)) / angle2) * R;
  }
  return d;
}

/// Principal-branch logarithm of a rotation matrix (angle in [0, pi]).
template <typename Scalar>
Vec3<Scalar> rotation_log(const Mat3<Scalar>& R) {
  using std::atan2;
  using std::sqrt;
  const Vec3<Scalar> w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  const Scalar s = Scalar(0.5) * w.norm();             // sin(angle)
  const Scalar c = Scalar(0.5) * (R.trace() - Scalar(1));  // cos(angle)
  const Scalar angle = atan2(s, c);
  if (s < Scalar(1e-7) && c < Scalar(0)) {
    // Near pi: axis from the symmetric part, sign from the skew part.
    const Mat3<Scalar> B = (R + R.transpose()) * Scalar(0.5) - c * Mat3<Scalar>::Identity();
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (B(i, i) > B(best, best)) best = i;
    Vec3<Scalar> axis = B.col(best) / sqrt(B(best, best));
    axis.normalize();
    if (axis.dot(w) < Scalar(0)) axis = -axis;
    return axis * angle;
  }
  if (s < Scalar(1e-12)) return Scalar(0.5) * w;  // angle ~ 0: w ~ 2 sin(t) k
  return w * (angle / (Scalar(2) * s));
}

/// Intrinsic X-Y-Z Euler angles: R = Rx(a) * Ry(b) * Rz(c).
template <typename Scalar>
struct EulerAngles {
  Vec3<Scalar> angles = Vec3<Scalar>::Zero();
  bool gimbal_lock = false;
};

inline constexpr double kGimbalTolerance = 1e-6;

template <typename Scalar>
EulerAngles<Scalar> euler_from_matrix(const Mat3<Scalar>& R) {
  using std::abs;
  using std::asin;
  using std::atan2;
  EulerAngles<Scalar> out;
  Scalar s = R(0, 2);
  if (s > Scalar(1)) s = Scalar(1);
  if (s < Scalar(-1)) s = Scalar(-1);
  const Scalar b = asin(s);
  out.gimbal_lock = abs(abs(b) - Scalar(std::numbers::pi / 2)) < Scalar(kGimbalTolerance);
  if (out.gimbal_lock) {
    // Only a +/- c is observable; put it all in a.
    out.angles = Vec3<Scalar>(atan2(R(2, 1), R(1, 1)), b, Scalar(0));
  } else {
    out.angles = Vec3<Scalar>(atan2(-R(1, 2), R(2, 2)), b, atan2(-R(0, 1), R(0, 0)));
  }
  return out;
}

template <typename Scalar>
Mat3<Scalar> matrix_from_euler(const Vec3<Scalar>& e) {
  using std::cos;
  using std::sin;
  Mat3<Scalar> rx, ry, rz;
  const Scalar ca = cos(e[0]), sa = sin(e[0]), cb = cos(e[1]), sb = sin(e[1]), cc = cos(e[2]), sc = sin(e[2]);
  rx << Scalar(1), Scalar(0), Scalar(0), Scalar(0), ca, -sa, Scalar(0), sa, ca;
  ry << cb, Scalar(0), sb, Scalar(0), Scalar(1), Scalar(0), -sb, Scalar(0), cb;
  rz << cc, -sc, Scalar(0), sc, cc, Scalar(0), Scalar(0), Scalar(0), Scalar(1);
  return rx * ry * rz;
}

template <typename Scalar>
EulerAngles<Scalar> axis_angle_to_euler(const Vec3<Scalar>& r) {
  return euler_from_matrix(rodrigues(r));
}

template <typename Scalar>
Vec3<Scalar> euler_to_axis_angle(const Vec3<Scalar>& e) {
  return rotation_log(matrix_from_euler(e));
}

/// Partial derivatives of the three Euler angles with respect to the nine
/// matrix entries: grad[i](r, c) = d angle_i / d R(r, c). Undefined at
/// gimbal lock.
template <typename Scalar>
std::array<Mat3<Scalar>, 3> euler_gradient_wrt_matrix(const Mat3<Scalar>& R) {
  using std::sqrt;
  std::array<Mat3<Scalar>, 3> g;
  for (auto& m : g) m.setZero();
  const Scalar da = R(1, 2) * R(1, 2) + R(2, 2) * R(2, 2);
  g[0](1, 2) = -R(2, 2) / da;
  g[0](2, 2) = R(1, 2) / da;
  g[1](0, 2) = Scalar(1) / sqrt(Scalar(1) - R(0, 2) * R(0, 2));
  const Scalar dc = R(0, 1) * R(0, 1) + R(0, 0) * R(0, 0);
  g[2](0, 1) = -R(0, 0) / dc;
  g[2](0, 0) = R(0, 1) / dc;
  return g;
}

}  // namespace hack
