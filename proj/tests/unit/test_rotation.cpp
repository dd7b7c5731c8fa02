#include "doctest.h"
#include "hack/rotation.hpp"

#include <random>

using namespace hack;

namespace {

Eigen::Vector3d random_vector(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

}  // namespace

TEST_CASE("rodrigues is exactly the identity at zero") {
  CHECK(rodrigues<double>(Eigen::Vector3d::Zero()) == Eigen::Matrix3d::Identity());
}

TEST_CASE("rodrigues matches the Eigen angle-axis rotation") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d r = random_vector(rng, 2.0);
    const Eigen::Matrix3d ref = Eigen::AngleAxisd(r.norm(), r.normalized()).toRotationMatrix();
    CHECK((rodrigues<double>(r) - ref).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("rodrigues derivatives match central differences") {
  std::mt19937_64 rng(6);
  const double h = 1e-6;
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector3d r = i == 0 ? Eigen::Vector3d::Zero() : random_vector(rng, 1.5);
    const auto d = rodrigues_derivatives<double>(r);
    for (int a = 0; a < 3; ++a) {
      Eigen::Vector3d p = r, m = r;
      p[a] += h;
      m[a] -= h;
      const Eigen::Matrix3d fd = (rodrigues<double>(p) - rodrigues<double>(m)) / (2 * h);
      CHECK((d[a] - fd).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("rotation log inverts rodrigues on the principal branch") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    Eigen::Vector3d r = random_vector(rng, 1.0);
    if (r.norm() > 3.0) continue;
    CHECK((rotation_log<double>(rodrigues<double>(r)) - r).norm() < 1e-10);
  }
  const Eigen::Vector3d near_pi = Eigen::Vector3d(0.3, -0.4, 0.5).normalized() * (M_PI - 1e-3);
  CHECK((rotation_log<double>(rodrigues<double>(near_pi)) - near_pi).norm() < 1e-8);
}

TEST_CASE("euler angles compose intrinsic x, y, z") {
  const Eigen::Vector3d e(0.2, -0.3, 0.4);
  const Eigen::Matrix3d ref = (Eigen::AngleAxisd(e.x(), Eigen::Vector3d::UnitX()) *
                               Eigen::AngleAxisd(e.y(), Eigen::Vector3d::UnitY()) *
                               Eigen::AngleAxisd(e.z(), Eigen::Vector3d::UnitZ()))
                                  .toRotationMatrix();
  CHECK((matrix_from_euler<double>(e) - ref).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("euler and axis-angle conversions round trip") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d e = random_vector(rng, 1.2);
    const Eigen::Vector3d r = euler_to_axis_angle<double>(e);
    const auto back = axis_angle_to_euler<double>(r);
    CHECK_FALSE(back.gimbal_lock);
    CHECK((back.angles - e).norm() < 1e-12);
  }
}

TEST_CASE("gimbal lock is flagged") {
  const Eigen::Vector3d e(0.3, M_PI / 2, 0.1);
  CHECK(euler_from_matrix<double>(matrix_from_euler<double>(e)).gimbal_lock);
}

TEST_CASE("euler gradient with respect to the matrix matches differences") {
  std::mt19937_64 rng(9);
  const double h = 1e-7;
  for (int i = 0; i < 30; ++i) {
    const Eigen::Matrix3d R = matrix_from_euler<double>(random_vector(rng, 1.0));
    const auto g = euler_gradient_wrt_matrix<double>(R);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        Eigen::Matrix3d P = R, M = R;
        P(r, c) += h;
        M(r, c) -= h;
        const Eigen::Vector3d fd =
            (euler_from_matrix<double>(P).angles - euler_from_matrix<double>(M).angles) / (2 * h);
        for (int a = 0; a < 3; ++a) CHECK(std::abs(g[a](r, c) - fd[a]) < 1e-6);
      }
  }
}
