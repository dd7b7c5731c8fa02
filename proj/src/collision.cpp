#include "hack/collision.hpp"

#include <limits>

namespace hack {

namespace {

struct Contact {
  int face = -1;
  double sd = 0.0;
  Eigen::Vector3d normal;
};

Contact nearest_contact(const Topology& topo, const Vertices& skin, const Eigen::Vector3d& x) {
  Eigen::Index best = 0;
  (skin.colwise() - x).colwise().squaredNorm().minCoeff(&best);
  Contact c;
  double best_d = std::numeric_limits<double>::infinity();
  for (int f : topo.vertex_faces[static_cast<std::size_t>(best)]) {
    const Eigen::Vector3d centroid =
        (skin.col(topo.faces(0, f)) + skin.col(topo.faces(1, f)) + skin.col(topo.faces(2, f))) / 3.0;
    const double d = (centroid - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      c.face = f;
    }
  }
  if (c.face < 0) return c;
  const Eigen::Vector3d v0 = skin.col(topo.faces(0, c.face));
  const Eigen::Vector3d v1 = skin.col(topo.faces(1, c.face));
  const Eigen::Vector3d v2 = skin.col(topo.faces(2, c.face));
  c.normal = (v1 - v0).cross(v2 - v0).normalized();
  c.sd = c.normal.dot(x - v0);
  return c;
}

}  // namespace

Eigen::Matrix3Xd spine_samples(const Eigen::Matrix3Xd& q, const CollisionConfig& cfg) {
  const Eigen::Index K = q.cols();
  if (K == 0) return Eigen::Matrix3Xd(3, 0);
  const int S = cfg.samples_per_segment;
  Eigen::Matrix3Xd x(3, (K - 1) * S + 1);
  for (Eigen::Index k = 0; k + 1 < K; ++k)
    for (int j = 0; j < S; ++j) {
      const double s = static_cast<double>(j) / S;
      x.col(k * S + j) = (1.0 - s) * q.col(k) + s * q.col(k + 1);
    }
  x.col(x.cols() - 1) = q.col(K - 1);
  return x;
}

double collision_energy(const Topology& topo, const Vertices& skin, const Eigen::Matrix3Xd& posed_joints,
                        const CollisionConfig& cfg) {
  require_dims(skin.cols() == static_cast<Eigen::Index>(topo.vertex_faces.size()),
               "collision_energy: skin vertex count != topology");
  const Eigen::Matrix3Xd x = spine_samples(posed_joints, cfg);
  double e = 0.0;
  for (Eigen::Index s = 0; s < x.cols(); ++s) {
    const Contact c = nearest_contact(topo, skin, x.col(s));
    if (c.face < 0) continue;
    const double m = std::max(c.sd + cfg.radius, 0.0);
    e += m * m;
  }
  return e;
}

CollisionGradient collision_energy_gradient(const Topology& topo, const Vertices& skin,
                                            const Eigen::Matrix3Xd& posed_joints, const CollisionConfig& cfg) {
  require_dims(skin.cols() == static_cast<Eigen::Index>(topo.vertex_faces.size()),
               "collision_energy: skin vertex count != topology");
  CollisionGradient out;
  out.dskin = Vertices::Zero(3, skin.cols());
  out.djoints = Eigen::Matrix3Xd::Zero(3, posed_joints.cols());
  const Eigen::Matrix3Xd x = spine_samples(posed_joints, cfg);
  const int S = cfg.samples_per_segment;
  for (Eigen::Index s = 0; s < x.cols(); ++s) {
    const Contact c = nearest_contact(topo, skin, x.col(s));
    if (c.face < 0) continue;
    const double m = std::max(c.sd + cfg.radius, 0.0);
    if (m == 0.0) continue;
    out.energy += m * m;
    const double g = 2.0 * m;
    const Eigen::Vector3d& n = c.normal;

    // Sample point: interpolated between two joints.
    const Eigen::Index k = s / S;
    if (k + 1 < posed_joints.cols()) {
      const double t = static_cast<double>(s % S) / S;
      out.djoints.col(k) += (1.0 - t) * g * n;
      out.djoints.col(k + 1) += t * g * n;
    } else {
      out.djoints.col(posed_joints.cols() - 1) += g * n;
    }

    // Plane through the triangle: sd = n . (x - v0), n = c / |c|.
    const int i0 = topo.faces(0, c.face), i1 = topo.faces(1, c.face), i2 = topo.faces(2, c.face);
    const Eigen::Vector3d v0 = skin.col(i0);
    const Eigen::Vector3d e1 = skin.col(i1) - v0, e2 = skin.col(i2) - v0;
    const Eigen::Vector3d cr = e1.cross(e2);
    const Eigen::Vector3d a = x.col(s) - v0;
    const Eigen::Vector3d p = (a - n * n.dot(a)) / cr.norm();
    const Eigen::Vector3d g1 = e2.cross(p), g2 = p.cross(e1);
    out.dskin.col(i1) += g * g1;
    out.dskin.col(i2) += g * g2;
    out.dskin.col(i0) += g * (-g1 - g2 - n);
  }
  return out;
}

double collision_energy(const Mesh& skin, const Skeleton& skel, const PoseParams& pose, const CollisionConfig& cfg) {
  const auto world = forward_kinematics(skel, pose);
  return collision_energy(skin.topology(), skin.vertices(), posed_joints(skel, world), cfg);
}

}  // namespace hack
