#include "doctest.h"
#include "fixtures.hpp"
#include "hack/mesh.hpp"

using namespace hack;

namespace {

Mesh unit_square() {
  Vertices v(3, 4);
  v << 0, 1, 1, 0,
       0, 0, 1, 1,
       0, 0, 0, 0;
  Faces f(3, 2);
  f << 0, 0,
       1, 2,
       2, 3;
  UvCoords uv = 0.5 * v.topRows<2>();
  return Mesh(v, f, uv);
}

}  // namespace

TEST_CASE("obj text round trip keeps every double bit") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 100.0);
  Mesh m = unit_square();
  Vertices v = m.vertices();
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = n(rng);
  m = m.with_vertices(v);
  const Mesh back = parse_obj(to_obj_string(m));
  CHECK(back.vertices() == m.vertices());
  CHECK(back.faces() == m.faces());
  CHECK(back.uv() == m.uv());
  CHECK(back.topology_id() == m.topology_id());
}

TEST_CASE("obj file round trip") {
  fixtures::TempDir dir("obj");
  const Mesh m = fixtures::small_truth().neutrals[0];
  save_obj(m, dir.path() / "m.obj");
  const Mesh back = load_obj(dir.path() / "m.obj");
  CHECK(back.vertices() == m.vertices());
  CHECK(back.topology_id() == m.topology_id());
}

TEST_CASE("malformed obj input is rejected") {
  CHECK_THROWS_AS(parse_obj("v 0 0 0\nv 1 0 0\nf 1 2 3\n"), Error);
  CHECK_THROWS_AS(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3 1\n"), Error);
  CHECK_THROWS_AS(load_obj("/nonexistent/dir/mesh.obj"), IoError);
}

TEST_CASE("flat square normals point along +z") {
  const Vertices n = vertex_normals(unit_square());
  for (int i = 0; i < 4; ++i) {
    CHECK(n(0, i) == doctest::Approx(0.0));
    CHECK(n(1, i) == doctest::Approx(0.0));
    CHECK(n(2, i) == doctest::Approx(1.0));
  }
}

TEST_CASE("synthetic surface normals are unit and outward") {
  const Mesh& m = fixtures::small_truth().model.template_mesh;
  const Vertices n = vertex_normals(m);
  const Eigen::Vector3d c = m.vertices().rowwise().mean();
  int outward = 0;
  for (int i = 0; i < m.num_vertices(); ++i) {
    CHECK(n.col(i).norm() == doctest::Approx(1.0).epsilon(1e-12));
    if (n.col(i).dot(m.vertices().col(i) - c) > 0) ++outward;
  }
  CHECK(outward > m.num_vertices() * 9 / 10);
}

TEST_CASE("topology identity") {
  const Mesh a = unit_square();
  const Mesh b = a.with_vertices(a.vertices() * 2.0);
  CHECK(a.topology_id() == b.topology_id());
  CHECK_NOTHROW(require_same_topology(a, b, "test"));
  Faces f = a.faces();
  f.col(1) << 0, 3, 2;
  const Mesh c(a.vertices(), f, a.uv());
  CHECK(c.topology_id() != a.topology_id());
  CHECK_THROWS_AS(require_same_topology(a, c, "test"), DimensionError);
  CHECK_THROWS_AS(a.with_vertices(Vertices::Zero(3, 5)), DimensionError);
}
