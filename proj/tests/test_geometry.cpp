#include <doctest.h>

#include <sstream>

#include "meshflow/error.hpp"
#include "meshflow/fixtures.hpp"
#include "meshflow/mesh_io.hpp"
#include "meshflow/nearest.hpp"
#include "support.hpp"

using namespace meshflow;
using namespace testing;

namespace {

Mesh box(double x0, double y0, double z0, double x1, double y1, double z1) {
  Mesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.push_back({(i & 1) ? x1 : x0, (i & 2) ? y1 : y0, (i & 4) ? z1 : z0});
  }
  m.faces = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
             {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return m;
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("OFF tetrahedron parses to four vertices and four faces") {
    std::istringstream in(
        "OFF\n4 4 6\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n");
    const Mesh m = read_off(in);
    CHECK(m.vertices.size() == 4);
    CHECK(m.faces.size() == 4);
  }

  TEST_CASE("OBJ and OFF round trips keep faces and vertices within 1e-8") {
    std::mt19937_64 rng(3);
    Mesh m = fixtures::desk_object("hammer", 4);
    for (auto& v : m.vertices) {
      for (auto& c : v) c *= 1.0 + 1e-3 * std::uniform_real_distribution<double>(-1, 1)(rng);
    }
    for (bool obj : {true, false}) {
      std::stringstream ss;
      obj ? write_obj(ss, m) : write_off(ss, m);
      const Mesh back = obj ? read_obj(ss) : read_off(ss);
      REQUIRE(back.faces == m.faces);
      REQUIRE(back.vertices.size() == m.vertices.size());
      double worst = 0.0;
      for (std::size_t i = 0; i < m.vertices.size(); ++i) {
        for (int k = 0; k < 3; ++k) {
          worst = std::max(worst, std::abs(back.vertices[i][k] - m.vertices[i][k]));
        }
      }
      CHECK(worst < 1e-8);
      // Writing what was read reproduces the text exactly.
      std::stringstream again;
      obj ? write_obj(again, back) : write_off(again, back);
      CHECK(again.str() == ss.str());
    }
  }

  TEST_CASE("file round trip through read_mesh / write_mesh") {
    const auto dir = scratch_dir("mesh_io");
    const Mesh m = fixtures::tetrahedron();
    write_mesh(dir / "t.obj", m);
    write_mesh(dir / "t.OFF", m);
    CHECK(read_mesh(dir / "t.obj").faces == m.faces);
    CHECK(read_mesh(dir / "t.OFF").faces == m.faces);
    CHECK_THROWS_AS(read_mesh(dir / "missing.obj"), IoError);
    CHECK_THROWS_AS(read_mesh(dir / "t.ply"), Error);
  }

  TEST_CASE("OBJ quad face is rejected as unsupported topology") {
    std::istringstream in("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
    CHECK_THROWS_AS(read_obj(in), UnsupportedTopologyError);
  }

  TEST_CASE("OBJ accepts slash forms and negative indices") {
    std::istringstream in("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2//1 -1\n");
    const Mesh m = read_obj(in);
    REQUIRE(m.faces.size() == 1);
    CHECK(m.faces[0] == Face{0, 1, 2});
  }

  TEST_CASE("malformed input reports the line number") {
    std::istringstream in("v 0 0 0\nv 1 0 0\nv 0 1 zz\nf 1 2 3\n");
    try {
      read_obj(in);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
    std::istringstream bad_index("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n");
    CHECK_THROWS_AS(read_obj(bad_index), ParseError);
    std::istringstream degenerate("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 2\n");
    CHECK_THROWS_AS(read_obj(degenerate), Error);
    std::istringstream off("OFF\n3 1 0\n0 0 0\n1 0 0\n");
    CHECK_THROWS_AS(read_off(off), ParseError);
  }

  TEST_CASE("XYZ round trip") {
    std::mt19937_64 rng(5);
    const PointCloud c = random_cloud(50, rng);
    std::stringstream ss;
    write_xyz(ss, c);
    const PointCloud back = read_xyz(ss);
    REQUIRE(back.size() == c.size());
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(squared_distance(back.points[i], c.points[i]) < 1e-16);
  }

  TEST_CASE("normalize_unit_cube on a 2-cube gives the centered unit cube") {
    const auto n = normalize_unit_cube(box(0, 0, 0, 2, 2, 2));
    for (const auto& v : n.mesh.vertices) {
      for (double c : v) CHECK(std::abs(c) == doctest::Approx(0.5).epsilon(1e-15));
    }
  }

  TEST_CASE("normalize_unit_cube keeps a normalized mesh and reports identity") {
    const Mesh m = box(-0.5, -0.5, -0.5, 0.5, 0.5, 0.5);
    const auto n = normalize_unit_cube(m);
    CHECK(n.mesh == m);
    CHECK(n.transform.is_identity());
  }

  TEST_CASE("elongated 4x1x1 box: longest axis spans 1, others 0.25") {
    const Mesh m = box(1, 2, 3, 5, 3, 4);
    const auto n = normalize_unit_cube(m);
    Vec3 lo{1e9, 1e9, 1e9}, hi{-1e9, -1e9, -1e9};
    for (const auto& v : n.mesh.vertices) {
      for (int k = 0; k < 3; ++k) {
        lo[k] = std::min(lo[k], v[k]);
        hi[k] = std::max(hi[k], v[k]);
      }
    }
    CHECK(hi[0] - lo[0] == 1.0);
    CHECK(hi[1] - lo[1] == 0.25);
    CHECK(hi[2] - lo[2] == 0.25);
    for (std::size_t i = 0; i < m.vertices.size(); ++i) {
      const Vec3 back = n.transform.invert(n.mesh.vertices[i]);
      for (int k = 0; k < 3; ++k) CHECK(std::abs(back[k] - m.vertices[i][k]) < 1e-9);
    }
  }

  TEST_CASE("zero-extent mesh is degenerate") {
    Mesh m;
    m.vertices = {{1, 1, 1}, {1, 1, 1}, {1, 1, 1}};
    m.faces = {{0, 1, 2}};
    CHECK_THROWS_AS(normalize_unit_cube(m), DegenerateGeometryError);
  }

  TEST_CASE("sampled points lie on the triangle") {
    Mesh tri;
    tri.vertices = {{0.1, -0.3, 0.2}, {0.9, 0.4, -0.1}, {-0.2, 0.5, 0.7}};
    tri.faces = {{0, 1, 2}};
    const PointCloud c = sample_surface(tri, 1000, 11);
    REQUIRE(c.size() == 1000);
    const Vec3& a = tri.vertices[0];
    const Vec3 e1{tri.vertices[1][0] - a[0], tri.vertices[1][1] - a[1], tri.vertices[1][2] - a[2]};
    const Vec3 e2{tri.vertices[2][0] - a[0], tri.vertices[2][1] - a[1], tri.vertices[2][2] - a[2]};
    Vec3 nrm{e1[1] * e2[2] - e1[2] * e2[1], e1[2] * e2[0] - e1[0] * e2[2],
             e1[0] * e2[1] - e1[1] * e2[0]};
    const double len = std::sqrt(nrm[0] * nrm[0] + nrm[1] * nrm[1] + nrm[2] * nrm[2]);
    for (auto& v : nrm) v /= len;
    const double d0 = nrm[0] * a[0] + nrm[1] * a[1] + nrm[2] * a[2];
    double worst = 0.0;
    for (const auto& p : c.points) {
      worst = std::max(worst, std::abs(nrm[0] * p[0] + nrm[1] * p[1] + nrm[2] * p[2] - d0));
    }
    CHECK(worst < 1e-9);
  }

  TEST_CASE("triangle selection follows area (3:1 within 2%)") {
    Mesh m;
    m.vertices = {{0, 0, 0}, {3, 0, 0}, {0, 1, 0}, {10, 0, 0}, {11, 0, 0}, {10, 1, 0}};
    m.faces = {{0, 1, 2}, {3, 4, 5}};
    std::vector<std::size_t> face_of;
    const std::size_t n = 100000;
    sample_surface(m, n, 2024, &face_of);
    const double big = static_cast<double>(std::count(face_of.begin(), face_of.end(), 0)) / n;
    CHECK(std::abs(big - 0.75) < 0.02);
    CHECK(std::abs((1.0 - big) - 0.25) < 0.02);
  }

  TEST_CASE("sampling is deterministic per seed") {
    const Mesh m = fixtures::desk_object("orange", 5);
    CHECK(sample_surface(m, 500, 9) == sample_surface(m, 500, 9));
    CHECK_FALSE(sample_surface(m, 500, 9) == sample_surface(m, 500, 10));
  }

  TEST_CASE("sampling a zero-area mesh fails") {
    Mesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
    m.faces = {{0, 1, 2}};
    CHECK_THROWS_AS(sample_surface(m, 10, 1), DegenerateGeometryError);
  }

  TEST_CASE("chamfer hand values and properties") {
    std::mt19937_64 rng(17);
    const PointCloud x = random_cloud(40, rng);
    CHECK(chamfer_bruteforce(x, x) == 0.0);
    CHECK(chamfer_bruteforce({{{0, 0, 0}}}, {{{1, 0, 0}}}) == 2.0);
    for (int trial = 0; trial < 10; ++trial) {
      const PointCloud a = random_cloud(30 + trial, rng);
      PointCloud b = random_cloud(45 - trial, rng);
      const double v = chamfer_bruteforce(a, b);
      CHECK(v >= 0.0);
      CHECK(v == doctest::Approx(chamfer_oracle(a.points, b.points)).epsilon(1e-12));
      CHECK(std::abs(v - chamfer_bruteforce(b, a)) < 1e-15);
      std::shuffle(b.points.begin(), b.points.end(), rng);
      CHECK(std::abs(chamfer_bruteforce(a, b) - v) < 1e-15);
    }
  }

  TEST_CASE("chamfer is zero when clouds cover each other") {
    const PointCloud a{{{0, 0, 0}, {1, 0, 0}}};
    const PointCloud b{{{1, 0, 0}, {0, 0, 0}, {0, 0, 0}}};
    CHECK(chamfer_bruteforce(a, b) == 0.0);
  }

  TEST_CASE("kd-tree nearest matches a linear scan, including ties") {
    std::mt19937_64 rng(23);
    PointCloud pts = random_cloud(300, rng);
    // Duplicates and lattice points create exact ties.
    for (int i = 0; i < 20; ++i) pts.points.push_back(pts.points[static_cast<std::size_t>(i)]);
    for (int i = 0; i < 27; ++i) {
      pts.points.push_back({0.25 * (i % 3 - 1), 0.25 * (i / 3 % 3 - 1), 0.25 * (i / 9 - 1)});
    }
    const KdTree tree(pts.points);
    std::vector<Vec3> queries = random_cloud(200, rng).points;
    queries.push_back({0.125, 0.0, 0.0});  // equidistant from two lattice points
    queries.push_back(pts.points[5]);
    for (const auto& q : queries) {
      std::size_t best = 0;
      double bd = INFINITY;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const double d = squared_distance(q, pts.points[i]);
        if (d < bd) {
          bd = d;
          best = i;
        }
      }
      const auto hit = tree.nearest(q);
      CHECK(hit.index == best);
      CHECK(hit.sq_dist == bd);
    }
  }

  TEST_CASE("topology of a tetrahedron") {
    const TopologySummary t = topology_summary(fixtures::tetrahedron());
    CHECK(t.vertex_count == 4);
    CHECK(t.edge_count == 6);
    CHECK(t.face_count == 4);
    CHECK(t.euler_characteristic == 2);
    CHECK(t.watertight);
    Mesh open = fixtures::tetrahedron();
    open.faces.pop_back();
    const TopologySummary o = topology_summary(open);
    CHECK_FALSE(o.watertight);
    CHECK(o.euler_characteristic == 4 - 6 + 3);
  }

  TEST_CASE("torus grid has Euler characteristic 0") {
    const std::size_t n = 12, m = 7;
    const Mesh t = fixtures::torus(n, m);
    const TopologySummary s = topology_summary(t);
    // Counted by hand on an n x m quad grid split into triangles.
    CHECK(s.vertex_count == n * m);
    CHECK(s.edge_count == 3 * n * m);
    CHECK(s.face_count == 2 * n * m);
    CHECK(s.euler_characteristic == 0);
    CHECK(s.watertight);
  }

  TEST_CASE("desk objects are closed genus-0 surfaces with nested vertices") {
    for (const auto& name : fixtures::desk_object_names()) {
      const Mesh a = fixtures::desk_object(name, 4);
      const Mesh b = fixtures::desk_object(name, 8);
      CHECK(a.vertices.size() == 6 * 16 + 2);
      const TopologySummary s = topology_summary(b);
      CHECK(s.euler_characteristic == 2);
      CHECK(s.watertight);
      std::size_t found = 0;
      for (const auto& v : a.vertices) {
        found += std::find(b.vertices.begin(), b.vertices.end(), v) != b.vertices.end();
      }
      CHECK(found == a.vertices.size());
    }
    CHECK_THROWS_AS(fixtures::desk_object("teapot", 4), ConfigError);
  }

  TEST_CASE("validation rejects bad meshes and clouds") {
    Mesh m = fixtures::tetrahedron();
    m.faces[0][1] = 17;
    CHECK_THROWS_AS(validate_mesh(m), Error);
    CHECK_THROWS_AS(validate_cloud(PointCloud{}), Error);
    CHECK_THROWS_AS(validate_cloud(PointCloud{{{0, NAN, 0}}}), Error);
  }
}
