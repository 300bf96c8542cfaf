#include "mshho/mesh.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <random>
#include <set>
#include <sstream>

using namespace mshho;

TEST_CASE("face topology: interfaces have two cells, boundary faces one") {
  const CoarseMesh mesh = structured_triangulation(3);
  for (const auto& f : mesh.faces) {
    REQUIRE(f.cell0 >= 0);
    if (f.boundary())
      REQUIRE(f.cell1 < 0);
    else
      REQUIRE(f.cell1 >= 0);
    REQUIRE_THAT(f.normal0.norm(), Catch::Matchers::WithinRel(1.0, 1e-14));
  }
  REQUIRE(mesh.interior_faces.size() + mesh.boundary_faces.size() == mesh.faces.size());
  // face diameters comparable to cell diameters
  for (const auto& c : mesh.cells)
    for (int fid : c.faces)
      REQUIRE(mesh.faces[static_cast<size_t>(fid)].length >= 0.2 * c.diameter);
}

TEST_CASE("cell measures sum to the domain measure") {
  for (int n : {1, 3, 8}) {
    const CoarseMesh tri = structured_triangulation(n);
    REQUIRE_THAT(tri.domain_area(), Catch::Matchers::WithinAbs(1.0, 1e-12));
    const CoarseMesh quad = structured_quadrangulation(n);
    REQUIRE_THAT(quad.domain_area(), Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("outward normals integrate to zero over each cell boundary") {
  for (const CoarseMesh& mesh : {structured_triangulation(2), structured_quadrangulation(3)}) {
    for (size_t c = 0; c < mesh.cells.size(); ++c) {
      Vec2 total = Vec2::Zero();
      double perimeter = 0.0;
      for (int fid : mesh.cells[c].faces) {
        const auto& f = mesh.faces[static_cast<size_t>(fid)];
        total += f.length * mesh.outward_normal(static_cast<int>(c), fid);
        perimeter += f.length;
      }
      REQUIRE(total.norm() / perimeter < 1e-12);
    }
  }
}

TEST_CASE("hierarchy sizes") {
  SECTION("two levels from H0 = 0.43 give sizes 0.43 and 0.215") {
    const MeshHierarchy h = build_hierarchy(2, 0.43);
    REQUIRE_THAT(h.nominal_size(0), Catch::Matchers::WithinRel(0.43, 1e-15));
    REQUIRE_THAT(h.nominal_size(1), Catch::Matchers::WithinRel(0.215, 1e-15));
    // geometric sizes halve exactly as well
    REQUIRE(h.levels[1].mesh_size == 0.5 * h.levels[0].mesh_size);
    REQUIRE(h.levels[0].mesh_size <= 0.43);
  }
  SECTION("one level at H0 = sqrt(2) is the two-triangle split of the square") {
    const MeshHierarchy h = build_hierarchy(1, std::sqrt(2.0));
    REQUIRE(h.levels[0].cells.size() == 2);
    REQUIRE_THAT(h.levels[0].mesh_size, Catch::Matchers::WithinRel(std::sqrt(2.0), 1e-14));
  }
  SECTION("cell count quadruples per level") {
    const MeshHierarchy h = build_hierarchy(3, 0.5);
    REQUIRE(h.levels[1].cells.size() == 4 * h.levels[0].cells.size());
    REQUIRE(h.levels[2].cells.size() == 4 * h.levels[1].cells.size());
  }
  SECTION("invalid inputs are rejected") {
    REQUIRE_THROWS_AS(build_hierarchy(0, 0.5), ConfigError);
    REQUIRE_THROWS_AS(build_hierarchy(2, -1.0), ConfigError);
    REQUIRE_THROWS_AS(build_hierarchy(12, 0.01, 1000), ConfigError);
  }
}

TEST_CASE("fine sub-mesh construction") {
  SECTION("no refinement needed: the cell itself") {
    const CoarseMesh mesh = structured_triangulation(10);
    const double d = mesh.cells[0].diameter;
    const TriMesh sm = build_fine_submesh(mesh, 0, d);
    REQUIRE(sm.tris.size() == 1);
    REQUIRE(sm.parent_cell == 0);
  }
  SECTION("target h = diameter/4 gives at least 16 sub-triangles") {
    const CoarseMesh mesh = structured_triangulation(2);
    const double d = mesh.cells[1].diameter;
    const TriMesh sm = build_fine_submesh(mesh, 1, d / 4.0);
    REQUIRE(sm.tris.size() >= 16);
    REQUIRE(sm.h <= d / 4.0 + 1e-14);
  }
  SECTION("square cell: boundary fine faces map onto exactly 4 parent faces") {
    const CoarseMesh mesh = structured_quadrangulation(1);
    const double d = mesh.cells[0].diameter;
    const TriMesh sm = build_fine_submesh(mesh, 0, d / 2.0);
    std::set<int> parents;
    for (int e : sm.boundary_edges) {
      REQUIRE(sm.edges[static_cast<size_t>(e)].parent_face >= 0);
      parents.insert(sm.edges[static_cast<size_t>(e)].parent_face);
    }
    REQUIRE(parents.size() == 4);
  }
  SECTION("element cap is enforced") {
    const CoarseMesh mesh = structured_triangulation(1);
    REQUIRE_THROWS_AS(build_fine_submesh(mesh, 0, 1e-4, 100), ConfigError);
  }
  SECTION("boundary fine faces are geometrically contained in their parent") {
    const CoarseMesh mesh = structured_triangulation(2);
    const TriMesh sm = build_fine_submesh(mesh, 3, mesh.cells[3].diameter / 8.0);
    for (int e : sm.boundary_edges) {
      const auto& edge = sm.edges[static_cast<size_t>(e)];
      const auto& pf = mesh.faces[static_cast<size_t>(edge.parent_face)];
      const Vec2 a = mesh.nodes[static_cast<size_t>(pf.v0)],
                 b = mesh.nodes[static_cast<size_t>(pf.v1)];
      for (const Vec2& p : {sm.nodes[static_cast<size_t>(edge.v0)],
                            sm.nodes[static_cast<size_t>(edge.v1)]}) {
        const double t = (p - a).dot(b - a) / (b - a).squaredNorm();
        REQUIRE(t >= -1e-12);
        REQUIRE(t <= 1.0 + 1e-12);
        REQUIRE((a + t * (b - a) - p).norm() < 1e-12);
      }
    }
    // boundary fine faces partition each parent face: lengths add up
    std::map<int, double> len;
    for (int e : sm.boundary_edges)
      len[sm.edges[static_cast<size_t>(e)].parent_face] += sm.edges[static_cast<size_t>(e)].length;
    for (const auto& [pf, l] : len)
      REQUIRE_THAT(l, Catch::Matchers::WithinRel(mesh.faces[static_cast<size_t>(pf)].length, 1e-12));
  }
}

TEST_CASE("red refinement halves diameters exactly") {
  const CoarseMesh mesh = structured_triangulation(2);
  const TriMesh sm = build_fine_submesh(mesh, 0, mesh.cells[0].diameter);
  const TriMesh r = red_refine(sm);
  REQUIRE(r.tris.size() == 4 * sm.tris.size());
  REQUIRE(r.h == 0.5 * sm.h);
}

TEST_CASE("admissibility report") {
  SECTION("equilateral triangle has inradius ratio 1/(2 sqrt(3))") {
    TriRegion reg;
    reg.tris.push_back({Vec2(0, 0), Vec2(1, 0), Vec2(0.5, std::sqrt(3.0) / 2.0)});
    const auto rep = admissibility_report(reg, 1.0);
    REQUIRE_THAT(rep.min_inradius_ratio,
                 Catch::Matchers::WithinRel(1.0 / (2.0 * std::sqrt(3.0)), 1e-13));
    REQUIRE_FALSE(rep.degenerate);
  }
  SECTION("collinear sliver reports zero and flags degeneracy") {
    TriRegion reg;
    reg.tris.push_back({Vec2(0, 0), Vec2(1, 0), Vec2(0.5, 0.0)});
    const auto rep = admissibility_report(reg, 1.0);
    REQUIRE(rep.min_inradius_ratio == 0.0);
    REQUIRE(rep.degenerate);
  }
  SECTION("uniform refinement preserves the regularity constants") {
    std::vector<double> ir, sr;
    for (int lvl = 0; lvl < 3; ++lvl) {
      const CoarseMesh mesh = structured_triangulation(1 << lvl);
      std::vector<TriMesh> sms;
      for (size_t c = 0; c < mesh.cells.size(); ++c)
        sms.push_back(build_fine_submesh(mesh, static_cast<int>(c),
                                         mesh.cells[c].diameter / 4.0));
      const auto rep = admissibility_report(mesh, sms);
      ir.push_back(rep.min_inradius_ratio);
      sr.push_back(rep.min_size_ratio);
    }
    for (size_t i = 1; i < ir.size(); ++i) {
      REQUIRE_THAT(ir[i], Catch::Matchers::WithinRel(ir[0], 1e-12));
      REQUIRE_THAT(sr[i], Catch::Matchers::WithinRel(sr[0], 1e-12));
    }
  }
}

TEST_CASE("mesh file round trip") {
  const CoarseMesh mesh = structured_triangulation(3);
  std::stringstream ss;
  write_mesh(ss, mesh);
  const CoarseMesh back = read_mesh(ss);
  REQUIRE(back.cells.size() == mesh.cells.size());
  REQUIRE(back.faces.size() == mesh.faces.size());
  REQUIRE(back.boundary_faces.size() == mesh.boundary_faces.size());
  for (size_t i = 0; i < mesh.nodes.size(); ++i)
    REQUIRE((back.nodes[i] - mesh.nodes[i]).norm() == 0.0);
  for (size_t c = 0; c < mesh.cells.size(); ++c)
    REQUIRE(back.cells[c].v == mesh.cells[c].v);
}

TEST_CASE("point locator finds containing triangles") {
  const TriMesh m = structured_tri_mesh(7);
  const TriLocator loc(m);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const Vec2 x(u(rng), u(rng));
    const int t = loc.locate(x);
    REQUIRE(t >= 0);
    const auto& tr = m.tris[static_cast<size_t>(t)];
    const Vec2 &a = m.nodes[static_cast<size_t>(tr.v[0])],
               &b = m.nodes[static_cast<size_t>(tr.v[1])],
               &c = m.nodes[static_cast<size_t>(tr.v[2])];
    const double A = detail::tri_area(a, b, c);
    REQUIRE(detail::tri_area(x, b, c) / A >= -1e-10);
    REQUIRE(detail::tri_area(a, x, c) / A >= -1e-10);
    REQUIRE(detail::tri_area(a, b, x) / A >= -1e-10);
  }
}
