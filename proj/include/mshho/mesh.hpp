#pragma once

#include "mshho/quadrature.hpp"
#include "mshho/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <vector>

namespace mshho {

namespace detail {

// Canonical endpoint order: lexicographic by (x, y). Both cells incident to a
// face then see the same 1D parametrization.
inline bool lex_less(const Vec2& a, const Vec2& b) {
  if (a.x() != b.x())
    return a.x() < b.x();
  return a.y() < b.y();
}

inline double tri_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
}

inline double tri_diameter(const Vec2& a, const Vec2& b, const Vec2& c) {
  return std::max({(a - b).norm(), (b - c).norm(), (c - a).norm()});
}

inline double tri_inradius(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double per = (a - b).norm() + (b - c).norm() + (c - a).norm();
  return per > 0.0 ? 2.0 * std::abs(tri_area(a, b, c)) / per : 0.0;
}

} // namespace detail

/// Polytopal coarse mesh of a 2D polygonal domain. Cells are counter-clockwise
/// vertex loops; faces are straight segments shared by one or two cells.
/// Immutable after construction.
struct CoarseMesh {
  struct Cell {
    std::vector<int> v;     ///< ccw vertex loop
    std::vector<int> faces; ///< face ids, faces[i] joins v[i] and v[i+1]
    Vec2 centroid = Vec2::Zero();
    double area = 0.0;
    double diameter = 0.0;
  };
  struct Face {
    int v0 = -1, v1 = -1;       ///< endpoints in canonical (lexicographic) order
    int cell0 = -1, cell1 = -1; ///< incident cells; cell1 < 0 on the boundary
    double length = 0.0;
    Vec2 midpoint = Vec2::Zero();
    Vec2 tangent = Vec2::Zero(); ///< unit (v1 - v0) / length
    Vec2 normal0 = Vec2::Zero(); ///< unit normal pointing out of cell0
    bool boundary() const { return cell1 < 0; }
  };

  std::vector<Vec2> nodes;
  std::vector<Cell> cells;
  std::vector<Face> faces;
  std::vector<int> interior_faces;
  std::vector<int> boundary_faces;
  double mesh_size = 0.0; ///< max cell diameter

  /// Outward unit normal of `face` as seen from `cell`.
  Vec2 outward_normal(int cell, int face) const {
    const Face& f = faces[static_cast<size_t>(face)];
    return (f.cell0 == cell) ? f.normal0 : Vec2(-f.normal0);
  }

  /// Fan triangulation of a cell around its centroid (a single triangle for
  /// triangular cells). Valid for the convex cells this project uses.
  TriRegion cell_region(int c) const {
    const Cell& cell = cells[static_cast<size_t>(c)];
    TriRegion r;
    const size_t n = cell.v.size();
    if (n == 3) {
      r.tris.push_back({nodes[static_cast<size_t>(cell.v[0])],
                        nodes[static_cast<size_t>(cell.v[1])],
                        nodes[static_cast<size_t>(cell.v[2])]});
      return r;
    }
    for (size_t i = 0; i < n; ++i)
      r.tris.push_back({cell.centroid, nodes[static_cast<size_t>(cell.v[i])],
                        nodes[static_cast<size_t>(cell.v[(i + 1) % n])]});
    return r;
  }

  double domain_area() const {
    double s = 0.0;
    for (const auto& c : cells)
      s += c.area;
    return s;
  }
};

namespace detail {

// Fill geometry and face topology from nodes + cell loops.
inline void finalize_coarse_mesh(CoarseMesh& m) {
  std::map<std::pair<int, int>, int> face_of;
  for (size_t ci = 0; ci < m.cells.size(); ++ci) {
    auto& cell = m.cells[ci];
    const size_t n = cell.v.size();
    if (n < 3)
      throw MeshError("cell with fewer than 3 vertices");
    // geometry
    double area = 0.0;
    Vec2 cent = Vec2::Zero();
    for (size_t i = 0; i < n; ++i) {
      const Vec2& a = m.nodes[static_cast<size_t>(cell.v[i])];
      const Vec2& b = m.nodes[static_cast<size_t>(cell.v[(i + 1) % n])];
      const double cross = a.x() * b.y() - b.x() * a.y();
      area += cross;
      cent += (a + b) * cross;
    }
    area *= 0.5;
    if (area <= 0.0)
      throw MeshError("cell " + std::to_string(ci) + " is not counter-clockwise or degenerate");
    cell.area = area;
    cell.centroid = cent / (6.0 * area);
    cell.diameter = 0.0;
    for (size_t i = 0; i < n; ++i)
      for (size_t j = i + 1; j < n; ++j)
        cell.diameter = std::max(cell.diameter, (m.nodes[static_cast<size_t>(cell.v[i])] -
                                                 m.nodes[static_cast<size_t>(cell.v[j])])
                                                    .norm());
    // faces
    cell.faces.resize(n);
    for (size_t i = 0; i < n; ++i) {
      int a = cell.v[i], b = cell.v[(i + 1) % n];
      const auto key = std::minmax(a, b);
      auto it = face_of.find(key);
      int fid;
      if (it == face_of.end()) {
        CoarseMesh::Face f;
        // canonical endpoint order
        if (lex_less(m.nodes[static_cast<size_t>(a)], m.nodes[static_cast<size_t>(b)])) {
          f.v0 = a;
          f.v1 = b;
        } else {
          f.v0 = b;
          f.v1 = a;
        }
        const Vec2 p0 = m.nodes[static_cast<size_t>(f.v0)], p1 = m.nodes[static_cast<size_t>(f.v1)];
        f.length = (p1 - p0).norm();
        if (f.length <= 0.0)
          throw MeshError("zero-length face");
        f.midpoint = 0.5 * (p0 + p1);
        f.tangent = (p1 - p0) / f.length;
        f.cell0 = static_cast<int>(ci);
        // outward normal from cell0: rotate the ccw edge direction (a->b) by -pi/2
        const Vec2 e = m.nodes[static_cast<size_t>(b)] - m.nodes[static_cast<size_t>(a)];
        f.normal0 = Vec2(e.y(), -e.x()).normalized();
        fid = static_cast<int>(m.faces.size());
        m.faces.push_back(f);
        face_of.emplace(key, fid);
      } else {
        fid = it->second;
        auto& f = m.faces[static_cast<size_t>(fid)];
        if (f.cell1 >= 0)
          throw MeshError("face shared by more than two cells");
        f.cell1 = static_cast<int>(ci);
      }
      cell.faces[i] = fid;
    }
  }
  m.interior_faces.clear();
  m.boundary_faces.clear();
  for (size_t fi = 0; fi < m.faces.size(); ++fi) {
    if (m.faces[fi].boundary())
      m.boundary_faces.push_back(static_cast<int>(fi));
    else
      m.interior_faces.push_back(static_cast<int>(fi));
  }
  m.mesh_size = 0.0;
  for (const auto& c : m.cells)
    m.mesh_size = std::max(m.mesh_size, c.diameter);
}

} // namespace detail

/// Structured triangulation of the unit square: n x n squares, each split by
/// the (lower-left -> upper-right) diagonal. 2 n^2 cells, mesh size sqrt(2)/n.
inline CoarseMesh structured_triangulation(int n) {
  if (n < 1)
    throw MeshError("structured_triangulation: n must be >= 1");
  CoarseMesh m;
  const auto id = [n](int i, int j) { return j * (n + 1) + i; };
  m.nodes.resize(static_cast<size_t>((n + 1) * (n + 1)));
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      m.nodes[static_cast<size_t>(id(i, j))] =
          Vec2(static_cast<double>(i) / n, static_cast<double>(j) / n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      CoarseMesh::Cell lo, hi;
      lo.v = {id(i, j), id(i + 1, j), id(i + 1, j + 1)};
      hi.v = {id(i, j), id(i + 1, j + 1), id(i, j + 1)};
      m.cells.push_back(std::move(lo));
      m.cells.push_back(std::move(hi));
    }
  detail::finalize_coarse_mesh(m);
  return m;
}

/// Structured quadrilateral mesh of the unit square (n x n square cells).
inline CoarseMesh structured_quadrangulation(int n) {
  if (n < 1)
    throw MeshError("structured_quadrangulation: n must be >= 1");
  CoarseMesh m;
  const auto id = [n](int i, int j) { return j * (n + 1) + i; };
  m.nodes.resize(static_cast<size_t>((n + 1) * (n + 1)));
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      m.nodes[static_cast<size_t>(id(i, j))] =
          Vec2(static_cast<double>(i) / n, static_cast<double>(j) / n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      CoarseMesh::Cell c;
      c.v = {id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)};
      m.cells.push_back(std::move(c));
    }
  detail::finalize_coarse_mesh(m);
  return m;
}

/// Hierarchy of coarse meshes of the unit square with nominal sizes
/// H_l = H0 * 2^-l. Level l+1 is the exact uniform (red) refinement of level
/// l, so the geometric mesh sizes halve exactly as well.
struct MeshHierarchy {
  double H0 = 0.0;
  std::vector<CoarseMesh> levels;
  double nominal_size(int l) const { return H0 * std::pow(2.0, -l); }
};

/// Build a hierarchy of structured triangulations of the unit square. The
/// level-0 grid count is the smallest n with sqrt(2)/n <= H0.
inline MeshHierarchy build_hierarchy(int levels, double H0, int max_cells = 1 << 24) {
  if (levels < 1)
    throw ConfigError("build_hierarchy: need at least one level");
  if (!(H0 > 0.0))
    throw ConfigError("build_hierarchy: H0 must be positive");
  const int n0 = std::max(1, static_cast<int>(std::ceil(std::sqrt(2.0) / H0 - 1e-12)));
  const long long finest_cells = 2LL * n0 * n0 * (1LL << (2 * (levels - 1)));
  if (finest_cells > max_cells)
    throw ConfigError("build_hierarchy: finest level would exceed the cell cap");
  MeshHierarchy h;
  h.H0 = H0;
  for (int l = 0; l < levels; ++l)
    h.levels.push_back(structured_triangulation(n0 << l));
  return h;
}

/// Matching simplicial mesh; used both for per-cell fine sub-meshes and for
/// global fine solves. Immutable after construction.
struct TriMesh {
  struct Tri {
    std::array<int, 3> v{};
    std::array<int, 3> edges{}; ///< edges[i] joins v[i] and v[i+1]
    Vec2 centroid = Vec2::Zero();
    double area = 0.0;
    double diameter = 0.0;
  };
  struct Edge {
    int v0 = -1, v1 = -1; ///< canonical (lexicographic) order
    int t0 = -1, t1 = -1;
    double length = 0.0;
    Vec2 midpoint = Vec2::Zero();
    Vec2 tangent = Vec2::Zero();
    Vec2 normal0 = Vec2::Zero(); ///< outward from t0
    int parent_face = -1;        ///< coarse face id for sub-mesh boundary edges
    bool boundary() const { return t1 < 0; }
  };

  std::vector<Vec2> nodes;
  std::vector<Tri> tris;
  std::vector<Edge> edges;
  std::vector<int> boundary_edges;
  int parent_cell = -1; ///< coarse cell id when this is a sub-mesh
  double h = 0.0;       ///< max triangle diameter

  Vec2 outward_normal(int tri, int edge) const {
    const Edge& e = edges[static_cast<size_t>(edge)];
    return (e.t0 == tri) ? e.normal0 : Vec2(-e.normal0);
  }

  TriRegion region() const {
    TriRegion r;
    r.tris.reserve(tris.size());
    for (const auto& t : tris)
      r.tris.push_back({nodes[static_cast<size_t>(t.v[0])], nodes[static_cast<size_t>(t.v[1])],
                        nodes[static_cast<size_t>(t.v[2])]});
    return r;
  }

  TriRegion tri_region(int t) const {
    TriRegion r;
    const auto& tr = tris[static_cast<size_t>(t)];
    r.tris.push_back({nodes[static_cast<size_t>(tr.v[0])], nodes[static_cast<size_t>(tr.v[1])],
                      nodes[static_cast<size_t>(tr.v[2])]});
    return r;
  }

  double domain_area() const {
    double s = 0.0;
    for (const auto& t : tris)
      s += t.area;
    return s;
  }
};

namespace detail {

inline void finalize_tri_mesh(TriMesh& m,
                              const std::map<std::pair<int, int>, int>* boundary_parent = nullptr) {
  std::map<std::pair<int, int>, int> edge_of;
  for (size_t ti = 0; ti < m.tris.size(); ++ti) {
    auto& t = m.tris[ti];
    const Vec2 &a = m.nodes[static_cast<size_t>(t.v[0])], &b = m.nodes[static_cast<size_t>(t.v[1])],
               &c = m.nodes[static_cast<size_t>(t.v[2])];
    t.area = tri_area(a, b, c);
    if (t.area <= 0.0)
      throw MeshError("fine triangle not counter-clockwise or degenerate");
    t.centroid = (a + b + c) / 3.0;
    t.diameter = tri_diameter(a, b, c);
    for (int i = 0; i < 3; ++i) {
      int va = t.v[static_cast<size_t>(i)], vb = t.v[static_cast<size_t>((i + 1) % 3)];
      const auto key = std::minmax(va, vb);
      auto it = edge_of.find(key);
      int eid;
      if (it == edge_of.end()) {
        TriMesh::Edge e;
        if (lex_less(m.nodes[static_cast<size_t>(va)], m.nodes[static_cast<size_t>(vb)])) {
          e.v0 = va;
          e.v1 = vb;
        } else {
          e.v0 = vb;
          e.v1 = va;
        }
        const Vec2 p0 = m.nodes[static_cast<size_t>(e.v0)], p1 = m.nodes[static_cast<size_t>(e.v1)];
        e.length = (p1 - p0).norm();
        e.midpoint = 0.5 * (p0 + p1);
        e.tangent = (p1 - p0) / e.length;
        e.t0 = static_cast<int>(ti);
        const Vec2 ed = m.nodes[static_cast<size_t>(vb)] - m.nodes[static_cast<size_t>(va)];
        e.normal0 = Vec2(ed.y(), -ed.x()).normalized();
        eid = static_cast<int>(m.edges.size());
        m.edges.push_back(e);
        edge_of.emplace(key, eid);
      } else {
        eid = it->second;
        auto& e = m.edges[static_cast<size_t>(eid)];
        if (e.t1 >= 0)
          throw MeshError("fine edge shared by more than two triangles");
        e.t1 = static_cast<int>(ti);
      }
      t.edges[static_cast<size_t>(i)] = eid;
    }
  }
  m.boundary_edges.clear();
  m.h = 0.0;
  for (size_t ei = 0; ei < m.edges.size(); ++ei)
    if (m.edges[ei].boundary())
      m.boundary_edges.push_back(static_cast<int>(ei));
  for (const auto& t : m.tris)
    m.h = std::max(m.h, t.diameter);
  if (boundary_parent) {
    for (int ei : m.boundary_edges) {
      auto& e = m.edges[static_cast<size_t>(ei)];
      auto it = boundary_parent->find(std::minmax(e.v0, e.v1));
      e.parent_face = (it != boundary_parent->end()) ? it->second : -1;
    }
  }
}

} // namespace detail

/// Structured triangulation of the unit square as a TriMesh (for global fine
/// solves and the periodic unit cell).
inline TriMesh structured_tri_mesh(int n) {
  if (n < 1)
    throw MeshError("structured_tri_mesh: n must be >= 1");
  TriMesh m;
  const auto id = [n](int i, int j) { return j * (n + 1) + i; };
  m.nodes.resize(static_cast<size_t>((n + 1) * (n + 1)));
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      m.nodes[static_cast<size_t>(id(i, j))] =
          Vec2(static_cast<double>(i) / n, static_cast<double>(j) / n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      TriMesh::Tri lo, hi;
      lo.v = {id(i, j), id(i + 1, j), id(i + 1, j + 1)};
      hi.v = {id(i, j), id(i + 1, j + 1), id(i, j + 1)};
      m.tris.push_back(lo);
      m.tris.push_back(hi);
    }
  detail::finalize_tri_mesh(m);
  return m;
}

/// One uniform red-refinement step (each triangle split into four by the edge
/// midpoints); diameters halve exactly. Parent-face tags are inherited.
inline TriMesh red_refine(const TriMesh& m) {
  TriMesh out;
  out.parent_cell = m.parent_cell;
  out.nodes = m.nodes;
  std::vector<int> mid(m.edges.size());
  for (size_t ei = 0; ei < m.edges.size(); ++ei) {
    mid[ei] = static_cast<int>(out.nodes.size());
    out.nodes.push_back(m.edges[ei].midpoint);
  }
  std::map<std::pair<int, int>, int> parent;
  const auto note_parent = [&](int a, int b, int pf) {
    if (pf >= 0)
      parent[std::minmax(a, b)] = pf;
  };
  for (const auto& t : m.tris) {
    const int a = t.v[0], b = t.v[1], c = t.v[2];
    const int mab = mid[static_cast<size_t>(t.edges[0])];
    const int mbc = mid[static_cast<size_t>(t.edges[1])];
    const int mca = mid[static_cast<size_t>(t.edges[2])];
    TriMesh::Tri t1, t2, t3, t4;
    t1.v = {a, mab, mca};
    t2.v = {mab, b, mbc};
    t3.v = {mca, mbc, c};
    t4.v = {mab, mbc, mca};
    out.tris.push_back(t1);
    out.tris.push_back(t2);
    out.tris.push_back(t3);
    out.tris.push_back(t4);
  }
  for (const auto& e : m.edges)
    if (e.parent_face >= 0) {
      const int mm = mid[static_cast<size_t>(&e - m.edges.data())];
      note_parent(e.v0, mm, e.parent_face);
      note_parent(mm, e.v1, e.parent_face);
    }
  detail::finalize_tri_mesh(out, &parent);
  return out;
}

/// Matching simplicial sub-mesh of a coarse cell: a fan triangulation (the
/// cell itself when triangular) refined uniformly until h <= target_h. Every
/// boundary edge is tagged with its parent coarse face.
inline TriMesh build_fine_submesh(const CoarseMesh& mesh, int cell, double target_h,
                                  int max_tris = 1 << 22) {
  if (!(target_h > 0.0))
    throw ConfigError("build_fine_submesh: target_h must be positive");
  const auto& c = mesh.cells[static_cast<size_t>(cell)];
  TriMesh base;
  base.parent_cell = cell;
  std::map<std::pair<int, int>, int> parent;
  const size_t nv = c.v.size();
  if (nv == 3) {
    base.nodes = {mesh.nodes[static_cast<size_t>(c.v[0])], mesh.nodes[static_cast<size_t>(c.v[1])],
                  mesh.nodes[static_cast<size_t>(c.v[2])]};
    TriMesh::Tri t;
    t.v = {0, 1, 2};
    base.tris.push_back(t);
    for (size_t i = 0; i < 3; ++i)
      parent[std::minmax(static_cast<int>(i), static_cast<int>((i + 1) % 3))] = c.faces[i];
  } else {
    base.nodes.resize(nv + 1);
    for (size_t i = 0; i < nv; ++i)
      base.nodes[i] = mesh.nodes[static_cast<size_t>(c.v[i])];
    base.nodes[nv] = c.centroid;
    for (size_t i = 0; i < nv; ++i) {
      TriMesh::Tri t;
      t.v = {static_cast<int>(i), static_cast<int>((i + 1) % nv), static_cast<int>(nv)};
      base.tris.push_back(t);
      parent[std::minmax(static_cast<int>(i), static_cast<int>((i + 1) % nv))] = c.faces[i];
    }
  }
  detail::finalize_tri_mesh(base, &parent);
  TriMesh fine = std::move(base);
  while (fine.h > target_h) {
    if (static_cast<int>(fine.tris.size()) * 4 > max_tris)
      throw ConfigError("build_fine_submesh: refinement would exceed the element cap");
    fine = red_refine(fine);
  }
  return fine;
}

/// Regularity summary of Definition-style mesh admissibility: the worst
/// inradius/diameter ratio over fine simplices and the worst fine-to-coarse
/// size ratio.
struct AdmissibilityReport {
  double min_inradius_ratio = 0.0; ///< min over simplices of R_S / H_S
  double min_size_ratio = 0.0;     ///< min over (T,S) of H_S / H_T
  bool degenerate = false;
};

/// Raw-geometry variant: regularity of a bare triangle list against a coarse
/// diameter. Tolerates degenerate (zero-inradius) triangles, which the mesh
/// builders reject, so slivers can be diagnosed.
inline AdmissibilityReport admissibility_report(const TriRegion& region, double coarse_diameter) {
  AdmissibilityReport rep;
  rep.min_inradius_ratio = std::numeric_limits<double>::infinity();
  rep.min_size_ratio = std::numeric_limits<double>::infinity();
  for (const auto& t : region.tris) {
    const double d = detail::tri_diameter(t[0], t[1], t[2]);
    const double r = detail::tri_inradius(t[0], t[1], t[2]);
    rep.min_inradius_ratio = std::min(rep.min_inradius_ratio, d > 0.0 ? r / d : 0.0);
    rep.min_size_ratio = std::min(rep.min_size_ratio, coarse_diameter > 0.0 ? d / coarse_diameter : 0.0);
  }
  if (!(rep.min_inradius_ratio > 0.0))
    rep.degenerate = true;
  return rep;
}

inline AdmissibilityReport admissibility_report(const CoarseMesh& mesh,
                                                const std::vector<TriMesh>& submeshes) {
  AdmissibilityReport rep;
  rep.min_inradius_ratio = std::numeric_limits<double>::infinity();
  rep.min_size_ratio = std::numeric_limits<double>::infinity();
  for (const auto& sm : submeshes) {
    const double HT = mesh.cells[static_cast<size_t>(sm.parent_cell)].diameter;
    for (const auto& t : sm.tris) {
      const Vec2 &a = sm.nodes[static_cast<size_t>(t.v[0])],
                 &b = sm.nodes[static_cast<size_t>(t.v[1])],
                 &c = sm.nodes[static_cast<size_t>(t.v[2])];
      const double r = detail::tri_inradius(a, b, c);
      rep.min_inradius_ratio = std::min(rep.min_inradius_ratio, r / t.diameter);
      rep.min_size_ratio = std::min(rep.min_size_ratio, t.diameter / HT);
    }
  }
  if (!(rep.min_inradius_ratio > 0.0))
    rep.degenerate = true;
  return rep;
}

/// Uniform-bin point locator over a TriMesh. Points must lie in (or on the
/// boundary of) the meshed region; the nearest triangle is returned for
/// points within tolerance of an edge.
class TriLocator {
public:
  explicit TriLocator(const TriMesh& mesh, int bins_per_axis = 0) : mesh_(&mesh) {
    lo_ = Vec2(std::numeric_limits<double>::max(), std::numeric_limits<double>::max());
    hi_ = -lo_;
    for (const auto& p : mesh.nodes) {
      lo_ = lo_.cwiseMin(p);
      hi_ = hi_.cwiseMax(p);
    }
    const int n = bins_per_axis > 0
                      ? bins_per_axis
                      : std::max(1, static_cast<int>(std::sqrt(static_cast<double>(mesh.tris.size()))));
    nb_ = n;
    bins_.assign(static_cast<size_t>(n) * n, {});
    for (size_t t = 0; t < mesh.tris.size(); ++t) {
      Vec2 tlo = mesh.nodes[static_cast<size_t>(mesh.tris[t].v[0])], thi = tlo;
      for (int k = 1; k < 3; ++k) {
        const Vec2& p = mesh.nodes[static_cast<size_t>(mesh.tris[t].v[static_cast<size_t>(k)])];
        tlo = tlo.cwiseMin(p);
        thi = thi.cwiseMax(p);
      }
      int i0, j0, i1, j1;
      bin_of(tlo, i0, j0);
      bin_of(thi, i1, j1);
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i)
          bins_[static_cast<size_t>(j) * nb_ + i].push_back(static_cast<int>(t));
    }
  }

  /// Triangle containing x (barycentric tolerance), or -1.
  int locate(const Vec2& x) const {
    int i, j;
    bin_of(x, i, j);
    int best = -1;
    double best_def = std::numeric_limits<double>::max();
    for (int t : bins_[static_cast<size_t>(j) * nb_ + i]) {
      const double def = bary_deficit(t, x);
      if (def < best_def) {
        best_def = def;
        best = t;
      }
      if (def <= 1e-12)
        return t;
    }
    if (best >= 0 && best_def <= 1e-9)
      return best;
    // fall back to a global scan (points on bin borders of sliver bins)
    for (size_t t = 0; t < mesh_->tris.size(); ++t)
      if (bary_deficit(static_cast<int>(t), x) <= 1e-9)
        return static_cast<int>(t);
    return -1;
  }

private:
  void bin_of(const Vec2& x, int& i, int& j) const {
    const Vec2 span = hi_ - lo_;
    i = std::clamp(static_cast<int>((x.x() - lo_.x()) / std::max(span.x(), 1e-300) * nb_), 0, nb_ - 1);
    j = std::clamp(static_cast<int>((x.y() - lo_.y()) / std::max(span.y(), 1e-300) * nb_), 0, nb_ - 1);
  }
  // how far x is from being inside triangle t: max(0, -min barycentric coord)
  double bary_deficit(int t, const Vec2& x) const {
    const auto& tr = mesh_->tris[static_cast<size_t>(t)];
    const Vec2 &a = mesh_->nodes[static_cast<size_t>(tr.v[0])],
               &b = mesh_->nodes[static_cast<size_t>(tr.v[1])],
               &c = mesh_->nodes[static_cast<size_t>(tr.v[2])];
    const double A = detail::tri_area(a, b, c);
    const double l0 = detail::tri_area(x, b, c) / A;
    const double l1 = detail::tri_area(a, x, c) / A;
    const double l2 = detail::tri_area(a, b, x) / A;
    return std::max(0.0, -std::min({l0, l1, l2}));
  }

  const TriMesh* mesh_;
  Vec2 lo_, hi_;
  int nb_ = 1;
  std::vector<std::vector<int>> bins_;
};

/// Write a coarse mesh in the plain-text format: sections `#nodes` (id x y),
/// `#cells` (id n v1..vn), `#boundary` (vertex pairs), 17 significant digits.
inline void write_mesh(std::ostream& os, const CoarseMesh& m) {
  os << std::setprecision(17);
  os << "#nodes\n";
  for (size_t i = 0; i < m.nodes.size(); ++i)
    os << i << ' ' << m.nodes[i].x() << ' ' << m.nodes[i].y() << '\n';
  os << "#cells\n";
  for (size_t c = 0; c < m.cells.size(); ++c) {
    os << c << ' ' << m.cells[c].v.size();
    for (int v : m.cells[c].v)
      os << ' ' << v;
    os << '\n';
  }
  os << "#boundary\n";
  for (int f : m.boundary_faces)
    os << m.faces[static_cast<size_t>(f)].v0 << ' ' << m.faces[static_cast<size_t>(f)].v1 << '\n';
}

inline void write_mesh(const std::string& path, const CoarseMesh& m) {
  std::ofstream os(path);
  if (!os)
    throw ConfigError("cannot open mesh file for writing: " + path);
  write_mesh(os, m);
}

inline CoarseMesh read_mesh(std::istream& is) {
  CoarseMesh m;
  std::string line, section;
  std::vector<std::pair<int, int>> declared_boundary;
  while (std::getline(is, line)) {
    if (line.empty())
      continue;
    if (line[0] == '#') {
      section = line;
      continue;
    }
    std::istringstream ss(line);
    if (section == "#nodes") {
      size_t id;
      double x, y;
      if (!(ss >> id >> x >> y))
        throw ConfigError("malformed node line: " + line);
      if (m.nodes.size() <= id)
        m.nodes.resize(id + 1);
      m.nodes[id] = Vec2(x, y);
    } else if (section == "#cells") {
      size_t id, n;
      if (!(ss >> id >> n))
        throw ConfigError("malformed cell line: " + line);
      CoarseMesh::Cell c;
      c.v.resize(n);
      for (size_t i = 0; i < n; ++i)
        if (!(ss >> c.v[i]))
          throw ConfigError("malformed cell line: " + line);
      if (m.cells.size() <= id)
        m.cells.resize(id + 1);
      m.cells[id] = std::move(c);
    } else if (section == "#boundary") {
      int a, b;
      if (!(ss >> a >> b))
        throw ConfigError("malformed boundary line: " + line);
      declared_boundary.emplace_back(a, b);
    } else {
      throw ConfigError("line outside of a known section: " + line);
    }
  }
  detail::finalize_coarse_mesh(m);
  if (declared_boundary.size() != m.boundary_faces.size())
    throw ConfigError("declared boundary does not match mesh topology");
  return m;
}

inline CoarseMesh read_mesh(const std::string& path) {
  std::ifstream is(path);
  if (!is)
    throw ConfigError("cannot open mesh file: " + path);
  return read_mesh(is);
}

} // namespace mshho
