#pragma once

#include "mshho/coefficient.hpp"
#include "mshho/neumann.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace mshho {

/// One oscillatory basis function of the local fine-scale space: the fine
/// discrete field together with the data that characterizes it coarsely —
/// its polynomial divergence and its polynomial Neumann traces.
struct BasisEntry {
  bool is_cell = false;
  int index = 0;      ///< cell mode i or face mode j
  int local_face = -1; ///< face-based entries only
  VecX div_poly;       ///< coefficients in P^{k-1}(T); empty for face entries
  std::vector<VecX> lambda; ///< per local face, degree-k coefficients
  std::vector<VecX> fine_cell;
  VecX fine_faces;
  MatX recon; ///< FineField coefficients, degree q+1
  double integral = 0.0; ///< int_T phi
};

/// All oscillatory basis functions of one coarse cell, with the Gram data of
/// the local fine-scale space and the exact coarse-polynomial matrices used
/// by the multiscale operators. The basis spans the space of fields whose
/// flux divergence is in P^{k-1}(T) and whose normal flux traces are in
/// P^k(F) on every face; its dimension is N^{k-1} + card(F_T) (k+1).
struct CellBasisSet {
  int cell = 0;
  int k = 0;
  int q = 1; ///< fine (oscillatory) degree
  double HT = 0.0;
  double area = 0.0;
  CellBasis poly_k;   ///< degree-k basis on the cell
  CellBasis poly_km1; ///< degree-(k-1) basis (size 0 if k = 0)
  std::vector<int> faces;
  std::vector<FaceBasis> face_poly; ///< degree-k face bases
  std::vector<double> HF;
  TriMesh submesh;
  std::vector<BasisEntry> entries;
  MatX K;    ///< discrete energy Gram a_h(phi_a, phi_b)
  VecX mean; ///< int_T phi_a
  MatX cell_moments_k; ///< (N^k x N) fine moments int_T phi_a Phi^k_i
  std::vector<MatX> face_moments; ///< per face ((k+1) x N) fine trace moments
  MatX gram_k, gram_km1, gram_k_km1;
  VecX int_k, int_km1;
  std::vector<MatX> gram_face;  ///< per face, (k+1)^2
  std::vector<MatX> trace_gram; ///< per face: int_F Phi^k_i Phi^k_j ds

  int dimension() const { return static_cast<int>(entries.size()); }
  int expected_dimension() const {
    return CellBasis::dim(k - 1) + static_cast<int>(faces.size()) * (k + 1);
  }
};

/// Result of the basis dimension / independence check.
struct DimensionCheck {
  int expected = 0;
  int actual = 0;
  double min_eigenvalue = 0.0; ///< of the mean-augmented Gram, scaled by trace
  bool ok() const { return expected == actual && min_eigenvalue > 1e-10; }
};

inline DimensionCheck dimension_check(const CellBasisSet& set) {
  DimensionCheck c;
  c.expected = set.expected_dimension();
  c.actual = set.dimension();
  // kill the constant kernel with a rank-one mean term, then the smallest
  // eigenvalue witnesses linear independence
  const double scale = set.K.trace() / set.mean.squaredNorm();
  Eigen::SelfAdjointEigenSolver<MatX> es(set.K + scale * set.mean * set.mean.transpose());
  c.min_eigenvalue = es.eigenvalues().minCoeff() / set.K.trace();
  return c;
}

/// Compute the oscillatory basis of one coarse cell by solving the local
/// constrained Neumann problems on the cell's fine sub-mesh. One bordered
/// factorization is shared by all right-hand sides.
inline CellBasisSet compute_basis_set(const CoarseMesh& mesh, int cell, const DiffusionSpec& spec,
                                      int k, int q, double target_h, int max_tris = 1 << 22) {
  if (k < 0)
    throw ConfigError("compute_basis_set: k must be nonnegative");
  CellBasisSet set;
  set.cell = cell;
  set.k = k;
  set.q = q;
  const auto& cc = mesh.cells[static_cast<size_t>(cell)];
  set.HT = cc.diameter;
  set.area = cc.area;
  set.poly_k = cell_basis_for(mesh, cell, k);
  set.poly_km1 = CellBasis(cc.centroid, 0.5 * cc.diameter, k - 1 >= 0 ? k - 1 : 0);
  if (k == 0)
    set.poly_km1.exps.clear();
  set.faces = cc.faces;
  for (int fid : cc.faces) {
    set.face_poly.push_back(face_basis_for(mesh, fid, k));
    set.HF.push_back(mesh.faces[static_cast<size_t>(fid)].length);
  }
  set.submesh = build_fine_submesh(mesh, cell, target_h, max_tris);

  const MatrixField A = spec.field();
  const CellNeumannFactory factory(set.submesh, q, A, spec.alpha, set.faces, set.face_poly);

  const int nfc = static_cast<int>(set.faces.size());
  const int nk1 = CellBasis::dim(k - 1);
  const TriRegion region = mesh.cell_region(cell);

  // coarse-exact polynomial matrices
  set.gram_k = gram_matrix(set.poly_k, region);
  set.int_k = VecX::Zero(set.poly_k.size());
  for (int i = 0; i < set.poly_k.size(); ++i)
    set.int_k[i] =
        region.integrate(k + 1, [&](const Vec2& x) { return set.poly_k.eval(x)[i]; });
  if (k >= 1) {
    set.gram_km1 = set.gram_k.topLeftCorner(nk1, nk1);
    set.int_km1 = set.int_k.head(nk1);
    set.gram_k_km1 = set.gram_k.leftCols(nk1);
  } else {
    set.gram_km1.resize(0, 0);
    set.int_km1.resize(0);
    set.gram_k_km1.resize(1, 0);
  }
  for (int fl = 0; fl < nfc; ++fl) {
    const auto& f = mesh.faces[static_cast<size_t>(set.faces[static_cast<size_t>(fl)])];
    const Vec2 a = mesh.nodes[static_cast<size_t>(f.v0)], b = mesh.nodes[static_cast<size_t>(f.v1)];
    set.gram_face.push_back(gram_matrix(set.face_poly[static_cast<size_t>(fl)], a, b));
    // traces of the degree-k cell basis on the face
    MatX tg = MatX::Zero(set.poly_k.size(), set.poly_k.size());
    const auto& rule = segment_rule(2 * k);
    VecX phi;
    for (int kq = 0; kq < rule.weights.size(); ++kq) {
      const Vec2 x = a + rule.points(kq, 0) * (b - a);
      set.poly_k.eval(x, phi);
      tg += (f.length * rule.weights[kq]) * phi * phi.transpose();
    }
    set.trace_gram.push_back(std::move(tg));
  }

  // solve all local problems
  std::vector<CellNeumannFactory::Result> results;
  for (int i = 0; i < nk1; ++i) {
    VecX src = VecX::Zero(nk1);
    src[i] = 1.0;
    std::vector<VecX> targets(static_cast<size_t>(nfc), VecX::Zero(k + 1));
    auto r = factory.solve(&set.poly_km1, &src, targets);
    if (r.compatibility_residual > 1e-10)
      throw NumericalError("oscillatory cell basis: compatibility residual " +
                           std::to_string(r.compatibility_residual));
    BasisEntry e;
    e.is_cell = true;
    e.index = i;
    e.div_poly = -src; // -div(A grad phi) = Phi^{k-1,i}
    e.lambda = r.lambda;
    e.fine_cell = r.cell;
    e.fine_faces = r.faces;
    e.recon = r.recon.coeffs;
    e.integral = factory.integral(r);
    set.entries.push_back(std::move(e));
    results.push_back(std::move(r));
  }
  for (int fl = 0; fl < nfc; ++fl)
    for (int j = 0; j <= k; ++j) {
      std::vector<VecX> targets(static_cast<size_t>(nfc), VecX::Zero(k + 1));
      targets[static_cast<size_t>(fl)] = set.gram_face[static_cast<size_t>(fl)].col(j);
      auto r = factory.solve(nullptr, nullptr, targets);
      if (r.compatibility_residual > 1e-10)
        throw NumericalError("oscillatory face basis: compatibility residual " +
                             std::to_string(r.compatibility_residual));
      BasisEntry e;
      e.is_cell = false;
      e.index = j;
      e.local_face = fl;
      e.lambda = r.lambda;
      e.fine_cell = r.cell;
      e.fine_faces = r.faces;
      e.recon = r.recon.coeffs;
      e.integral = factory.integral(r);
      set.entries.push_back(std::move(e));
      results.push_back(std::move(r));
    }

  const int N = set.dimension();
  set.K.resize(N, N);
  set.mean.resize(N);
  for (int a = 0; a < N; ++a) {
    set.mean[a] = set.entries[static_cast<size_t>(a)].integral;
    for (int b = 0; b <= a; ++b) {
      const double v =
          factory.energy_product(results[static_cast<size_t>(a)], results[static_cast<size_t>(b)]);
      set.K(a, b) = v;
      set.K(b, a) = v;
    }
  }

  // fine moments against the degree-k cell basis
  const int nkk = set.poly_k.size();
  set.cell_moments_k = MatX::Zero(nkk, N);
  const int ncb = CellBasis::dim(q);
  for (size_t t = 0; t < set.submesh.tris.size(); ++t) {
    const CellBasis fine_cb = cell_basis_for(set.submesh, static_cast<int>(t), q);
    const TriRegion tr = set.submesh.tri_region(static_cast<int>(t));
    const auto& tri = tr.tris[0];
    const auto& rule = triangle_rule(q + k);
    const double jac = 2.0 * std::abs(detail::tri_area(tri[0], tri[1], tri[2]));
    VecX phi_fine, phi_k;
    for (int kq = 0; kq < rule.weights.size(); ++kq) {
      const Vec2 x =
          tri[0] + rule.points(kq, 0) * (tri[1] - tri[0]) + rule.points(kq, 1) * (tri[2] - tri[0]);
      fine_cb.eval(x, phi_fine);
      set.poly_k.eval(x, phi_k);
      const double w = jac * rule.weights[kq];
      for (int a = 0; a < N; ++a) {
        const double va =
            phi_fine.head(ncb).dot(set.entries[static_cast<size_t>(a)].fine_cell[t]);
        set.cell_moments_k.col(a) += (w * va) * phi_k;
      }
    }
  }
  for (int fl = 0; fl < nfc; ++fl) {
    MatX fm = MatX::Zero(k + 1, N);
    for (int a = 0; a < N; ++a)
      fm.col(a) = factory.face_moments(results[static_cast<size_t>(a)])[static_cast<size_t>(fl)];
    set.face_moments.push_back(std::move(fm));
  }
  return set;
}

// ---------------------------------------------------------------------------
// binary cache (versioned; one file per cell, written atomically by the
// harness)

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
inline void put_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline double get_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
inline void put_mat(std::ostream& os, const MatX& m) {
  put_u64(os, static_cast<std::uint64_t>(m.rows()));
  put_u64(os, static_cast<std::uint64_t>(m.cols()));
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(m.size())));
}
inline MatX get_mat(std::istream& is) {
  const auto r = get_u64(is), c = get_u64(is);
  MatX m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * r * c));
  return m;
}
inline void put_vec(std::ostream& os, const VecX& v) {
  put_u64(os, static_cast<std::uint64_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(v.size())));
}
inline VecX get_vec(std::istream& is) {
  const auto n = get_u64(is);
  VecX v(static_cast<Eigen::Index>(n));
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(sizeof(double) * n));
  return v;
}

constexpr std::uint64_t cache_magic = 0x4d53484842433031ULL; // "MSHHBC01"

} // namespace detail

/// Serialize a basis set. The sub-mesh is stored as nodes + triangles +
/// parent tags; topology is rebuilt on load.
inline void write_basis_set(std::ostream& os, const CellBasisSet& set) {
  using namespace detail;
  put_u64(os, cache_magic);
  put_u64(os, 1); // version
  put_u64(os, static_cast<std::uint64_t>(set.cell));
  put_u64(os, static_cast<std::uint64_t>(set.k));
  put_u64(os, static_cast<std::uint64_t>(set.q));
  put_f64(os, set.HT);
  put_f64(os, set.area);
  // coarse bases
  put_f64(os, set.poly_k.center.x());
  put_f64(os, set.poly_k.center.y());
  put_f64(os, set.poly_k.scale);
  put_u64(os, static_cast<std::uint64_t>(set.faces.size()));
  for (size_t fl = 0; fl < set.faces.size(); ++fl) {
    put_u64(os, static_cast<std::uint64_t>(set.faces[fl]));
    const auto& fb = set.face_poly[fl];
    put_f64(os, fb.midpoint.x());
    put_f64(os, fb.midpoint.y());
    put_f64(os, fb.tangent.x());
    put_f64(os, fb.tangent.y());
    put_f64(os, fb.half_length);
    put_f64(os, set.HF[fl]);
  }
  // sub-mesh
  put_u64(os, static_cast<std::uint64_t>(set.submesh.nodes.size()));
  for (const auto& p : set.submesh.nodes) {
    put_f64(os, p.x());
    put_f64(os, p.y());
  }
  put_u64(os, static_cast<std::uint64_t>(set.submesh.tris.size()));
  for (const auto& t : set.submesh.tris)
    for (int i = 0; i < 3; ++i)
      put_u64(os, static_cast<std::uint64_t>(t.v[static_cast<size_t>(i)]));
  put_u64(os, static_cast<std::uint64_t>(set.submesh.boundary_edges.size()));
  for (int e : set.submesh.boundary_edges) {
    const auto& ed = set.submesh.edges[static_cast<size_t>(e)];
    put_u64(os, static_cast<std::uint64_t>(ed.v0));
    put_u64(os, static_cast<std::uint64_t>(ed.v1));
    put_u64(os, static_cast<std::uint64_t>(ed.parent_face));
  }
  // entries
  put_u64(os, static_cast<std::uint64_t>(set.entries.size()));
  for (const auto& e : set.entries) {
    put_u64(os, e.is_cell ? 1 : 0);
    put_u64(os, static_cast<std::uint64_t>(e.index));
    put_u64(os, static_cast<std::uint64_t>(e.local_face + 1));
    put_vec(os, e.div_poly);
    put_u64(os, static_cast<std::uint64_t>(e.lambda.size()));
    for (const auto& l : e.lambda)
      put_vec(os, l);
    put_u64(os, static_cast<std::uint64_t>(e.fine_cell.size()));
    for (const auto& c : e.fine_cell)
      put_vec(os, c);
    put_vec(os, e.fine_faces);
    put_mat(os, e.recon);
    put_f64(os, e.integral);
  }
  put_mat(os, set.K);
  put_vec(os, set.mean);
  put_mat(os, set.cell_moments_k);
  for (const auto& m : set.face_moments)
    put_mat(os, m);
  put_mat(os, set.gram_k);
  put_mat(os, set.gram_km1);
  put_mat(os, set.gram_k_km1);
  put_vec(os, set.int_k);
  put_vec(os, set.int_km1);
  for (const auto& m : set.gram_face)
    put_mat(os, m);
  for (const auto& m : set.trace_gram)
    put_mat(os, m);
}

inline CellBasisSet read_basis_set(std::istream& is) {
  using namespace detail;
  if (get_u64(is) != cache_magic)
    throw ConfigError("basis cache: bad magic (not a cache file?)");
  if (get_u64(is) != 1)
    throw ConfigError("basis cache: unsupported version");
  CellBasisSet set;
  set.cell = static_cast<int>(get_u64(is));
  set.k = static_cast<int>(get_u64(is));
  set.q = static_cast<int>(get_u64(is));
  set.HT = get_f64(is);
  set.area = get_f64(is);
  const double cx = get_f64(is), cy = get_f64(is), sc = get_f64(is);
  set.poly_k = CellBasis(Vec2(cx, cy), sc, set.k);
  set.poly_km1 = CellBasis(Vec2(cx, cy), sc, set.k >= 1 ? set.k - 1 : 0);
  if (set.k == 0)
    set.poly_km1.exps.clear();
  const auto nfc = get_u64(is);
  for (std::uint64_t fl = 0; fl < nfc; ++fl) {
    set.faces.push_back(static_cast<int>(get_u64(is)));
    const double mx = get_f64(is), my = get_f64(is), tx = get_f64(is), ty = get_f64(is),
                 hl = get_f64(is);
    set.face_poly.emplace_back(Vec2(mx, my), Vec2(tx, ty), hl, set.k);
    set.HF.push_back(get_f64(is));
  }
  TriMesh sm;
  sm.parent_cell = set.cell;
  const auto nn = get_u64(is);
  sm.nodes.resize(nn);
  for (auto& p : sm.nodes) {
    const double x = get_f64(is), y = get_f64(is);
    p = Vec2(x, y);
  }
  const auto nt = get_u64(is);
  sm.tris.resize(nt);
  for (auto& t : sm.tris)
    for (int i = 0; i < 3; ++i)
      t.v[static_cast<size_t>(i)] = static_cast<int>(get_u64(is));
  std::map<std::pair<int, int>, int> parent;
  const auto nbe = get_u64(is);
  for (std::uint64_t e = 0; e < nbe; ++e) {
    const int v0 = static_cast<int>(get_u64(is));
    const int v1 = static_cast<int>(get_u64(is));
    const int pf = static_cast<int>(get_u64(is));
    parent[std::minmax(v0, v1)] = pf;
  }
  detail::finalize_tri_mesh(sm, &parent);
  set.submesh = std::move(sm);
  const auto ne = get_u64(is);
  for (std::uint64_t i = 0; i < ne; ++i) {
    BasisEntry e;
    e.is_cell = get_u64(is) != 0;
    e.index = static_cast<int>(get_u64(is));
    e.local_face = static_cast<int>(get_u64(is)) - 1;
    e.div_poly = get_vec(is);
    const auto nl = get_u64(is);
    for (std::uint64_t l = 0; l < nl; ++l)
      e.lambda.push_back(get_vec(is));
    const auto nc = get_u64(is);
    for (std::uint64_t c = 0; c < nc; ++c)
      e.fine_cell.push_back(get_vec(is));
    e.fine_faces = get_vec(is);
    e.recon = get_mat(is);
    e.integral = get_f64(is);
    set.entries.push_back(std::move(e));
  }
  set.K = get_mat(is);
  set.mean = get_vec(is);
  set.cell_moments_k = get_mat(is);
  for (std::uint64_t fl = 0; fl < nfc; ++fl)
    set.face_moments.push_back(get_mat(is));
  set.gram_k = get_mat(is);
  set.gram_km1 = get_mat(is);
  set.gram_k_km1 = get_mat(is);
  set.int_k = get_vec(is);
  set.int_km1 = get_vec(is);
  for (std::uint64_t fl = 0; fl < nfc; ++fl)
    set.gram_face.push_back(get_mat(is));
  for (std::uint64_t fl = 0; fl < nfc; ++fl)
    set.trace_gram.push_back(get_mat(is));
  if (!is)
    throw ConfigError("basis cache: truncated file");
  return set;
}

} // namespace mshho
