#pragma once

#include "mshho/oscillatory_basis.hpp"

#include <optional>

namespace mshho {

/// Cell-unknown degree of the multiscale method: k-1 (no stabilization) or k
/// (with the face stabilization).
enum class Variant { Mixed, Equal };

inline const char* variant_name(Variant v) { return v == Variant::Mixed ? "mixed" : "equal"; }

inline Variant variant_from_name(const std::string& s) {
  if (s == "mixed")
    return Variant::Mixed;
  if (s == "equal")
    return Variant::Equal;
  throw ConfigError("unknown variant: " + s + " (expected 'mixed' or 'equal')");
}

/// Local multiscale operators of one coarse cell: the reconstruction matrix
/// into the oscillatory basis, the local bilinear form (with stabilization in
/// the equal-order case), and the static condensation data. The reconstruction
/// right-hand side is assembled from the stored divergence and Neumann-trace
/// polynomials with coarse quadrature only; no fine-mesh integration happens
/// here.
struct LocalOperatorPack {
  Variant variant = Variant::Equal;
  int k = 0;
  int cell = 0;
  int ncell = 0; ///< cell dofs
  int nf = 0;    ///< dofs per face (k+1)
  int nfaces = 0;
  MatX R; ///< (N x ndof) dofs -> oscillatory-basis coefficients
  MatX A; ///< local bilinear form, ndof x ndof
  MatX J; ///< stabilization part (zero for the mixed order)
  // static condensation
  Eigen::LLT<MatX> cc_llt;
  MatX Acf;
  MatX S; ///< face-face Schur complement
  // reduction matrices (V coefficients -> dofs), for tests and oracles
  MatX reduction;

  int ndof() const { return ncell + nfaces * nf; }
};

/// Build the operator pack of one cell from its basis set.
inline LocalOperatorPack build_pack(const CellBasisSet& set, Variant variant, double alpha) {
  if (variant == Variant::Mixed && set.k < 1)
    throw ConfigError("mixed-order msHHO requires k >= 1");
  LocalOperatorPack p;
  p.variant = variant;
  p.k = set.k;
  p.cell = set.cell;
  p.nf = set.k + 1;
  p.nfaces = static_cast<int>(set.faces.size());
  const int nk1 = CellBasis::dim(set.k - 1);
  const int nkk = set.poly_k.size();
  p.ncell = variant == Variant::Mixed ? nk1 : nkk;
  const int N = set.dimension();
  const int ndof = p.ndof();

  // reconstruction: [K c; c' 0] [R; nu] = [RHS; pin], where the pinning
  // functional is the cell mean (k >= 1) or the total face moment (k = 0,
  // equal order, where the mean conflicts with the trace identity).
  VecX pin_column(N);
  VecX pin_row = VecX::Zero(ndof);
  const bool mean_pin = set.k >= 1 || variant == Variant::Mixed;
  if (mean_pin) {
    pin_column = set.mean;
    const VecX& int_c = variant == Variant::Mixed ? set.int_km1 : set.int_k;
    pin_row.head(p.ncell) = int_c;
  } else {
    pin_column.setZero();
    for (int fl = 0; fl < p.nfaces; ++fl)
      pin_column += set.face_moments[static_cast<size_t>(fl)].row(0).transpose();
    for (int fl = 0; fl < p.nfaces; ++fl)
      pin_row.segment(p.ncell + fl * p.nf, p.nf) =
          set.gram_face[static_cast<size_t>(fl)].row(0).transpose();
  }
  MatX Aug = MatX::Zero(N + 1, N + 1);
  Aug.topLeftCorner(N, N) = set.K;
  Aug.topRightCorner(N, 1) = pin_column;
  Aug.bottomLeftCorner(1, N) = pin_column.transpose();
  MatX rhs = MatX::Zero(N + 1, ndof);
  for (int b = 0; b < N; ++b) {
    const auto& e = set.entries[static_cast<size_t>(b)];
    if (e.is_cell) {
      // -int_T v_T div(A grad phi_b) = int_T v_T Phi^{k-1,i_b}
      const MatX& g = variant == Variant::Mixed ? set.gram_km1 : set.gram_k_km1;
      rhs.row(b).head(p.ncell) += g.col(e.index).transpose();
    }
    for (int fl = 0; fl < p.nfaces; ++fl)
      rhs.row(b).segment(p.ncell + fl * p.nf, p.nf) +=
          (set.gram_face[static_cast<size_t>(fl)] * e.lambda[static_cast<size_t>(fl)]).transpose();
  }
  rhs.row(N) = pin_row.transpose();
  Eigen::FullPivLU<MatX> lu(Aug);
  if (!lu.isInvertible())
    throw NumericalError("reconstruction system singular on cell " + std::to_string(set.cell));
  p.R = lu.solve(rhs).topRows(N);

  p.A = p.R.transpose() * set.K * p.R;
  p.J = MatX::Zero(ndof, ndof);
  if (variant == Variant::Equal) {
    // eta(u) = u_T - Pi^k_T(p(u)) in the degree-k cell basis
    MatX W = MatX::Zero(nkk, ndof);
    W.leftCols(p.ncell).setIdentity();
    const Eigen::LLT<MatX> gk(set.gram_k);
    W -= gk.solve(set.cell_moments_k * p.R);
    for (int fl = 0; fl < p.nfaces; ++fl)
      p.J += (alpha / set.HF[static_cast<size_t>(fl)]) * W.transpose() *
             set.trace_gram[static_cast<size_t>(fl)] * W;
    p.A += p.J;
  }
  p.A = 0.5 * (p.A + p.A.transpose()).eval();

  // static condensation
  p.Acf = p.A.topRightCorner(p.ncell, ndof - p.ncell);
  p.cc_llt.compute(p.A.topLeftCorner(p.ncell, p.ncell));
  if (p.cc_llt.info() != Eigen::Success)
    throw NumericalError("static condensation: cell block not positive definite on cell " +
                         std::to_string(set.cell));
  p.S = p.A.bottomRightCorner(ndof - p.ncell, ndof - p.ncell) -
        p.Acf.transpose() * p.cc_llt.solve(p.Acf);

  // reduction matrix: V coefficients -> dofs
  p.reduction = MatX::Zero(ndof, N);
  if (p.ncell > 0) {
    const MatX moments_c = set.cell_moments_k.topRows(p.ncell);
    const MatX gram_c = set.gram_k.topLeftCorner(p.ncell, p.ncell);
    p.reduction.topRows(p.ncell) = Eigen::LLT<MatX>(gram_c).solve(moments_c);
  }
  for (int fl = 0; fl < p.nfaces; ++fl)
    p.reduction.middleRows(p.ncell + fl * p.nf, p.nf) =
        Eigen::LLT<MatX>(set.gram_face[static_cast<size_t>(fl)])
            .solve(set.face_moments[static_cast<size_t>(fl)]);
  return p;
}

/// Reduction of an analytic field: component-wise L2 projections onto the
/// cell and face polynomial spaces (composite quadrature on the sub-mesh, so
/// oscillatory fields are integrated safely).
inline VecX reduce_analytic(const CellBasisSet& set, Variant variant, const ScalarField& v,
                            int exactness = 8) {
  const int ncell = variant == Variant::Mixed ? CellBasis::dim(set.k - 1) : set.poly_k.size();
  const int nf = set.k + 1;
  VecX dofs = VecX::Zero(ncell + static_cast<int>(set.faces.size()) * nf);
  if (ncell > 0) {
    VecX m = VecX::Zero(set.poly_k.size());
    for (size_t t = 0; t < set.submesh.tris.size(); ++t) {
      const TriRegion reg = set.submesh.tri_region(static_cast<int>(t));
      const auto& tr = reg.tris[0];
      const auto& rule = triangle_rule(exactness);
      const double jac = 2.0 * std::abs(detail::tri_area(tr[0], tr[1], tr[2]));
      VecX phi;
      for (int kq = 0; kq < rule.weights.size(); ++kq) {
        const Vec2 x =
            tr[0] + rule.points(kq, 0) * (tr[1] - tr[0]) + rule.points(kq, 1) * (tr[2] - tr[0]);
        set.poly_k.eval(x, phi);
        m += (jac * rule.weights[kq] * v(x)) * phi;
      }
    }
    dofs.head(ncell) = Eigen::LLT<MatX>(set.gram_k.topLeftCorner(ncell, ncell))
                           .solve(m.head(ncell));
  }
  for (size_t fl = 0; fl < set.faces.size(); ++fl) {
    // composite projection over the fine sub-faces of the coarse face
    const auto& fb = set.face_poly[fl];
    VecX m = VecX::Zero(nf);
    for (size_t e = 0; e < set.submesh.edges.size(); ++e) {
      const auto& ed = set.submesh.edges[e];
      if (ed.parent_face != set.faces[fl])
        continue;
      const Vec2 a = set.submesh.nodes[static_cast<size_t>(ed.v0)],
                 b = set.submesh.nodes[static_cast<size_t>(ed.v1)];
      const auto& rule = segment_rule(exactness);
      VecX chi;
      for (int kq = 0; kq < rule.weights.size(); ++kq) {
        const Vec2 x = a + rule.points(kq, 0) * (b - a);
        fb.eval(x, chi);
        m += (ed.length * rule.weights[kq] * v(x)) * chi;
      }
    }
    dofs.segment(static_cast<int>(fl) * nf + ncell, nf) =
        Eigen::LLT<MatX>(set.gram_face[fl]).solve(m);
  }
  return dofs;
}

/// Global multiscale solution: single-valued face polynomials on interior
/// faces plus recovered cell unknowns and the per-cell reconstruction
/// coefficients in the oscillatory basis.
struct MsHhoSolution {
  Variant variant = Variant::Equal;
  int k = 0;
  VecX faces;
  std::vector<VecX> cell;
  std::vector<VecX> vcoeffs;
  double condensed_residual = 0.0;
  int n_dofs = 0;
};

struct MsHhoOptions {
  SparseSolveOptions sparse;
  bool oscillatory_rhs = false; ///< integrate f against reconstructions (non-default)
  int rhs_exactness = 10;
};

/// Interior-face block numbering of a coarse mesh.
inline std::vector<int> interior_face_blocks(const CoarseMesh& mesh) {
  std::vector<int> block(mesh.faces.size(), -1);
  int nb = 0;
  for (int f : mesh.interior_faces)
    block[static_cast<size_t>(f)] = nb++;
  return block;
}

/// Assemble and solve the condensed global problem. `sets[c]` and `packs[c]`
/// must correspond to cell c of the mesh.
inline MsHhoSolution mshho_solve(const CoarseMesh& mesh,
                                 const std::vector<const CellBasisSet*>& sets,
                                 const std::vector<const LocalOperatorPack*>& packs,
                                 const ScalarField& f, const MsHhoOptions& opt = {}) {
  const size_t nc = mesh.cells.size();
  if (sets.size() != nc || packs.size() != nc)
    throw ConfigError("mshho_solve: missing offline data for some cells");
  const Variant variant = packs[0]->variant;
  const int k = packs[0]->k, nf = k + 1;
  const std::vector<int> block = interior_face_blocks(mesh);
  const int nfd = static_cast<int>(mesh.interior_faces.size()) * nf;

  std::vector<Triplet> trips;
  VecX rhs_f = VecX::Zero(nfd);
  std::vector<VecX> bc(nc);
  for (size_t c = 0; c < nc; ++c) {
    const LocalOperatorPack& p = *packs[c];
    const CellBasisSet& set = *sets[c];
    if (p.k != k || p.variant != variant)
      throw ConfigError("mshho_solve: inconsistent pack degrees/variants");
    // local rhs
    VecX b = VecX::Zero(p.ndof());
    if (!opt.oscillatory_rhs) {
      // int_T f Phi^{c,i} with coarse quadrature
      const TriRegion region = mesh.cell_region(static_cast<int>(c));
      const CellBasis& cb = set.poly_k;
      VecX phi;
      for (const auto& tr : region.tris) {
        const auto& rule = triangle_rule(opt.rhs_exactness);
        const double jac = 2.0 * std::abs(detail::tri_area(tr[0], tr[1], tr[2]));
        for (int kq = 0; kq < rule.weights.size(); ++kq) {
          const Vec2 x =
              tr[0] + rule.points(kq, 0) * (tr[1] - tr[0]) + rule.points(kq, 1) * (tr[2] - tr[0]);
          cb.eval(x, phi);
          b.head(p.ncell) += (jac * rule.weights[kq] * f(x)) * phi.head(p.ncell);
        }
      }
    } else {
      // int_T f p(v): fine quadrature against the reconstructions
      VecX fv = VecX::Zero(set.dimension());
      for (size_t t = 0; t < set.submesh.tris.size(); ++t) {
        const CellBasis rb = cell_basis_for(set.submesh, static_cast<int>(t), set.q + 1);
        const TriRegion reg = set.submesh.tri_region(static_cast<int>(t));
        const auto& tr = reg.tris[0];
        const auto& rule = triangle_rule(set.q + 3);
        const double jac = 2.0 * std::abs(detail::tri_area(tr[0], tr[1], tr[2]));
        VecX phi;
        for (int kq = 0; kq < rule.weights.size(); ++kq) {
          const Vec2 x =
              tr[0] + rule.points(kq, 0) * (tr[1] - tr[0]) + rule.points(kq, 1) * (tr[2] - tr[0]);
          rb.eval(x, phi);
          const double w = jac * rule.weights[kq] * f(x);
          for (int a = 0; a < set.dimension(); ++a)
            fv[a] += w * phi.dot(set.entries[static_cast<size_t>(a)].recon.row(t).transpose());
        }
      }
      b = p.R.transpose() * fv;
    }
    bc[c] = b.head(p.ncell);
    const VecX bf = b.tail(p.ndof() - p.ncell) - p.Acf.transpose() * p.cc_llt.solve(bc[c]);
    // scatter
    const auto& cell = mesh.cells[c];
    for (size_t fl = 0; fl < cell.faces.size(); ++fl) {
      const int gb = block[static_cast<size_t>(cell.faces[fl])];
      if (gb < 0)
        continue;
      rhs_f.segment(gb * nf, nf) += bf.segment(static_cast<int>(fl) * nf, nf);
      for (size_t gl = 0; gl < cell.faces.size(); ++gl) {
        const int gb2 = block[static_cast<size_t>(cell.faces[gl])];
        if (gb2 < 0)
          continue;
        for (int i = 0; i < nf; ++i)
          for (int j = 0; j < nf; ++j)
            trips.emplace_back(gb * nf + i, gb2 * nf + j,
                               p.S(static_cast<int>(fl) * nf + i, static_cast<int>(gl) * nf + j));
      }
    }
  }
  SpMat S(nfd, nfd);
  S.setFromTriplets(trips.begin(), trips.end());
  S.makeCompressed();

  MsHhoSolution sol;
  sol.variant = variant;
  sol.k = k;
  sol.n_dofs = nfd;
  sol.faces = solve_sparse_spd(S, rhs_f, opt.sparse);
  const double rn = rhs_f.norm();
  sol.condensed_residual = rn > 0.0 ? (S * sol.faces - rhs_f).norm() / rn : 0.0;
  sol.cell.resize(nc);
  sol.vcoeffs.resize(nc);
  for (size_t c = 0; c < nc; ++c) {
    const LocalOperatorPack& p = *packs[c];
    const auto& cell = mesh.cells[c];
    VecX uf = VecX::Zero(p.ndof() - p.ncell);
    for (size_t fl = 0; fl < cell.faces.size(); ++fl) {
      const int gb = block[static_cast<size_t>(cell.faces[fl])];
      if (gb >= 0)
        uf.segment(static_cast<int>(fl) * nf, nf) = sol.faces.segment(gb * nf, nf);
    }
    sol.cell[c] = p.cc_llt.solve(bc[c] - p.Acf * uf);
    VecX dofs(p.ndof());
    dofs << sol.cell[c], uf;
    sol.vcoeffs[c] = p.R * dofs;
  }
  return sol;
}

/// Per-cell fine-grid field of the solution (or of any coefficient vector in
/// the oscillatory basis).
inline FineField combine_basis(const CellBasisSet& set, const VecX& coeffs) {
  FineField f;
  f.degree = set.q + 1;
  f.coeffs = MatX::Zero(static_cast<Eigen::Index>(set.submesh.tris.size()),
                        CellBasis::dim(set.q + 1));
  for (int a = 0; a < set.dimension(); ++a)
    f.coeffs += coeffs[a] * set.entries[static_cast<size_t>(a)].recon;
  return f;
}

namespace detail {

// virtual red subdivision of a triangle, used to integrate on the common
// refinement of two nested meshes
template <class F>
void for_each_subtriangle(const Vec2& a, const Vec2& b, const Vec2& c, int depth, F&& fn) {
  if (depth == 0) {
    fn(a, b, c);
    return;
  }
  const Vec2 ab = 0.5 * (a + b), bc = 0.5 * (b + c), ca = 0.5 * (c + a);
  for_each_subtriangle(a, ab, ca, depth - 1, fn);
  for_each_subtriangle(ab, b, bc, depth - 1, fn);
  for_each_subtriangle(ca, bc, c, depth - 1, fn);
  for_each_subtriangle(ab, bc, ca, depth - 1, fn);
}

} // namespace detail

/// Broken energy distance between the multiscale solution and a reference
/// field given on a global fine mesh: integrates A (grad u_ref - grad p_T)^2
/// on the common refinement of each cell's sub-mesh and the reference mesh.
inline double energy_error(const CoarseMesh& mesh, const std::vector<const CellBasisSet*>& sets,
                           const MsHhoSolution& sol, const TriMesh& ref_mesh,
                           const FineField& ref, const TriLocator& ref_loc,
                           const DiffusionSpec& spec) {
  const MatrixField A = spec.field();
  double err2 = 0.0;
  for (size_t c = 0; c < mesh.cells.size(); ++c) {
    const CellBasisSet& set = *sets[c];
    const FineField uc = combine_basis(set, sol.vcoeffs[c]);
    const int exact = 2 * (set.q + 1);
    for (size_t t = 0; t < set.submesh.tris.size(); ++t) {
      const auto& tr = set.submesh.tris[t];
      const Vec2 &a = set.submesh.nodes[static_cast<size_t>(tr.v[0])],
                 &b = set.submesh.nodes[static_cast<size_t>(tr.v[1])],
                 &cc = set.submesh.nodes[static_cast<size_t>(tr.v[2])];
      const int depth =
          std::max(0, static_cast<int>(std::ceil(std::log2(tr.diameter / ref_mesh.h) - 1e-9)));
      detail::for_each_subtriangle(a, b, cc, depth, [&](const Vec2& p0, const Vec2& p1,
                                                        const Vec2& p2) {
        err2 += integrate_triangle(p0, p1, p2, exact, [&](const Vec2& x) {
          const int rt = ref_loc.locate(x);
          const Vec2 d = ref.grad(ref_mesh, rt, x) - uc.grad(set.submesh, static_cast<int>(t), x);
          return d.dot(A(x) * d);
        });
      });
    }
  }
  return std::sqrt(err2);
}

/// Export the solution as per-cell fine-grid fields in the mesh text format
/// with a values column appended to the node lines.
inline void write_solution(std::ostream& os, const CoarseMesh& mesh,
                           const std::vector<const CellBasisSet*>& sets,
                           const MsHhoSolution& sol) {
  os << std::setprecision(17);
  os << "#nodes\n";
  std::vector<int> node_offset(mesh.cells.size() + 1, 0);
  for (size_t c = 0; c < mesh.cells.size(); ++c) {
    const CellBasisSet& set = *sets[c];
    const FineField f = combine_basis(set, sol.vcoeffs[c]);
    const TriLocator loc(set.submesh);
    for (size_t n = 0; n < set.submesh.nodes.size(); ++n) {
      const Vec2& p = set.submesh.nodes[n];
      const int t = loc.locate(p);
      os << node_offset[c] + static_cast<int>(n) << ' ' << p.x() << ' ' << p.y() << ' '
         << f.value(set.submesh, t, p) << '\n';
    }
    node_offset[c + 1] = node_offset[c] + static_cast<int>(set.submesh.nodes.size());
  }
  os << "#cells\n";
  int cid = 0;
  for (size_t c = 0; c < mesh.cells.size(); ++c)
    for (const auto& t : sets[c]->submesh.tris)
      os << cid++ << " 3 " << node_offset[c] + t.v[0] << ' ' << node_offset[c] + t.v[1] << ' '
         << node_offset[c] + t.v[2] << '\n';
}

} // namespace mshho
