#pragma once

#include "mshho/basis.hpp"
#include "mshho/linalg.hpp"
#include "mshho/mesh.hpp"
#include "mshho/types.hpp"

#include <Eigen/SparseLU>

#include <memory>
#include <vector>

namespace mshho {

/// Piecewise polynomial field on a TriMesh: one coefficient row per triangle
/// in the scaled monomial basis of that triangle.
struct FineField {
  int degree = 0;
  MatX coeffs; ///< ntris x CellBasis::dim(degree)

  double value(const TriMesh& m, int t, const Vec2& x) const {
    const CellBasis b = cell_basis_for(m, t, degree);
    return b.value(coeffs.row(t).transpose(), x);
  }
  Vec2 grad(const TriMesh& m, int t, const Vec2& x) const {
    const CellBasis b = cell_basis_for(m, t, degree);
    return b.gradient(coeffs.row(t).transpose(), x);
  }
};

/// A-weighted broken energy seminorm sqrt(sum_T int_T A grad u . grad u).
inline double energy_seminorm(const TriMesh& mesh, const FineField& u, const MatrixField& A,
                              int exactness) {
  double s = 0.0;
  for (size_t t = 0; t < mesh.tris.size(); ++t) {
    const TriRegion r = mesh.tri_region(static_cast<int>(t));
    s += r.integrate(exactness, [&](const Vec2& x) {
      const Vec2 g = u.grad(mesh, static_cast<int>(t), x);
      return g.dot(A(x) * g);
    });
  }
  return std::sqrt(s);
}

/// Energy distance between a discrete field and an analytic gradient.
inline double energy_error_vs_exact(const TriMesh& mesh, const FineField& u,
                                    const VectorField& grad_exact, const MatrixField& A,
                                    int exactness) {
  double s = 0.0;
  for (size_t t = 0; t < mesh.tris.size(); ++t) {
    const TriRegion r = mesh.tri_region(static_cast<int>(t));
    s += r.integrate(exactness, [&](const Vec2& x) {
      const Vec2 g = grad_exact(x) - u.grad(mesh, static_cast<int>(t), x);
      return g.dot(A(x) * g);
    });
  }
  return std::sqrt(s);
}

/// Local equal-order HHO operators on one triangle: reconstruction into
/// P^{q+1}, the stabilized local bilinear form, and the matrices needed to
/// assemble sources and recover cell unknowns. The cell basis is the degree-q
/// prefix of the reconstruction basis (same centering and scaling).
struct HhoLocalOps {
  int q = 0;
  int ncb = 0; ///< cell dofs
  int nrb = 0; ///< reconstruction space dimension
  int nf = 0;  ///< dofs per face (q+1)
  std::array<int, 3> edge_ids{};
  CellBasis rb;
  std::array<FaceBasis, 3> fb;
  MatX R;     ///< reconstruction: nrb x ndof
  MatX A;     ///< local bilinear form (with stabilization): ndof x ndof
  MatX St;    ///< A-weighted gradient Gram of the reconstruction basis
  MatX Mr;    ///< mass matrix of the reconstruction basis
  VecX int_rb; ///< integrals of the reconstruction basis functions

  int ndof() const { return ncb + 3 * nf; }
};

/// Build the local HHO operators for triangle t. `stab_weight` is the factor
/// multiplying 1/H_F in the face penalty (the spectral lower bound alpha of
/// the coefficient).
inline HhoLocalOps build_hho_local(const TriMesh& mesh, int t, int q, const MatrixField& A,
                                   double stab_weight) {
  HhoLocalOps L;
  L.q = q;
  L.ncb = CellBasis::dim(q);
  L.nrb = CellBasis::dim(q + 1);
  L.nf = q + 1;
  L.rb = cell_basis_for(mesh, t, q + 1);
  const auto& tri = mesh.tris[static_cast<size_t>(t)];
  L.edge_ids = tri.edges;
  const int ndof = L.ndof();
  const int exact = 2 * q + 2;

  // volume matrices
  L.St = MatX::Zero(L.nrb, L.nrb);
  L.Mr = MatX::Zero(L.nrb, L.nrb);
  L.int_rb = VecX::Zero(L.nrb);
  {
    const auto& rule = triangle_rule(exact);
    const Vec2 &p0 = mesh.nodes[static_cast<size_t>(tri.v[0])],
               &p1 = mesh.nodes[static_cast<size_t>(tri.v[1])],
               &p2 = mesh.nodes[static_cast<size_t>(tri.v[2])];
    const double jac = 2.0 * tri.area;
    VecX phi;
    MatX dphi;
    for (int k = 0; k < rule.weights.size(); ++k) {
      const Vec2 x = p0 + rule.points(k, 0) * (p1 - p0) + rule.points(k, 1) * (p2 - p0);
      const double w = jac * rule.weights[k];
      L.rb.eval(x, phi);
      L.rb.eval_grad(x, dphi);
      const Mat2 Ax = A(x);
      L.Mr.selfadjointView<Eigen::Lower>().rankUpdate(phi, w);
      L.St += w * dphi * Ax * dphi.transpose();
      L.int_rb += w * phi;
    }
    L.Mr = MatX(L.Mr.selfadjointView<Eigen::Lower>());
    L.St = 0.5 * (L.St + L.St.transpose()).eval();
  }

  // face matrices: value pairings T_sigma (nf x nrb), flux pairings
  // E_sigma (nrb x nrb) and F_sigma (nf x nrb), face mass M_sigma.
  // The coefficient on a face is the one-sided trace from within the cell:
  // evaluation points are nudged toward the centroid so that coefficients
  // jumping exactly across mesh edges pick the correct side.
  constexpr double inward = 1e-12;
  std::array<MatX, 3> Tf, Ef, Ff, Mf;
  for (int e = 0; e < 3; ++e) {
    const int eid = tri.edges[static_cast<size_t>(e)];
    const auto& edge = mesh.edges[static_cast<size_t>(eid)];
    L.fb[static_cast<size_t>(e)] = face_basis_for(mesh, eid, q);
    const Vec2 n = mesh.outward_normal(t, eid);
    const Vec2 a = mesh.nodes[static_cast<size_t>(edge.v0)],
               b = mesh.nodes[static_cast<size_t>(edge.v1)];
    MatX T = MatX::Zero(L.nf, L.nrb), E = MatX::Zero(L.nrb, L.nrb), F = MatX::Zero(L.nf, L.nrb),
         M = MatX::Zero(L.nf, L.nf);
    const auto& rule = segment_rule(exact);
    VecX phi, psi;
    MatX dphi;
    for (int k = 0; k < rule.weights.size(); ++k) {
      const Vec2 x = a + rule.points(k, 0) * (b - a);
      const double w = edge.length * rule.weights[k];
      L.rb.eval(x, phi);
      L.rb.eval_grad(x, dphi);
      L.fb[static_cast<size_t>(e)].eval(x, psi);
      const VecX flux = dphi * (A(x + inward * (tri.centroid - x)) * n); // nrb
      T += w * psi * phi.transpose();
      E += w * phi * flux.transpose();
      F += w * psi * flux.transpose();
      M += w * psi * psi.transpose();
    }
    Tf[static_cast<size_t>(e)] = std::move(T);
    Ef[static_cast<size_t>(e)] = std::move(E);
    Ff[static_cast<size_t>(e)] = std::move(F);
    Mf[static_cast<size_t>(e)] = std::move(M);
  }

  // reconstruction: [St m; m' 0] [R; nu] = [Brhs; mean row]
  MatX Brhs = MatX::Zero(L.nrb, ndof);
  Brhs.leftCols(L.ncb) = L.St.leftCols(L.ncb);
  for (int e = 0; e < 3; ++e) {
    Brhs.leftCols(L.ncb) -= Ef[static_cast<size_t>(e)].topRows(L.ncb).transpose();
    Brhs.middleCols(L.ncb + e * L.nf, L.nf) += Ff[static_cast<size_t>(e)].transpose();
  }
  MatX Aug = MatX::Zero(L.nrb + 1, L.nrb + 1);
  Aug.topLeftCorner(L.nrb, L.nrb) = L.St;
  Aug.topRightCorner(L.nrb, 1) = L.int_rb;
  Aug.bottomLeftCorner(1, L.nrb) = L.int_rb.transpose();
  MatX AugRhs = MatX::Zero(L.nrb + 1, ndof);
  AugRhs.topRows(L.nrb) = Brhs;
  AugRhs.bottomRows(1).leftCols(L.ncb) = L.int_rb.head(L.ncb).transpose();
  Eigen::PartialPivLU<MatX> lu(Aug);
  L.R = lu.solve(AugRhs).topRows(L.nrb);

  // stabilization: delta_sigma(u) = Pi_sigma(u_sigma - u_T - (I - Pi_T^q) R(u))
  L.A = L.R.transpose() * L.St * L.R;
  const Eigen::LLT<MatX> mass_llt(L.Mr.topLeftCorner(L.ncb, L.ncb));
  const MatX PcR = mass_llt.solve(L.Mr.topRows(L.ncb) * L.R); // ncb x ndof
  for (int e = 0; e < 3; ++e) {
    const auto& M = Mf[static_cast<size_t>(e)];
    const auto& T = Tf[static_cast<size_t>(e)];
    const Eigen::LLT<MatX> mllt(M);
    MatX S = MatX::Zero(L.nf, ndof);
    S.middleCols(L.ncb + e * L.nf, L.nf).setIdentity();
    S.leftCols(L.ncb) -= mllt.solve(T.leftCols(L.ncb));
    S -= mllt.solve(T * L.R);
    S += mllt.solve(T.leftCols(L.ncb) * PcR);
    const double hF =
        mesh.edges[static_cast<size_t>(tri.edges[static_cast<size_t>(e)])].length;
    L.A += (stab_weight / hF) * S.transpose() * M * S;
  }
  L.A = 0.5 * (L.A + L.A.transpose()).eval();
  return L;
}

/// Edge-unknown numbering for the global solves. Each edge maps to a block of
/// (q+1) unknowns, to -1 (eliminated, homogeneous Dirichlet), or to a shared
/// block (periodic identification).
struct EdgeNumbering {
  std::vector<int> block; ///< per edge: block id or -1
  int nblocks = 0;
};

inline EdgeNumbering dirichlet_numbering(const TriMesh& mesh) {
  EdgeNumbering n;
  n.block.assign(mesh.edges.size(), -1);
  for (size_t e = 0; e < mesh.edges.size(); ++e)
    if (!mesh.edges[e].boundary())
      n.block[e] = n.nblocks++;
  return n;
}

inline EdgeNumbering neumann_numbering(const TriMesh& mesh) {
  EdgeNumbering n;
  n.block.assign(mesh.edges.size(), 0);
  for (size_t e = 0; e < mesh.edges.size(); ++e)
    n.block[e] = n.nblocks++;
  return n;
}

/// Identify opposite boundary edges of the unit cell [0,1]^2 by midpoint.
/// Throws if the mesh does not match across the periodic boundary.
inline EdgeNumbering periodic_numbering(const TriMesh& mesh) {
  EdgeNumbering n;
  n.block.assign(mesh.edges.size(), -2);
  const double tol = 1e-9;
  std::map<long long, int> left, bottom; // keyed by rounded coordinate
  const auto key = [tol](double t) { return static_cast<long long>(std::llround(t / tol)); };
  for (size_t e = 0; e < mesh.edges.size(); ++e) {
    if (!mesh.edges[e].boundary())
      continue;
    const Vec2 m = mesh.edges[e].midpoint;
    if (std::abs(m.x()) < tol)
      left[key(m.y())] = static_cast<int>(e);
    else if (std::abs(m.y()) < tol)
      bottom[key(m.x())] = static_cast<int>(e);
  }
  int nb = 0;
  for (size_t e = 0; e < mesh.edges.size(); ++e) {
    if (n.block[e] != -2)
      continue;
    const auto& edge = mesh.edges[e];
    if (edge.boundary()) {
      const Vec2 m = edge.midpoint;
      if (std::abs(m.x() - 1.0) < tol) {
        auto it = left.find(key(m.y()));
        if (it == left.end())
          throw MeshError("periodic identification failed: no partner for a right-side edge");
        if (n.block[static_cast<size_t>(it->second)] == -2)
          n.block[static_cast<size_t>(it->second)] = nb++;
        n.block[e] = n.block[static_cast<size_t>(it->second)];
        continue;
      }
      if (std::abs(m.y() - 1.0) < tol) {
        auto it = bottom.find(key(m.x()));
        if (it == bottom.end())
          throw MeshError("periodic identification failed: no partner for a top-side edge");
        if (n.block[static_cast<size_t>(it->second)] == -2)
          n.block[static_cast<size_t>(it->second)] = nb++;
        n.block[e] = n.block[static_cast<size_t>(it->second)];
        continue;
      }
    }
    n.block[e] = nb++;
  }
  n.nblocks = nb;
  return n;
}

/// Statically condensed global HHO system on a TriMesh: the face-unknown
/// Schur complement plus per-cell recovery data.
class HhoSystem {
public:
  HhoSystem(const TriMesh& mesh, int q, const MatrixField& A, double stab_weight,
            EdgeNumbering numbering)
      : mesh_(&mesh), q_(q), nf_(q + 1), numbering_(std::move(numbering)) {
    const int ncells = static_cast<int>(mesh.tris.size());
    cells_.resize(static_cast<size_t>(ncells));
    std::vector<Triplet> trips;
    for (int t = 0; t < ncells; ++t) {
      HhoLocalOps L = build_hho_local(mesh, t, q, A, stab_weight);
      CellData& cd = cells_[static_cast<size_t>(t)];
      cd.R = L.R;
      cd.int_cell = L.int_rb.head(L.ncb);
      const int ncb = L.ncb, nfd = 3 * nf_;
      const MatX Acc = L.A.topLeftCorner(ncb, ncb);
      cd.Acf = L.A.topRightCorner(ncb, nfd);
      cd.llt.compute(Acc);
      if (cd.llt.info() != Eigen::Success)
        throw NumericalError("static condensation: cell block not positive definite");
      const MatX W = cd.llt.solve(cd.Acf); // Acc^{-1} Acf
      const MatX S = L.A.bottomRightCorner(nfd, nfd) - cd.Acf.transpose() * W;
      // scatter
      for (int ea = 0; ea < 3; ++ea) {
        const int ba = numbering_.block[static_cast<size_t>(L.edge_ids[static_cast<size_t>(ea)])];
        if (ba < 0)
          continue;
        for (int eb = 0; eb < 3; ++eb) {
          const int bb = numbering_.block[static_cast<size_t>(L.edge_ids[static_cast<size_t>(eb)])];
          if (bb < 0)
            continue;
          for (int i = 0; i < nf_; ++i)
            for (int j = 0; j < nf_; ++j)
              trips.emplace_back(ba * nf_ + i, bb * nf_ + j, S(ea * nf_ + i, eb * nf_ + j));
        }
      }
    }
    S_.resize(numbering_.nblocks * nf_, numbering_.nblocks * nf_);
    S_.setFromTriplets(trips.begin(), trips.end());
    S_.makeCompressed();
  }

  const TriMesh& mesh() const { return *mesh_; }
  int q() const { return q_; }
  int nf() const { return nf_; }
  const EdgeNumbering& numbering() const { return numbering_; }
  const SpMat& condensed_matrix() const { return S_; }
  int n_face_dofs() const { return numbering_.nblocks * nf_; }

  /// Condensed right-hand side from per-cell full local rhs vectors
  /// (ndof = ncb + 3 nf). Also returns the stored cell parts for recovery.
  VecX condense_rhs(const std::vector<VecX>& local_rhs) {
    const int ncb = CellBasis::dim(q_);
    VecX rf = VecX::Zero(n_face_dofs());
    bc_.assign(cells_.size(), VecX());
    for (size_t t = 0; t < cells_.size(); ++t) {
      const auto& cd = cells_[t];
      const VecX& b = local_rhs[t];
      bc_[t] = b.head(ncb);
      VecX bf = b.tail(3 * nf_) - cd.Acf.transpose() * cd.llt.solve(bc_[t]);
      scatter_add(static_cast<int>(t), bf, rf);
    }
    return rf;
  }

  /// Gathered face dofs of cell t from a global face vector.
  VecX gather_faces(int t, const VecX& uf) const {
    VecX out = VecX::Zero(3 * nf_);
    const auto& tri = mesh_->tris[static_cast<size_t>(t)];
    for (int e = 0; e < 3; ++e) {
      const int b = numbering_.block[static_cast<size_t>(tri.edges[static_cast<size_t>(e)])];
      if (b >= 0)
        out.segment(e * nf_, nf_) = uf.segment(b * nf_, nf_);
    }
    return out;
  }

  /// Cell unknowns of cell t recovered from the condensation identity;
  /// `extra` subtracts an additional cell-block vector (mean multiplier).
  VecX recover_cell(int t, const VecX& uf, const VecX* extra = nullptr) const {
    const auto& cd = cells_[static_cast<size_t>(t)];
    VecX rhs = bc_[static_cast<size_t>(t)] - cd.Acf * gather_faces(t, uf);
    if (extra)
      rhs -= *extra;
    return cd.llt.solve(rhs);
  }

  /// Reconstruction coefficients (degree q+1) of cell t.
  VecX reconstruct_cell(int t, const VecX& uc, const VecX& uf_local) const {
    const auto& cd = cells_[static_cast<size_t>(t)];
    VecX dofs(uc.size() + uf_local.size());
    dofs << uc, uf_local;
    return cd.R * dofs;
  }

  /// Vector g and scalar gamma of the mean-constrained bordered system (see
  /// the periodic corrector solve), plus the map m_c' Acc^{-1} b_c.
  void mean_border(VecX& g, double& gamma) const {
    g = VecX::Zero(n_face_dofs());
    gamma = 0.0;
    for (size_t t = 0; t < cells_.size(); ++t) {
      const auto& cd = cells_[t];
      const VecX w = cd.llt.solve(cd.int_cell);
      gamma += cd.int_cell.dot(w);
      VecX gl = -cd.Acf.transpose() * w;
      scatter_add(static_cast<int>(t), gl, g);
    }
  }

  double mean_rhs_term() const {
    double s = 0.0;
    for (size_t t = 0; t < cells_.size(); ++t)
      s += cells_[t].int_cell.dot(cells_[t].llt.solve(bc_[t]));
    return s;
  }

  const VecX& cell_mean_vector(int t) const { return cells_[static_cast<size_t>(t)].int_cell; }
  const Eigen::LLT<MatX>& cell_llt(int t) const { return cells_[static_cast<size_t>(t)].llt; }
  const VecX& cell_rhs(int t) const { return bc_[static_cast<size_t>(t)]; }
  const MatX& cell_R(int t) const { return cells_[static_cast<size_t>(t)].R; }

private:
  void scatter_add(int t, const VecX& local_faces, VecX& global) const {
    const auto& tri = mesh_->tris[static_cast<size_t>(t)];
    for (int e = 0; e < 3; ++e) {
      const int b = numbering_.block[static_cast<size_t>(tri.edges[static_cast<size_t>(e)])];
      if (b >= 0)
        global.segment(b * nf_, nf_) += local_faces.segment(e * nf_, nf_);
    }
  }

  struct CellData {
    MatX R;
    MatX Acf;
    Eigen::LLT<MatX> llt;
    VecX int_cell;
  };

  const TriMesh* mesh_;
  int q_, nf_;
  EdgeNumbering numbering_;
  std::vector<CellData> cells_;
  std::vector<VecX> bc_;
  VecX mean_gather_;
  SpMat S_;
};

/// Discrete solution of a monoscale HHO solve.
struct HhoSolution {
  FineField recon;          ///< per-cell reconstruction, degree q+1
  std::vector<VecX> cell;   ///< cell unknowns
  VecX faces;               ///< global face unknowns
  double condensed_residual = 0.0;
  double mean_multiplier = 0.0; ///< for mean-constrained solves
};

/// Equal-order monoscale HHO solve of -div(A grad u) = f with homogeneous
/// Dirichlet conditions.
inline HhoSolution solve_dirichlet(const TriMesh& mesh, int q, const MatrixField& A,
                                   const ScalarField& f, double stab_weight,
                                   const SparseSolveOptions& opts = {}, int source_exactness = 0) {
  HhoSystem sys(mesh, q, A, stab_weight, dirichlet_numbering(mesh));
  const int ncb = CellBasis::dim(q), nrb = CellBasis::dim(q + 1);
  const int exact = source_exactness > 0 ? source_exactness : 2 * q + 4;
  std::vector<VecX> rhs(mesh.tris.size());
  for (size_t t = 0; t < mesh.tris.size(); ++t) {
    const CellBasis rb = cell_basis_for(mesh, static_cast<int>(t), q + 1);
    VecX b = VecX::Zero(ncb + 3 * (q + 1));
    const TriRegion r = mesh.tri_region(static_cast<int>(t));
    for (const auto& tr : r.tris) {
      const auto& rule = triangle_rule(exact);
      const double jac = 2.0 * std::abs(detail::tri_area(tr[0], tr[1], tr[2]));
      VecX phi;
      for (int k = 0; k < rule.weights.size(); ++k) {
        const Vec2 x = tr[0] + rule.points(k, 0) * (tr[1] - tr[0]) + rule.points(k, 1) * (tr[2] - tr[0]);
        rb.eval(x, phi);
        b.head(ncb) += (jac * rule.weights[k] * f(x)) * phi.head(ncb);
      }
    }
    rhs[t] = std::move(b);
  }
  const VecX rf = sys.condense_rhs(rhs);
  HhoSolution sol;
  sol.faces = solve_sparse_spd(sys.condensed_matrix(), rf, opts);
  const double rn = rf.norm();
  sol.condensed_residual =
      rn > 0.0 ? (sys.condensed_matrix() * sol.faces - rf).norm() / rn : 0.0;
  sol.recon.degree = q + 1;
  sol.recon.coeffs.resize(static_cast<Eigen::Index>(mesh.tris.size()), nrb);
  sol.cell.resize(mesh.tris.size());
  for (size_t t = 0; t < mesh.tris.size(); ++t) {
    const VecX uc = sys.recover_cell(static_cast<int>(t), sol.faces);
    sol.cell[t] = uc;
    sol.recon.coeffs.row(static_cast<Eigen::Index>(t)) =
        sys.reconstruct_cell(static_cast<int>(t), uc, sys.gather_faces(static_cast<int>(t), sol.faces))
            .transpose();
  }
  return sol;
}

/// Solve the unit-cell corrector problem -div(A (grad mu + e_l)) = 0 with
/// periodic conditions and zero mean, imposed by a scalar multiplier.
inline HhoSolution solve_corrector(const TriMesh& mesh, int q, const MatrixField& A, int direction,
                                   double stab_weight) {
  HhoSystem sys(mesh, q, A, stab_weight, periodic_numbering(mesh));
  const int ncb = CellBasis::dim(q), nrb = CellBasis::dim(q + 1);
  const Vec2 el = direction == 0 ? Vec2(1, 0) : Vec2(0, 1);
  // b(w) = -int_S (A e_l) . grad r(w); full local rhs = -R' g with
  // g_i = int_S grad rb_i . (A e_l)
  std::vector<VecX> rhs(mesh.tris.size());
  for (size_t t = 0; t < mesh.tris.size(); ++t) {
    const CellBasis rb_t = cell_basis_for(mesh, static_cast<int>(t), q + 1);
    VecX g = VecX::Zero(nrb);
    const TriRegion r = mesh.tri_region(static_cast<int>(t));
    const auto& tr = r.tris[0];
    const auto& rule = triangle_rule(2 * q + 2);
    const double jac = 2.0 * std::abs(detail::tri_area(tr[0], tr[1], tr[2]));
    MatX dphi;
    for (int k = 0; k < rule.weights.size(); ++k) {
      const Vec2 x = tr[0] + rule.points(k, 0) * (tr[1] - tr[0]) + rule.points(k, 1) * (tr[2] - tr[0]);
      rb_t.eval_grad(x, dphi);
      g += (jac * rule.weights[k]) * (dphi * (A(x) * el));
    }
    rhs[t] = -sys.cell_R(static_cast<int>(t)).transpose() * g;
  }
  const VecX rf = sys.condense_rhs(rhs);
  VecX gb;
  double gamma;
  sys.mean_border(gb, gamma);
  const double s = -sys.mean_rhs_term();
  const int nfd = sys.n_face_dofs();
  // bordered system [S g; g' -gamma] [uf; nu] = [rf; s]
  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(sys.condensed_matrix().nonZeros()) + 2 * static_cast<size_t>(nfd) + 1);
  for (int kk = 0; kk < sys.condensed_matrix().outerSize(); ++kk)
    for (SpMat::InnerIterator it(sys.condensed_matrix(), kk); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int i = 0; i < nfd; ++i)
    if (gb[i] != 0.0) {
      trips.emplace_back(i, nfd, gb[i]);
      trips.emplace_back(nfd, i, gb[i]);
    }
  trips.emplace_back(nfd, nfd, -gamma);
  SpMat Sb(nfd + 1, nfd + 1);
  Sb.setFromTriplets(trips.begin(), trips.end());
  Sb.makeCompressed();
  VecX rb(nfd + 1);
  rb << rf, s;
  const VecX sol_full = solve_sparse_symmetric(Sb, rb);

  HhoSolution sol;
  sol.faces = sol_full.head(nfd);
  sol.mean_multiplier = sol_full[nfd];
  const double rn = rb.norm();
  sol.condensed_residual = rn > 0.0 ? (Sb * sol_full - rb).norm() / rn : 0.0;
  sol.recon.degree = q + 1;
  sol.recon.coeffs.resize(static_cast<Eigen::Index>(mesh.tris.size()), nrb);
  sol.cell.resize(mesh.tris.size());
  for (size_t t = 0; t < mesh.tris.size(); ++t) {
    const VecX extra = sol.mean_multiplier * sys.cell_mean_vector(static_cast<int>(t));
    const VecX uc = sys.recover_cell(static_cast<int>(t), sol.faces, &extra);
    sol.cell[t] = uc;
    sol.recon.coeffs.row(static_cast<Eigen::Index>(t)) =
        sys.reconstruct_cell(static_cast<int>(t), uc, sys.gather_faces(static_cast<int>(t), sol.faces))
            .transpose();
  }
  (void)ncb;
  return sol;
}

} // namespace mshho
