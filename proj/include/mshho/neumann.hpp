#pragma once

#include "mshho/hho.hpp"

#include <memory>
#include <vector>

namespace mshho {

/// Constrained Neumann solver on the fine sub-mesh of one coarse cell:
///   min 1/2 int_T A grad phi . grad phi - int_T g phi
///   s.t. the moments of the trace of phi against each coarse face basis take
///        prescribed values,
/// discretized with the equal-order monoscale HHO method and solved through
/// the Lagrange-multiplier (saddle-point) formulation. The bordered matrix is
/// factorized once; all basis functions of a cell reuse the factorization.
/// The multipliers are the polynomial Neumann traces of the solution.
class CellNeumannFactory {
public:
  struct Result {
    std::vector<VecX> cell;   ///< fine cell unknowns per triangle
    VecX faces;               ///< fine face unknowns (all edges)
    FineField recon;          ///< per-triangle reconstruction, degree q+1
    std::vector<VecX> lambda; ///< per coarse face: Neumann flux in the coarse face basis
    double solve_residual = 0.0;
    double compatibility_residual = 0.0; ///< |sum_F int_F lambda + int_T g| / scale
  };

  CellNeumannFactory(const TriMesh& submesh, int q, const MatrixField& A, double stab_weight,
                     std::vector<int> coarse_faces, std::vector<FaceBasis> coarse_fb)
      : mesh_(&submesh), q_(q), nf_(q + 1), coarse_faces_(std::move(coarse_faces)),
        coarse_fb_(std::move(coarse_fb)) {
    const int ncells = static_cast<int>(submesh.tris.size());
    const int nedges = static_cast<int>(submesh.edges.size());
    locals_.reserve(static_cast<size_t>(ncells));
    cond_.resize(static_cast<size_t>(ncells));
    std::vector<Triplet> trips;
    for (int t = 0; t < ncells; ++t) {
      locals_.push_back(build_hho_local(submesh, t, q, A, stab_weight));
      const HhoLocalOps& L = locals_.back();
      CellCond& cd = cond_[static_cast<size_t>(t)];
      const int ncb = L.ncb, nfd = 3 * nf_;
      cd.Acf = L.A.topRightCorner(ncb, nfd);
      cd.llt.compute(L.A.topLeftCorner(ncb, ncb));
      if (cd.llt.info() != Eigen::Success)
        throw NumericalError("constrained Neumann: cell block not positive definite");
      const MatX S = L.A.bottomRightCorner(nfd, nfd) - cd.Acf.transpose() * cd.llt.solve(cd.Acf);
      for (int ea = 0; ea < 3; ++ea)
        for (int eb = 0; eb < 3; ++eb)
          for (int i = 0; i < nf_; ++i)
            for (int j = 0; j < nf_; ++j)
              trips.emplace_back(L.edge_ids[static_cast<size_t>(ea)] * nf_ + i,
                                 L.edge_ids[static_cast<size_t>(eb)] * nf_ + j,
                                 S(ea * nf_ + i, eb * nf_ + j));
    }
    nfdofs_ = nedges * nf_;
    // constraint rows: per coarse face F and coarse mode j,
    // sum_{sigma in F} int_sigma u_sigma Phi_F^j
    nk_ = coarse_fb_.empty() ? 0 : coarse_fb_[0].size();
    ncons_ = static_cast<int>(coarse_faces_.size()) * nk_;
    std::vector<Triplet> btrips;
    for (size_t fl = 0; fl < coarse_faces_.size(); ++fl) {
      for (int e = 0; e < nedges; ++e) {
        const auto& edge = submesh.edges[static_cast<size_t>(e)];
        if (edge.parent_face != coarse_faces_[fl])
          continue;
        const FaceBasis fb = face_basis_for(submesh, e, q);
        const Vec2 a = submesh.nodes[static_cast<size_t>(edge.v0)],
                   b = submesh.nodes[static_cast<size_t>(edge.v1)];
        const auto& rule = segment_rule(q + nk_);
        MatX M = MatX::Zero(nk_, nf_);
        VecX psi, chi;
        for (int k = 0; k < rule.weights.size(); ++k) {
          const Vec2 x = a + rule.points(k, 0) * (b - a);
          fb.eval(x, psi);
          coarse_fb_[fl].eval(x, chi);
          M += (edge.length * rule.weights[k]) * chi * psi.transpose();
        }
        for (int j = 0; j < nk_; ++j)
          for (int i = 0; i < nf_; ++i)
            btrips.emplace_back(static_cast<int>(fl) * nk_ + j, e * nf_ + i, M(j, i));
      }
    }
    // bordered sparse matrix [S B'; B 0]
    const int ntot = nfdofs_ + ncons_;
    for (const auto& bt : btrips) {
      trips.emplace_back(nfdofs_ + bt.row(), bt.col(), bt.value());
      trips.emplace_back(bt.col(), nfdofs_ + bt.row(), bt.value());
    }
    SpMat Sb(ntot, ntot);
    Sb.setFromTriplets(trips.begin(), trips.end());
    Sb.makeCompressed();
    bordered_ = Sb;
    lu_ = std::make_unique<Eigen::SparseLU<SpMat>>();
    lu_->analyzePattern(bordered_);
    lu_->factorize(bordered_);
    if (lu_->info() != Eigen::Success)
      throw NumericalError("constrained Neumann: bordered factorization failed "
                           "(rank-deficient constraints?)");
  }

  const TriMesh& mesh() const { return *mesh_; }
  int q() const { return q_; }
  const std::vector<HhoLocalOps>& locals() const { return locals_; }
  int n_constraints() const { return ncons_; }

  /// Solve for a polynomial cell source (coefficients in `source_basis`, may
  /// be null for zero source) and per-coarse-face moment targets.
  Result solve(const CellBasis* source_basis, const VecX* source_coeffs,
               const std::vector<VecX>& targets) const {
    const int ncb = CellBasis::dim(q_);
    const int ncells = static_cast<int>(mesh_->tris.size());
    std::vector<VecX> bc(static_cast<size_t>(ncells));
    VecX rhs = VecX::Zero(nfdofs_ + ncons_);
    for (int t = 0; t < ncells; ++t) {
      const HhoLocalOps& L = locals_[static_cast<size_t>(t)];
      VecX b = VecX::Zero(ncb);
      if (source_basis && source_coeffs) {
        const TriRegion r = mesh_->tri_region(t);
        const auto& tr = r.tris[0];
        const auto& rule = triangle_rule(q_ + std::max(0, source_basis->degree) + 1);
        const double jac = 2.0 * std::abs(detail::tri_area(tr[0], tr[1], tr[2]));
        VecX phi;
        for (int k = 0; k < rule.weights.size(); ++k) {
          const Vec2 x =
              tr[0] + rule.points(k, 0) * (tr[1] - tr[0]) + rule.points(k, 1) * (tr[2] - tr[0]);
          L.rb.eval(x, phi);
          b += (jac * rule.weights[k] * source_basis->value(*source_coeffs, x)) * phi.head(ncb);
        }
      }
      bc[static_cast<size_t>(t)] = b;
      const VecX w = cond_[static_cast<size_t>(t)].llt.solve(b);
      const VecX bf = -cond_[static_cast<size_t>(t)].Acf.transpose() * w;
      for (int e = 0; e < 3; ++e)
        rhs.segment(L.edge_ids[static_cast<size_t>(e)] * nf_, nf_) += bf.segment(e * nf_, nf_);
    }
    for (size_t fl = 0; fl < coarse_faces_.size(); ++fl)
      rhs.segment(nfdofs_ + static_cast<int>(fl) * nk_, nk_) = targets[fl];

    const VecX sol = lu_->solve(rhs);
    Result res;
    res.faces = sol.head(nfdofs_);
    const VecX mu = sol.tail(ncons_);
    const double rn = rhs.norm();
    res.solve_residual = rn > 0.0 ? (bordered_ * sol - rhs).norm() / rn : 0.0;
    res.lambda.resize(coarse_faces_.size());
    for (size_t fl = 0; fl < coarse_faces_.size(); ++fl)
      res.lambda[fl] = -mu.segment(static_cast<int>(fl) * nk_, nk_);
    res.cell.resize(static_cast<size_t>(ncells));
    res.recon.degree = q_ + 1;
    res.recon.coeffs.resize(ncells, CellBasis::dim(q_ + 1));
    for (int t = 0; t < ncells; ++t) {
      const HhoLocalOps& L = locals_[static_cast<size_t>(t)];
      VecX uf(3 * nf_);
      for (int e = 0; e < 3; ++e)
        uf.segment(e * nf_, nf_) =
            res.faces.segment(L.edge_ids[static_cast<size_t>(e)] * nf_, nf_);
      const VecX uc = cond_[static_cast<size_t>(t)].llt.solve(
          bc[static_cast<size_t>(t)] - cond_[static_cast<size_t>(t)].Acf * uf);
      res.cell[static_cast<size_t>(t)] = uc;
      VecX dofs(ncb + 3 * nf_);
      dofs << uc, uf;
      res.recon.coeffs.row(t) = (L.R * dofs).transpose();
    }
    // compatibility: sum_F int_F lambda_F = -int_T g
    double flux_sum = 0.0, source_int = 0.0, scale = 0.0;
    for (size_t fl = 0; fl < coarse_faces_.size(); ++fl) {
      // int_F Phi_j against the constant 1 is the first column of the moment
      // of the basis over the face; integrate directly
      const FaceBasis& cfb = coarse_fb_[fl];
      const Vec2 a = cfb.midpoint - cfb.half_length * cfb.tangent;
      const Vec2 b = cfb.midpoint + cfb.half_length * cfb.tangent;
      flux_sum += integrate_segment(a, b, 2 * nk_, [&](const Vec2& x) {
        return cfb.value(res.lambda[fl], x);
      });
      scale += integrate_segment(a, b, 2 * nk_, [&](const Vec2& x) {
        return std::abs(cfb.value(res.lambda[fl], x));
      });
    }
    if (source_basis && source_coeffs)
      for (int t = 0; t < ncells; ++t)
        source_int += mesh_->tri_region(t).integrate(
            std::max(1, source_basis->degree) + 1,
            [&](const Vec2& x) { return source_basis->value(*source_coeffs, x); });
    res.compatibility_residual = std::abs(flux_sum + source_int) / std::max(1.0, scale);
    return res;
  }

  /// Discrete energy product a_h(a, b) over the sub-mesh (the composite
  /// fine-quadrature realization of int_T A grad a . grad b).
  double energy_product(const std::vector<VecX>& cell_a, const VecX& faces_a,
                        const std::vector<VecX>& cell_b, const VecX& faces_b) const {
    double s = 0.0;
    const int ncb = CellBasis::dim(q_);
    for (size_t t = 0; t < mesh_->tris.size(); ++t) {
      const HhoLocalOps& L = locals_[t];
      VecX da(ncb + 3 * nf_), db(ncb + 3 * nf_);
      da.head(ncb) = cell_a[t];
      db.head(ncb) = cell_b[t];
      for (int e = 0; e < 3; ++e) {
        da.segment(ncb + e * nf_, nf_) =
            faces_a.segment(L.edge_ids[static_cast<size_t>(e)] * nf_, nf_);
        db.segment(ncb + e * nf_, nf_) =
            faces_b.segment(L.edge_ids[static_cast<size_t>(e)] * nf_, nf_);
      }
      s += da.dot(L.A * db);
    }
    return s;
  }

  double energy_product(const Result& a, const Result& b) const {
    return energy_product(a.cell, a.faces, b.cell, b.faces);
  }

  /// Fine-trace moments of a result against the coarse face bases (the
  /// constraint values actually attained).
  std::vector<VecX> face_moments(const Result& r) const {
    std::vector<VecX> out(coarse_faces_.size(), VecX::Zero(nk_));
    for (size_t fl = 0; fl < coarse_faces_.size(); ++fl) {
      for (size_t e = 0; e < mesh_->edges.size(); ++e) {
        const auto& edge = mesh_->edges[e];
        if (edge.parent_face != coarse_faces_[fl])
          continue;
        const FaceBasis fb = face_basis_for(*mesh_, static_cast<int>(e), q_);
        const Vec2 a = mesh_->nodes[static_cast<size_t>(edge.v0)],
                   b = mesh_->nodes[static_cast<size_t>(edge.v1)];
        const VecX useg = r.faces.segment(static_cast<int>(e) * nf_, nf_);
        VecX chi;
        const auto& rule = segment_rule(q_ + nk_);
        for (int k = 0; k < rule.weights.size(); ++k) {
          const Vec2 x = a + rule.points(k, 0) * (b - a);
          coarse_fb_[fl].eval(x, chi);
          out[fl] += (edge.length * rule.weights[k] * fb.value(useg, x)) * chi;
        }
      }
    }
    return out;
  }

  /// Integral of the cell unknowns over the sub-mesh.
  double integral(const Result& r) const {
    double s = 0.0;
    const int ncb = CellBasis::dim(q_);
    for (size_t t = 0; t < mesh_->tris.size(); ++t)
      s += locals_[t].int_rb.head(ncb).dot(r.cell[t]);
    return s;
  }

private:
  struct CellCond {
    MatX Acf;
    Eigen::LLT<MatX> llt;
  };

  const TriMesh* mesh_;
  int q_, nf_;
  std::vector<int> coarse_faces_;
  std::vector<FaceBasis> coarse_fb_;
  std::vector<HhoLocalOps> locals_;
  std::vector<CellCond> cond_;
  SpMat bordered_;
  std::unique_ptr<Eigen::SparseLU<SpMat>> lu_;
  int nfdofs_ = 0, ncons_ = 0, nk_ = 0;
};

} // namespace mshho
