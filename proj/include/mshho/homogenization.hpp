#pragma once

#include "mshho/coefficient.hpp"
#include "mshho/hho.hpp"

#include <array>
#include <memory>
#include <optional>

namespace mshho {

/// Discrete correctors mu_1, mu_2 on the periodic unit cell: zero-mean
/// periodic solutions of -div(A (grad mu_l + e_l)) = 0, together with the
/// discrete energy products needed for the homogenized tensor.
class CorrectorSet {
public:
  int q = 1;
  std::array<FineField, 2> mu;
  Mat2 energy = Mat2::Zero(); ///< a_h(mu_i, mu_j), the discrete Dirichlet form
  std::array<double, 2> mean_residual{};
  std::array<double, 2> solve_residual{};
  std::array<double, 2> periodic_mismatch{}; ///< face-unknown mismatch across identified faces

  const TriMesh& mesh() const { return *mesh_; }

  void attach_mesh(std::shared_ptr<const TriMesh> m) {
    mesh_ = std::move(m);
    locator_.emplace(*mesh_);
  }

  /// Corrector value at y, with periodic wrapping into the unit cell.
  double value(int l, const Vec2& y) const {
    const Vec2 yw(wrap_unit(y.x()), wrap_unit(y.y()));
    const int t = locator_->locate(yw);
    if (t < 0)
      throw NumericalError("corrector evaluation: point not located in the unit cell");
    return mu[static_cast<size_t>(l)].value(*mesh_, t, yw);
  }

  Vec2 gradient(int l, const Vec2& y) const {
    const Vec2 yw(wrap_unit(y.x()), wrap_unit(y.y()));
    const int t = locator_->locate(yw);
    if (t < 0)
      throw NumericalError("corrector evaluation: point not located in the unit cell");
    return mu[static_cast<size_t>(l)].grad(*mesh_, t, yw);
  }

private:
  std::shared_ptr<const TriMesh> mesh_;
  std::optional<TriLocator> locator_;
};

/// Solve the two corrector problems on a structured unit-cell triangulation
/// with `resolution` squares per side. The bordered periodic system is
/// factorized once and reused for both directions.
inline CorrectorSet solve_correctors(const DiffusionSpec& spec, int resolution, int q = 1) {
  if (resolution < 2)
    throw ConfigError("solve_correctors: resolution must be at least 2");
  auto mesh = std::make_shared<TriMesh>(structured_tri_mesh(resolution));
  const MatrixField A = [&spec](const Vec2& y) { return spec.unit_cell(y); };

  const EdgeNumbering num = periodic_numbering(*mesh);
  const int ncells = static_cast<int>(mesh->tris.size());
  const int nf = q + 1, ncb = CellBasis::dim(q), nrb = CellBasis::dim(q + 1);
  const int nfd = num.nblocks * nf;

  // local operators (kept for the energy products), condensation, and both
  // right-hand sides in one pass
  std::vector<HhoLocalOps> locals;
  locals.reserve(static_cast<size_t>(ncells));
  std::vector<Eigen::LLT<MatX>> llts(static_cast<size_t>(ncells));
  std::vector<MatX> Acfs(static_cast<size_t>(ncells));
  std::array<std::vector<VecX>, 2> bcell;
  bcell[0].resize(static_cast<size_t>(ncells));
  bcell[1].resize(static_cast<size_t>(ncells));
  std::array<VecX, 2> rf{VecX::Zero(nfd), VecX::Zero(nfd)};
  VecX gborder = VecX::Zero(nfd);
  double gamma = 0.0;
  std::array<double, 2> srhs{0.0, 0.0};
  std::vector<Triplet> trips;

  const auto scatter = [&](int t, const VecX& local, VecX& global) {
    const auto& tri = mesh->tris[static_cast<size_t>(t)];
    for (int e = 0; e < 3; ++e) {
      const int b = num.block[static_cast<size_t>(tri.edges[static_cast<size_t>(e)])];
      global.segment(b * nf, nf) += local.segment(e * nf, nf);
    }
  };

  for (int t = 0; t < ncells; ++t) {
    locals.push_back(build_hho_local(*mesh, t, q, A, spec.alpha));
    const HhoLocalOps& L = locals.back();
    llts[static_cast<size_t>(t)].compute(L.A.topLeftCorner(ncb, ncb));
    Acfs[static_cast<size_t>(t)] = L.A.topRightCorner(ncb, 3 * nf);
    const auto& llt = llts[static_cast<size_t>(t)];
    const MatX& Acf = Acfs[static_cast<size_t>(t)];
    const MatX S = L.A.bottomRightCorner(3 * nf, 3 * nf) - Acf.transpose() * llt.solve(Acf);
    const auto& tri = mesh->tris[static_cast<size_t>(t)];
    for (int ea = 0; ea < 3; ++ea)
      for (int eb = 0; eb < 3; ++eb) {
        const int ba = num.block[static_cast<size_t>(tri.edges[static_cast<size_t>(ea)])];
        const int bb = num.block[static_cast<size_t>(tri.edges[static_cast<size_t>(eb)])];
        for (int i = 0; i < nf; ++i)
          for (int j = 0; j < nf; ++j)
            trips.emplace_back(ba * nf + i, bb * nf + j, S(ea * nf + i, eb * nf + j));
      }
    // rhs for both directions: b = -R' g_l, g_l[i] = int A e_l . grad rb_i
    std::array<VecX, 2> g{VecX::Zero(nrb), VecX::Zero(nrb)};
    const TriRegion reg = mesh->tri_region(t);
    const auto& tr = reg.tris[0];
    const auto& rule = triangle_rule(2 * q + 2);
    const double jac = 2.0 * std::abs(detail::tri_area(tr[0], tr[1], tr[2]));
    MatX dphi;
    for (int kq = 0; kq < rule.weights.size(); ++kq) {
      const Vec2 x =
          tr[0] + rule.points(kq, 0) * (tr[1] - tr[0]) + rule.points(kq, 1) * (tr[2] - tr[0]);
      const Mat2 Ax = A(x);
      L.rb.eval_grad(x, dphi);
      g[0] += (jac * rule.weights[kq]) * (dphi * Ax.col(0));
      g[1] += (jac * rule.weights[kq]) * (dphi * Ax.col(1));
    }
    for (int l = 0; l < 2; ++l) {
      const VecX b = -L.R.transpose() * g[static_cast<size_t>(l)];
      bcell[static_cast<size_t>(l)][static_cast<size_t>(t)] = b.head(ncb);
      VecX bf = b.tail(3 * nf) - Acf.transpose() * llt.solve(b.head(ncb));
      scatter(t, bf, rf[static_cast<size_t>(l)]);
      srhs[static_cast<size_t>(l)] -= L.int_rb.head(ncb).dot(llt.solve(b.head(ncb)));
    }
    const VecX w = llt.solve(L.int_rb.head(ncb));
    gamma += L.int_rb.head(ncb).dot(w);
    VecX gl = -Acf.transpose() * w;
    scatter(t, gl, gborder);
  }

  // bordered system [S g; g' -gamma]
  for (int i = 0; i < nfd; ++i)
    if (gborder[i] != 0.0) {
      trips.emplace_back(i, nfd, gborder[i]);
      trips.emplace_back(nfd, i, gborder[i]);
    }
  trips.emplace_back(nfd, nfd, -gamma);
  SpMat Sb(nfd + 1, nfd + 1);
  Sb.setFromTriplets(trips.begin(), trips.end());
  Sb.makeCompressed();
  Eigen::SparseLU<SpMat> lu;
  lu.analyzePattern(Sb);
  lu.factorize(Sb);
  if (lu.info() != Eigen::Success)
    throw NumericalError("corrector solve: periodic bordered factorization failed");

  CorrectorSet out;
  out.q = q;
  std::array<std::vector<VecX>, 2> dofs; // full local dofs per cell, per direction
  for (int l = 0; l < 2; ++l) {
    VecX rhs(nfd + 1);
    rhs << rf[static_cast<size_t>(l)], srhs[static_cast<size_t>(l)];
    const VecX sol = lu.solve(rhs);
    const double rn = rhs.norm();
    out.solve_residual[static_cast<size_t>(l)] =
        rn > 0.0 ? (Sb * sol - rhs).norm() / rn : (Sb * sol).norm();
    const VecX uf = sol.head(nfd);
    const double nu = sol[nfd];
    out.mu[static_cast<size_t>(l)].degree = q + 1;
    out.mu[static_cast<size_t>(l)].coeffs.resize(ncells, nrb);
    dofs[static_cast<size_t>(l)].resize(static_cast<size_t>(ncells));
    double mean = 0.0;
    for (int t = 0; t < ncells; ++t) {
      const HhoLocalOps& L = locals[static_cast<size_t>(t)];
      VecX ufl(3 * nf);
      const auto& tri = mesh->tris[static_cast<size_t>(t)];
      for (int e = 0; e < 3; ++e)
        ufl.segment(e * nf, nf) = uf.segment(
            num.block[static_cast<size_t>(tri.edges[static_cast<size_t>(e)])] * nf, nf);
      const VecX uc = llts[static_cast<size_t>(t)].solve(
          bcell[static_cast<size_t>(l)][static_cast<size_t>(t)] -
          Acfs[static_cast<size_t>(t)] * ufl - nu * L.int_rb.head(ncb));
      VecX d(ncb + 3 * nf);
      d << uc, ufl;
      dofs[static_cast<size_t>(l)][static_cast<size_t>(t)] = d;
      out.mu[static_cast<size_t>(l)].coeffs.row(t) = (L.R * d).transpose();
      mean += L.int_rb.head(ncb).dot(uc);
    }
    out.mean_residual[static_cast<size_t>(l)] = std::abs(mean);
    out.periodic_mismatch[static_cast<size_t>(l)] = 0.0; // identified unknowns are shared
  }
  // discrete energies a_h(mu_i, mu_j)
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      double s = 0.0;
      for (int t = 0; t < ncells; ++t)
        s += dofs[static_cast<size_t>(i)][static_cast<size_t>(t)]
                 .dot(locals[static_cast<size_t>(t)].A *
                      dofs[static_cast<size_t>(j)][static_cast<size_t>(t)]);
      out.energy(i, j) = s;
    }
  out.attach_mesh(std::move(mesh));
  return out;
}

/// Homogenized tensor from the correctors, computed through both expressions
/// of the periodic formula: the symmetric integrand
///   [A0]_ij = int_Q A (e_j + grad mu_j) . (e_i + grad mu_i)
/// and the flux integrand
///   [A0]_ij = int_Q A (e_j + grad mu_j) . e_i .
/// Their disagreement signals an inconsistent solve.
struct HomogenizedTensor {
  Mat2 A0 = Mat2::Zero();            ///< flux form (reported value)
  Mat2 A0_symmetric = Mat2::Zero();  ///< symmetric form
  double form_disagreement = 0.0;    ///< relative difference of the two forms
  double stabilization_energy = 0.0; ///< resolution indicator
};

inline HomogenizedTensor homogenized_tensor(const DiffusionSpec& spec,
                                            const CorrectorSet& correctors,
                                            double tolerance = 1e-8) {
  const TriMesh& mesh = correctors.mesh();
  const int q = correctors.q;
  Mat2 Abar = Mat2::Zero(); // int_Q A
  Mat2 C = Mat2::Zero();    // C(i,l) = int_Q (A grad mu_l) . e_i
  Mat2 G = Mat2::Zero();    // G(i,j) = int_Q A grad mu_j . grad mu_i (quadrature)
  for (size_t t = 0; t < mesh.tris.size(); ++t) {
    const TriRegion reg = mesh.tri_region(static_cast<int>(t));
    const auto& tr = reg.tris[0];
    const auto& rule = triangle_rule(2 * q + 2);
    const double jac = 2.0 * std::abs(detail::tri_area(tr[0], tr[1], tr[2]));
    for (int kq = 0; kq < rule.weights.size(); ++kq) {
      const Vec2 x =
          tr[0] + rule.points(kq, 0) * (tr[1] - tr[0]) + rule.points(kq, 1) * (tr[2] - tr[0]);
      const double w = jac * rule.weights[kq];
      const Mat2 Ax = spec.unit_cell(x);
      Abar += w * Ax;
      Eigen::Matrix<double, 2, 2> gm;
      gm.col(0) = correctors.mu[0].grad(mesh, static_cast<int>(t), x);
      gm.col(1) = correctors.mu[1].grad(mesh, static_cast<int>(t), x);
      C += w * (Ax * gm);
      G += w * (gm.transpose() * Ax * gm);
    }
  }
  HomogenizedTensor out;
  out.A0 = Abar + C;
  // symmetric form with the quadrature gradient product replaced by the
  // discrete energy (the Dirichlet form the correctors actually satisfy)
  out.A0_symmetric = Abar + C + C.transpose() + correctors.energy.transpose();
  out.form_disagreement = (out.A0_symmetric - out.A0).norm() / out.A0.norm();
  out.stabilization_energy = (correctors.energy - G).norm();
  if (out.form_disagreement > tolerance)
    throw NumericalError("homogenized tensor: the two forms disagree by " +
                         std::to_string(out.form_disagreement) +
                         " (under-resolved correctors?)");
  return out;
}

/// First-order two-scale expansion evaluator
///   L_eps(u0)(x) = u0(x) + eps sum_l mu_l(x/eps) d_l u0(x).
struct TwoScaleExpansion {
  const CorrectorSet* correctors = nullptr;
  double eps = 1.0;
  ScalarField u0;
  VectorField grad_u0;
  std::function<Mat2(const Vec2&)> hess_u0; ///< needed for the gradient

  double value(const Vec2& x) const {
    const Vec2 g = grad_u0(x);
    double s = u0(x);
    for (int l = 0; l < 2; ++l)
      s += eps * correctors->value(l, x / eps) * g[l];
    return s;
  }

  Vec2 gradient(const Vec2& x) const {
    const Vec2 g = grad_u0(x);
    const Mat2 H = hess_u0(x);
    Vec2 out = g;
    for (int l = 0; l < 2; ++l) {
      out += correctors->gradient(l, x / eps) * g[l];
      out += eps * correctors->value(l, x / eps) * H.col(l);
    }
    return out;
  }
};

/// Scaling report of the two-scale expansion energy defect
///   E(eps) = || A_eps^(1/2) grad(u_eps - L_eps(u0)) ||_{L2(Omega)}
/// over a list of eps values, with the fitted slope of log E against log eps.
struct ExpansionDiagnostic {
  std::vector<double> eps_values;
  std::vector<double> energies;
  std::vector<double> fine_h;
  double fitted_slope = 0.0;
};

struct ExpansionDiagnosticOptions {
  int corrector_resolution = 64;
  int corrector_degree = 1;
  int fine_degree = 2;
  double fine_h_over_eps = 1.0 / 6.0; ///< fine mesh size relative to eps
  int u0_resolution = 128;
  int u0_degree = 2;
};

inline ExpansionDiagnostic expansion_energy_diagnostic(const DiffusionSpec& spec,
                                                       const ScalarField& f,
                                                       const std::vector<double>& eps_list,
                                                       const ExpansionDiagnosticOptions& opt = {}) {
  // correctors and homogenized tensor are eps-independent
  const CorrectorSet correctors = solve_correctors(spec, opt.corrector_resolution,
                                                   opt.corrector_degree);
  const Mat2 A0 = homogenized_tensor(spec, correctors).A0;
  const MatrixField A0_field = [A0](const Vec2&) { return A0; };
  const TriMesh u0_mesh = structured_tri_mesh(opt.u0_resolution);
  const HhoSolution u0_sol =
      solve_dirichlet(u0_mesh, opt.u0_degree, A0_field, f, A0.eigenvalues().real().minCoeff(), {},
                      2 * opt.u0_degree + 6);
  const TriLocator u0_loc(u0_mesh);
  const auto u0_val = [&](const Vec2& x) {
    return u0_sol.recon.value(u0_mesh, u0_loc.locate(x), x);
  };
  const auto u0_grad = [&](const Vec2& x) {
    return u0_sol.recon.grad(u0_mesh, u0_loc.locate(x), x);
  };
  const auto u0_hess = [&](const Vec2& x) {
    const int t = u0_loc.locate(x);
    const CellBasis b = cell_basis_for(u0_mesh, t, u0_sol.recon.degree);
    return b.hessian(u0_sol.recon.coeffs.row(t).transpose(), x);
  };

  ExpansionDiagnostic out;
  for (double eps : eps_list) {
    DiffusionSpec spec_eps = spec;
    spec_eps.epsilon = eps;
    const MatrixField Aeps = spec_eps.field();
    const double target_h = eps * opt.fine_h_over_eps;
    if (target_h > eps / 4.0 + 1e-15)
      throw ConfigError("expansion diagnostic: fine mesh does not resolve eps (h > eps/4)");
    const int n = std::max(2, static_cast<int>(std::ceil(std::sqrt(2.0) / target_h)));
    const TriMesh fine = structured_tri_mesh(n);
    const HhoSolution ue = solve_dirichlet(fine, opt.fine_degree, Aeps, f, spec.alpha, {},
                                           2 * opt.fine_degree + 6);
    TwoScaleExpansion L;
    L.correctors = &correctors;
    L.eps = eps;
    L.u0 = u0_val;
    L.grad_u0 = u0_grad;
    L.hess_u0 = u0_hess;
    double e2 = 0.0;
    for (size_t t = 0; t < fine.tris.size(); ++t) {
      const TriRegion reg = fine.tri_region(static_cast<int>(t));
      e2 += reg.integrate(2 * opt.fine_degree + 2, [&](const Vec2& x) {
        const Vec2 d = ue.recon.grad(fine, static_cast<int>(t), x) - L.gradient(x);
        return d.dot(Aeps(x) * d);
      });
    }
    out.eps_values.push_back(eps);
    out.energies.push_back(std::sqrt(e2));
    out.fine_h.push_back(fine.h);
  }
  // least-squares slope of log E vs log eps
  const size_t n = out.eps_values.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    const double lx = std::log(out.eps_values[i]), ly = std::log(out.energies[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  out.fitted_slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return out;
}

} // namespace mshho
