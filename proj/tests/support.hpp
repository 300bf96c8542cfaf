#pragma once

// Shared test-side oracles: kept out of the library so every check they make
// stays independent of the code paths they verify.

#include "mshho/mshho.hpp"

namespace mshho::testing {

/// Interface face polynomials of the directly assembled nonconforming system
/// on a two-cell mesh: per-cell coefficient unknowns in the local oscillatory
/// spaces, face-moment matching enforced with Lagrange multipliers. Returns
/// the projection of the oracle solution onto the interface face basis.
inline VecX ncfe_interface_solution(const CoarseMesh& mesh, const std::vector<CellBasisSet>& sets,
                                    const std::vector<LocalOperatorPack>& packs,
                                    const ScalarField& f) {
  if (mesh.cells.size() != 2 || mesh.interior_faces.size() != 1)
    throw ConfigError("ncfe oracle expects the two-cell mesh");
  const Variant variant = packs[0].variant;
  const int k = packs[0].k;
  const int N = sets[0].dimension();
  const int iface = mesh.interior_faces[0];

  MatX K2 = MatX::Zero(2 * N, 2 * N);
  VecX rhs = VecX::Zero(2 * N);
  for (int c = 0; c < 2; ++c) {
    const CellBasisSet& set = sets[static_cast<size_t>(c)];
    const LocalOperatorPack& p = packs[static_cast<size_t>(c)];
    if (variant == Variant::Mixed)
      K2.block(c * N, c * N, N, N) = set.K;
    else
      K2.block(c * N, c * N, N, N) = p.reduction.transpose() * p.A * p.reduction;
    VecX fm = VecX::Zero(set.poly_k.size());
    const TriRegion region = mesh.cell_region(c);
    VecX phi;
    for (const auto& tr : region.tris) {
      const auto& rule = triangle_rule(10);
      const double jac = 2.0 * std::abs(detail::tri_area(tr[0], tr[1], tr[2]));
      for (int kq = 0; kq < rule.weights.size(); ++kq) {
        const Vec2 x =
            tr[0] + rule.points(kq, 0) * (tr[1] - tr[0]) + rule.points(kq, 1) * (tr[2] - tr[0]);
        set.poly_k.eval(x, phi);
        fm += (jac * rule.weights[kq] * f(x)) * phi;
      }
    }
    const int ncell = p.ncell;
    rhs.segment(c * N, N) =
        set.cell_moments_k.topRows(ncell).transpose() *
        Eigen::LLT<MatX>(set.gram_k.topLeftCorner(ncell, ncell)).solve(fm.head(ncell));
  }
  std::vector<MatX> rows;
  int ncons = 0;
  for (int c = 0; c < 2; ++c) {
    const CellBasisSet& set = sets[static_cast<size_t>(c)];
    for (size_t fl = 0; fl < set.faces.size(); ++fl) {
      if (set.faces[fl] == iface && c == 1)
        continue;
      MatX row = MatX::Zero(k + 1, 2 * N);
      row.middleCols(c * N, N) = set.face_moments[fl];
      if (set.faces[fl] == iface)
        for (size_t gl = 0; gl < sets[1].faces.size(); ++gl)
          if (sets[1].faces[gl] == iface)
            row.middleCols(N, N) -= sets[1].face_moments[gl];
      rows.push_back(row);
      ncons += k + 1;
    }
  }
  MatX B = MatX::Zero(ncons, 2 * N);
  int at = 0;
  for (const auto& r : rows) {
    B.middleRows(at, r.rows()) = r;
    at += static_cast<int>(r.rows());
  }
  const auto saddle = solve_saddle(K2, B, rhs, VecX::Zero(ncons));
  int fl0 = -1;
  for (size_t i = 0; i < sets[0].faces.size(); ++i)
    if (sets[0].faces[i] == iface)
      fl0 = static_cast<int>(i);
  return Eigen::LLT<MatX>(sets[0].gram_face[static_cast<size_t>(fl0)])
      .solve(sets[0].face_moments[static_cast<size_t>(fl0)] * saddle.x.head(N));
}

/// Least-squares slope of log y against log x.
inline double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (static_cast<double>(n) * sxy - sx * sy) / (static_cast<double>(n) * sxx - sx * sx);
}

} // namespace mshho::testing
