#pragma once

#include "mshho/types.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <Eigen/IterativeLinearSolvers>

#include <sstream>
#include <vector>

namespace mshho {

struct SpdSolveResult {
  VecX x;
  double relative_residual = 0.0;
};

/// Dense SPD solve by Cholesky. A non-positive pivot aborts with the offending
/// index, which localizes indefiniteness for the caller.
inline SpdSolveResult solve_spd(const MatX& K, const VecX& g) {
  const int n = static_cast<int>(K.rows());
  if (K.cols() != n || g.size() != n)
    throw ConfigError("solve_spd: dimension mismatch");
  MatX L = MatX::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    double d = K(j, j) - L.row(j).head(j).squaredNorm();
    if (!(d > 0.0)) {
      std::ostringstream oss;
      oss << "solve_spd: non-positive pivot " << d << " at index " << j
          << " (matrix not positive definite)";
      throw NumericalError(oss.str());
    }
    L(j, j) = std::sqrt(d);
    for (int i = j + 1; i < n; ++i)
      L(i, j) = (K(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / L(j, j);
  }
  SpdSolveResult r;
  r.x = L.transpose().triangularView<Eigen::Upper>().solve(
      L.triangularView<Eigen::Lower>().solve(g));
  const double gn = g.norm();
  r.relative_residual = gn > 0.0 ? (K * r.x - g).norm() / gn : (K * r.x).norm();
  return r;
}

struct SaddleSolveResult {
  VecX x;
  VecX multipliers;
  double kkt_residual = 0.0;
};

/// Solve the KKT system of  min 1/2 x'Kx - g'x  s.t.  Bx = c, i.e.
///   [K B'; B 0] [x; mu] = [g; c].
/// K must be symmetric positive semi-definite with ker(K) ∩ ker(B) = {0}.
/// Rank-deficient constraints abort with the indices of the redundant rows;
/// infeasible constraints abort with the infeasibility residual.
inline SaddleSolveResult solve_saddle(const MatX& K, const MatX& B, const VecX& g, const VecX& c) {
  const int n = static_cast<int>(K.rows());
  const int m = static_cast<int>(B.rows());
  if (K.cols() != n || B.cols() != n || g.size() != n || c.size() != m)
    throw ConfigError("solve_saddle: dimension mismatch");
  if (m > 0) {
    const double sym = (K - K.transpose()).norm() / std::max(1.0, K.norm());
    if (sym > 1e-12)
      throw NumericalError("solve_saddle: K is not symmetric (relative asymmetry " +
                           std::to_string(sym) + ")");
    Eigen::ColPivHouseholderQR<MatX> qr(B.transpose());
    qr.setThreshold(1e-10);
    const int rank = static_cast<int>(qr.rank());
    if (rank < m) {
      // the columns of B' rejected by the pivoting are the redundant rows of B
      std::ostringstream oss;
      oss << "solve_saddle: constraint matrix is rank deficient (rank " << rank << " of " << m
          << "); redundant constraint rows:";
      const auto perm = qr.colsPermutation().indices();
      for (int i = rank; i < m; ++i)
        oss << ' ' << perm[i];
      // distinguish genuinely redundant from infeasible constraints
      const VecX xls = B.colPivHouseholderQr().solve(c);
      const double infeas = (B * xls - c).norm();
      if (infeas > 1e-10 * std::max(1.0, c.norm()))
        oss << "; constraints are infeasible (residual " << infeas << ")";
      throw NumericalError(oss.str());
    }
  }
  MatX S(n + m, n + m);
  S << K, B.transpose(), B, MatX::Zero(m, m);
  VecX rhs(n + m);
  rhs << g, c;
  Eigen::FullPivLU<MatX> lu(S);
  if (!lu.isInvertible())
    throw NumericalError("solve_saddle: KKT matrix is singular (constant mode not pinned?)");
  const VecX sol = lu.solve(rhs);
  SaddleSolveResult r;
  r.x = sol.head(n);
  r.multipliers = sol.tail(m);
  const double rn = rhs.norm();
  r.kkt_residual = rn > 0.0 ? (S * sol - rhs).norm() / rn : (S * sol).norm();
  if (r.kkt_residual > 1e-9)
    throw NumericalError("solve_saddle: KKT residual " + std::to_string(r.kkt_residual) +
                         " exceeds tolerance");
  return r;
}

/// Options for the global condensed solves.
struct SparseSolveOptions {
  bool use_cg = false;
  double cg_tolerance = 1e-10;
  int cg_max_iterations = 20000;
};

/// Sparse SPD solve: Cholesky with fill-reducing ordering by default, CG
/// behind a flag.
inline VecX solve_sparse_spd(const SpMat& A, const VecX& b, const SparseSolveOptions& opt = {}) {
  if (opt.use_cg) {
    Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(opt.cg_tolerance);
    cg.setMaxIterations(opt.cg_max_iterations);
    cg.compute(A);
    const VecX x = cg.solve(b);
    if (cg.info() != Eigen::Success)
      throw NumericalError("conjugate gradient did not converge (error " +
                           std::to_string(cg.error()) + ")");
    return x;
  }
  Eigen::SimplicialLLT<SpMat> llt(A);
  if (llt.info() != Eigen::Success)
    throw NumericalError("sparse Cholesky failed: condensed matrix not positive definite");
  return llt.solve(b);
}

/// Sparse symmetric-indefinite (bordered/saddle) solve via sparse LU.
inline VecX solve_sparse_symmetric(const SpMat& A, const VecX& b) {
  Eigen::SparseLU<SpMat> lu;
  lu.analyzePattern(A);
  lu.factorize(A);
  if (lu.info() != Eigen::Success)
    throw NumericalError("sparse LU factorization of the bordered system failed");
  return lu.solve(b);
}

} // namespace mshho
