#pragma once

#include "mshho/mesh.hpp"
#include "mshho/quadrature.hpp"
#include "mshho/types.hpp"

#include <Eigen/Eigenvalues>

#include <vector>

namespace mshho {

/// Scaled monomial basis of P^q on a 2D region: ((x-c)/s)^a ((y-c)/s)^b,
/// a+b <= q, ordered by total degree then by increasing y-exponent. Centering
/// at the barycenter with s = H/2 keeps the Gram conditioning independent of
/// the region size.
struct CellBasis {
  Vec2 center = Vec2::Zero();
  double scale = 1.0;
  int degree = 0;
  std::vector<std::array<int, 2>> exps;

  CellBasis() = default;
  CellBasis(const Vec2& c, double s, int q) : center(c), scale(s), degree(q) {
    for (int d = 0; d <= q; ++d)
      for (int ay = 0; ay <= d; ++ay)
        exps.push_back({d - ay, ay});
  }

  static int dim(int q) { return q < 0 ? 0 : (q + 1) * (q + 2) / 2; }
  int size() const { return static_cast<int>(exps.size()); }

  void eval(const Vec2& x, VecX& out) const {
    const double u = (x.x() - center.x()) / scale, v = (x.y() - center.y()) / scale;
    out.resize(size());
    for (int i = 0; i < size(); ++i)
      out[i] = std::pow(u, exps[static_cast<size_t>(i)][0]) *
               std::pow(v, exps[static_cast<size_t>(i)][1]);
  }

  VecX eval(const Vec2& x) const {
    VecX out;
    eval(x, out);
    return out;
  }

  /// Gradients, one row per basis function.
  void eval_grad(const Vec2& x, MatX& out) const {
    const double u = (x.x() - center.x()) / scale, v = (x.y() - center.y()) / scale;
    out.resize(size(), 2);
    for (int i = 0; i < size(); ++i) {
      const int a = exps[static_cast<size_t>(i)][0], b = exps[static_cast<size_t>(i)][1];
      out(i, 0) = a == 0 ? 0.0 : a * std::pow(u, a - 1) * std::pow(v, b) / scale;
      out(i, 1) = b == 0 ? 0.0 : b * std::pow(u, a) * std::pow(v, b - 1) / scale;
    }
  }

  double value(const VecX& coeffs, const Vec2& x) const { return coeffs.dot(eval(x)); }

  Vec2 gradient(const VecX& coeffs, const Vec2& x) const {
    MatX g;
    eval_grad(x, g);
    return g.transpose() * coeffs;
  }

  Mat2 hessian(const VecX& coeffs, const Vec2& x) const {
    const double u = (x.x() - center.x()) / scale, v = (x.y() - center.y()) / scale;
    Mat2 H = Mat2::Zero();
    for (int i = 0; i < size(); ++i) {
      const int a = exps[static_cast<size_t>(i)][0], b = exps[static_cast<size_t>(i)][1];
      const double c = coeffs[i] / (scale * scale);
      if (a >= 2)
        H(0, 0) += c * a * (a - 1) * std::pow(u, a - 2) * std::pow(v, b);
      if (b >= 2)
        H(1, 1) += c * b * (b - 1) * std::pow(u, a) * std::pow(v, b - 2);
      if (a >= 1 && b >= 1)
        H(0, 1) += c * a * b * std::pow(u, a - 1) * std::pow(v, b - 1);
    }
    H(1, 0) = H(0, 1);
    return H;
  }
};

inline CellBasis cell_basis_for(const CoarseMesh& m, int cell, int q) {
  const auto& c = m.cells[static_cast<size_t>(cell)];
  return CellBasis(c.centroid, 0.5 * c.diameter, q);
}

inline CellBasis cell_basis_for(const TriMesh& m, int tri, int q) {
  const auto& t = m.tris[static_cast<size_t>(tri)];
  return CellBasis(t.centroid, 0.5 * t.diameter, q);
}

/// 1D polynomial basis t^j on a face, with t the signed arc coordinate
/// centered at the midpoint and scaled by the half-length. The parametrization
/// follows the face's canonical vertex order, so both incident cells agree.
struct FaceBasis {
  Vec2 midpoint = Vec2::Zero();
  Vec2 tangent = Vec2::Zero();
  double half_length = 1.0;
  int degree = 0;

  FaceBasis() = default;
  FaceBasis(const Vec2& mid, const Vec2& tan, double hl, int q)
      : midpoint(mid), tangent(tan), half_length(hl), degree(q) {}

  int size() const { return degree + 1; }

  double param(const Vec2& x) const { return tangent.dot(x - midpoint) / half_length; }

  void eval(const Vec2& x, VecX& out) const {
    const double t = param(x);
    out.resize(size());
    double p = 1.0;
    for (int j = 0; j < size(); ++j) {
      out[j] = p;
      p *= t;
    }
  }

  VecX eval(const Vec2& x) const {
    VecX out;
    eval(x, out);
    return out;
  }

  double value(const VecX& coeffs, const Vec2& x) const { return coeffs.dot(eval(x)); }
};

inline FaceBasis face_basis_for(const CoarseMesh& m, int face, int q) {
  const auto& f = m.faces[static_cast<size_t>(face)];
  return FaceBasis(f.midpoint, f.tangent, 0.5 * f.length, q);
}

inline FaceBasis face_basis_for(const TriMesh& m, int edge, int q) {
  const auto& e = m.edges[static_cast<size_t>(edge)];
  return FaceBasis(e.midpoint, e.tangent, 0.5 * e.length, q);
}

/// Gram matrix of a cell basis over a triangulated region.
inline MatX gram_matrix(const CellBasis& basis, const TriRegion& region, int extra_exactness = 0) {
  const int n = basis.size();
  MatX G = MatX::Zero(n, n);
  const int exact = 2 * basis.degree + extra_exactness;
  for (const auto& t : region.tris) {
    const auto& rule = triangle_rule(exact);
    const double jac = 2.0 * std::abs(detail::tri_area(t[0], t[1], t[2]));
    VecX phi;
    for (int q = 0; q < rule.weights.size(); ++q) {
      const Vec2 x = t[0] + rule.points(q, 0) * (t[1] - t[0]) + rule.points(q, 1) * (t[2] - t[0]);
      basis.eval(x, phi);
      G.selfadjointView<Eigen::Lower>().rankUpdate(phi, jac * rule.weights[q]);
    }
  }
  return G.selfadjointView<Eigen::Lower>();
}

/// Gram matrix of a face basis over the segment [a,b].
inline MatX gram_matrix(const FaceBasis& basis, const Vec2& a, const Vec2& b) {
  const int n = basis.size();
  MatX G = MatX::Zero(n, n);
  const auto& rule = segment_rule(2 * basis.degree);
  const double len = (b - a).norm();
  VecX phi;
  for (int q = 0; q < rule.weights.size(); ++q) {
    const Vec2 x = a + rule.points(q, 0) * (b - a);
    basis.eval(x, phi);
    G += (len * rule.weights[q]) * phi * phi.transpose();
  }
  return G;
}

/// Result of an L2 projection: coefficients plus the relative residual of the
/// normal equations.
struct Projection {
  VecX coeffs;
  double relative_residual = 0.0;
};

namespace detail {

inline Projection solve_projection(const MatX& G, const VecX& m) {
  Eigen::LLT<MatX> llt(G);
  if (llt.info() != Eigen::Success)
    throw NumericalError("projection Gram matrix is not positive definite (degenerate geometry?)");
  Projection p;
  p.coeffs = llt.solve(m);
  const double mn = m.norm();
  p.relative_residual = mn > 0.0 ? (G * p.coeffs - m).norm() / mn : (G * p.coeffs).norm();
  return p;
}

} // namespace detail

/// L2-orthogonal projection of f onto the span of `basis` over `region`.
/// `exactness` controls the quadrature for the moments of f.
template <class F>
Projection project_onto_cell_basis(const CellBasis& basis, const TriRegion& region, F&& f,
                                   int exactness) {
  const MatX G = gram_matrix(basis, region);
  VecX m = VecX::Zero(basis.size());
  VecX phi;
  for (const auto& t : region.tris) {
    const auto& rule = triangle_rule(std::max(exactness, 2 * basis.degree));
    const double jac = 2.0 * std::abs(detail::tri_area(t[0], t[1], t[2]));
    for (int q = 0; q < rule.weights.size(); ++q) {
      const Vec2 x = t[0] + rule.points(q, 0) * (t[1] - t[0]) + rule.points(q, 1) * (t[2] - t[0]);
      basis.eval(x, phi);
      m += (jac * rule.weights[q] * f(x)) * phi;
    }
  }
  return detail::solve_projection(G, m);
}

/// L2-orthogonal projection of f onto a face basis over the segment [a,b].
template <class F>
Projection project_onto_face_basis(const FaceBasis& basis, const Vec2& a, const Vec2& b, F&& f,
                                   int exactness) {
  const MatX G = gram_matrix(basis, a, b);
  VecX m = VecX::Zero(basis.size());
  const auto& rule = segment_rule(std::max(exactness, 2 * basis.degree));
  const double len = (b - a).norm();
  VecX phi;
  for (int q = 0; q < rule.weights.size(); ++q) {
    const Vec2 x = a + rule.points(q, 0) * (b - a);
    basis.eval(x, phi);
    m += (len * rule.weights[q] * f(x)) * phi;
  }
  return detail::solve_projection(G, m);
}

/// Composite integration of a field that oscillates at scale eps: integrate
/// over the fine triangles of `region` and re-integrate at doubled rule order
/// as a self-check.
struct OscillatoryIntegral {
  double value = 0.0;
  double self_check_error = 0.0; ///< |value - value at doubled order| / max(1,|value|)
};

template <class F>
OscillatoryIntegral oscillatory_quadrature(const TriRegion& region, F&& f, int exactness = 6,
                                           double tol = 1e-8) {
  OscillatoryIntegral out;
  out.value = region.integrate(exactness, f);
  const double refined = region.integrate(2 * exactness, f);
  out.self_check_error = std::abs(out.value - refined) / std::max(1.0, std::abs(refined));
  if (out.self_check_error > tol)
    throw NumericalError("oscillatory quadrature did not converge (self-check " +
                         std::to_string(out.self_check_error) + "); refine the sub-mesh");
  return out;
}

/// Measured constants of the discrete trace and local Poincare inequalities
/// on a cell, taken over polynomial test functions of the given degree.
struct FunctionalInequalityReport {
  double trace_constant = 0.0;    ///< max over faces of sup ||v||_F H_F^(1/2) / ||v||_T
  double poincare_constant = 0.0; ///< sup ||v||_T / (H_T ||grad v||_T) over zero-mean v
};

inline FunctionalInequalityReport verify_functional_inequalities(const CoarseMesh& mesh, int cell,
                                                                 int q) {
  const auto& c = mesh.cells[static_cast<size_t>(cell)];
  const CellBasis basis = cell_basis_for(mesh, cell, q);
  const TriRegion region = mesh.cell_region(cell);
  const MatX G = gram_matrix(basis, region);
  const int n = basis.size();

  FunctionalInequalityReport rep;
  // trace constant: generalized eigenproblem H_F * M_F x = lambda G x per face
  for (size_t i = 0; i < c.faces.size(); ++i) {
    const auto& f = mesh.faces[static_cast<size_t>(c.faces[i])];
    const Vec2 a = mesh.nodes[static_cast<size_t>(f.v0)], b = mesh.nodes[static_cast<size_t>(f.v1)];
    MatX Mf = MatX::Zero(n, n);
    const auto& rule = segment_rule(2 * q);
    VecX phi;
    for (int k = 0; k < rule.weights.size(); ++k) {
      const Vec2 x = a + rule.points(k, 0) * (b - a);
      basis.eval(x, phi);
      Mf += (f.length * rule.weights[k]) * phi * phi.transpose();
    }
    Eigen::GeneralizedSelfAdjointEigenSolver<MatX> ges(f.length * Mf, G);
    rep.trace_constant = std::max(rep.trace_constant, std::sqrt(ges.eigenvalues().maxCoeff()));
  }
  if (q >= 1) {
    // Poincare: restrict to the zero-mean subspace spanned by the non-constant
    // basis functions minus their means.
    MatX K = MatX::Zero(n, n);
    for (const auto& t : region.tris) {
      const auto& rule = triangle_rule(2 * q);
      const double jac = 2.0 * std::abs(detail::tri_area(t[0], t[1], t[2]));
      MatX g;
      for (int k = 0; k < rule.weights.size(); ++k) {
        const Vec2 x = t[0] + rule.points(k, 0) * (t[1] - t[0]) + rule.points(k, 1) * (t[2] - t[0]);
        basis.eval_grad(x, g);
        K += (jac * rule.weights[k]) * g * g.transpose();
      }
    }
    // zero-mean map: v_i -> v_i - mean(v_i); in coefficients, subtract the
    // mean from the constant coefficient.
    MatX Z = MatX::Zero(n, n - 1);
    const double area = region.area();
    for (int i = 1; i < n; ++i) {
      Z(i, i - 1) = 1.0;
      // mean of basis fn i
      const double mi = region.integrate(q, [&](const Vec2& x) { return basis.eval(x)[i]; }) / area;
      Z(0, i - 1) = -mi;
    }
    const MatX Mz = Z.transpose() * G * Z;
    const MatX Kz = Z.transpose() * K * Z;
    Eigen::GeneralizedSelfAdjointEigenSolver<MatX> ges(Mz, Kz);
    rep.poincare_constant = std::sqrt(ges.eigenvalues().maxCoeff()) / c.diameter;
  }
  return rep;
}

/// Condition number of an SPD matrix (ratio of extreme eigenvalues).
inline double spd_condition_number(const MatX& G) {
  Eigen::SelfAdjointEigenSolver<MatX> es(G);
  return es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
}

} // namespace mshho
