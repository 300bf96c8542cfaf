#pragma once

#include "mshho/types.hpp"

#include <map>
#include <mutex>
#include <vector>

namespace mshho {

/// A quadrature rule on a reference domain: the unit segment [0,1] or the
/// reference triangle {(x,y) : x,y >= 0, x+y <= 1}.
struct QuadratureRule {
  MatX points;  ///< one row per node (1 or 2 columns)
  VecX weights; ///< positive weights summing to the reference measure
  int exactness = 0;
};

namespace detail {

// Golub-Welsch: nodes/weights of the n-point Gauss rule for the weight whose
// monic three-term recurrence coefficients are (alpha_k, beta_k), k >= 0,
// with mu0 = integral of the weight.
inline void golub_welsch(const std::vector<double>& alpha, const std::vector<double>& beta,
                         double mu0, VecX& nodes, VecX& weights) {
  const int n = static_cast<int>(alpha.size());
  MatX J = MatX::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    J(i, i) = alpha[static_cast<size_t>(i)];
    if (i + 1 < n) {
      const double b = std::sqrt(beta[static_cast<size_t>(i + 1)]);
      J(i, i + 1) = b;
      J(i + 1, i) = b;
    }
  }
  Eigen::SelfAdjointEigenSolver<MatX> es(J);
  nodes = es.eigenvalues();
  weights.resize(n);
  for (int i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    weights[i] = mu0 * v0 * v0;
  }
}

// n-point Gauss-Legendre rule on [0,1], exact up to degree 2n-1.
inline void gauss_legendre01(int n, VecX& nodes, VecX& weights) {
  std::vector<double> alpha(static_cast<size_t>(n), 0.0), beta(static_cast<size_t>(n), 0.0);
  for (int k = 1; k < n; ++k)
    beta[static_cast<size_t>(k)] = (k * k) / (4.0 * k * k - 1.0);
  VecX x, w;
  golub_welsch(alpha, beta, 2.0, x, w);
  nodes.resize(n);
  weights.resize(n);
  for (int i = 0; i < n; ++i) {
    nodes[i] = 0.5 * (x[i] + 1.0);
    weights[i] = 0.5 * w[i];
  }
}

// n-point Gauss-Jacobi rule for the weight (1-x) on [0,1], exact up to 2n-1.
inline void gauss_jacobi10_01(int n, VecX& nodes, VecX& weights) {
  // Jacobi weight (1-x)^a (1+x)^b on [-1,1] with a=1, b=0.
  const double a = 1.0, b = 0.0;
  std::vector<double> alpha(static_cast<size_t>(n), 0.0), beta(static_cast<size_t>(n), 0.0);
  alpha[0] = (b - a) / (a + b + 2.0);
  for (int k = 1; k < n; ++k) {
    const double s = 2.0 * k + a + b;
    alpha[static_cast<size_t>(k)] = (b * b - a * a) / (s * (s + 2.0));
    beta[static_cast<size_t>(k)] =
        4.0 * k * (k + a) * (k + b) * (k + a + b) / (s * s * (s + 1.0) * (s - 1.0));
  }
  VecX x, w;
  golub_welsch(alpha, beta, 2.0, x, w); // mu0 = int_{-1}^1 (1-x) dx = 2
  nodes.resize(n);
  weights.resize(n);
  for (int i = 0; i < n; ++i) {
    // map to [0,1] with weight (1-t): t = (x+1)/2, (1-x) dx = 4 (1-t) dt
    nodes[i] = 0.5 * (x[i] + 1.0);
    weights[i] = 0.25 * w[i];
  }
}

} // namespace detail

/// Gauss-Legendre rule on the unit segment [0,1], exact to the given degree.
inline const QuadratureRule& segment_rule(int exactness) {
  static std::map<int, QuadratureRule> cache;
  static std::mutex mtx;
  std::lock_guard<std::mutex> lock(mtx);
  const int n = std::max(1, (exactness + 2) / 2);
  auto it = cache.find(n);
  if (it == cache.end()) {
    VecX x, w;
    detail::gauss_legendre01(n, x, w);
    QuadratureRule r;
    r.points = x;
    r.weights = w;
    r.exactness = 2 * n - 1;
    it = cache.emplace(n, std::move(r)).first;
  }
  return it->second;
}

/// Conical-product rule on the reference triangle, exact to the given degree.
/// Built as Gauss-Jacobi(1,0) x Gauss-Legendre through the Duffy map
/// (x,y) = (u, v(1-u)); all weights are positive.
inline const QuadratureRule& triangle_rule(int exactness) {
  static std::map<int, QuadratureRule> cache;
  static std::mutex mtx;
  std::lock_guard<std::mutex> lock(mtx);
  const int n = std::max(1, (exactness + 2) / 2);
  auto it = cache.find(n);
  if (it == cache.end()) {
    VecX xu, wu, xv, wv;
    detail::gauss_jacobi10_01(n, xu, wu);
    detail::gauss_legendre01(n, xv, wv);
    QuadratureRule r;
    r.points.resize(n * n, 2);
    r.weights.resize(n * n);
    int p = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j, ++p) {
        r.points(p, 0) = xu[i];
        r.points(p, 1) = xv[j] * (1.0 - xu[i]);
        r.weights[p] = wu[i] * wv[j];
      }
    r.exactness = 2 * n - 1;
    it = cache.emplace(n, std::move(r)).first;
  }
  return it->second;
}

/// Warm the rule caches so concurrent workers only ever read them.
inline void prewarm_quadrature(int max_exactness) {
  for (int p = 1; p <= max_exactness; ++p) {
    segment_rule(p);
    triangle_rule(p);
  }
}

/// Integrate f over the (physical) triangle (p0,p1,p2).
template <class F>
double integrate_triangle(const Vec2& p0, const Vec2& p1, const Vec2& p2, int exactness, F&& f) {
  const auto& rule = triangle_rule(exactness);
  const double jac = std::abs((p1.x() - p0.x()) * (p2.y() - p0.y()) -
                              (p2.x() - p0.x()) * (p1.y() - p0.y()));
  double s = 0.0;
  for (int q = 0; q < rule.weights.size(); ++q) {
    const Vec2 x = p0 + rule.points(q, 0) * (p1 - p0) + rule.points(q, 1) * (p2 - p0);
    s += rule.weights[q] * f(x);
  }
  return jac * s;
}

/// Integrate f over the (physical) segment [a,b].
template <class F>
double integrate_segment(const Vec2& a, const Vec2& b, int exactness, F&& f) {
  const auto& rule = segment_rule(exactness);
  const double len = (b - a).norm();
  double s = 0.0;
  for (int q = 0; q < rule.weights.size(); ++q) {
    const Vec2 x = a + rule.points(q, 0) * (b - a);
    s += rule.weights[q] * f(x);
  }
  return len * s;
}

/// A list of triangles used as a composite integration region (a polygonal
/// cell split into a fan, or a fine sub-mesh).
struct TriRegion {
  std::vector<std::array<Vec2, 3>> tris;

  template <class F>
  double integrate(int exactness, F&& f) const {
    double s = 0.0;
    for (const auto& t : tris)
      s += integrate_triangle(t[0], t[1], t[2], exactness, f);
    return s;
  }
  double area() const {
    double s = 0.0;
    for (const auto& t : tris)
      s += 0.5 * std::abs((t[1].x() - t[0].x()) * (t[2].y() - t[0].y()) -
                          (t[2].x() - t[0].x()) * (t[1].y() - t[0].y()));
    return s;
  }
};

} // namespace mshho
