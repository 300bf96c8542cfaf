#pragma once

#include "mshho/expr.hpp"
#include "mshho/types.hpp"

#include <cmath>
#include <cstdint>
#include <string>

namespace mshho {

/// Oscillatory diffusion coefficient A_eps(x) = A(x/eps) + A_slow(x), with A a
/// symmetric Z^2-periodic matrix field. The slow part is zero except for
/// locally periodic coefficients.
struct DiffusionSpec {
  std::string name;
  double epsilon = 1.0;
  double alpha = 1.0; ///< lower spectral bound of A_eps
  double beta = 1.0;  ///< upper spectral bound of A_eps
  bool oscillatory = true;
  MatrixField unit_cell;  ///< y -> A(y), Z^2-periodic
  MatrixField slow_part;  ///< x -> slow additive part (may be null)

  double heterogeneity_ratio() const { return beta / alpha; }

  Mat2 a_eps(const Vec2& x) const {
    Mat2 A = unit_cell(x / epsilon);
    if (slow_part)
      A += slow_part(x);
    return A;
  }

  MatrixField field() const {
    return [spec = *this](const Vec2& x) { return spec.a_eps(x); };
  }

  /// Stable identifier of the coefficient for cache keys.
  std::string cache_key() const {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", epsilon);
    return name + "@" + buf;
  }
};

inline double wrap_unit(double t) { return t - std::floor(t); }

/// a(y1,y2) = 1 + 100 cos^2(pi y1) sin^2(pi y2), the periodic scalar
/// coefficient of the reference test case.
inline double periodic_paper_scalar(const Vec2& y) {
  const double c = std::cos(pi() * y.x());
  const double s = std::sin(pi() * y.y());
  return 1.0 + 100.0 * c * c * s * s;
}

inline DiffusionSpec make_constant_spec(double value = 1.0) {
  DiffusionSpec s;
  s.name = "constant";
  s.epsilon = 1.0;
  s.alpha = s.beta = value;
  s.oscillatory = false;
  s.unit_cell = [value](const Vec2&) { return (value * Mat2::Identity()).eval(); };
  return s;
}

inline DiffusionSpec make_periodic_paper_spec(double epsilon) {
  DiffusionSpec s;
  s.name = "periodic_paper";
  s.epsilon = epsilon;
  s.alpha = 1.0;
  s.beta = 101.0;
  s.unit_cell = [](const Vec2& y) { return (periodic_paper_scalar(y) * Mat2::Identity()).eval(); };
  return s;
}

inline DiffusionSpec make_locally_periodic_paper_spec(double epsilon) {
  DiffusionSpec s;
  s.name = "locally_periodic_paper";
  s.epsilon = epsilon;
  s.alpha = 2.0;                  // slow part >= 1 on the unit square
  s.beta = 101.0 + std::exp(1.0); // slow part <= e on the unit square
  s.unit_cell = [](const Vec2& y) { return (periodic_paper_scalar(y) * Mat2::Identity()).eval(); };
  s.slow_part = [](const Vec2& x) {
    return (std::exp(0.5 * x.squaredNorm()) * Mat2::Identity()).eval();
  };
  return s;
}

/// Two-phase laminate a(y1) in {lo, hi}, switching at y1 = 1/2; the exact
/// homogenized tensor is diag(harmonic mean, arithmetic mean).
inline DiffusionSpec make_laminate_spec(double epsilon, double lo = 1.0, double hi = 4.0) {
  DiffusionSpec s;
  s.name = "laminate";
  s.epsilon = epsilon;
  s.alpha = std::min(lo, hi);
  s.beta = std::max(lo, hi);
  s.unit_cell = [lo, hi](const Vec2& y) {
    const double a = wrap_unit(y.x()) < 0.5 ? lo : hi;
    return (a * Mat2::Identity()).eval();
  };
  return s;
}

/// Scalar isotropic coefficient from an expression string a(x, y) evaluated on
/// the unit cell (oscillatory part) with spectral bounds estimated on a sample
/// grid.
inline DiffusionSpec make_expression_spec(const std::string& expr_text, double epsilon,
                                          int sample_grid = 128) {
  Expression e(expr_text, epsilon);
  DiffusionSpec s;
  s.name = "expression:" + expr_text;
  s.epsilon = epsilon;
  double lo = std::numeric_limits<double>::max(), hi = std::numeric_limits<double>::lowest();
  for (int j = 0; j < sample_grid; ++j)
    for (int i = 0; i < sample_grid; ++i) {
      const double v = e((i + 0.5) / sample_grid, (j + 0.5) / sample_grid);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!(lo > 0.0))
    throw ConfigError("expression coefficient is not positive on the sample grid: " + expr_text);
  s.alpha = lo;
  s.beta = hi;
  s.unit_cell = [e](const Vec2& y) { return (e(y) * Mat2::Identity()).eval(); };
  return s;
}

/// Named preset lookup (configuration surface).
inline DiffusionSpec make_spec(const std::string& name, double epsilon) {
  if (name == "constant")
    return make_constant_spec();
  if (name == "periodic_paper")
    return make_periodic_paper_spec(epsilon);
  if (name == "locally_periodic_paper")
    return make_locally_periodic_paper_spec(epsilon);
  if (name == "laminate")
    return make_laminate_spec(epsilon);
  if (name.rfind("expression:", 0) == 0)
    return make_expression_spec(name.substr(11), epsilon);
  throw ConfigError("unknown coefficient preset: " + name);
}

/// Sampled validation of the DiffusionSpec invariants: symmetry, periodicity,
/// and the spectral bounds of the unit-cell field.
struct CoefficientCheck {
  double max_asymmetry = 0.0;
  double max_periodicity_error = 0.0;
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
};

inline CoefficientCheck check_coefficient(const DiffusionSpec& spec, int grid = 64) {
  CoefficientCheck c;
  c.min_eigenvalue = std::numeric_limits<double>::max();
  c.max_eigenvalue = std::numeric_limits<double>::lowest();
  for (int j = 0; j < grid; ++j)
    for (int i = 0; i < grid; ++i) {
      const Vec2 y((i + 0.5) / grid, (j + 0.5) / grid);
      const Mat2 A = spec.unit_cell(y);
      c.max_asymmetry = std::max(c.max_asymmetry, std::abs(A(0, 1) - A(1, 0)));
      for (const Vec2& sh : {Vec2(1, 0), Vec2(0, 1)})
        c.max_periodicity_error =
            std::max(c.max_periodicity_error, (spec.unit_cell(y + sh) - A).norm());
      Eigen::SelfAdjointEigenSolver<Mat2> es(A);
      c.min_eigenvalue = std::min(c.min_eigenvalue, es.eigenvalues().minCoeff());
      c.max_eigenvalue = std::max(c.max_eigenvalue, es.eigenvalues().maxCoeff());
    }
  return c;
}

} // namespace mshho
