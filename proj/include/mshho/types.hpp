#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <stdexcept>
#include <string>

namespace mshho {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Matrix-valued coefficient field x -> A(x).
using MatrixField = std::function<Mat2(const Vec2&)>;
/// Scalar field x -> f(x).
using ScalarField = std::function<double(const Vec2&)>;
/// Vector field x -> v(x).
using VectorField = std::function<Vec2(const Vec2&)>;

/// Raised on invalid user input (configuration, CLI arguments, file contents).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a solve or a numerical self-check fails.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised on topologically or geometrically invalid meshes.
struct MeshError : std::runtime_error {
  explicit MeshError(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr double pi() { return 3.14159265358979323846264338327950288; }

} // namespace mshho
