#include "mshho/linalg.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace mshho;

namespace {

MatX random_spd(int n, std::mt19937& rng) {
  std::normal_distribution<double> g;
  MatX M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      M(i, j) = g(rng);
  return M * M.transpose() + n * MatX::Identity(n, n);
}

} // namespace

TEST_CASE("solve_spd") {
  std::mt19937 rng(11);
  SECTION("identity") {
    const VecX g = VecX::Random(7);
    const auto r = solve_spd(MatX::Identity(7, 7), g);
    REQUIRE((r.x - g).norm() < 1e-14);
  }
  SECTION("2x2 row-sum example") {
    MatX K(2, 2);
    K << 2, 1, 1, 2;
    VecX g(2);
    g << 3, 3;
    const auto r = solve_spd(K, g);
    REQUIRE_THAT(r.x[0], Catch::Matchers::WithinRel(1.0, 1e-12));
    REQUIRE_THAT(r.x[1], Catch::Matchers::WithinRel(1.0, 1e-12));
  }
  SECTION("random SPD instances verify by multiplication") {
    for (int n : {5, 50, 500}) {
      const MatX K = random_spd(n, rng);
      const VecX g = VecX::Random(n);
      const auto r = solve_spd(K, g);
      REQUIRE((K * r.x - g).norm() / g.norm() <= 1e-10);
      REQUIRE(r.relative_residual <= 1e-10);
    }
  }
  SECTION("indefinite matrix reports the offending pivot index") {
    MatX K = MatX::Identity(4, 4);
    K(2, 2) = -1.0;
    try {
      solve_spd(K, VecX::Ones(4));
      FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
      REQUIRE(std::string(e.what()).find("index 2") != std::string::npos);
    }
  }
}

TEST_CASE("solve_saddle") {
  SECTION("minimize x'x/2 subject to x1 + x2 = 2") {
    const MatX K = MatX::Identity(2, 2);
    MatX B(1, 2);
    B << 1, 1;
    VecX c(1);
    c << 2;
    const auto r = solve_saddle(K, B, VecX::Zero(2), c);
    REQUIRE_THAT(r.x[0], Catch::Matchers::WithinAbs(1.0, 1e-12));
    REQUIRE_THAT(r.x[1], Catch::Matchers::WithinAbs(1.0, 1e-12));
    // K x - B' mu = ... with our sign convention K x + B' mu = g => mu = -1
    REQUIRE_THAT(r.multipliers[0], Catch::Matchers::WithinAbs(-1.0, 1e-12));
  }
  SECTION("singular K pinned by a mean constraint; shift invariance") {
    // graph Laplacian of a path: kernel = constants
    MatX K(3, 3);
    K << 1, -1, 0, -1, 2, -1, 0, -1, 1;
    MatX B(1, 3);
    B << 1, 1, 1;
    VecX g(3);
    g << 1, 0, -1; // compatible (sums to zero)
    const auto r1 = solve_saddle(K, B, g, VecX::Zero(1));
    // shifting g by a constant vector changes nothing but the multiplier
    const auto r2 = solve_saddle(K, B, g + 5.0 * VecX::Ones(3), VecX::Zero(1));
    REQUIRE((r1.x - r2.x).norm() < 1e-9);
    REQUIRE(r1.kkt_residual < 1e-9);
  }
  SECTION("infeasible constraints are reported") {
    const MatX K = MatX::Identity(2, 2);
    MatX B(2, 2);
    B << 1, 0, 1, 0; // x1 = 0 and x1 = 1
    VecX c(2);
    c << 0, 1;
    try {
      solve_saddle(K, B, VecX::Zero(2), c);
      FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
      const std::string msg = e.what();
      REQUIRE(msg.find("rank deficient") != std::string::npos);
      REQUIRE(msg.find("infeasible") != std::string::npos);
    }
  }
  SECTION("solutions invariant under row rescaling of B") {
    std::mt19937 rng(3);
    const MatX K = random_spd(6, rng);
    MatX B(2, 6);
    B.setRandom();
    VecX c(2);
    c << 0.5, -0.25;
    const VecX g = VecX::Random(6);
    const auto r1 = solve_saddle(K, B, g, c);
    MatX B2 = B;
    B2.row(0) *= 100.0;
    VecX c2 = c;
    c2[0] *= 100.0;
    const auto r2 = solve_saddle(K, B2, g, c2);
    REQUIRE((r1.x - r2.x).norm() / r1.x.norm() < 1e-9);
  }
}

TEST_CASE("sparse SPD solve with optional CG fallback") {
  // 1D Laplacian
  const int n = 200;
  std::vector<Triplet> trips;
  for (int i = 0; i < n; ++i) {
    trips.emplace_back(i, i, 2.0);
    if (i > 0)
      trips.emplace_back(i, i - 1, -1.0);
    if (i + 1 < n)
      trips.emplace_back(i, i + 1, -1.0);
  }
  SpMat A(n, n);
  A.setFromTriplets(trips.begin(), trips.end());
  const VecX b = VecX::Random(n);
  const VecX x1 = solve_sparse_spd(A, b);
  SparseSolveOptions opt;
  opt.use_cg = true;
  const VecX x2 = solve_sparse_spd(A, b, opt);
  REQUIRE((A * x1 - b).norm() / b.norm() < 1e-10);
  REQUIRE((x1 - x2).norm() / x1.norm() < 1e-7);
}
