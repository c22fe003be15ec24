#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace mmphate;

namespace {

Matrix distances(const Matrix& x) {
  Matrix d(x.rows(), x.rows());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.rows(); ++j) d(i, j) = (x.row(i) - x.row(j)).norm();
  return d;
}

}  // namespace

TEST(ClassicalMds, UnitSquare) {
  Matrix x(4, 2);
  x << 0, 0, 1, 0, 1, 1, 0, 1;
  const Matrix d = distances(x);
  const Matrix y = classical_mds(d, 2);
  EXPECT_LE((distances(y) - d).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ClassicalMds, ZeroDistances) {
  EXPECT_EQ(classical_mds(Matrix::Zero(5, 5), 2), Matrix::Zero(5, 2));
}

TEST(ClassicalMds, RecoversPlanted3d) {
  std::mt19937_64 rng(3);
  std::normal_distribution<Real> g(0, 1);
  Matrix x(60, 3);
  for (Index i = 0; i < x.size(); ++i) x(i) = g(rng);
  const Matrix y = classical_mds(distances(x), 3);
  EXPECT_LE(procrustes(x, y).rmse, 1e-6);
}

TEST(ClassicalMds, LargeInputUsesIterativePath) {
  std::mt19937_64 rng(4);
  std::normal_distribution<Real> g(0, 1);
  Matrix x(1200, 3);
  for (Index i = 0; i < x.size(); ++i) x(i) = g(rng) * (1 + i % 3);
  const Matrix y = classical_mds(distances(x), 3);
  EXPECT_LE(procrustes(x, y).rmse, 1e-6);
}

TEST(ClassicalMds, SignConvention) {
  Matrix x(5, 2);
  x << -2, 0.1, -1, -0.3, 0, 0.2, 1, -0.1, 2, 0.05;
  const Matrix y = classical_mds(distances(x), 2);
  for (Index c = 0; c < 2; ++c) {
    Index r = 0;
    while (std::abs(y(r, c)) <= 1e-12) ++r;
    EXPECT_GT(y(r, c), 0.0);
  }
}

TEST(Smacof, FixedPoint) {
  Matrix x(5, 2);
  x << 0, 0, 1, 0, 0, 2, 3, 1, 2, 2;
  const Matrix d = distances(x);
  const auto r = smacof(d, x);
  EXPECT_LE(r.stress(), 1e-20);
  EXPECT_LE(r.iterations, 1);
}

TEST(Smacof, NoisyInitImprovesTenfold) {
  Matrix x(5, 2);
  x << 0, 0, 1, 0, 0, 2, 3, 1, 2, 2;
  const Matrix d = distances(x);
  std::mt19937_64 rng(12);
  std::normal_distribution<Real> g(0, 0.5);
  Matrix init = x;
  for (Index i = 0; i < init.size(); ++i) init(i) += g(rng);
  const auto r = smacof(d, init);
  EXPECT_LE(r.stress() * 10, r.stress_trace.front());
  EXPECT_NEAR(raw_stress(d, init), r.stress_trace.front(), 1e-12);
}

TEST(Smacof, StressNonIncreasing) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<Real> u(0.1, 2.0);
    const Index n = 8 + static_cast<Index>(seed % 7);
    Matrix d = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = u(rng);
    const auto r = smacof(d, classical_mds(d, 2), SmacofConfig{100, 0});
    for (std::size_t k = 1; k < r.stress_trace.size(); ++k)
      ASSERT_LE(r.stress_trace[k], r.stress_trace[k - 1]) << "seed " << seed;
  }
}

TEST(Smacof, CoincidentPoints) {
  Matrix d(3, 3);
  d << 0, 1, 1, 1, 0, 1, 1, 1, 0;
  const auto r = smacof(d, Matrix::Zero(3, 2));
  EXPECT_TRUE(r.coords.allFinite());
}

TEST(Procrustes, AllowsReflection) {
  Matrix x(4, 2);
  x << 0, 0, 1, 0, 0, 2, 3, 1;
  Matrix y = x;
  y.col(0) *= -1;
  y.array() += 5;
  EXPECT_LE(procrustes(x, y).rmse, 1e-12);
}
