#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace mmphate;

namespace {

DiffusionOperator from_dense(const Matrix& k) { return to_diffusion(SparseMatrix(k.sparseView(0.0, 0.0))); }

}  // namespace

TEST(VnEntropy, IdentityIsMaximal) {
  const auto op = from_dense(Matrix::Identity(5, 5));
  for (Real h : vn_entropy_curve(op, 10)) EXPECT_NEAR(h, std::log(5.0), 1e-12);
}

TEST(VnEntropy, RankOneIsZero) {
  const auto op = from_dense(Matrix::Ones(4, 4));
  for (Real h : vn_entropy_curve(op, 6)) EXPECT_NEAR(h, 0.0, 1e-9);
}

TEST(VnEntropy, TwoStateChain) {
  // symmetric two-state walk with stay probability 3/4: eigenvalues 1 and 1/2
  Matrix k(2, 2);
  k << 3, 1, 1, 3;
  const auto curve = vn_entropy_curve(from_dense(k), 3);
  EXPECT_NEAR(curve[1], 0.500402423538188, 1e-12);
  EXPECT_NEAR(curve[1], -(0.8 * std::log(0.8) + 0.2 * std::log(0.2)), 1e-12);
}

TEST(VnEntropy, NonIncreasing) {
  const auto t = zscore(oracle::random_tensor(3, 3, 6, 5, 8));
  const auto op = to_diffusion(assemble_multislice(t, KernelParams{2, 40}));
  const auto curve = vn_entropy_curve(op, 40);
  for (std::size_t k = 1; k < curve.size(); ++k) EXPECT_LE(curve[k], curve[k - 1] + 1e-12);
}

TEST(SelectT, Corner) {
  std::vector<Real> h;
  for (int t = 1; t <= 30; ++t) h.push_back(t <= 7 ? 10.0 - t : 3.0 - 0.01 * (t - 7));
  EXPECT_EQ(select_t(h).t, 7);
  EXPECT_FALSE(select_t(h).fallback);
}

TEST(SelectT, LinearFallsBack) {
  std::vector<Real> h;
  for (int t = 1; t <= 20; ++t) h.push_back(5.0 - 0.2 * t);
  const auto sel = select_t(h);
  EXPECT_EQ(sel.t, 1);
  EXPECT_TRUE(sel.fallback);
  EXPECT_THROW(select_t({1.0, 0.5}), Error);
}

TEST(SelectT, MatchesScan) {
  const int t_max = 100;
  std::vector<Real> h;
  for (int t = 1; t <= t_max; ++t) h.push_back(std::exp(-Real(t)) + 0.01 * Real(t_max - t) / t_max);
  EXPECT_EQ(select_t(h).t, oracle::knee(h));
  EXPECT_EQ(select_t(h).t, 6);  // gap to the chord peaks where exp(-t) matches the chord slope
}

TEST(Eigenpairs, DenseAndRandomizedAgree) {
  const auto t = zscore(oracle::random_tensor(6, 6, 25, 6, 13));
  const auto op = to_diffusion(assemble_multislice(t, KernelParams{5, 40}));
  const SparseMatrix a = symmetric_conjugate(op);
  ASSERT_GT(a.rows(), 800);
  const auto fast = leading_eigenpairs(a, 10, 3, 80);
  Eigen::SelfAdjointEigenSolver<Matrix> es{Matrix(a)};
  for (Index c = 0; c < 3; ++c) {
    EXPECT_NEAR(fast.values(c), es.eigenvalues()(a.rows() - 1 - c), 1e-8);
    const Vector v = es.eigenvectors().col(a.rows() - 1 - c);
    EXPECT_NEAR(std::abs(v.dot(fast.vectors.col(c))), 1.0, 1e-6);
  }
  // leading eigenvalue of the conjugate of a stochastic matrix is 1
  EXPECT_NEAR(fast.values(0), 1.0, 1e-10);
}

TEST(Eigenpairs, SignConvention) {
  Matrix k(3, 3);
  k << 2, 1, 0, 1, 2, 1, 0, 1, 2;
  const auto e = leading_eigenpairs(SparseMatrix(k.sparseView()), 3, 0);
  for (Index c = 0; c < 3; ++c) {
    Index arg = 0;
    e.vectors.col(c).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(e.vectors(arg, c), 0.0);
  }
}
