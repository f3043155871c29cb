#include "covts/linalg.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <random>

using namespace covts;

namespace {

Matrix random_symmetric(std::size_t p, Rng& rng) {
  std::normal_distribution<double> g;
  Matrix a(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  for (Eigen::Index j = 0; j < a.rows(); ++j)
    for (Eigen::Index k = 0; k < a.cols(); ++k) a(j, k) = g(rng);
  return (a + a.transpose()) / 2.0;
}

Matrix random_spd(std::size_t p, Rng& rng) {
  Matrix a = random_symmetric(p, rng);
  return a * a.transpose() + Matrix::Identity(a.rows(), a.cols());
}

}  // namespace

// Jacobi against Eigen's tridiagonal QR solver.
TEST(Jacobi, MatchesReferenceSolver) {
  Rng rng(7);
  for (std::size_t p : {1u, 2u, 3u, 5u, 17u, 40u}) {
    for (int rep = 0; rep < 5; ++rep) {
      const Matrix a = random_symmetric(p, rng);
      const auto mine = linalg::jacobi_eigen(a);
      Eigen::SelfAdjointEigenSolver<Matrix> ref(a);
      EXPECT_LE((mine.values - ref.eigenvalues()).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, a.norm()));
      const Matrix rebuilt = mine.vectors * mine.values.asDiagonal() * mine.vectors.transpose();
      EXPECT_LE((rebuilt - a).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, a.norm()));
      EXPECT_LE((mine.vectors.transpose() * mine.vectors - Matrix::Identity(a.rows(), a.cols())).cwiseAbs().maxCoeff(),
                1e-10);
    }
  }
}

TEST(Jacobi, ValuesAscending) {
  Rng rng(8);
  const auto e = linalg::jacobi_eigen(random_symmetric(12, rng), false);
  for (Eigen::Index i = 1; i < e.values.size(); ++i) EXPECT_LE(e.values(i - 1), e.values(i));
  EXPECT_EQ(e.vectors.size(), 0);
}

TEST(Jacobi, DiagonalInputIsExact) {
  Matrix a = Vector::LinSpaced(6, 6.0, 1.0).asDiagonal();
  const auto e = linalg::jacobi_eigen(a);
  EXPECT_EQ(e.values, Vector::LinSpaced(6, 1.0, 6.0));
}

TEST(Linalg, SqrtInverseAndNorms) {
  Rng rng(9);
  const Matrix a = random_spd(8, rng);
  const Matrix r = linalg::sym_sqrt(a);
  EXPECT_LE((r * r - a).cwiseAbs().maxCoeff(), 1e-9 * a.norm());
  const Matrix w = linalg::sym_inverse_sqrt(a);
  EXPECT_LE((w * a * w - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-9);
  const SymMatrix inv = linalg::sym_inverse(SymMatrix::from_lower(a));
  EXPECT_LE((inv.dense() * a - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-9);

  Eigen::SelfAdjointEigenSolver<Matrix> ref(a);
  EXPECT_NEAR(linalg::min_eigenvalue(SymMatrix::from_lower(a)), ref.eigenvalues()(0), 1e-10 * a.norm());
  EXPECT_NEAR(linalg::spectral_norm(SymMatrix::from_lower(a)), ref.eigenvalues()(7), 1e-10 * a.norm());
}

TEST(Linalg, SpectralNormOfNegativeDefinite) {
  EXPECT_DOUBLE_EQ(linalg::spectral_norm(SymMatrix::diagonal({-3.0, 1.0})), 3.0);
}

TEST(Linalg, RejectsIndefiniteRoots) {
  Matrix a = Vector::LinSpaced(2, -1.0, 1.0).asDiagonal();
  EXPECT_THROW(linalg::sym_sqrt(a), InvalidArgument);
  EXPECT_THROW(linalg::sym_inverse_sqrt(a), InvalidArgument);
}

TEST(Linalg, LargeDimensionFallsBackConsistently) {
  Rng rng(10);
  const Matrix a = random_symmetric(linalg::kJacobiMaxDim + 3, rng);
  const auto e = linalg::sym_eigen(a);
  const Matrix rebuilt = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
  EXPECT_LE((rebuilt - a).cwiseAbs().maxCoeff(), 1e-9 * a.norm());
}
