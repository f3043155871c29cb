#include "covts/glasso.hpp"

#include "glasso_oracle.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace covts;
using namespace covts::glasso;

namespace {

GlassoOptions with_solver(Solver s) {
  GlassoOptions o;
  o.solver = s;
  return o;
}

}  // namespace

TEST(Glasso, IdentityClosedForm) {
  for (std::size_t p : {1u, 2u, 10u, 100u}) {
    const auto sol = glasso_fit(SymMatrix::identity(p), 0.1);
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t k = 0; k <= j; ++k) EXPECT_NEAR(sol.omega(j, k), j == k ? 1.0 / 1.1 : 0.0, 1e-8);
  }
}

TEST(Glasso, ScalarClosedForm) {
  for (Solver s : {Solver::proximal_gradient, Solver::admm})
    for (double sigma : {0.3, 1.0, 7.5}) {
      const auto sol = glasso_fit(SymMatrix::diagonal({sigma}), 0.2, with_solver(s));
      EXPECT_NEAR(sol.omega(0, 0), 1.0 / (sigma + 0.2), 1e-10);
    }
}

TEST(Glasso, LargePenaltyGivesDiagonal) {
  std::mt19937_64 rng(5);
  const SymMatrix s = SymMatrix::from_lower(oracle::random_spd(5, rng));
  double off = 0.0;
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t k = 0; k < j; ++k) off = std::max(off, std::abs(s(j, k)));
  const double lambda = off * 1.01;
  const auto sol = glasso_fit(s, lambda);
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t k = 0; k <= j; ++k)
      EXPECT_NEAR(sol.omega(j, k), j == k ? 1.0 / (s(j, j) + lambda) : 0.0, 1e-7);
}

TEST(Glasso, MatchesBruteForceOracle) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 6; ++trial) {
    const Eigen::Index p = trial % 2 ? 3 : 2;
    const Matrix sd = oracle::random_spd(p, rng);
    for (double lambda : {0.05, 0.2, 0.5}) {
      const auto sol = glasso_fit(SymMatrix::from_lower(sd), lambda);
      const Matrix ref = oracle::brute_force_glasso(sd, lambda);
      EXPECT_LE((sol.omega.dense() - ref).norm(), 1e-4);
      EXPECT_LE(sol.kkt_residual, 1e-6);
    }
  }
}

TEST(Glasso, SolversAgree) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const SymMatrix s = SymMatrix::from_lower(oracle::random_spd(8, rng));
    const auto pg = glasso_fit(s, 0.1, with_solver(Solver::proximal_gradient));
    const auto ad = glasso_fit(s, 0.1, with_solver(Solver::admm));
    EXPECT_LE(pg.kkt_residual, 1e-6);
    EXPECT_LE(ad.kkt_residual, 1e-6);
    EXPECT_LE((pg.omega.dense() - ad.omega.dense()).cwiseAbs().maxCoeff(), 1e-5);
    EXPECT_NEAR(objective(pg.omega, s, 0.1), objective(ad.omega, s, 0.1), 1e-8);
  }
}

TEST(Glasso, ProximalGradientIsMonotone) {
  std::mt19937_64 rng(8);
  const SymMatrix s = SymMatrix::from_lower(oracle::random_spd(10, rng));
  GlassoOptions o;
  o.solver = Solver::proximal_gradient;
  o.record_objective = true;
  const auto sol = glasso_fit(s, 0.05, o);
  ASSERT_GE(sol.objective_trace.size(), 2u);
  for (std::size_t i = 1; i < sol.objective_trace.size(); ++i)
    EXPECT_LE(sol.objective_trace[i], sol.objective_trace[i - 1] + 1e-12);
  EXPECT_GE(sol.dual_residual, -1e-9);
  EXPECT_LE(sol.dual_residual, 1e-5);
}

TEST(Glasso, KktResidualIsIndependentCertificate) {
  std::mt19937_64 rng(9);
  const SymMatrix s = SymMatrix::from_lower(oracle::random_spd(6, rng));
  const auto sol = glasso_fit(s, 0.15);
  EXPECT_NEAR(kkt_residual(sol.omega, s, 0.15), sol.kkt_residual, 1e-9);
  EXPECT_GT(kkt_residual(SymMatrix::identity(6), s, 0.15), 1e-3);
  EXPECT_THROW(kkt_residual(-1.0 * SymMatrix::identity(6), s, 0.15), InvalidArgument);
}

TEST(Glasso, IterationCapRaises) {
  std::mt19937_64 rng(10);
  const SymMatrix s = SymMatrix::from_lower(oracle::random_spd(6, rng));
  GlassoOptions o;
  o.max_iter = 1;
  o.tol = 1e-12;
  try {
    glasso_fit(s, 0.01, o);
    FAIL() << "expected NonConvergence";
  } catch (const NonConvergence& e) {
    EXPECT_EQ(e.iterations(), 1u);
    EXPECT_GT(e.kkt_residual(), 1e-12);
  }
}

TEST(Glasso, RejectsBadInput) {
  EXPECT_THROW(glasso_fit(SymMatrix::identity(2), 0.0), InvalidArgument);
  EXPECT_THROW(glasso_fit(SymMatrix(), 0.1), InvalidArgument);
  EXPECT_THROW(lambda_from_threshold(-1.0), InvalidArgument);
  EXPECT_DOUBLE_EQ(lambda_from_threshold(0.25), 1.0);
}

// Diagonal rescaling S -> D S D maps the correlation-variant estimate to D^{-1} Omega D^{-1}.
TEST(GlassoCorrelation, ScaleEquivariant) {
  std::mt19937_64 rng(11);
  const Matrix sd = oracle::random_spd(4, rng);
  Vector dvec(4);
  dvec << 0.5, 2.0, 1.5, 3.0;
  const Matrix scaled = dvec.asDiagonal() * sd * dvec.asDiagonal();
  const auto a = glasso_correlation_variant(SymMatrix::from_lower(sd), 0.1);
  const auto b = glasso_correlation_variant(SymMatrix::from_lower(scaled), 0.1);
  const Matrix back = dvec.asDiagonal() * b.omega.dense() * dvec.asDiagonal();
  EXPECT_LE((back - a.omega.dense()).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_THROW(glasso_correlation_variant(SymMatrix::diagonal({1.0, 0.0}), 0.1), InvalidArgument);
}

TEST(Glasso, DefaultSolverHandlesIllConditionedInput) {
  // eigenvalues spread over five decades
  std::mt19937_64 rng(21);
  const Matrix q = Eigen::HouseholderQR<Matrix>(oracle::random_spd(20, rng)).householderQ();
  Vector ev(20);
  for (Eigen::Index i = 0; i < 20; ++i) ev(i) = std::pow(10.0, -5.0 + 5.0 * double(i) / 19.0);
  const SymMatrix s = SymMatrix::symmetrize(q * ev.asDiagonal() * q.transpose());
  const auto sol = glasso_fit(s, 0.02);
  EXPECT_LE(sol.kkt_residual, 1e-6);
  EXPECT_LT(sol.iterations, 5000u);
}

TEST(GlassoCorrelation, UnpenalizedDiagonalOnIdentity) {
  // S = I: the unpenalized diagonal optimum is exactly I.
  const auto sol = glasso_correlation_variant(SymMatrix::identity(3), 0.3);
  EXPECT_LE((sol.omega.dense() - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(TvGlasso, EqualsGlassoOnKernelCovariance) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g;
  Matrix z(3, 200);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = g(rng);
  const DataMatrix data(z);
  const auto tv = tv_glasso(data, 0.3, 0.2, 0.1);
  const auto ref = glasso_fit(estim::kernel_cov(data, 0.3, 0.2), 0.1);
  EXPECT_EQ(tv.omega, ref.omega);
  EXPECT_EQ(tv.t, 0.3);
  EXPECT_EQ(tv.b, 0.2);
}
