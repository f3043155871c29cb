#include "covts/covmodels.hpp"
#include "covts/linalg.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace covts;
using namespace covts::covmodels;

namespace {

SymMatrix random_sym(std::size_t p, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  SymMatrix m(p);
  for (auto& v : m.packed()) v = u(rng);
  for (std::size_t j = 0; j < p; ++j) m(j, j) = std::abs(m(j, j));
  return m;
}

// Straight double loop over the dense matrix.
struct Brute {
  double D = 0, F = 0, D_star = 0, D_prec = 0, D_minus = 0;
  std::size_t N_star = 0;
};

Brute brute_smallness(const Matrix& s, double u) {
  Brute b;
  const auto p = s.rows();
  for (Eigen::Index k = 0; k < p; ++k) {
    double col = 0;
    std::size_t cnt = 0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double a = std::abs(s(j, k));
      b.D += std::min(u * u, a * a);
      b.F += a >= u;
      b.D_prec += u * std::min(u, a);
      if (j != k) b.D_minus += u * std::min(u, a);
      col += std::min(a, u);
      cnt += a >= u;
    }
    b.D_star = std::max(b.D_star, col);
    b.N_star = std::max(b.N_star, cnt);
  }
  const double p2 = double(p * p);
  b.D /= p2;
  b.F /= p2;
  b.D_prec /= p2;
  b.D_minus /= p2;
  return b;
}

// Membership by scanning a dense log grid plus every entry magnitude.
bool brute_membership(const Matrix& s, double r, double M, SparsityClass kind) {
  for (Eigen::Index j = 0; j < s.rows(); ++j)
    if (s(j, j) > 1.0) return false;
  const double cap = kind == SparsityClass::H_r ? 1.0 : std::max(1.0, s.cwiseAbs().maxCoeff());
  std::vector<double> us;
  for (int i = 0; i <= 4000; ++i) us.push_back(cap * std::pow(10.0, -8.0 * i / 4000.0));
  for (Eigen::Index j = 0; j < s.size(); ++j)
    if (std::abs(s.data()[j]) > 0 && std::abs(s.data()[j]) <= cap) us.push_back(std::abs(s.data()[j]));
  for (double u : us) {
    const double count = double((s.array().abs() >= u).count());
    const double env = kind == SparsityClass::H_r ? M * std::pow(u, -r) : M * std::pow(std::log(2.0 + 1.0 / u), r);
    if (count > env) return false;
  }
  return true;
}

}  // namespace

TEST(Sites, DistanceAndSeeding) {
  SiteSet s({{0.0, 0.0}, {3.0, 4.0}});
  EXPECT_EQ(s.distance(0, 1), 5.0);
  EXPECT_EQ(s.distance(1, 1), 0.0);
  const auto a = uniform_sites(20, 3.0, 9), b = uniform_sites(20, 3.0, 9);
  EXPECT_EQ(a.coords(), b.coords());
  for (const auto& c : a.coords()) {
    EXPECT_GE(c[0], 0.0);
    EXPECT_LT(c[1], 3.0);
  }
}

TEST(Models, RationalQuadraticEntries) {
  SiteSet s({{0.0, 0.0}, {1.0, 0.0}, {0.0, 2.0}});
  const double K = 4.0, tau = 1.5;
  const auto m = rational_quadratic_cov(s, K, tau);
  EXPECT_EQ(m(0, 0), 1.0);
  EXPECT_NEAR(m(1, 0), std::pow(1.0 + 1.0 / (K * tau * tau), -2.0), 1e-15);
  EXPECT_NEAR(m(2, 1), std::pow(1.0 + 5.0 / (K * tau * tau), -2.0), 1e-15);
}

TEST(Models, StationaryFieldsArePositiveDefinite) {
  const auto sites = uniform_sites(60, std::sqrt(60.0), 3);
  EXPECT_GT(linalg::min_eigenvalue(rational_quadratic_cov(sites, 4.0, std::pow(60.0, 1.0 / 6.0))), 0.0);
  EXPECT_GT(linalg::min_eigenvalue(gamma_exponential_cov(sites, 1.0, 1.0)), 0.0);
}

TEST(Models, GammaExponentialEntries) {
  SiteSet s({{0.0, 0.0}, {2.0, 0.0}});
  EXPECT_NEAR(gamma_exponential_cov(s, 1.0, 2.0)(1, 0), std::exp(-4.0), 1e-15);
  EXPECT_NEAR(gamma_exponential_cov(s, 4.0, 1.0)(1, 0), std::exp(-0.5), 1e-15);
  EXPECT_THROW(gamma_exponential_cov(s, 1.0, 2.5), InvalidArgument);
  EXPECT_THROW(gamma_exponential_cov(s, 0.0, 1.0), InvalidArgument);
}

TEST(Models, CounterexampleSpectrum) {
  const std::size_t p = 10;
  const double eps = 0.2;
  const auto m = counterexample_matrix(p, eps);
  // Arrow matrix: eigenvalues 1 +- eps (p-1)^{1/2} and 1 (multiplicity p-2).
  EXPECT_NEAR(linalg::min_eigenvalue(m), 1.0 - eps * 3.0, 1e-12);
  EXPECT_NEAR(linalg::spectral_norm(m), 1.0 + eps * 3.0, 1e-12);
  EXPECT_THROW(counterexample_matrix(p, 0.34), InvalidArgument);
  EXPECT_THROW(counterexample_matrix(1, 0.1), InvalidArgument);
}

TEST(Models, TridiagonalSpectrum) {
  const std::size_t p = 12;
  const double rho = 0.4;
  const auto e = linalg::sym_eigen(tridiagonal_cov(p, rho), false);
  for (std::size_t k = 1; k <= p; ++k) {
    const double lam = 1.0 + 2.0 * rho * std::cos(double(p + 1 - k) * std::numbers::pi / double(p + 1));
    EXPECT_NEAR(e.values(Eigen::Index(k - 1)), lam, 1e-12);
  }
  EXPECT_THROW(tridiagonal_cov(3, 0.5), InvalidArgument);
}

TEST(Smallness, MatchesBruteForce) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = random_sym(1 + trial % 9, rng);
    for (double u : {0.0, 0.05, 0.3, 0.7, 2.0}) {
      const auto r = smallness(s, u);
      const auto b = brute_smallness(s.dense(), u);
      EXPECT_NEAR(r.D, b.D, 1e-14);
      EXPECT_NEAR(r.F, b.F, 1e-14);
      EXPECT_NEAR(r.D_star, b.D_star, 1e-13);
      EXPECT_EQ(r.N_star, b.N_star);
      EXPECT_NEAR(r.D_prec, b.D_prec, 1e-14);
      EXPECT_NEAR(r.D_minus, b.D_minus, 1e-14);
      EXPECT_EQ(exceedance_count(s, u), std::size_t(b.F * double(s.dim() * s.dim()) + 0.5));
    }
  }
}

TEST(Smallness, Invariants) {
  Rng rng(22);
  const auto s = random_sym(8, rng);
  double prev = -1.0;
  for (double u = 0.01; u < 2.0; u *= 1.3) {
    const auto r = smallness(s, u);
    EXPECT_LE(r.D, u * u + 1e-15);
    EXPECT_GE(r.D, prev);
    EXPECT_LE(r.D_minus, r.D_prec);
    prev = r.D;
  }
  EXPECT_EQ(smallness(s, 0.0).D, 0.0);
  EXPECT_THROW(smallness(s, -1.0), InvalidArgument);
}

TEST(Membership, AgreesWithGridScan) {
  Rng rng(23);
  int members = 0, total = 0;
  for (int trial = 0; trial < 60; ++trial) {
    SymMatrix s = random_sym(6, rng, trial % 3 == 0 ? 0.3 : 1.0);
    if (trial % 4 == 0) s.transform([](double v) { return std::abs(v) < 0.5 ? 0.0 : v; });
    for (auto kind : {SparsityClass::H_r, SparsityClass::L_r})
      for (double M : {3.0, 10.0, 30.0}) {
        const double r = kind == SparsityClass::H_r ? 0.5 : 1.0;
        const bool got = class_membership(s, r, M, kind);
        EXPECT_EQ(got, brute_membership(s.dense(), r, M, kind));
        members += got;
        ++total;
      }
  }
  EXPECT_GT(members, 0);
  EXPECT_LT(members, total);
}

TEST(Membership, StrongBallCounts) {
  auto m = tridiagonal_cov(10, 0.3);
  // r = 0: at most three nonzeros per column
  EXPECT_TRUE(class_membership(m, 0.0, 3.0, SparsityClass::strong_lq));
  EXPECT_FALSE(class_membership(m, 0.0, 2.0, SparsityClass::strong_lq));
  // r = 0.5: 1 + 2 * 0.3^{1/2}
  EXPECT_TRUE(class_membership(m, 0.5, 1.0 + 2.0 * std::sqrt(0.3) + 1e-12, SparsityClass::strong_lq));
  EXPECT_FALSE(class_membership(m, 0.5, 1.0 + 2.0 * std::sqrt(0.3) - 1e-9, SparsityClass::strong_lq));
}

TEST(Membership, MonotoneInRadius) {
  Rng rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_sym(5, rng);
    bool was = false;
    for (double M = 0.5; M < 200; M *= 1.5) {
      const bool now = class_membership(s, 1.0, M, SparsityClass::H_r);
      EXPECT_TRUE(!was || now);
      was = now;
    }
  }
}

TEST(Membership, LargeDiagonalExcluded) {
  EXPECT_FALSE(class_membership(SymMatrix::diagonal({1.5, 1.0}), 0.5, 1e9, SparsityClass::H_r));
}

TEST(Dependence, LinearThetaBound) {
  const double g = 0.7;
  double direct = 0.0;
  for (int l = 5; l < 3000000; ++l) direct += std::pow(l + 1.0, -1.0 - g);
  direct += std::pow(3000001.0, -g) / g;
  EXPECT_NEAR(theta_bound_linear(g, 5), direct, 1e-6 * direct);
  EXPECT_GT(theta_bound_linear(g, 1), theta_bound_linear(g, 2));
}
