#include "covts/estim.hpp"
#include "covts/procsim.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace covts;
using namespace covts::estim;

namespace {

DataMatrix gaussian_data(std::size_t p, std::size_t n, Rng& rng) {
  std::normal_distribution<double> g;
  Matrix z(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = g(rng);
  return DataMatrix(z);
}

SymMatrix permute(const SymMatrix& s, const std::vector<std::size_t>& perm) {
  SymMatrix out(s.dim());
  for (std::size_t j = 0; j < s.dim(); ++j)
    for (std::size_t k = 0; k <= j; ++k) out(j, k) = s(perm[j], perm[k]);
  return out;
}

double frob2(const Matrix& a) { return a.squaredNorm(); }

}  // namespace

TEST(SampleCov, MatchesNaiveSum) {
  Rng rng(1);
  const auto z = gaussian_data(4, 30, rng);
  Matrix naive = Matrix::Zero(4, 4);
  for (std::size_t i = 0; i < z.n(); ++i) naive += z.column(i) * z.column(i).transpose();
  naive /= 30.0;
  EXPECT_LE((sample_cov(z).dense() - naive).cwiseAbs().maxCoeff(), 1e-14);

  const Matrix x = z.values();
  const Matrix xc = x.colwise() - x.rowwise().mean();
  EXPECT_LE((sample_cov(z, true).dense() - xc * xc.transpose() / 30.0).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Threshold, ZeroLevelIsIdentityMap) {
  Rng rng(2);
  const auto s = sample_cov(gaussian_data(7, 20, rng));
  const auto t = threshold(s, 0.0);
  EXPECT_EQ(t.matrix, s);
  EXPECT_EQ(t.kept, 49u);
}

TEST(Threshold, IdempotentEquivariantAndCounted) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t p = 2 + trial % 10;
    const auto s = sample_cov(gaussian_data(p, 15, rng));
    const double u = 0.05 + 0.01 * trial;
    const auto t = threshold(s, u);
    EXPECT_EQ(threshold(t.matrix, u).matrix, t.matrix);

    std::vector<std::size_t> perm(p);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    EXPECT_EQ(threshold(permute(s, perm), u).matrix, permute(t.matrix, perm));

    std::size_t brute = 0;
    const Matrix d = s.dense();
    for (Eigen::Index i = 0; i < d.size(); ++i) brute += std::abs(d.data()[i]) >= u;
    EXPECT_EQ(t.kept, brute);
  }
  EXPECT_THROW(threshold(SymMatrix::identity(2), -0.1), InvalidArgument);
}

TEST(PositiveDefinitize, FloorAndRiskInequality) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t p = 3 + trial % 12;
    const SymMatrix sigma = SymMatrix::identity(p);
    const auto t = threshold(sample_cov(gaussian_data(p, 8, rng)), 0.2);
    const double v = std::max(default_pd_floor(t), 1e-3);
    const SymMatrix s = positive_definitize(t.matrix, v);
    EXPECT_GE(linalg::min_eigenvalue(s), v - 1e-10);
    const double lhs = frob2((s - sigma).dense());
    const double rhs = 6.0 * frob2((t.matrix - sigma).dense()) + 4.0 * double(p) * v * v;
    EXPECT_LE(lhs, rhs);
  }
  EXPECT_THROW(positive_definitize(SymMatrix::identity(2), 0.0), InvalidArgument);
}

TEST(PositiveDefinitize, LeavesWellConditionedInputAlone) {
  const auto s = SymMatrix::diagonal({2.0, 3.0});
  const auto out = positive_definitize(s, 0.5);
  EXPECT_NEAR(out(0, 0), 2.0, 1e-14);
  EXPECT_NEAR(out(1, 1), 3.0, 1e-14);
}

TEST(PdFloor, DefaultFormula) {
  ThresholdEstimate t{SymMatrix::identity(4), 0.3, 9};
  EXPECT_DOUBLE_EQ(default_pd_floor(t), 0.3 * 1.5);
}

TEST(KernelWeights, SumToOneAndMoments) {
  for (std::size_t n : {50u, 333u, 1000u})
    for (double t : {0.0, 0.13, 0.5, 0.97, 1.0})
      for (double b : {0.05, 0.2, 0.6})
        for (auto k : {Kernel::epanechnikov, Kernel::flat}) {
          const auto nw = kernel_weights(n, t, b, WeightScheme::nadaraya_watson, k);
          const auto ll = kernel_weights(n, t, b, WeightScheme::local_linear, k);
          double snw = 0, sll = 0, m1 = 0;
          for (std::size_t m = 0; m < n; ++m) {
            EXPECT_GE(nw.w[m], 0.0);
            snw += nw.w[m];
            sll += ll.w[m];
            m1 += ll.w[m] * (double(m + 1) / double(n) - t);
          }
          EXPECT_NEAR(snw, 1.0, 1e-12);
          EXPECT_NEAR(sll, 1.0, 1e-12);
          EXPECT_NEAR(m1, 0.0, 1e-12);
        }
}

TEST(KernelWeights, SupportAndValidation) {
  const auto kw = kernel_weights(100, 0.5, 0.1);
  for (std::size_t m = 0; m < 100; ++m)
    if (std::abs(double(m + 1) / 100.0 - 0.5) >= 0.1) {
      EXPECT_EQ(kw.w[m], 0.0);
    }
  EXPECT_THROW(kernel_weights(100, 0.5, 0.0), InvalidArgument);
  EXPECT_THROW(kernel_weights(100, 1.5, 0.1), InvalidArgument);
  EXPECT_THROW(kernel_weights(100, 0.505, 0.001), InvalidArgument);  // empty window
  EXPECT_NEAR(default_bandwidth(32), 0.5, 1e-15);
}

TEST(KernelCov, FlatFullWindowIsSampleCov) {
  Rng rng(5);
  const auto z = gaussian_data(3, 40, rng);
  EXPECT_LE((kernel_cov(z, 0.5, 1.0, WeightScheme::nadaraya_watson, Kernel::flat).dense() - sample_cov(z).dense())
                .cwiseAbs()
                .maxCoeff(),
            1e-14);
}

// Deterministic smoothing bias of the weights applied to a smooth Sigma(t):
// |sum_m w_m Sigma(m/n) - Sigma(t)| scales as b^2.
TEST(KernelCov, NoiselessBiasSlope) {
  const std::size_t n = 200000;
  const double t = 0.5;
  auto sigma = [](double s) {
    Matrix m(2, 2);
    m << 1.0 + s * s, 0.3 * std::sin(2.0 * s), 0.3 * std::sin(2.0 * s), std::exp(s);
    return m;
  };
  std::vector<double> lb, le;
  for (double b : {0.02, 0.04, 0.08, 0.16}) {
    const auto kw = kernel_weights(n, t, b);
    Matrix acc = Matrix::Zero(2, 2);
    for (std::size_t m = 0; m < n; ++m)
      if (kw.w[m] != 0.0) acc += kw.w[m] * sigma(double(m + 1) / double(n));
    lb.push_back(std::log(b));
    le.push_back(std::log((acc - sigma(t)).norm()));
  }
  const double mx = std::accumulate(lb.begin(), lb.end(), 0.0) / 4, my = std::accumulate(le.begin(), le.end(), 0.0) / 4;
  double sxy = 0, sxx = 0;
  for (int i = 0; i < 4; ++i) {
    sxy += (lb[i] - mx) * (le[i] - my);
    sxx += (lb[i] - mx) * (lb[i] - mx);
  }
  EXPECT_NEAR(sxy / sxx, 2.0, 0.3);
}

TEST(KernelCov, TracksModulatedDiagonal) {
  using namespace covts::procsim;
  const std::size_t p = 10, n = 5000;
  std::vector<double> d0(p), d1(p);
  for (std::size_t j = 0; j < p; ++j) {
    d0[j] = 1.0 + 0.1 * double(j);
    d1[j] = 3.0 - 0.15 * double(j);
  }
  ProcessSpec spec;
  spec.p = p;
  spec.params = ModulatedParams{{SymMatrix::diagonal(d0), SymMatrix::diagonal(d1)}, nullptr};
  const double t = 0.4;
  const double b = default_bandwidth(n);
  Vector mean = Vector::Zero(Eigen::Index(p));
  for (int rep = 0; rep < 20; ++rep) {
    spec.seed = 100 + std::uint64_t(rep);
    const auto est = kernel_cov(simulate(spec, n), t, b);
    for (std::size_t j = 0; j < p; ++j) mean(Eigen::Index(j)) += est(j, j) / 20.0;
  }
  const auto truth = local_cov(spec, t);
  for (std::size_t j = 0; j < p; ++j) EXPECT_NEAR(mean(Eigen::Index(j)) / truth(j, j), 1.0, 0.10);
}

TEST(Errors, Norms) {
  const auto a = SymMatrix::diagonal({1.0, 2.0});
  SymMatrix b = a;
  b(1, 0) = 0.5;
  EXPECT_DOUBLE_EQ(frob_err(a, b), 2 * 0.25 / 4.0);
  EXPECT_NEAR(spectral_err(a, b), 0.5, 1e-12);
  EXPECT_EQ(frob_err(SymMatrix(), SymMatrix()), 0.0);
  EXPECT_THROW(frob_err(a, SymMatrix::identity(3)), InvalidArgument);
}
