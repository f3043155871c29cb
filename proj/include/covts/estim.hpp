#pragma once

// Covariance estimators: sample covariance, hard thresholding, eigenvalue
// flooring, and kernel-smoothed time-varying covariance. Also the two error
// norms used throughout the experiments.

#include "covts/core.hpp"
#include "covts/linalg.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace covts::estim {

// n^{-1} sum_i z_i z_i^T, optionally after subtracting the column mean.
inline SymMatrix sample_cov(const DataMatrix& z, bool center = false) {
  require(z.n() >= 1, "sample_cov: need at least one observation");
  Matrix x = z.values();
  if (center) x.colwise() -= x.rowwise().mean();
  Matrix s = Matrix::Zero(x.rows(), x.rows());
  s.selfadjointView<Eigen::Lower>().rankUpdate(x, 1.0 / double(z.n()));
  return SymMatrix::from_lower(s);
}

struct ThresholdEstimate {
  SymMatrix matrix;
  double u = 0.0;
  std::size_t kept = 0;  // surviving entries of the full p x p matrix
};

// Hard threshold applied to every entry, the diagonal included.
inline ThresholdEstimate threshold(const SymMatrix& s, double u) {
  require(u >= 0.0, "threshold: u must be nonnegative");
  ThresholdEstimate out{s, u, 0};
  std::size_t idx = 0;
  auto cells = out.matrix.packed();
  for (std::size_t j = 0; j < s.dim(); ++j)
    for (std::size_t k = 0; k <= j; ++k, ++idx) {
      if (std::abs(cells[idx]) >= u)
        out.kept += j == k ? 1 : 2;
      else
        cells[idx] = 0.0;
    }
  return out;
}

// Sum_j max(lambda_j, v) q_j q_j^T
inline SymMatrix positive_definitize(const SymMatrix& t, double v) {
  require(v > 0.0, "positive_definitize: floor v must be positive");
  const auto eig = linalg::sym_eigen(t);
  return SymMatrix::symmetrize(linalg::spectral_map(eig, [v](double x) { return std::max(x, v); }));
}

// v = (p^{-1} sum u^2 I(|s| >= u))^{1/2} = u (kept / p)^{1/2}
inline double default_pd_floor(const ThresholdEstimate& t) {
  const std::size_t p = t.matrix.dim();
  require(p > 0, "default_pd_floor: empty matrix");
  return t.u * std::sqrt(double(t.kept) / double(p));
}

// ---------------------------------------------------------------------------
// Kernel smoothing in rescaled time
// ---------------------------------------------------------------------------

enum class WeightScheme { nadaraya_watson, local_linear };
enum class Kernel { epanechnikov, flat };

inline const char* to_string(WeightScheme s) {
  return s == WeightScheme::nadaraya_watson ? "nadaraya_watson" : "local_linear";
}
inline const char* to_string(Kernel k) { return k == Kernel::epanechnikov ? "epanechnikov" : "flat"; }

inline double kernel_value(Kernel k, double v) {
  if (std::abs(v) > 1.0) return 0.0;
  return k == Kernel::epanechnikov ? 0.75 * (1.0 - v * v) : 0.5;
}

inline double default_bandwidth(std::size_t n) { return std::pow(double(n), -0.2); }

struct KernelWeights {
  double t = 0.0;
  double b = 0.0;
  WeightScheme scheme = WeightScheme::nadaraya_watson;
  Kernel kernel = Kernel::epanechnikov;
  std::vector<double> w;  // w[m-1] pairs with time point m/n
};

// Weights on the time points m/n, m = 1..n. Local-linear weights fall back to
// Nadaraya-Watson when the window holds a single point (no slope to fit).
inline KernelWeights kernel_weights(std::size_t n, double t, double b,
                                    WeightScheme scheme = WeightScheme::nadaraya_watson,
                                    Kernel kernel = Kernel::epanechnikov) {
  require(n >= 1, "kernel_weights: n must be at least 1");
  require(t >= 0.0 && t <= 1.0, "kernel_weights: t must lie in [0, 1]");
  require(b > 0.0 && b <= 1.0, "kernel_weights: bandwidth must lie in (0, 1]");
  KernelWeights kw{t, b, scheme, kernel, std::vector<double>(n, 0.0)};

  std::vector<double> k(n, 0.0), d(n, 0.0);
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  std::size_t support = 0;
  for (std::size_t m = 1; m <= n; ++m) {
    const double dm = double(m) / double(n) - t;
    if (std::abs(dm) > b) continue;
    const double km = kernel_value(kernel, dm / b);
    if (km <= 0.0) continue;
    k[m - 1] = km;
    d[m - 1] = dm;
    s0 += km;
    s1 += km * dm;
    s2 += km * dm * dm;
    ++support;
  }
  require(support > 0, "kernel_weights: no time point inside the kernel window");

  const double det = s0 * s2 - s1 * s1;
  const bool linear = scheme == WeightScheme::local_linear && support > 1 && det > 1e-14 * s0 * s2;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (k[i] == 0.0) continue;
    kw.w[i] = linear ? k[i] * (s2 - d[i] * s1) / det : k[i] / s0;
    total += kw.w[i];
  }
  for (double& x : kw.w) x /= total;
  return kw;
}

// Sum_m w_m(t) z_m z_m^T
inline SymMatrix kernel_cov(const DataMatrix& z, const KernelWeights& kw) {
  require(kw.w.size() == z.n(), "kernel_cov: weight vector length differs from n");
  const auto p = Eigen::Index(z.p());
  Matrix s = Matrix::Zero(p, p);
  auto lower = s.selfadjointView<Eigen::Lower>();
  for (std::size_t m = 0; m < z.n(); ++m)
    if (kw.w[m] != 0.0) lower.rankUpdate(z.column(m), kw.w[m]);
  return SymMatrix::from_lower(s);
}

inline SymMatrix kernel_cov(const DataMatrix& z, double t, double b,
                            WeightScheme scheme = WeightScheme::nadaraya_watson,
                            Kernel kernel = Kernel::epanechnikov) {
  return kernel_cov(z, kernel_weights(z.n(), t, b, scheme, kernel));
}

// ---------------------------------------------------------------------------
// Error norms
// ---------------------------------------------------------------------------

// p^{-2} |A - B|_F^2
inline double frob_err(const SymMatrix& a, const SymMatrix& b) {
  require(a.dim() == b.dim(), "frob_err: dimension mismatch");
  if (a.dim() == 0) return 0.0;
  double s = 0.0;
  (a - b).for_each_weighted([&](std::size_t, std::size_t, double v, double w) { s += w * v * v; });
  return s / (double(a.dim()) * double(a.dim()));
}

// Spectral norm of A - B.
inline double spectral_err(const SymMatrix& a, const SymMatrix& b) {
  require(a.dim() == b.dim(), "spectral_err: dimension mismatch");
  return linalg::spectral_norm(a - b);
}

}  // namespace covts::estim
