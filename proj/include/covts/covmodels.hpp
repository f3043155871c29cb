#pragma once

// Ground-truth covariance models (spatial kernels over planar sites, the
// star-shaped counterexample, banded matrices) and the entrywise smallness
// measures that drive the rate functions.

#include "covts/core.hpp"
#include "covts/linalg.hpp"
#include "covts/procsim.hpp"

#include <array>
#include <cmath>
#include <random>
#include <set>
#include <vector>

namespace covts::covmodels {

// ---------------------------------------------------------------------------
// Sites
// ---------------------------------------------------------------------------

class SiteSet {
 public:
  SiteSet() = default;
  explicit SiteSet(std::vector<std::array<double, 2>> coords) : coords_(std::move(coords)) {
    for (const auto& c : coords_)
      require(std::isfinite(c[0]) && std::isfinite(c[1]), "SiteSet: coordinates must be finite");
  }

  std::size_t size() const noexcept { return coords_.size(); }
  const std::array<double, 2>& operator[](std::size_t j) const { return coords_[j]; }
  const std::vector<std::array<double, 2>>& coords() const noexcept { return coords_; }

  // Euclidean distance; exactly zero on the diagonal.
  double distance(std::size_t j, std::size_t k) const {
    if (j == k) return 0.0;
    return std::hypot(coords_[j][0] - coords_[k][0], coords_[j][1] - coords_[k][1]);
  }

 private:
  std::vector<std::array<double, 2>> coords_;
};

inline SiteSet uniform_sites(std::size_t p, double side, std::uint64_t seed) {
  require(p >= 1, "uniform_sites: p must be at least 1");
  require(side > 0.0 && std::isfinite(side), "uniform_sites: side must be positive");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, side);
  std::vector<std::array<double, 2>> pts(p);
  for (auto& s : pts) {
    s[0] = unif(rng);
    s[1] = unif(rng);
  }
  return SiteSet(std::move(pts));
}

// ---------------------------------------------------------------------------
// Covariance models
// ---------------------------------------------------------------------------

template <typename F>
SymMatrix stationary_field(const SiteSet& sites, F&& f) {
  SymMatrix m(sites.size());
  for (std::size_t j = 0; j < sites.size(); ++j) {
    m(j, j) = 1.0;
    for (std::size_t k = 0; k < j; ++k) m(j, k) = f(sites.distance(j, k));
  }
  return m;
}

// f(m) = (1 + m^2 / (K tau^2))^{-K/2}
inline SymMatrix rational_quadratic_cov(const SiteSet& sites, double K, double tau) {
  require(K > 0.0, "rational_quadratic_cov: K must be positive");
  require(tau > 0.0, "rational_quadratic_cov: tau must be positive");
  const double scale = K * tau * tau;
  return stationary_field(sites, [&](double d) { return std::pow(1.0 + d * d / scale, -0.5 * K); });
}

// f(m) = exp(-(m / tau)^theta), 0 < theta <= 2
inline SymMatrix gamma_exponential_cov(const SiteSet& sites, double tau, double theta) {
  require(tau > 0.0, "gamma_exponential_cov: tau must be positive");
  require(theta > 0.0 && theta <= 2.0, "gamma_exponential_cov: theta must lie in (0, 2]");
  return stationary_field(sites, [&](double d) { return std::exp(-std::pow(d / tau, theta)); });
}

// Unit diagonal, first row and column eps, zero elsewhere.
// Positive definite for 0 < eps <= (p-1)^{-1/2} when p >= 2 (strictly for eps < that bound).
inline SymMatrix counterexample_matrix(std::size_t p, double eps) {
  require(p >= 2, "counterexample_matrix: p must be at least 2");
  require(eps > 0.0 && eps <= 1.0 / std::sqrt(double(p - 1)),
          "counterexample_matrix: eps must lie in (0, (p-1)^{-1/2}]");
  SymMatrix m = SymMatrix::identity(p);
  for (std::size_t k = 1; k < p; ++k) m(k, 0) = eps;
  return m;
}

// Unit diagonal and rho on the first off-diagonal; positive definite for |rho| < 1/2.
inline SymMatrix tridiagonal_cov(std::size_t p, double rho) {
  require(p >= 1, "tridiagonal_cov: p must be at least 1");
  require(std::abs(rho) < 0.5, "tridiagonal_cov: |rho| must be below 1/2");
  SymMatrix m = SymMatrix::identity(p);
  for (std::size_t j = 1; j < p; ++j) m(j, j - 1) = rho;
  return m;
}

// ---------------------------------------------------------------------------
// Smallness measures
// ---------------------------------------------------------------------------

struct SmallnessReport {
  double u = 0.0;
  double D = 0.0;        // p^{-2} sum min(u^2, s^2)
  double F = 0.0;        // p^{-2} #{|s| >= u}
  double D_star = 0.0;   // max_k sum_j min(|s|, u)
  std::size_t N_star = 0;  // max_k #{j : |s| >= u}
  double D_prec = 0.0;   // p^{-2} sum u min(u, |s|)
  double D_minus = 0.0;  // as D_prec without the diagonal
};

inline SmallnessReport smallness(const SymMatrix& sigma, double u) {
  require(u >= 0.0, "smallness: u must be nonnegative");
  const std::size_t p = sigma.dim();
  SmallnessReport r;
  r.u = u;
  if (p == 0) return r;

  std::vector<double> col_sum(p, 0.0);
  std::vector<std::size_t> col_count(p, 0);
  double d = 0.0, dp = 0.0, dm = 0.0;
  std::size_t count = 0;
  sigma.for_each_weighted([&](std::size_t j, std::size_t k, double v, double w) {
    const double a = std::abs(v);
    d += w * std::min(u * u, a * a);
    const double pr = u * std::min(u, a);
    dp += w * pr;
    if (j != k) dm += w * pr;
    const double clipped = std::min(a, u);
    const bool big = a >= u;
    col_sum[j] += clipped;
    col_count[j] += big;
    if (j != k) {
      col_sum[k] += clipped;
      col_count[k] += big;
    }
    if (big) count += j == k ? 1 : 2;
  });
  const double p2 = double(p) * double(p);
  r.D = d / p2;
  r.F = double(count) / p2;
  r.D_star = *std::max_element(col_sum.begin(), col_sum.end());
  r.N_star = *std::max_element(col_count.begin(), col_count.end());
  r.D_prec = dp / p2;
  r.D_minus = dm / p2;
  return r;
}

// #{(j,k) : |s_jk| >= u} over the full p x p index set.
inline std::size_t exceedance_count(const SymMatrix& sigma, double u) {
  std::size_t c = 0;
  sigma.for_each_weighted([&](std::size_t, std::size_t, double v, double w) {
    if (std::abs(v) >= u) c += std::size_t(w);
  });
  return c;
}

// ---------------------------------------------------------------------------
// Class membership
// ---------------------------------------------------------------------------

enum class SparsityClass { H_r, L_r, strong_lq };

// Thresholds at which the exceedance count can change, restricted to (0, cap]:
// every distinct nonzero |s_jk| plus dyadic levels 2^{-l} down to the smallest one,
// plus cap itself. The count is left-continuous and piecewise constant with jumps
// only at entry magnitudes, and both envelopes are decreasing in u, so checking
// the right end of every constancy interval is exact.
inline std::vector<double> membership_grid(const SymMatrix& sigma, double cap) {
  std::set<double> grid;
  double smallest = cap;
  for (double v : sigma.packed()) {
    const double a = std::abs(v);
    if (a > 0.0 && a <= cap) {
      grid.insert(a);
      smallest = std::min(smallest, a);
    }
  }
  for (double g = 1.0; g >= smallest; g *= 0.5)
    if (g <= cap) grid.insert(g);
  grid.insert(cap);
  return {grid.begin(), grid.end()};
}

inline bool class_membership(const SymMatrix& sigma, double r, double M, SparsityClass kind) {
  switch (kind) {
    case SparsityClass::H_r: require(r >= 0.0 && r < 2.0, "class_membership: H_r needs 0 <= r < 2"); break;
    case SparsityClass::L_r: require(r > 0.0, "class_membership: L_r needs r > 0"); break;
    case SparsityClass::strong_lq: require(r >= 0.0 && r < 1.0, "class_membership: strong_lq needs 0 <= r < 1"); break;
  }
  const std::size_t p = sigma.dim();
  for (std::size_t j = 0; j < p; ++j)
    if (sigma(j, j) > 1.0) return false;

  if (kind == SparsityClass::strong_lq) {
    std::vector<double> col(p, 0.0);
    sigma.for_each_weighted([&](std::size_t j, std::size_t k, double v, double) {
      const double a = std::abs(v);
      const double term = r == 0.0 ? (a != 0.0 ? 1.0 : 0.0) : std::pow(a, r);
      col[j] += term;
      if (j != k) col[k] += term;
    });
    return p == 0 || *std::max_element(col.begin(), col.end()) <= M;
  }

  if (kind == SparsityClass::H_r) {
    for (double u : membership_grid(sigma, 1.0))
      if (double(exceedance_count(sigma, u)) > M * std::pow(u, -r)) return false;
    return true;
  }
  const double cap = std::max(1.0, sigma.max_abs());
  for (double u : membership_grid(sigma, cap))
    if (double(exceedance_count(sigma, u)) > M * std::pow(std::log(2.0 + 1.0 / u), r)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Dependence bound for the linear family
// ---------------------------------------------------------------------------

// sum_{l >= m} (l+1)^{-1-gamma}: the tail dependence bound Theta_{m,2q} of the
// linear process with coefficients (l+1)^{-1-gamma} B, up to the moment constant.
inline double theta_bound_linear(double gamma, std::size_t m) {
  require(gamma > 0.0, "theta_bound_linear: gamma must be positive");
  return power_tail_sum(1.0 + gamma, double(m) + 1.0);
}

}  // namespace covts::covmodels
