#pragma once

// Rate functions for thresholded covariance and penalized precision
// estimation under temporal dependence, the threshold equations built from
// them, regime classification in terms of the effective dimension p^2/M, and
// the spectral-norm bound with its numerically optimized threshold.
//
// All unspecified constants are 1 unless overridden through RateProfile.

#include "covts/core.hpp"
#include "covts/covmodels.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace covts::rates {

// ---------------------------------------------------------------------------
// Profile
// ---------------------------------------------------------------------------

enum class Regime { weak, boundary, strong };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::weak: return "weak";
    case Regime::boundary: return "boundary";
    case Regime::strong: return "strong";
  }
  return "?";
}

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;
  double value() const { return double(num) / double(den); }
};

inline constexpr double kBoundaryTolerance = 1e-12;

struct RateProfile {
  double n = 100.0;
  double p = 1.0;
  double q = 4.0;
  double alpha = 1.0;
  std::optional<double> b;  // bandwidth, for the effective sample size n b
  // Exact inputs for the phase-boundary test; when both are set they take
  // precedence over the floating values above.
  std::optional<Rational> q_exact;
  std::optional<Rational> alpha_exact;
  double c_g = 1.0;  // the constant C in G(C u)

  static RateProfile make(double n, double p, double q, double alpha, std::optional<double> b = std::nullopt) {
    RateProfile r;
    r.n = n;
    r.p = p;
    r.q = q;
    r.alpha = alpha;
    r.b = b;
    r.validate();
    return r;
  }

  static RateProfile make_exact(double n, double p, Rational q, Rational alpha,
                                std::optional<double> b = std::nullopt) {
    require(q.den > 0 && alpha.den > 0, "RateProfile: rational denominators must be positive");
    RateProfile r = make(n, p, q.value(), alpha.value(), b);
    r.q_exact = q;
    r.alpha_exact = alpha;
    return r;
  }

  void validate() const {
    require(n >= 1.0 && std::isfinite(n), "RateProfile: n must be at least 1");
    require(p >= 1.0 && std::isfinite(p), "RateProfile: p must be at least 1");
    require(q > 2.0 && std::isfinite(q), "RateProfile: moment order q must exceed 2");
    require(alpha > 0.0 && std::isfinite(alpha), "RateProfile: alpha must be positive");
    if (b) require(*b > 0.0 && *b <= 1.0, "RateProfile: bandwidth must lie in (0, 1]");
    require(c_g > 0.0, "RateProfile: constant multiplier must be positive");
  }

  double phase_boundary() const { return 0.5 - 1.0 / q; }

  Regime regime() const {
    if (q_exact && alpha_exact) {
      // alpha = a/b vs 1/2 - d/c  <=>  2 a c vs b (c - 2 d)
      const __int128 a = alpha_exact->num, bb = alpha_exact->den, c = q_exact->num, d = q_exact->den;
      const __int128 lhs = 2 * a * c, rhs = bb * (c - 2 * d);
      if (lhs == rhs) return Regime::boundary;
      return lhs > rhs ? Regime::weak : Regime::strong;
    }
    const double diff = alpha - phase_boundary();
    if (std::abs(diff) <= kBoundaryTolerance) return Regime::boundary;
    return diff > 0 ? Regime::weak : Regime::strong;
  }

  double alpha_tilde() const { return std::min(alpha, phase_boundary()); }
  double beta_tilde() const { return (3.0 + 2.0 * alpha_tilde() * q) / (1.0 + q); }

  double n_sharp() const {
    require(b.has_value(), "RateProfile: bandwidth is required for the effective sample size");
    return n * *b;
  }
};

// ---------------------------------------------------------------------------
// H, G and variants
// ---------------------------------------------------------------------------

inline double H(double u, const RateProfile& pr) {
  require(u > 0.0, "H: u must be positive");
  const double base = std::pow(u, 2.0 - pr.q);
  switch (pr.regime()) {
    case Regime::weak: return base * std::pow(pr.n, 1.0 - pr.q);
    case Regime::boundary: return base * std::pow(pr.n, 1.0 - pr.q) * std::pow(std::log(pr.n), 1.0 + pr.q);
    case Regime::strong: return base * std::pow(pr.n, -pr.q * (pr.alpha + 0.5));
  }
  return 0.0;
}

// G evaluated at c_g * u.
inline double G(double u, const RateProfile& pr) {
  require(u > 0.0, "G: u must be positive");
  const double v = pr.c_g * u;
  const double v2 = v * v;
  switch (pr.regime()) {
    case Regime::weak: return (1.0 / pr.n + v2) * std::exp(-pr.n * v2);
    case Regime::boundary: {
      const double l2 = std::log(pr.n) * std::log(pr.n);
      return (l2 / pr.n + v2) * std::exp(-pr.n * v2 / l2);
    }
    case Regime::strong: {
      const double nb = std::pow(pr.n, pr.beta_tilde());
      return (1.0 / nb + v2) * std::exp(-nb * v2);
    }
  }
  return 0.0;
}

// u^{2-q} n^{-q/2}
inline double moment_term(double u, const RateProfile& pr) {
  require(u > 0.0, "moment_term: u must be positive");
  return std::pow(u, 2.0 - pr.q) * std::pow(pr.n, -pr.q / 2.0);
}

inline double G_tilde(double u, const RateProfile& pr) {
  const double g = G(u, pr);
  if (pr.regime() == Regime::weak) return g;
  return std::min(g, moment_term(u, pr));
}

namespace detail {
inline void require_sharp(const RateProfile& pr) {
  require(pr.b.has_value(), "sharp rate functions need a bandwidth");
  require(pr.regime() == Regime::weak, "sharp rate functions are defined for the weak-dependence regime only");
}
}  // namespace detail

inline double H_sharp(double u, const RateProfile& pr) {
  require(u > 0.0, "H_sharp: u must be positive");
  detail::require_sharp(pr);
  return std::pow(u, 2.0 - pr.q) * std::pow(pr.n_sharp(), 1.0 - pr.q);
}

inline double G_sharp(double u, const RateProfile& pr) {
  require(u > 0.0, "G_sharp: u must be positive");
  detail::require_sharp(pr);
  const double ns = pr.n_sharp();
  const double v2 = pr.c_g * pr.c_g * u * u;
  return (1.0 / ns + v2) * std::exp(-ns * v2);
}

// Asymptotic form of the H = G crossing, for cross-checks only.
inline double u_diamond_asymptotic(const RateProfile& pr) {
  return std::sqrt((pr.q / 2.0 - 1.0) * std::log(pr.n) / pr.n);
}

// ---------------------------------------------------------------------------
// Smallness models: from a matrix or from class-bound envelopes
// ---------------------------------------------------------------------------

// Envelope parameters for a sparsity class: exceedance budget M, exponent r
// and the constant in front of the envelope.
struct ClassParams {
  double r = 0.0;
  double M = 1.0;
  double C = 1.0;
};

using SmallnessModel = std::variant<std::monostate, const SymMatrix*, ClassParams>;

// D(u) = p^{-2} sum min(u^2, s^2); class form min(u^2, C u^{2-r} M / p^2).
inline double D_of(double u, const RateProfile& pr, const SmallnessModel& m) {
  if (const auto* s = std::get_if<const SymMatrix*>(&m)) return covmodels::smallness(**s, u).D;
  if (const auto* c = std::get_if<ClassParams>(&m))
    return std::min(u * u, c->C * std::pow(u, 2.0 - c->r) * c->M / (pr.p * pr.p));
  throw InvalidArgument("D-type side needs a matrix or class parameters");
}

// D*(u) = p^{-2} sum u min(u, |w|); same class envelope.
inline double Dstar_of(double u, const RateProfile& pr, const SmallnessModel& m) {
  if (const auto* s = std::get_if<const SymMatrix*>(&m)) return covmodels::smallness(**s, u).D_prec;
  if (const auto* c = std::get_if<ClassParams>(&m))
    return std::min(u * u, c->C * std::pow(u, 2.0 - c->r) * c->M / (pr.p * pr.p));
  throw InvalidArgument("D*-type side needs a matrix or class parameters");
}

// ---------------------------------------------------------------------------
// Threshold equations
// ---------------------------------------------------------------------------

enum class Side {
  H,
  G,
  G_tilde,
  H_sharp,
  G_sharp,
  max_H_G,              // max(H, G)
  max_H_G_tilde,        // max(G~, H)
  min_inv_n_max_H_G_tilde,  // min(1/n, max(G~, H))
  max_H_sharp_G_sharp,  // max(G#, H#)
  D_model,
  Dstar_model
};

inline const char* to_string(Side s) {
  switch (s) {
    case Side::H: return "H";
    case Side::G: return "G";
    case Side::G_tilde: return "G_tilde";
    case Side::H_sharp: return "H_sharp";
    case Side::G_sharp: return "G_sharp";
    case Side::max_H_G: return "max_H_G";
    case Side::max_H_G_tilde: return "max_H_G_tilde";
    case Side::min_inv_n_max_H_G_tilde: return "min_inv_n_max_H_G_tilde";
    case Side::max_H_sharp_G_sharp: return "max_H_sharp_G_sharp";
    case Side::D_model: return "D_model";
    case Side::Dstar_model: return "Dstar_model";
  }
  return "?";
}

inline std::function<double(double)> side_function(Side s, const RateProfile& pr, const SmallnessModel& m) {
  switch (s) {
    case Side::H: return [pr](double u) { return H(u, pr); };
    case Side::G: return [pr](double u) { return G(u, pr); };
    case Side::G_tilde: return [pr](double u) { return G_tilde(u, pr); };
    case Side::H_sharp: return [pr](double u) { return H_sharp(u, pr); };
    case Side::G_sharp: return [pr](double u) { return G_sharp(u, pr); };
    case Side::max_H_G: return [pr](double u) { return std::max(H(u, pr), G(u, pr)); };
    case Side::max_H_G_tilde: return [pr](double u) { return std::max(H(u, pr), G_tilde(u, pr)); };
    case Side::min_inv_n_max_H_G_tilde:
      return [pr](double u) { return std::min(1.0 / pr.n, std::max(H(u, pr), G_tilde(u, pr))); };
    case Side::max_H_sharp_G_sharp:
      return [pr](double u) { return std::max(H_sharp(u, pr), G_sharp(u, pr)); };
    case Side::D_model: return [pr, m](double u) { return D_of(u, pr, m); };
    case Side::Dstar_model: return [pr, m](double u) { return Dstar_of(u, pr, m); };
  }
  throw InvalidArgument("unknown equation side");
}

struct Root {
  double u = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;  // |lhs - rhs| / max(lhs, rhs)
  std::size_t iterations = 0;
};

inline constexpr double kRootTolerance = 1e-8;
inline constexpr int kBracketSamples = 256;

inline double relative_gap(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

// Root of lhs(u) = rhs(u) on [lo, hi] by bisection in log u. Before bisecting,
// both sides are sampled on a log grid: each must be monotone and their
// difference must change sign exactly once, otherwise NonMonotone is thrown.
inline Root solve_equation(const std::function<double(double)>& lhs, const std::function<double(double)>& rhs,
                           double lo, double hi) {
  require(lo > 0.0 && hi > lo && std::isfinite(hi), "solve_threshold_equation: need 0 < lo < hi");
  auto diff = [&](double u) { return lhs(u) - rhs(u); };
  const double f_lo = diff(lo), f_hi = diff(hi);
  if (f_lo == 0.0) return {lo, lhs(lo), rhs(lo), 0.0, 0};
  if (f_hi == 0.0) return {hi, lhs(hi), rhs(hi), 0.0, 0};
  if (!(f_lo * f_hi < 0.0))
    throw NoSignChange("threshold equation: lhs - rhs does not change sign on [" + std::to_string(lo) + ", " +
                       std::to_string(hi) + "]");

  // bracketing check
  {
    const double llo = std::log(lo), lhi = std::log(hi);
    double prev_l = 0.0, prev_r = 0.0;
    int dir_l = 0, dir_r = 0, crossings = 0, prev_sign = f_lo > 0 ? 1 : -1;
    for (int i = 0; i <= kBracketSamples; ++i) {
      const double u = std::exp(llo + (lhi - llo) * i / kBracketSamples);
      const double a = lhs(u), c = rhs(u);
      if (i > 0) {
        auto step_dir = [](double before, double after) {
          if (relative_gap(before, after) <= 1e-12) return 0;
          return after > before ? 1 : -1;
        };
        const int sl = step_dir(prev_l, a), sr = step_dir(prev_r, c);
        if ((sl != 0 && dir_l != 0 && sl != dir_l) || (sr != 0 && dir_r != 0 && sr != dir_r))
          throw NonMonotone("threshold equation: a side is not monotone on the interval");
        if (sl != 0) dir_l = sl;
        if (sr != 0) dir_r = sr;
      }
      const double d = a - c;
      const int sign = d > 0 ? 1 : (d < 0 ? -1 : prev_sign);
      if (sign != prev_sign) ++crossings;
      prev_sign = sign;
      prev_l = a;
      prev_r = c;
    }
    if (crossings > 1)
      throw NonMonotone("threshold equation: lhs - rhs changes sign " + std::to_string(crossings) +
                        " times on the interval");
  }

  double a = std::log(lo), b = std::log(hi);
  const bool lo_positive = f_lo > 0.0;
  Root best{lo, lhs(lo), rhs(lo), relative_gap(lhs(lo), rhs(lo)), 0};
  for (std::size_t it = 1; it <= 400; ++it) {
    const double mid = 0.5 * (a + b);
    const double u = std::exp(mid);
    const double l = lhs(u), r = rhs(u);
    const double res = relative_gap(l, r);
    if (res < best.residual || it == 1) best = {u, l, r, res, it};
    best.iterations = it;
    if (res <= kRootTolerance * 1e-3 || l == r) break;
    if (((l - r) > 0.0) == lo_positive)
      a = mid;
    else
      b = mid;
    if (b - a <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(mid))) break;
  }
  return best;
}

inline Root solve_threshold_equation(Side lhs, Side rhs, const RateProfile& pr, const SmallnessModel& model,
                                     double lo, double hi) {
  pr.validate();
  return solve_equation(side_function(lhs, pr, model), side_function(rhs, pr, model), lo, hi);
}

// Standard brackets: u >= n^{-1/2} (n_sharp^{-1/2} for the sharp sides).
inline double default_lower(const RateProfile& pr) { return 1.0 / std::sqrt(pr.n); }

// u_diamond: H(u) = G(u) over u >= n^{-1/2}. The upper end grows until H exceeds G.
inline Root solve_u_diamond(const RateProfile& pr) {
  const double lo = default_lower(pr);
  double hi = std::max(1.0, 4.0 * lo);
  while (H(hi, pr) <= G(hi, pr) && hi < 1e6) hi *= 2.0;
  return solve_threshold_equation(Side::H, Side::G, pr, std::monostate{}, lo, hi);
}

// ---------------------------------------------------------------------------
// Regime classification by effective dimension
// ---------------------------------------------------------------------------

struct RegimeReport {
  covmodels::SparsityClass cls = covmodels::SparsityClass::H_r;
  double effective_dimension = 0.0;  // p^2 / M
  double phi = 0.0;                  // log(p^2/M) / log n
  int active_case = 0;               // 1..4
  bool tie = false;
  std::string threshold_formula;
  double threshold = 0.0;
  double rate = 0.0;
};

// Case boundaries of phi for the H_r class, descending: q-1, (q+r-2)/2, r/2.
inline std::array<double, 3> phi_boundaries(double q, double r) { return {q - 1.0, (q + r - 2.0) / 2.0, r / 2.0}; }

inline RegimeReport classify_regime(const RateProfile& pr, const ClassParams& cp,
                                    covmodels::SparsityClass cls = covmodels::SparsityClass::H_r) {
  pr.validate();
  require(pr.n > 1.0, "classify_regime: n must exceed 1");
  require(cp.M > 0.0, "classify_regime: M must be positive");
  RegimeReport rep;
  rep.cls = cls;
  const double n = pr.n, q = pr.q, r = cp.r;
  const double e = pr.p * pr.p / cp.M;
  const double ln = std::log(n);
  rep.effective_dimension = e;
  rep.phi = std::log(e) / ln;
  auto near = [](double x, double y) { return std::abs(x - y) <= kBoundaryTolerance * std::max(1.0, std::abs(y)); };

  if (cls == covmodels::SparsityClass::H_r) {
    require(r >= 0.0 && r < 2.0, "classify_regime: H_r needs 0 <= r < 2");
    const auto bd = phi_boundaries(q, r);
    int c = 4;
    for (int i = 0; i < 3; ++i) {
      if (near(rep.phi, bd[std::size_t(i)])) {
        rep.tie = true;
        c = i + 2;  // the slower-rate side of the tie
        break;
      }
      if (rep.phi > bd[std::size_t(i)]) {
        c = i + 1;
        break;
      }
    }
    rep.active_case = c;
    switch (c) {
      case 1:
        rep.threshold_formula = "u ~ 1";
        rep.threshold = 1.0;
        rep.rate = std::pow(n, 1.0 - q);
        break;
      case 2:
        rep.threshold_formula = "u = (n^{1-q} p^2/M)^{1/(q-r)}";
        rep.threshold = std::pow(std::pow(n, 1.0 - q) * e, 1.0 / (q - r));
        rep.rate = std::pow(rep.threshold, 2.0 - q) * std::pow(n, 1.0 - q);
        break;
      case 3:
        rep.threshold_formula = "u = [n^{-1} log(2 + p^2 M^{-1} n^{-r/2})]^{1/2}";
        rep.threshold = std::sqrt(std::log(2.0 + e * std::pow(n, -r / 2.0)) / n);
        rep.rate = std::pow(rep.threshold, 2.0 - r) / e;
        break;
      default:
        rep.threshold_formula = "u <= n^{-1/2}";
        rep.threshold = 1.0 / std::sqrt(n);
        rep.rate = 1.0 / n;
        break;
    }
    return rep;
  }

  require(cls == covmodels::SparsityClass::L_r, "classify_regime: class must be H_r or L_r");
  require(r > 0.0, "classify_regime: L_r needs r > 0");
  const double upper = std::pow(n, q - 1.0);
  const double middle = std::pow(n, q / 2.0 - 1.0) * std::pow(ln, r + q / 2.0);
  const double eta = std::pow(ln, -r) * e;
  const double eta_floor = std::pow(2.0, -r);
  int c;
  if (near(e, upper)) {
    rep.tie = true;
    c = 2;
  } else if (e > upper) {
    c = 1;
  } else if (near(e, middle)) {
    rep.tie = true;
    c = 3;
  } else if (e > middle) {
    c = 2;
  } else if (near(eta, eta_floor)) {
    rep.tie = true;
    c = 4;
  } else {
    c = eta > eta_floor ? 3 : 4;
  }
  rep.active_case = c;
  switch (c) {
    case 1:
      rep.threshold_formula = "u ~ 1";
      rep.threshold = 1.0;
      rep.rate = std::pow(n, 1.0 - q);
      break;
    case 2: {
      const double eps = std::pow(n, 1.0 - q) * e;
      rep.threshold_formula = "u = eps^{1/q} log(2 + 1/eps)^{-r/q}, eps = n^{1-q} p^2/M";
      rep.threshold = std::pow(eps, 1.0 / q) * std::pow(std::log(2.0 + 1.0 / eps), -r / q);
      rep.rate = std::pow(rep.threshold, 2.0 - q) * std::pow(n, 1.0 - q);
      break;
    }
    case 3:
      rep.threshold_formula = "u = (n^{-1} log eta)^{1/2}, eta = (log n)^{-r} p^2/M";
      rep.threshold = std::sqrt(std::max(std::log(eta), 0.0) / n);
      rep.rate = std::max(std::log(eta), 0.0) / (n * eta);
      break;
    default:
      rep.threshold_formula = "u <= n^{-1/2}";
      rep.threshold = 1.0 / std::sqrt(n);
      rep.rate = 1.0 / n;
      break;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Frobenius risk bounds
// ---------------------------------------------------------------------------

enum class RiskVariant { stationary_cov, stationary_prec, tv_cov, tv_prec };

inline const char* to_string(RiskVariant v) {
  switch (v) {
    case RiskVariant::stationary_cov: return "stationary-cov";
    case RiskVariant::stationary_prec: return "stationary-prec";
    case RiskVariant::tv_cov: return "tv-cov";
    case RiskVariant::tv_prec: return "tv-prec";
  }
  return "?";
}

inline RiskVariant parse_risk_variant(const std::string& s) {
  for (auto v : {RiskVariant::stationary_cov, RiskVariant::stationary_prec, RiskVariant::tv_cov, RiskVariant::tv_prec})
    if (s == to_string(v)) return v;
  throw InvalidArgument("unknown risk variant '" + s + "'");
}

// min(1/n, u^{2-q} n^{-q/2}, H(u) + G(u))
inline double stationary_min_term(double u, const RateProfile& pr) {
  return std::min({1.0 / pr.n, moment_term(u, pr), H(u, pr) + G(u, pr)});
}

// min(1/n#, H#(u) + G#(u))
inline double sharp_min_term(double u, const RateProfile& pr) {
  return std::min(1.0 / pr.n_sharp(), H_sharp(u, pr) + G_sharp(u, pr));
}

// `model` holds Sigma for the covariance variants and Omega for the precision variants.
inline double risk_upper_bound(double u, const RateProfile& pr, const SmallnessModel& model, RiskVariant v) {
  require(u > 0.0, "risk_upper_bound: u must be positive");
  switch (v) {
    case RiskVariant::stationary_cov: return D_of(u, pr, model) + stationary_min_term(u, pr);
    case RiskVariant::stationary_prec: return Dstar_of(u, pr, model) + stationary_min_term(u, pr);
    case RiskVariant::tv_cov: {
      const double b = pr.b.value_or(0.0);
      return D_of(u, pr, model) + sharp_min_term(u, pr) + std::pow(b, 4.0);
    }
    case RiskVariant::tv_prec: {
      const double b = pr.b.value_or(0.0);
      return Dstar_of(u, pr, model) + sharp_min_term(u, pr) + std::pow(b, 4.0);
    }
  }
  throw InvalidArgument("risk_upper_bound: invalid variant");
}

// ---------------------------------------------------------------------------
// Spectral-norm bound
// ---------------------------------------------------------------------------

inline double L_alpha(const RateProfile& pr) {
  const double n = pr.n, q = pr.q;
  switch (pr.regime()) {
    case Regime::weak: return std::pow(n, 1.0 / q - 1.0);
    case Regime::boundary: return std::pow(n, 1.0 / q - 1.0) * std::pow(std::log(n), 1.0 + 1.0 / q);
    case Regime::strong: return std::pow(n, -pr.alpha - 0.5);
  }
  return 0.0;
}

inline double J_alpha(const RateProfile& pr) {
  const double n = pr.n;
  switch (pr.regime()) {
    case Regime::weak: return 1.0 / std::sqrt(n);
    case Regime::boundary: return std::log(n) / std::sqrt(n);
    case Regime::strong: return std::pow(n, -pr.beta_tilde() / 2.0);
  }
  return 0.0;
}

// L_alpha p^{1/q} N^{1+1/q} + J_alpha (log p)^{1/2} N
inline double M_star(double N, const RateProfile& pr) {
  return L_alpha(pr) * std::pow(pr.p, 1.0 / pr.q) * std::pow(N, 1.0 + 1.0 / pr.q) +
         J_alpha(pr) * std::sqrt(std::log(pr.p)) * N;
}

struct SpectralParts {
  double D_star = 0.0;   // D*(u)
  double N_star = 0.0;   // N*(u/2)
  double M_star = 0.0;   // M*(u/2)
  double min_term = 0.0;  // p min(n^{-1/2}, u^{1-q/2} n^{-q/4}, (H + G)^{1/2})
  double total = 0.0;
};

// Smallness at u (for D*) and u/2 (for N*) from a matrix or from the
// class forms D*(u) = M~ u^{1-r}, N*(u) = min(p, M~ u^{-r}).
inline SpectralParts spectral_bound_parts(double u, const RateProfile& pr, const SmallnessModel& model) {
  require(u > 0.0, "spectral_bound: u must be positive");
  SpectralParts sp;
  if (const auto* s = std::get_if<const SymMatrix*>(&model)) {
    require(double((*s)->dim()) == pr.p, "spectral_bound: profile p differs from the matrix dimension");
    sp.D_star = covmodels::smallness(**s, u).D_star;
    sp.N_star = double(covmodels::smallness(**s, u / 2.0).N_star);
  } else if (const auto* c = std::get_if<ClassParams>(&model)) {
    sp.D_star = c->M * std::pow(u, 1.0 - c->r);
    sp.N_star = std::min(pr.p, c->M * std::pow(u / 2.0, -c->r));
  } else {
    throw InvalidArgument("spectral_bound needs a matrix or class parameters");
  }
  sp.M_star = M_star(sp.N_star, pr);
  sp.min_term = pr.p * std::min({1.0 / std::sqrt(pr.n), std::pow(u, 1.0 - pr.q / 2.0) * std::pow(pr.n, -pr.q / 4.0),
                                 std::sqrt(H(u, pr) + G(u, pr))});
  sp.total = sp.D_star + sp.M_star + sp.min_term;
  return sp;
}

inline double spectral_bound(double u, const RateProfile& pr, const SmallnessModel& model) {
  return spectral_bound_parts(u, pr, model).total;
}

inline double u_bickel_levina(const RateProfile& pr, double C = 1.0) {
  return C * std::pow(pr.p, 2.0 / pr.q) / std::sqrt(pr.n);
}

struct SpectralOptimum {
  double u = 0.0;
  double bound = 0.0;
  double u_bl = 0.0;
  double bound_at_u_bl = 0.0;
};

inline constexpr int kSpectralGridPoints = 400;

// Minimizes the spectral bound over a 400-point log grid on
// [n^{-1/2}/10, 2 max|s|], then refines by golden section between the
// neighbours of the best grid point.
inline SpectralOptimum spectral_optimal_threshold(const RateProfile& pr, const SmallnessModel& model) {
  pr.validate();
  double top = 1.0;
  if (const auto* s = std::get_if<const SymMatrix*>(&model)) top = (*s)->max_abs();
  require(top > 0.0, "spectral_optimal_threshold: matrix is zero");
  const double lo = 0.1 / std::sqrt(pr.n), hi = 2.0 * top;
  require(hi > lo, "spectral_optimal_threshold: empty search interval");
  const double llo = std::log(lo), lhi = std::log(hi);
  auto f = [&](double lu) { return spectral_bound(std::exp(lu), pr, model); };

  std::vector<double> grid(kSpectralGridPoints);
  int best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kSpectralGridPoints; ++i) {
    grid[std::size_t(i)] = llo + (lhi - llo) * i / (kSpectralGridPoints - 1);
    const double v = f(grid[std::size_t(i)]);
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  double a = grid[std::size_t(std::max(best - 1, 0))];
  double b = grid[std::size_t(std::min(best + 1, kSpectralGridPoints - 1))];
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 100 && b - a > 1e-12; ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  SpectralOptimum out;
  const double lu = fc <= fd ? c : d;
  const double val = std::min(fc, fd);
  if (val < best_val) {
    out.u = std::exp(lu);
    out.bound = val;
  } else {
    out.u = std::exp(grid[std::size_t(best)]);
    out.bound = best_val;
  }
  out.u_bl = u_bickel_levina(pr);
  out.bound_at_u_bl = spectral_bound(out.u_bl, pr, model);
  return out;
}

// ---------------------------------------------------------------------------
// Threshold markers for rate curves
// ---------------------------------------------------------------------------

struct ThresholdMarkers {
  std::optional<double> u_diamond;  // H = G
  std::optional<double> u_dagger;   // D = H
  std::optional<double> u_circ;     // D = G~ on [n^{-1/2}, u_diamond]
  double u_natural = 0.0;           // argmin_{u >= n^{-1/2}} max(D, H, G)
  double rate_natural = 0.0;        // max(D, H, G) at u_natural
};

inline std::optional<double> try_solve(Side l, Side r, const RateProfile& pr, const SmallnessModel& m, double lo,
                                       double hi) {
  if (!(hi > lo)) return std::nullopt;
  try {
    return solve_threshold_equation(l, r, pr, m, lo, hi).u;
  } catch (const NoSignChange&) {
    return std::nullopt;
  } catch (const NonMonotone&) {
    return std::nullopt;
  }
}

inline ThresholdMarkers threshold_markers(const RateProfile& pr, const SymMatrix& sigma) {
  const SmallnessModel m = &sigma;
  const double lo = default_lower(pr);
  const double hi = std::max(2.0 * sigma.max_abs(), 2.0 * lo);
  ThresholdMarkers mk;
  mk.u_diamond = solve_u_diamond(pr).u;
  mk.u_dagger = try_solve(Side::D_model, Side::H, pr, m, lo, hi);
  mk.u_circ = try_solve(Side::D_model, Side::G_tilde, pr, m, lo, *mk.u_diamond);

  // D is nondecreasing and max(H, G) is decreasing, so the minimax point is
  // their crossing, or n^{-1/2} if D already dominates there.
  auto upper = [&](double u) { return std::max(H(u, pr), G(u, pr)); };
  if (D_of(lo, pr, m) >= upper(lo)) {
    mk.u_natural = lo;
  } else {
    double top = hi;
    while (D_of(top, pr, m) < upper(top) && top < 1e6) top *= 2.0;
    mk.u_natural = solve_equation([&](double u) { return D_of(u, pr, m); }, upper, lo, top).u;
  }
  mk.rate_natural = std::max({D_of(mk.u_natural, pr, m), H(mk.u_natural, pr), G(mk.u_natural, pr)});
  return mk;
}

}  // namespace covts::rates
