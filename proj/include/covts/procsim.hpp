#pragma once

// Seeded simulators for the stationary and locally stationary process
// families: VAR(1), truncated linear processes with polynomially decaying
// coefficients, contracting iterated random maps, modulated processes
// z_i = Sigma(i/n)^{1/2} y_i, and time-varying linear processes.
//
// Every simulator is a pure function of (spec, n): the innovation stream is
// rebuilt from spec.seed on each call.

#include "covts/core.hpp"
#include "covts/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace covts {

// Sum_{k >= first} k^{-s}, s > 1, first >= 1.
inline double power_tail_sum(double s, double first) {
  require(s > 1.0 && first >= 1.0, "power_tail_sum: need s > 1 and first >= 1");
  constexpr int kDirect = 64;
  double sum = 0.0;
  double k = first;
  for (int i = 0; i < kDirect; ++i, k += 1.0) sum += std::pow(k, -s);
  // Euler-Maclaurin remainder from k onward
  sum += std::pow(k, 1.0 - s) / (s - 1.0) + 0.5 * std::pow(k, -s) + s * std::pow(k, -s - 1.0) / 12.0 -
         s * (s + 1.0) * (s + 2.0) * std::pow(k, -s - 3.0) / 720.0;
  return sum;
}

}  // namespace covts

namespace covts::procsim {

// ---------------------------------------------------------------------------
// Innovations
// ---------------------------------------------------------------------------

enum class InnovationKind { gaussian, student_t };

class InnovationLaw {
 public:
  static InnovationLaw gaussian() { return InnovationLaw(InnovationKind::gaussian, 0.0, 0.0); }

  // Unit-variance Student t. A finite 2q-th moment needs df > 2q.
  static InnovationLaw student_t(double df = 9.0, double q = 4.0) {
    require(q > 2.0, "student_t: moment order q must exceed 2");
    require(df > 2.0 * q, "student_t: df must exceed 2q for a finite 2q-th moment");
    return InnovationLaw(InnovationKind::student_t, df, q);
  }

  InnovationKind kind() const noexcept { return kind_; }
  double df() const noexcept { return df_; }
  double moment_order() const noexcept { return q_; }

  friend bool operator==(const InnovationLaw&, const InnovationLaw&) = default;

 private:
  InnovationLaw(InnovationKind k, double df, double q) : kind_(k), df_(df), q_(q) {}
  InnovationKind kind_;
  double df_;
  double q_;
};

// Sequential draws for one simulation. Coordinates of one innovation vector
// are drawn in index order, vectors in time order.
class InnovationStream {
 public:
  InnovationStream(const InnovationLaw& law, std::uint64_t seed)
      : law_(law), rng_(seed), normal_(0.0, 1.0), student_(law.kind() == InnovationKind::student_t ? law.df() : 1.0),
        t_scale_(law.kind() == InnovationKind::student_t ? std::sqrt((law.df() - 2.0) / law.df()) : 1.0) {}

  double next() {
    if (law_.kind() == InnovationKind::gaussian) return normal_(rng_);
    return t_scale_ * student_(rng_);
  }

  template <typename Derived>
  void fill(Eigen::DenseBase<Derived>& out) {
    for (Eigen::Index j = 0; j < out.size(); ++j) out(j) = next();
  }

 private:
  InnovationLaw law_;
  Rng rng_;
  std::normal_distribution<double> normal_;
  std::student_t_distribution<double> student_;
  double t_scale_;
};

// ---------------------------------------------------------------------------
// Process specifications
// ---------------------------------------------------------------------------

enum class ProcessKind { var1, linear_decay, iterated_map, modulated, nonstat_linear };

inline const char* to_string(ProcessKind k) {
  switch (k) {
    case ProcessKind::var1: return "var1";
    case ProcessKind::linear_decay: return "linear_decay";
    case ProcessKind::iterated_map: return "iterated_map";
    case ProcessKind::modulated: return "modulated";
    case ProcessKind::nonstat_linear: return "nonstat_linear";
  }
  return "?";
}

struct Var1Params {
  Matrix transition;         // p x p, spectral radius < 1
  Matrix innovation_factor;  // empty: identity
};

// Cross-coordinate pattern B shared by all lags.
//   circulant: B = cos(pi/6) I + sin(pi/6) P, P the cyclic shift j -> j+1
//   identity:  B = I
// Both have unit row norms.
enum class Mixing { circulant, identity };

struct LinearDecayParams {
  double decay = 1.0;                     // gamma > 0; A_m = (m+1)^{-1-gamma} B
  std::optional<std::size_t> truncation;  // M_tr; default from tail mass 1e-8
  Mixing mixing = Mixing::circulant;
  bool unit_variance = false;  // divide by (sum_m c_m^2)^{1/2}
};

enum class MapKind { identity, abs };

struct IteratedMapParams {
  double contraction = 0.5;  // |a| < 1; z_i = a * phi(z_{i-1}) + e_i
  MapKind map = MapKind::identity;
};

// Sigma(t) = (1 - t) start + t end
struct CovPath {
  SymMatrix start;
  SymMatrix end;
  SymMatrix at(double t) const {
    require(start.dim() == end.dim(), "CovPath: endpoint dimensions differ");
    SymMatrix m(start.dim());
    auto out = m.packed();
    auto a = start.packed(), b = end.packed();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - t) * a[i] + t * b[i];
    return m;
  }
  bool constant() const { return start == end; }
};

struct AffinePath {
  double a0 = 1.0;
  double a1 = 0.0;
  double operator()(double t) const noexcept { return a0 + a1 * t; }
  friend bool operator==(const AffinePath&, const AffinePath&) = default;
};

struct ProcessSpec;

struct ModulatedParams {
  CovPath path;
  std::shared_ptr<const ProcessSpec> base;  // null: i.i.d. innovations
};

// A_0(t) = c_0 lead(t) B,  A_j(t) = c_j tail(t) B for 1 <= j <= M_tr.
struct NonstatLinearParams {
  LinearDecayParams lags;
  AffinePath lead;
  AffinePath tail;
};

using ProcessParams =
    std::variant<Var1Params, LinearDecayParams, IteratedMapParams, ModulatedParams, NonstatLinearParams>;

struct ProcessSpec {
  std::size_t p = 1;
  std::size_t burn_in = 1000;
  std::uint64_t seed = 0;
  InnovationLaw innovations = InnovationLaw::gaussian();
  ProcessParams params = Var1Params{};
  Matrix output_factor;  // optional p x p left factor applied to every column

  ProcessKind kind() const noexcept { return static_cast<ProcessKind>(params.index()); }
};

struct Diagnostic {
  std::string code;
  std::string message;
  double value = 0.0;
  double limit = 0.0;
};

// ---------------------------------------------------------------------------
// Coefficient bookkeeping for the linear families
// ---------------------------------------------------------------------------

inline constexpr double kTruncationTailRatio = 1e-8;
inline constexpr std::size_t kMaxDefaultTruncation = 100000;

// Fraction of sum_m (m+1)^{-2-2gamma} carried by lags m > truncation.
inline double truncation_tail_ratio(double decay, std::size_t truncation) {
  const double s = 2.0 + 2.0 * decay;
  return power_tail_sum(s, double(truncation) + 2.0) / power_tail_sum(s, 1.0);
}

inline std::size_t default_truncation(double decay) {
  require(decay > 0.0, "linear process: decay exponent must be positive");
  const double s = 2.0 + 2.0 * decay;
  const double total = power_tail_sum(s, 1.0);
  // tail(M) ~ (M + 1.5)^{1-s} / (s - 1); start from that and step to the exact boundary
  double guess = std::pow(kTruncationTailRatio * total * (s - 1.0), 1.0 / (1.0 - s)) - 1.5;
  auto m = static_cast<std::size_t>(std::clamp(guess, 1.0, double(kMaxDefaultTruncation)));
  while (m > 1 && truncation_tail_ratio(decay, m - 1) <= kTruncationTailRatio) --m;
  while (m < kMaxDefaultTruncation && truncation_tail_ratio(decay, m) > kTruncationTailRatio) ++m;
  return m;
}

inline std::size_t resolved_truncation(const LinearDecayParams& lp) {
  return lp.truncation ? *lp.truncation : default_truncation(lp.decay);
}

inline std::vector<double> decay_coefficients(double decay, std::size_t truncation) {
  std::vector<double> c(truncation + 1);
  for (std::size_t m = 0; m <= truncation; ++m) c[m] = std::pow(double(m) + 1.0, -1.0 - decay);
  return c;
}

inline Matrix mixing_matrix(Mixing mixing, std::size_t p) {
  const auto n = Eigen::Index(p);
  if (mixing == Mixing::identity || p == 1) return Matrix::Identity(n, n);
  const double c = std::cos(std::numbers::pi / 6.0), s = std::sin(std::numbers::pi / 6.0);
  Matrix b = c * Matrix::Identity(n, n);
  for (Eigen::Index j = 0; j < n; ++j) b(j, (j + 1) % n) += s;
  return b;
}

// Applies B column-wise without forming it.
inline void apply_mixing(Mixing mixing, Matrix& y) {
  if (mixing == Mixing::identity || y.rows() == 1) return;
  const double c = std::cos(std::numbers::pi / 6.0), s = std::sin(std::numbers::pi / 6.0);
  const Eigen::Index p = y.rows();
  Matrix out(p, y.cols());
  for (Eigen::Index j = 0; j < p; ++j) out.row(j) = c * y.row(j) + s * y.row((j + 1) % p);
  y = std::move(out);
}

// Warns when the truncated coefficient tail exceeds 1e-8 of the total mass.
inline std::optional<Diagnostic> linear_truncation_diagnostic(const LinearDecayParams& lp) {
  const std::size_t m = resolved_truncation(lp);
  const double ratio = truncation_tail_ratio(lp.decay, m);
  if (ratio <= kTruncationTailRatio) return std::nullopt;
  return Diagnostic{"truncation_tail",
                    "truncated coefficient tail mass " + std::to_string(ratio) + " exceeds " +
                        std::to_string(kTruncationTailRatio) + " of the total (M_tr = " + std::to_string(m) + ")",
                    ratio, kTruncationTailRatio};
}

inline std::optional<Diagnostic> linear_truncation_diagnostic(const ProcessSpec& spec) {
  if (auto* lp = std::get_if<LinearDecayParams>(&spec.params)) return linear_truncation_diagnostic(*lp);
  if (auto* np = std::get_if<NonstatLinearParams>(&spec.params)) return linear_truncation_diagnostic(np->lags);
  return std::nullopt;
}

inline double spectral_radius(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(a, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace detail {

inline void check_common(const ProcessSpec& spec, std::size_t n) {
  require(spec.p >= 1, "process dimension p must be at least 1");
  require(n >= 1, "sample size n must be at least 1");
  if (spec.output_factor.size() != 0)
    require(spec.output_factor.rows() == Eigen::Index(spec.p) && spec.output_factor.cols() == Eigen::Index(spec.p),
            "output_factor must be p x p");
}

inline void check_var1(const ProcessSpec& spec, const Var1Params& vp) {
  const auto p = Eigen::Index(spec.p);
  require(vp.transition.rows() == p && vp.transition.cols() == p, "var1: transition matrix must be p x p");
  if (vp.innovation_factor.size() != 0)
    require(vp.innovation_factor.rows() == p && vp.innovation_factor.cols() == p,
            "var1: innovation factor must be p x p");
  const double rho = spectral_radius(vp.transition);
  require(rho < 1.0, "var1: spectral radius " + std::to_string(rho) + " >= 1 (nonstationary)");
}

inline void check_linear(const LinearDecayParams& lp, bool allow_zero_lag) {
  require(lp.decay > 0.0, "linear process: decay exponent gamma must be positive");
  if (lp.truncation) require(allow_zero_lag || *lp.truncation >= 1, "linear process: truncation lag must be >= 1");
}

inline Matrix apply_output(const ProcessSpec& spec, Matrix z) {
  if (spec.output_factor.size() != 0) z = spec.output_factor * z;
  return z;
}

// Returns the unscaled filtered innovations y_i = sum_m c_m e_{i-m}, split into
// the lag-0 part and the lag >= 1 part when `split` is set.
struct Filtered {
  Matrix lead;
  Matrix tail;
};

inline Filtered filter_innovations(const ProcessSpec& spec, const LinearDecayParams& lp, std::size_t n, bool split) {
  const std::size_t m_tr = resolved_truncation(lp);
  const auto c = decay_coefficients(lp.decay, m_tr);
  const auto p = Eigen::Index(spec.p);
  const auto cols = Eigen::Index(n + m_tr);
  Matrix e(p, cols);
  InnovationStream stream(spec.innovations, spec.seed);
  for (Eigen::Index k = 0; k < cols; ++k) {
    auto col = e.col(k);
    stream.fill(col);
  }
  const auto nn = Eigen::Index(n);
  const auto off = Eigen::Index(m_tr);
  Filtered f;
  f.lead = c[0] * e.middleCols(off, nn);
  Matrix& acc = split ? f.tail : f.lead;
  if (split) f.tail = Matrix::Zero(p, nn);
  for (std::size_t m = 1; m <= m_tr; ++m) acc.noalias() += c[m] * e.middleCols(off - Eigen::Index(m), nn);
  return f;
}

inline double coefficient_mass(const LinearDecayParams& lp, std::size_t first_lag) {
  const auto c = decay_coefficients(lp.decay, resolved_truncation(lp));
  double s = 0.0;
  for (std::size_t m = first_lag; m < c.size(); ++m) s += c[m] * c[m];
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Simulators
// ---------------------------------------------------------------------------

inline DataMatrix simulate_var1(const ProcessSpec& spec, std::size_t n) {
  const auto* vp = std::get_if<Var1Params>(&spec.params);
  require(vp != nullptr, "simulate_var1: spec.kind must be var1");
  require(n >= 1, "simulate_var1: n must be at least 1");
  detail::check_common(spec, n);
  detail::check_var1(spec, *vp);

  const auto p = Eigen::Index(spec.p);
  InnovationStream stream(spec.innovations, spec.seed);
  Vector z = Vector::Zero(p), e(p);
  Matrix out(p, Eigen::Index(n));
  const bool factored = vp->innovation_factor.size() != 0;
  for (std::size_t i = 0; i < spec.burn_in + n; ++i) {
    stream.fill(e);
    Vector az = vp->transition * z;
    z = factored ? Vector(az + vp->innovation_factor * e) : Vector(az + e);
    if (i >= spec.burn_in) out.col(Eigen::Index(i - spec.burn_in)) = z;
  }
  return DataMatrix(detail::apply_output(spec, std::move(out)));
}

inline DataMatrix simulate_linear_process(const ProcessSpec& spec, std::size_t n,
                                          std::vector<Diagnostic>* diagnostics = nullptr) {
  const auto* lp = std::get_if<LinearDecayParams>(&spec.params);
  require(lp != nullptr, "simulate_linear_process: spec.kind must be linear_decay");
  require(n >= 1, "simulate_linear_process: n must be at least 1");
  detail::check_common(spec, n);
  detail::check_linear(*lp, false);
  if (diagnostics)
    if (auto d = linear_truncation_diagnostic(*lp)) diagnostics->push_back(*d);

  Matrix y = detail::filter_innovations(spec, *lp, n, false).lead;
  apply_mixing(lp->mixing, y);
  if (lp->unit_variance) y /= std::sqrt(detail::coefficient_mass(*lp, 0));
  return DataMatrix(detail::apply_output(spec, std::move(y)));
}

// `initial` replaces the zero starting state (the chain still runs burn_in steps).
inline DataMatrix simulate_iterated_map(const ProcessSpec& spec, std::size_t n,
                                        const std::optional<Vector>& initial = std::nullopt) {
  const auto* mp = std::get_if<IteratedMapParams>(&spec.params);
  require(mp != nullptr, "simulate_iterated_map: spec.kind must be iterated_map");
  require(n >= 1, "simulate_iterated_map: n must be at least 1");
  detail::check_common(spec, n);
  // Both built-in maps are 1-Lipschitz, so the stochastic Lipschitz constant is |a|.
  require(std::abs(mp->contraction) < 1.0, "iterated_map: contraction |a| must be < 1");

  const auto p = Eigen::Index(spec.p);
  Vector z = initial ? *initial : Vector::Zero(p);
  require(z.size() == p, "iterated_map: initial state has wrong dimension");
  InnovationStream stream(spec.innovations, spec.seed);
  Vector e(p);
  Matrix out(p, Eigen::Index(n));
  const double a = mp->contraction;
  for (std::size_t i = 0; i < spec.burn_in + n; ++i) {
    stream.fill(e);
    if (mp->map == MapKind::identity)
      z = a * z + e;
    else
      z = a * z.cwiseAbs() + e;
    if (i >= spec.burn_in) out.col(Eigen::Index(i - spec.burn_in)) = z;
  }
  return DataMatrix(detail::apply_output(spec, std::move(out)));
}

inline DataMatrix simulate(const ProcessSpec& spec, std::size_t n);
inline Matrix stationary_cov(const ProcessSpec& spec);

inline DataMatrix simulate_modulated(const ProcessSpec& spec, std::size_t n) {
  const auto* mp = std::get_if<ModulatedParams>(&spec.params);
  require(mp != nullptr, "simulate_modulated: spec.kind must be modulated");
  require(n >= 1, "simulate_modulated: n must be at least 1");
  detail::check_common(spec, n);
  require(mp->path.start.dim() == spec.p && mp->path.end.dim() == spec.p,
          "modulated: covariance path must be p x p");

  const auto p = Eigen::Index(spec.p);
  Matrix y;
  if (mp->base) {
    require(mp->base->p == spec.p, "modulated: base process dimension differs");
    require(mp->base->kind() != ProcessKind::modulated && mp->base->kind() != ProcessKind::nonstat_linear,
            "modulated: base process must be stationary");
    y = simulate(*mp->base, n).values();
    y = linalg::sym_inverse_sqrt(stationary_cov(*mp->base)) * y;  // whiten to identity covariance
  } else {
    y.resize(p, Eigen::Index(n));
    InnovationStream stream(spec.innovations, spec.seed);
    for (Eigen::Index i = 0; i < y.cols(); ++i) {
      auto col = y.col(i);
      stream.fill(col);
    }
  }

  auto root_at = [&](double t) {
    const SymMatrix s = mp->path.at(t);
    const auto eig = linalg::sym_eigen(s);
    require(eig.values(0) > 0.0,
            "modulated: Sigma(t) is not positive definite at t = " + std::to_string(t));
    return linalg::spectral_map(eig, [](double x) { return std::sqrt(x); });
  };

  Matrix out(p, Eigen::Index(n));
  if (mp->path.constant()) {
    out = root_at(0.0) * y;
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const double t = double(i + 1) / double(n);
      out.col(Eigen::Index(i)) = root_at(t) * y.col(Eigen::Index(i));
    }
  }
  return DataMatrix(detail::apply_output(spec, std::move(out)));
}

inline DataMatrix simulate_nonstat_linear(const ProcessSpec& spec, std::size_t n,
                                          std::vector<Diagnostic>* diagnostics = nullptr) {
  const auto* np = std::get_if<NonstatLinearParams>(&spec.params);
  require(np != nullptr, "simulate_nonstat_linear: spec.kind must be nonstat_linear");
  require(n >= 1, "simulate_nonstat_linear: n must be at least 1");
  detail::check_common(spec, n);
  detail::check_linear(np->lags, true);
  if (diagnostics)
    if (auto d = linear_truncation_diagnostic(np->lags)) diagnostics->push_back(*d);

  auto parts = detail::filter_innovations(spec, np->lags, n, true);
  Matrix z(parts.lead.rows(), parts.lead.cols());
  for (Eigen::Index i = 0; i < z.cols(); ++i) {
    const double t = double(i + 1) / double(n);
    z.col(i) = np->lead(t) * parts.lead.col(i) + np->tail(t) * parts.tail.col(i);
  }
  apply_mixing(np->lags.mixing, z);
  if (np->lags.unit_variance) z /= std::sqrt(detail::coefficient_mass(np->lags, 0));
  return DataMatrix(detail::apply_output(spec, std::move(z)));
}

inline DataMatrix simulate(const ProcessSpec& spec, std::size_t n) {
  switch (spec.kind()) {
    case ProcessKind::var1: return simulate_var1(spec, n);
    case ProcessKind::linear_decay: return simulate_linear_process(spec, n);
    case ProcessKind::iterated_map: return simulate_iterated_map(spec, n);
    case ProcessKind::modulated: return simulate_modulated(spec, n);
    case ProcessKind::nonstat_linear: return simulate_nonstat_linear(spec, n);
  }
  throw InvalidArgument("simulate: unknown process kind");
}

// ---------------------------------------------------------------------------
// Population covariances
// ---------------------------------------------------------------------------

// cov(z_i) for the stationary families (after output_factor).
inline Matrix stationary_cov(const ProcessSpec& spec) {
  const auto p = Eigen::Index(spec.p);
  Matrix cov;
  switch (spec.kind()) {
    case ProcessKind::var1: {
      const auto& vp = std::get<Var1Params>(spec.params);
      detail::check_var1(spec, vp);
      Matrix q = vp.innovation_factor.size() ? Matrix(vp.innovation_factor * vp.innovation_factor.transpose())
                                             : Matrix(Matrix::Identity(p, p));
      // doubling: S <- S + A S A^T, A <- A^2
      Matrix s = q, a = vp.transition;
      for (int it = 0; it < 64 && a.cwiseAbs().maxCoeff() > 1e-300; ++it) {
        s += a * s * a.transpose();
        a = a * a;
      }
      cov = s;
      break;
    }
    case ProcessKind::iterated_map: {
      const auto& mp = std::get<IteratedMapParams>(spec.params);
      require(mp.map == MapKind::identity, "stationary_cov: no closed form for the abs map");
      const double a = mp.contraction;
      cov = Matrix::Identity(p, p) / (1.0 - a * a);
      break;
    }
    case ProcessKind::linear_decay: {
      const auto& lp = std::get<LinearDecayParams>(spec.params);
      const Matrix b = mixing_matrix(lp.mixing, spec.p);
      const double mass = detail::coefficient_mass(lp, 0);
      cov = (lp.unit_variance ? 1.0 : mass) * b * b.transpose();
      break;
    }
    default:
      throw InvalidArgument(std::string("stationary_cov: ") + to_string(spec.kind()) + " is not stationary");
  }
  if (spec.output_factor.size() != 0) cov = spec.output_factor * cov * spec.output_factor.transpose();
  return cov;
}

// Sigma(t) for the locally stationary families.
inline SymMatrix local_cov(const ProcessSpec& spec, double t) {
  Matrix cov;
  if (const auto* mp = std::get_if<ModulatedParams>(&spec.params)) {
    cov = mp->path.at(t).dense();
  } else if (const auto* np = std::get_if<NonstatLinearParams>(&spec.params)) {
    const Matrix b = mixing_matrix(np->lags.mixing, spec.p);
    const double lead = np->lead(t), tail = np->tail(t);
    const auto c = decay_coefficients(np->lags.decay, resolved_truncation(np->lags));
    double v = lead * lead * c[0] * c[0] + tail * tail * detail::coefficient_mass(np->lags, 1);
    if (np->lags.unit_variance) v /= detail::coefficient_mass(np->lags, 0);
    cov = v * b * b.transpose();
  } else {
    return SymMatrix::symmetrize(stationary_cov(spec));
  }
  if (spec.output_factor.size() != 0) cov = spec.output_factor * cov * spec.output_factor.transpose();
  return SymMatrix::symmetrize(cov);
}

}  // namespace covts::procsim
