#pragma once

// l1-penalized log-determinant precision estimation
//
//   minimize  tr(Psi S) - log det Psi + lambda |Psi|_1   over Psi > 0,
//
// with an optional unpenalized diagonal, the correlation-rescaled variant and
// the kernel-smoothed time-varying version.
//
// Two solvers are provided. The default is ADMM with the closed-form log-det
// proximal map and adaptive penalty; the returned iterate is the
// soft-thresholded split variable, so zeros are exact. The alternative is a
// proximal-gradient iteration with Barzilai-Borwein steps and backtracking:
// every accepted step keeps Psi positive definite and does not increase the
// objective. It is monotone but slow when S is badly conditioned. Both stop on
// the same certificate, the KKT residual.

#include "covts/core.hpp"
#include "covts/estim.hpp"
#include "covts/linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace covts::glasso {

enum class Solver { proximal_gradient, admm };

inline const char* to_string(Solver s) { return s == Solver::proximal_gradient ? "proximal_gradient" : "admm"; }

struct GlassoOptions {
  bool penalize_diagonal = true;
  double tol = 1e-6;
  std::size_t max_iter = 10000;
  Solver solver = Solver::admm;
  bool record_objective = false;
};

struct GlassoSolution {
  SymMatrix omega;
  double lambda = 0.0;
  std::size_t iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;  // duality gap at the returned point
  double kkt_residual = 0.0;
  std::vector<double> objective_trace;  // one value per outer iteration when recorded
  std::optional<double> t;              // time-varying fits only
  std::optional<double> b;
};

inline double lambda_from_threshold(double u, double multiplier = 4.0) {
  require(u >= 0.0, "lambda_from_threshold: u must be nonnegative");
  return multiplier * u;
}

namespace detail {

inline double l1_penalty(const Matrix& psi, bool penalize_diagonal) {
  double s = psi.cwiseAbs().sum();
  if (!penalize_diagonal) s -= psi.diagonal().cwiseAbs().sum();
  return s;
}

inline double log_det(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

inline Matrix inverse(const Eigen::LLT<Matrix>& llt, Eigen::Index p) {
  Matrix w = llt.solve(Matrix::Identity(p, p));
  return 0.5 * (w + w.transpose());
}

inline double soft(double x, double k) {
  if (x > k) return x - k;
  if (x < -k) return x + k;
  return 0.0;
}

inline Matrix soft_threshold(const Matrix& x, double k, bool penalize_diagonal) {
  Matrix out = x.unaryExpr([k](double v) { return soft(v, k); });
  if (!penalize_diagonal) out.diagonal() = x.diagonal();
  return out;
}

// Max-norm violation of 0 in S - W + lambda * d|Psi|_1.
inline double kkt(const Matrix& psi, const Matrix& w, const Matrix& s, double lambda, bool penalize_diagonal) {
  double r = 0.0;
  const Eigen::Index p = psi.rows();
  for (Eigen::Index k = 0; k < p; ++k)
    for (Eigen::Index j = k; j < p; ++j) {
      const double g = s(j, k) - w(j, k);
      double v;
      if (j == k && !penalize_diagonal)
        v = std::abs(g);
      else if (psi(j, k) != 0.0)
        v = std::abs(g + lambda * (psi(j, k) > 0.0 ? 1.0 : -1.0));
      else
        v = std::max(std::abs(g) - lambda, 0.0);
      r = std::max(r, v);
    }
  return r;
}

// Primal objective minus the dual bound log det(S + U) + p at the dual point
// U = clip(W - S, [-lambda, lambda]) (U_jj = W_jj - S_jj when the diagonal is free).
inline double duality_gap(const Matrix& w, const Matrix& s, double lambda,
                          bool penalize_diagonal, double primal) {
  Matrix u = (w - s).cwiseMax(-lambda).cwiseMin(lambda);
  if (!penalize_diagonal) u.diagonal() = w.diagonal() - s.diagonal();
  Eigen::LLT<Matrix> llt(s + u);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  return primal - (log_det(llt) + double(s.rows()));
}

struct Fitted {
  Matrix psi;
  Matrix w;
  double objective;
  std::size_t iterations;
  double primal_residual;
  std::vector<double> trace;
};

// Diagonal optimum for a diagonal S; exact whenever S itself is diagonal.
inline Matrix initial_point(const Matrix& s, double lambda, bool penalize_diagonal) {
  Vector d = (s.diagonal().array() + (penalize_diagonal ? lambda : 0.0)).inverse();
  return d.asDiagonal();
}

inline Fitted proximal_gradient(const Matrix& s, double lambda, const GlassoOptions& opt) {
  const Eigen::Index p = s.rows();
  const bool pd = opt.penalize_diagonal;
  Matrix psi = initial_point(s, lambda, pd);
  Eigen::LLT<Matrix> llt(psi);
  require(llt.info() == Eigen::Success, "glasso: initial point is not positive definite");
  Matrix w = inverse(llt, p);
  double f = (psi.cwiseProduct(s)).sum() - log_det(llt);
  double obj = f + lambda * l1_penalty(psi, pd);

  Fitted out{psi, w, obj, 0, 0.0, {}};
  if (opt.record_objective) out.trace.push_back(obj);

  double step = psi.diagonal().minCoeff();
  step *= step;
  double last_kkt = kkt(psi, w, s, lambda, pd);
  if (last_kkt <= opt.tol) return out;

  for (std::size_t it = 1; it <= opt.max_iter; ++it) {
    const Matrix grad = s - w;
    Matrix next, next_w;
    Eigen::LLT<Matrix> next_llt;
    double next_f = 0.0;
    bool accepted = false;
    for (int bt = 0; bt < 80; ++bt) {
      next = soft_threshold(psi - step * grad, step * lambda, pd);
      next_llt.compute(next);
      if (next_llt.info() == Eigen::Success && next_llt.matrixLLT().diagonal().minCoeff() > 0.0) {
        next_f = (next.cwiseProduct(s)).sum() - log_det(next_llt);
        const Matrix delta = next - psi;
        const double model = f + grad.cwiseProduct(delta).sum() + delta.squaredNorm() / (2.0 * step);
        if (std::isfinite(next_f) && next_f <= model + 1e-12 * std::max(1.0, std::abs(f))) {
          accepted = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!accepted) {
      out.iterations = it;
      throw NonConvergence(it, out.primal_residual, std::numeric_limits<double>::infinity(), last_kkt);
    }
    next_w = inverse(next_llt, p);
    const Matrix dpsi = next - psi;
    const double dpsi_norm2 = dpsi.squaredNorm();
    const double curv = dpsi.cwiseProduct(w - next_w).sum();

    out.primal_residual = std::sqrt(dpsi_norm2) / step;
    psi = std::move(next);
    w = std::move(next_w);
    f = next_f;
    obj = f + lambda * l1_penalty(psi, pd);
    if (opt.record_objective) out.trace.push_back(obj);
    out.iterations = it;

    last_kkt = kkt(psi, w, s, lambda, pd);
    if (last_kkt <= opt.tol) {
      out.psi = std::move(psi);
      out.w = std::move(w);
      out.objective = obj;
      return out;
    }
    // Barzilai-Borwein step for the next iteration
    if (curv > 0.0 && dpsi_norm2 > 0.0) step = dpsi_norm2 / curv;
  }
  throw NonConvergence(opt.max_iter, out.primal_residual, std::numeric_limits<double>::infinity(), last_kkt);
}

inline Fitted admm(const Matrix& s, double lambda, const GlassoOptions& opt) {
  const Eigen::Index p = s.rows();
  const bool pd = opt.penalize_diagonal;
  double rho = 1.0;
  Matrix z = initial_point(s, lambda, pd);
  Matrix u = Matrix::Zero(p, p);
  Matrix x;
  Fitted out{z, Matrix(), 0.0, 0, 0.0, {}};
  Eigen::SelfAdjointEigenSolver<Matrix> es;
  double last_kkt = std::numeric_limits<double>::infinity();
  double primal = 0.0, dual = 0.0;

  {
    // the diagonal start is already optimal when S is diagonal
    Eigen::LLT<Matrix> llt(z);
    const Matrix w = inverse(llt, p);
    if (kkt(z, w, s, lambda, pd) <= opt.tol) {
      out.w = w;
      out.objective = (z.cwiseProduct(s)).sum() - log_det(llt) + lambda * l1_penalty(z, pd);
      return out;
    }
  }

  for (std::size_t it = 1; it <= opt.max_iter; ++it) {
    // X = argmin tr(SX) - log det X + rho/2 |X - Z + U|_F^2
    es.compute(rho * (z - u) - s);
    const Vector mu = es.eigenvalues();
    const Vector xe = (mu.array() + (mu.array().square() + 4.0 * rho).sqrt()) / (2.0 * rho);
    x = es.eigenvectors() * xe.asDiagonal() * es.eigenvectors().transpose();
    x = 0.5 * (x + x.transpose());

    const Matrix z_old = z;
    z = soft_threshold(x + u, lambda / rho, pd);
    u += x - z;

    primal = (x - z).norm();
    dual = rho * (z - z_old).norm();
    out.iterations = it;

    Eigen::LLT<Matrix> llt(z);
    const bool z_pd = llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0;
    if (z_pd) {
      const double obj = (z.cwiseProduct(s)).sum() - log_det(llt) + lambda * l1_penalty(z, pd);
      if (opt.record_objective) out.trace.push_back(obj);
      if (primal <= opt.tol * 10.0 || it % 10 == 0) {
        const Matrix w = inverse(llt, p);
        last_kkt = kkt(z, w, s, lambda, pd);
        if (last_kkt <= opt.tol) {
          out.psi = z;
          out.w = w;
          out.objective = obj;
          out.primal_residual = primal;
          return out;
        }
      }
    }

    if (primal > 10.0 * dual) {
      rho *= 2.0;
      u /= 2.0;
    } else if (dual > 10.0 * primal) {
      rho /= 2.0;
      u *= 2.0;
    }
  }
  throw NonConvergence(opt.max_iter, primal, dual, last_kkt);
}

}  // namespace detail

inline double objective(const SymMatrix& omega, const SymMatrix& s, double lambda, bool penalize_diagonal = true) {
  require(omega.dim() == s.dim(), "objective: dimension mismatch");
  const Matrix psi = omega.dense();
  Eigen::LLT<Matrix> llt(psi);
  require(llt.info() == Eigen::Success, "objective: omega is not positive definite");
  return (psi.cwiseProduct(s.dense())).sum() - detail::log_det(llt) + lambda * detail::l1_penalty(psi, penalize_diagonal);
}

// Max-norm violation of the subgradient condition 0 in S - Omega^{-1} + lambda d|Omega|_1.
inline double kkt_residual(const SymMatrix& omega, const SymMatrix& s, double lambda, bool penalize_diagonal = true) {
  require(omega.dim() == s.dim(), "kkt_residual: dimension mismatch");
  require(lambda >= 0.0, "kkt_residual: lambda must be nonnegative");
  const Matrix psi = omega.dense();
  Eigen::LLT<Matrix> llt(psi);
  require(llt.info() == Eigen::Success && linalg::min_eigenvalue(omega) > 0.0,
          "kkt_residual: omega is not positive definite");
  return detail::kkt(psi, detail::inverse(llt, psi.rows()), s.dense(), lambda, penalize_diagonal);
}

inline GlassoSolution glasso_fit(const SymMatrix& s, double lambda, const GlassoOptions& opt = {}) {
  require(lambda > 0.0, "glasso_fit: lambda must be positive");
  require(opt.tol > 0.0, "glasso_fit: tol must be positive");
  require(s.dim() >= 1, "glasso_fit: empty matrix");
  const Matrix sd = s.dense();
  require(sd.allFinite(), "glasso_fit: S has non-finite entries");

  auto fit = opt.solver == Solver::proximal_gradient ? detail::proximal_gradient(sd, lambda, opt)
                                                       : detail::admm(sd, lambda, opt);
  GlassoSolution sol;
  sol.omega = SymMatrix::symmetrize(fit.psi);
  sol.lambda = lambda;
  sol.iterations = fit.iterations;
  sol.primal_residual = fit.primal_residual;
  sol.kkt_residual = detail::kkt(fit.psi, fit.w, sd, lambda, opt.penalize_diagonal);
  sol.dual_residual = detail::duality_gap(fit.w, sd, lambda, opt.penalize_diagonal, fit.objective);
  sol.objective_trace = std::move(fit.trace);
  return sol;
}

// Fit on the correlation matrix with an unpenalized diagonal, then rescale:
// Omega = V^{-1} K V^{-1}, V = diag(s_jj^{1/2}).
inline GlassoSolution glasso_correlation_variant(const SymMatrix& s, double lambda, const GlassoOptions& opt = {}) {
  const std::size_t p = s.dim();
  std::vector<double> scale(p);
  for (std::size_t j = 0; j < p; ++j) {
    require(s(j, j) > 0.0, "glasso_correlation_variant: diagonal entries must be positive");
    scale[j] = std::sqrt(s(j, j));
  }
  SymMatrix r(p);
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t k = 0; k <= j; ++k) r(j, k) = j == k ? 1.0 : s(j, k) / (scale[j] * scale[k]);

  GlassoOptions inner = opt;
  inner.penalize_diagonal = false;
  GlassoSolution sol = glasso_fit(r, lambda, inner);
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t k = 0; k <= j; ++k) sol.omega(j, k) /= scale[j] * scale[k];
  return sol;
}

// Graphical lasso on the kernel-smoothed covariance at rescaled time t.
inline GlassoSolution tv_glasso(const DataMatrix& z, double t, double b, double lambda, const GlassoOptions& opt = {},
                                estim::WeightScheme scheme = estim::WeightScheme::nadaraya_watson,
                                estim::Kernel kernel = estim::Kernel::epanechnikov) {
  GlassoSolution sol = glasso_fit(estim::kernel_cov(z, t, b, scheme, kernel), lambda, opt);
  sol.t = t;
  sol.b = b;
  return sol;
}

}  // namespace covts::glasso
