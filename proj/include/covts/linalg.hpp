#pragma once

// Symmetric eigendecomposition and functions of symmetric matrices.
//
// Cyclic Jacobi is used up to p = 512. It is slower than tridiagonal QR but
// accurate to high relative precision for the small dense problems here, and
// it has no dependency on a LAPACK backend. Larger problems fall back to
// Eigen's self-adjoint solver.

#include "covts/core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace covts::linalg {

inline constexpr std::size_t kJacobiMaxDim = 512;

struct SymEigen {
  Vector values;   // ascending
  Matrix vectors;  // column i pairs with values(i); empty when not requested
};

// Cyclic-by-row Jacobi. Stops when the off-diagonal Frobenius mass is below
// tol * max(1, |A|_F).
inline SymEigen jacobi_eigen(Matrix a, bool want_vectors = true, double tol = 1e-12,
                             int max_sweeps = 100) {
  require(a.rows() == a.cols(), "jacobi_eigen: matrix must be square");
  const Eigen::Index p = a.rows();
  Matrix v;
  if (want_vectors) v = Matrix::Identity(p, p);

  const double scale = std::max(1.0, a.norm());
  const double stop = tol * scale;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index q = 1; q < p; ++q)
      for (Eigen::Index r = 0; r < q; ++r) off += a(r, q) * a(r, q);
    if (std::sqrt(2.0 * off) <= stop) break;

    for (Eigen::Index r = 0; r < p - 1; ++r) {
      for (Eigen::Index q = r + 1; q < p; ++q) {
        const double arq = a(r, q);
        if (arq == 0.0) continue;
        const double theta = (a(q, q) - a(r, r)) / (2.0 * arq);
        double t;
        if (std::abs(theta) > 1e150) {
          t = 0.5 / theta;
        } else {
          t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        }
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);

        a(r, r) -= t * arq;
        a(q, q) += t * arq;
        a(r, q) = a(q, r) = 0.0;
        for (Eigen::Index k = 0; k < p; ++k) {
          if (k == r || k == q) continue;
          const double akr = a(k, r), akq = a(k, q);
          const double nr = akr - s * (akq + tau * akr);
          const double nq = akq + s * (akr - tau * akq);
          a(k, r) = a(r, k) = nr;
          a(k, q) = a(q, k) = nq;
        }
        if (want_vectors) {
          for (Eigen::Index k = 0; k < p; ++k) {
            const double vkr = v(k, r), vkq = v(k, q);
            v(k, r) = vkr - s * (vkq + tau * vkr);
            v(k, q) = vkq + s * (vkr - tau * vkq);
          }
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return a(x, x) < a(y, y); });
  SymEigen out;
  out.values.resize(p);
  if (want_vectors) out.vectors.resize(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    out.values(i) = a(order[std::size_t(i)], order[std::size_t(i)]);
    if (want_vectors) out.vectors.col(i) = v.col(order[std::size_t(i)]);
  }
  return out;
}

inline SymEigen sym_eigen(const Matrix& a, bool want_vectors = true) {
  if (std::size_t(a.rows()) <= kJacobiMaxDim) return jacobi_eigen(a, want_vectors);
  Eigen::SelfAdjointEigenSolver<Matrix> es(
      a, want_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  return {es.eigenvalues(), want_vectors ? Matrix(es.eigenvectors()) : Matrix()};
}

inline SymEigen sym_eigen(const SymMatrix& a, bool want_vectors = true) {
  return sym_eigen(a.dense(), want_vectors);
}

// Q diag(f(lambda)) Q^T
template <typename F>
Matrix spectral_map(const SymEigen& e, F&& f) {
  Vector mapped = e.values.unaryExpr([&](double x) { return f(x); });
  return e.vectors * mapped.asDiagonal() * e.vectors.transpose();
}

inline double min_eigenvalue(const SymMatrix& a) {
  if (a.empty()) return 0.0;
  return sym_eigen(a, false).values(0);
}

// Largest |eigenvalue| = spectral norm of a symmetric matrix.
inline double spectral_norm(const SymMatrix& a) {
  if (a.empty()) return 0.0;
  const Vector ev = sym_eigen(a, false).values;
  return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

// Symmetric square root of a positive semidefinite matrix.
inline Matrix sym_sqrt(const Matrix& a) {
  const SymEigen e = sym_eigen(a);
  require(e.values.size() == 0 || e.values(0) >= -1e-12 * std::max(1.0, std::abs(e.values(e.values.size() - 1))),
          "sym_sqrt: matrix is not positive semidefinite");
  return spectral_map(e, [](double x) { return std::sqrt(std::max(x, 0.0)); });
}

inline Matrix sym_inverse_sqrt(const Matrix& a) {
  const SymEigen e = sym_eigen(a);
  require(e.values.size() == 0 || e.values(0) > 0.0, "sym_inverse_sqrt: matrix is not positive definite");
  return spectral_map(e, [](double x) { return 1.0 / std::sqrt(x); });
}

// Inverse through reciprocal eigenvalues; keeps (Sigma, Omega) pairs
// consistent to rounding.
inline SymMatrix sym_inverse(const SymMatrix& a) {
  const SymEigen e = sym_eigen(a);
  require(e.values.size() == 0 || e.values(0) > 0.0, "sym_inverse: matrix is not positive definite");
  return SymMatrix::symmetrize(spectral_map(e, [](double x) { return 1.0 / x; }));
}

}  // namespace covts::linalg
