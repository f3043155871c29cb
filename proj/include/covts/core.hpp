#pragma once

// Core value types shared by every covts module: packed symmetric matrices,
// the p x n observation matrix, the error hierarchy, and seed derivation.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace covts {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(std::size_t iterations, double primal, double dual, double kkt)
      : std::runtime_error("solver did not converge after " + std::to_string(iterations) +
                           " iterations (kkt residual " + std::to_string(kkt) + ")"),
        iterations_(iterations), primal_(primal), dual_(dual), kkt_(kkt) {}

  std::size_t iterations() const noexcept { return iterations_; }
  double primal_residual() const noexcept { return primal_; }
  double dual_residual() const noexcept { return dual_; }
  double kkt_residual() const noexcept { return kkt_; }

 private:
  std::size_t iterations_;
  double primal_, dual_, kkt_;
};

class NoSignChange : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonMonotone : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

// ---------------------------------------------------------------------------
// SymMatrix: p x p symmetric matrix stored as its packed lower triangle, so
// sigma(j,k) and sigma(k,j) are the same storage cell.
// ---------------------------------------------------------------------------

class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(std::size_t p, double fill = 0.0) : p_(p), lower_(p * (p + 1) / 2, fill) {}

  static SymMatrix identity(std::size_t p) {
    SymMatrix m(p);
    for (std::size_t j = 0; j < p; ++j) m(j, j) = 1.0;
    return m;
  }

  static SymMatrix diagonal(const std::vector<double>& d) {
    SymMatrix m(d.size());
    for (std::size_t j = 0; j < d.size(); ++j) m(j, j) = d[j];
    return m;
  }

  // Takes the lower triangle of a square matrix. The upper triangle is ignored.
  static SymMatrix from_lower(const Matrix& a) {
    require(a.rows() == a.cols(), "SymMatrix requires a square matrix");
    const auto p = static_cast<std::size_t>(a.rows());
    SymMatrix m(p);
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t k = 0; k <= j; ++k) m(j, k) = a(Eigen::Index(j), Eigen::Index(k));
    return m;
  }

  // Averages the two triangles; use for results of dense arithmetic that are
  // symmetric up to rounding.
  static SymMatrix symmetrize(const Matrix& a) {
    require(a.rows() == a.cols(), "SymMatrix requires a square matrix");
    const auto p = static_cast<std::size_t>(a.rows());
    SymMatrix m(p);
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t k = 0; k <= j; ++k) {
        const auto jj = Eigen::Index(j), kk = Eigen::Index(k);
        m(j, k) = j == k ? a(jj, jj) : 0.5 * (a(jj, kk) + a(kk, jj));
      }
    return m;
  }

  std::size_t dim() const noexcept { return p_; }
  bool empty() const noexcept { return p_ == 0; }

  double operator()(std::size_t j, std::size_t k) const noexcept { return lower_[index(j, k)]; }
  double& operator()(std::size_t j, std::size_t k) noexcept { return lower_[index(j, k)]; }

  std::span<const double> packed() const noexcept { return lower_; }
  std::span<double> packed() noexcept { return lower_; }

  Matrix dense() const {
    Matrix a(static_cast<Eigen::Index>(p_), static_cast<Eigen::Index>(p_));
    for (std::size_t j = 0; j < p_; ++j)
      for (std::size_t k = 0; k <= j; ++k) {
        const double v = (*this)(j, k);
        a(Eigen::Index(j), Eigen::Index(k)) = v;
        a(Eigen::Index(k), Eigen::Index(j)) = v;
      }
    return a;
  }

  double max_abs() const noexcept {
    double m = 0.0;
    for (double v : lower_) m = std::max(m, std::abs(v));
    return m;
  }

  // Applies f to every stored cell (each off-diagonal pair once).
  template <typename F>
  void transform(F&& f) {
    for (double& v : lower_) v = f(v);
  }

  // Visits every stored cell with its weight in a full (j,k) double sum:
  // 1 on the diagonal, 2 off it.
  template <typename F>
  void for_each_weighted(F&& f) const {
    std::size_t idx = 0;
    for (std::size_t j = 0; j < p_; ++j)
      for (std::size_t k = 0; k <= j; ++k, ++idx) f(j, k, lower_[idx], j == k ? 1.0 : 2.0);
  }

  friend bool operator==(const SymMatrix& a, const SymMatrix& b) {
    return a.p_ == b.p_ && a.lower_ == b.lower_;
  }

  friend SymMatrix operator-(const SymMatrix& a, const SymMatrix& b) {
    require(a.p_ == b.p_, "dimension mismatch");
    SymMatrix d(a.p_);
    for (std::size_t i = 0; i < d.lower_.size(); ++i) d.lower_[i] = a.lower_[i] - b.lower_[i];
    return d;
  }

  friend SymMatrix operator*(double c, SymMatrix a) {
    a.transform([c](double v) { return c * v; });
    return a;
  }

 private:
  static std::size_t index(std::size_t j, std::size_t k) noexcept {
    return j >= k ? j * (j + 1) / 2 + k : k * (k + 1) / 2 + j;
  }

  std::size_t p_ = 0;
  std::vector<double> lower_;
};

// ---------------------------------------------------------------------------
// DataMatrix: p x n observations, column i is z_{i+1}.
// ---------------------------------------------------------------------------

class DataMatrix {
 public:
  DataMatrix() = default;
  explicit DataMatrix(Matrix values) : values_(std::move(values)) {
    require(values_.allFinite(), "DataMatrix entries must be finite");
  }

  std::size_t p() const noexcept { return std::size_t(values_.rows()); }
  std::size_t n() const noexcept { return std::size_t(values_.cols()); }
  const Matrix& values() const noexcept { return values_; }
  auto column(std::size_t i) const { return values_.col(Eigen::Index(i)); }

  friend bool operator==(const DataMatrix& a, const DataMatrix& b) {
    return a.values_.rows() == b.values_.rows() && a.values_.cols() == b.values_.cols() &&
           a.values_ == b.values_;
  }

 private:
  Matrix values_;
};

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

// splitmix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream seed for replication `index` under `master`. Index based, so the
// assignment is independent of execution order.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return mix64(mix64(master) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

// 64-bit FNV-1a, used for config hashes.
inline std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace covts
