#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <string>
#include <vector>

#include "qbdtail/error.hpp"

namespace qbdtail {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

/// Perron-Frobenius eigenpair of a nonnegative irreducible matrix.
/// `right` and `left` are positive and normalized to sum 1.
struct PerronResult {
  double value = 0.0;
  Vector right;
  Vector left;
  std::size_t iterations = 0;
  double residual = 0.0;
};

/// Positive diagonal scaling used for similarity twists.
struct DiagScale {
  Vector diag;

  explicit DiagScale(Vector d) : diag(std::move(d)) {
    if (!(diag.array() > 0.0).all())
      throw Error(ErrorKind::NonPositiveScale, "diagonal scale must be strictly positive");
  }
  Matrix apply(const Matrix& t) const {  // diag^-1 * t * diag
    return diag.cwiseInverse().asDiagonal() * t * diag.asDiagonal();
  }
};

struct PfOptions {
  double tol = 1e-13;               // relative gap of the Collatz-Wielandt bracket
  std::size_t max_iter = 1'000'000;
  bool check_irreducible = true;
  bool want_left = true;
};

inline Matrix identity(Index n) { return Matrix::Identity(n, n); }
inline Vector ones(Index n) { return Vector::Ones(n); }

inline bool is_nonnegative(const Matrix& t, double slack = 0.0) {
  return (t.array() >= -slack).all();
}

inline bool is_finite(const Matrix& t) { return t.allFinite(); }

namespace detail {

inline bool reaches_all(const Matrix& t, bool transpose) {
  const Index n = t.rows();
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<Index> stack{0};
  seen[0] = 1;
  Index count = 1;
  while (!stack.empty()) {
    const Index u = stack.back();
    stack.pop_back();
    for (Index v = 0; v < n; ++v) {
      const double e = transpose ? t(v, u) : t(u, v);
      if (e != 0.0 && !seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        ++count;
        stack.push_back(v);
      }
    }
  }
  return count == n;
}

inline void collatz_bounds(const Vector& x, const Vector& tx, double& lo, double& hi) {
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  for (Index i = 0; i < x.size(); ++i) {
    const double r = tx(i) / x(i);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
}

/// Right Perron vector by power iteration on T+I (which is primitive when T
/// is irreducible), switched to Noda's shifted inverse iteration once the
/// bracket is reasonably tight. The shift is the Collatz-Wielandt upper
/// bound, which never drops below the spectral radius, so every solve keeps
/// the iterate positive and the eigenvalue stays bracketed.
inline double perron_right(const Matrix& t, const PfOptions& opt, Vector& x, std::size_t& iters) {
  const Index n = t.rows();
  iters = 0;
  if (n == 1) {
    x = Vector::Ones(1);
    return t(0, 0);
  }
  x = Vector::Constant(n, 1.0 / static_cast<double>(n));
  Vector tx(n);
  double lo = 0.0, hi = 0.0;
  auto converged = [&]() { return hi - lo <= opt.tol * std::abs(hi); };

  constexpr std::size_t kWarm = 30;
  constexpr std::size_t kNoda = 100;
  for (std::size_t k = 0; k < kWarm && iters < opt.max_iter; ++k, ++iters) {
    tx.noalias() = t * x;
    collatz_bounds(x, tx, lo, hi);
    if (converged()) return 0.5 * (lo + hi);
    x += tx;
    x /= x.sum();
  }
  for (std::size_t k = 0; k < kNoda && iters < opt.max_iter; ++k, ++iters) {
    tx.noalias() = t * x;
    collatz_bounds(x, tx, lo, hi);
    if (converged()) return 0.5 * (lo + hi);
    Matrix shifted = -t;
    shifted.diagonal().array() += hi;
    Vector z = shifted.partialPivLu().solve(x);
    if (!z.allFinite() || !(z.array() > 0.0).all()) break;
    x = z / z.sum();
  }
  for (; iters < opt.max_iter; ++iters) {
    tx.noalias() = t * x;
    collatz_bounds(x, tx, lo, hi);
    if (converged()) return 0.5 * (lo + hi);
    x += tx;
    x /= x.sum();
  }
  throw Error(ErrorKind::NoConvergence, "Perron iteration budget exhausted");
}

}  // namespace detail

/// Strong connectivity of the sparsity pattern.
inline bool is_irreducible(const Matrix& t) {
  if (t.rows() != t.cols()) return false;
  if (t.rows() <= 1) return true;
  return detail::reaches_all(t, false) && detail::reaches_all(t, true);
}

/// Same test, ignoring the diagonal (for generators with negative diagonals).
inline bool is_irreducible_offdiag(const Matrix& q) {
  Matrix p = q;
  p.diagonal().setZero();
  return is_irreducible(p);
}

inline PerronResult pf_eigen(const Matrix& t, const PfOptions& opt = {}) {
  if (t.rows() != t.cols()) throw Error(ErrorKind::ShapeMismatch, "pf_eigen needs a square matrix");
  if (!is_nonnegative(t)) throw Error(ErrorKind::ShapeMismatch, "pf_eigen needs a nonnegative matrix");
  if (opt.check_irreducible && !is_irreducible(t))
    throw Error(ErrorKind::NotIrreducible, "matrix is reducible");
  PerronResult r;
  std::size_t it = 0;
  r.value = detail::perron_right(t, opt, r.right, it);
  r.iterations = it;
  if (opt.want_left) {
    Matrix tt = t.transpose();
    r.value = 0.5 * (r.value + detail::perron_right(tt, opt, r.left, it));
    r.iterations += it;
  }
  r.residual = (t * r.right - r.value * r.right).cwiseAbs().maxCoeff();
  return r;
}

/// PF eigenpair of a matrix with nonnegative off-diagonal entries (e.g. a
/// tilted generator): shift by c = 1 + max|diag| and subtract c afterwards.
inline PerronResult pf_metzler(const Matrix& q, const PfOptions& opt = {}) {
  if (q.rows() != q.cols()) throw Error(ErrorKind::ShapeMismatch, "pf_metzler needs a square matrix");
  const double c = 1.0 + q.diagonal().cwiseAbs().maxCoeff();
  Matrix s = q;
  s.diagonal().array() += c;
  PerronResult r = pf_eigen(s, opt);
  r.value -= c;
  r.residual = (q * r.right - r.value * r.right).cwiseAbs().maxCoeff();
  return r;
}

/// Spectral radius without an irreducibility requirement.
inline double spectral_radius(const Matrix& t) {
  if (t.rows() != t.cols()) throw Error(ErrorKind::ShapeMismatch, "spectral_radius needs a square matrix");
  if (t.rows() == 0) return 0.0;
  if (t.rows() == 1) return std::abs(t(0, 0));
  Eigen::EigenSolver<Matrix> es(t, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline Matrix kron_prod(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline Matrix kron_prod(std::initializer_list<Matrix> factors) {
  Matrix out = Matrix::Ones(1, 1);
  for (const auto& f : factors) out = kron_prod(out, f);
  return out;
}

inline Matrix kron_sum(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols() || b.rows() != b.cols())
    throw Error(ErrorKind::ShapeMismatch, "kron_sum needs square operands");
  return kron_prod(a, identity(b.rows())) + kron_prod(identity(a.rows()), b);
}

inline Matrix kron_sum(std::initializer_list<Matrix> terms) {
  Matrix out = Matrix::Zero(1, 1);
  for (const auto& t : terms) out = kron_sum(out, t);
  return out;
}

/// (I - T)^{-1} for spectral radius below 1 - margin. Entries in
/// [-clamp, 0) are rounding noise and set to zero.
inline Matrix neumann_inverse(const Matrix& t, double margin = 1e-10) {
  if (t.rows() != t.cols()) throw Error(ErrorKind::ShapeMismatch, "neumann_inverse needs a square matrix");
  const double rho = spectral_radius(t);
  if (rho > 1.0 - margin)
    throw Error(ErrorKind::SpectralRadiusNotBelowOne,
                "spectral radius " + std::to_string(rho) + " is not below one");
  Matrix x = (identity(t.rows()) - t).partialPivLu().solve(identity(t.rows()));
  const double clamp = 1e-12 * std::max(1.0, x.cwiseAbs().maxCoeff());
  for (Index i = 0; i < x.size(); ++i)
    if (x.data()[i] < 0.0 && x.data()[i] >= -clamp) x.data()[i] = 0.0;
  return x;
}

/// e^{theta*level} * diag(h)^{-1} * T_level * diag(h) for each block.
inline std::vector<Matrix> twist(const std::vector<Matrix>& blocks, const Vector& h, double theta,
                                 const std::vector<int>& levels) {
  if (blocks.size() != levels.size())
    throw Error(ErrorKind::ShapeMismatch, "twist: one level offset per block");
  const DiagScale d(h);
  std::vector<Matrix> out;
  out.reserve(blocks.size());
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    if (blocks[k].rows() != h.size() || blocks[k].cols() != h.size())
      throw Error(ErrorKind::ShapeMismatch, "twist: block size differs from scale length");
    out.push_back(std::exp(theta * levels[k]) * d.apply(blocks[k]));
  }
  return out;
}

/// Stationary row vector of an irreducible stochastic matrix or generator.
inline RowVector stationary_vector(const Matrix& p, bool generator) {
  const PerronResult r = generator ? pf_metzler(p) : pf_eigen(p);
  return r.left.transpose();
}

}  // namespace qbdtail
