#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "qbdtail/convex1d.hpp"
#include "qbdtail/error.hpp"
#include "qbdtail/matcore.hpp"

namespace qbdtail {

/// Slack used by every "<= 1" test on spectral quantities.
constexpr double kLeqOneSlack = 1e-10;

/// Nonnegative matrix with QBD block structure:
///
///   level 0 row:  B0 (m0 x m0), B1 (m0 x m)
///   level 1 row:  Bm1 (m x m0), A0, A1
///   level n >= 2: Am1, A0, A1 (all m x m)
struct QbdBlocks {
  Matrix B0, B1, Bm1;
  Matrix Am1, A0, A1;

  Index m0() const { return B0.rows(); }
  Index m() const { return A0.rows(); }

  QbdBlocks scaled(double u) const { return {u * B0, u * B1, u * Bm1, u * Am1, u * A0, u * A1}; }

  void validate() const {
    const Index a = m0(), b = m();
    auto shape = [](const Matrix& x, Index r, Index c, const char* name) {
      if (x.rows() != r || x.cols() != c)
        throw Error(ErrorKind::ShapeMismatch, std::string(name) + " has shape " + std::to_string(x.rows()) +
                                                  "x" + std::to_string(x.cols()) + ", expected " +
                                                  std::to_string(r) + "x" + std::to_string(c));
      if (!is_finite(x) || !is_nonnegative(x))
        throw Error(ErrorKind::InvalidSpec, std::string(name) + " must be finite and nonnegative");
    };
    if (a == 0 || b == 0) throw Error(ErrorKind::ShapeMismatch, "empty phase space");
    shape(B0, a, a, "B0");
    shape(B1, a, b, "B1");
    shape(Bm1, b, a, "Bm1");
    shape(Am1, b, b, "Am1");
    shape(A0, b, b, "A0");
    shape(A1, b, b, "A1");
  }

  /// K truncated to levels 0..levels (rows of the last level keep their A1 mass off-matrix).
  Matrix truncated(Index levels) const {
    const Index a = m0(), b = m();
    const Index n = a + levels * b;
    Matrix k = Matrix::Zero(n, n);
    k.block(0, 0, a, a) = B0;
    if (levels >= 1) {
      k.block(0, a, a, b) = B1;
      k.block(a, 0, b, a) = Bm1;
    }
    for (Index l = 1; l <= levels; ++l) {
      const Index off = a + (l - 1) * b;
      k.block(off, off, b, b) = A0;
      if (l < levels) k.block(off, off + b, b, b) = A1;
      if (l >= 2) k.block(off, off - b, b, b) = Am1;
    }
    return k;
  }
};

struct CanonicalQbd {
  Matrix C0;
  Matrix Am1, A0, A1;

  /// The canonical chain as a QBD whose boundary level has the interior phase space.
  QbdBlocks as_blocks() const { return {C0, A1, Am1, Am1, A0, A1}; }
};

inline CanonicalQbd canonical_form(const QbdBlocks& k) {
  k.validate();
  Matrix inv;
  try {
    inv = neumann_inverse(k.B0);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::SpectralRadiusNotBelowOne) throw;
    throw Error(ErrorKind::BoundaryNotInvertible, "spectral radius of B0 is not below one");
  }
  return {k.Bm1 * inv * k.B1 + k.A0, k.Am1, k.A0, k.A1};
}

inline Matrix a_mgf(const QbdBlocks& k, double theta) {
  return std::exp(-theta) * k.Am1 + k.A0 + std::exp(theta) * k.A1;
}

inline Matrix c_mgf(const CanonicalQbd& c, double theta) { return c.C0 + std::exp(theta) * c.A1; }
inline Matrix c_mgf(const QbdBlocks& k, double theta) { return c_mgf(canonical_form(k), theta); }

/// Spectral radius of A_*(theta); the PF value when A_*(theta) is irreducible.
inline double gamma_a(const QbdBlocks& k, double theta) {
  const Matrix a = a_mgf(k, theta);
  if (is_irreducible(a)) return pf_eigen(a, {1e-13, 1'000'000, false, false}).value;
  return spectral_radius(a);
}

inline Interval gamma1d_plus(const QbdBlocks& k, MinResult* min_out = nullptr) {
  return convex::sublevel_interval([&](double t) { return gamma_a(k, t); }, 1.0, kLeqOneSlack, min_out);
}

/// Convergence parameter of K_+, the reciprocal of min gamma_a.
inline double cp_kplus(const QbdBlocks& k) {
  return 1.0 / convex::minimize([&](double t) { return gamma_a(k, t); }).f;
}

namespace detail {

/// Minimal nonnegative solution of G = L + M0 G + U G^2 by logarithmic
/// reduction. Returns the number of doubling steps taken.
inline std::size_t log_reduction(const Matrix& down, const Matrix& local, const Matrix& up, Matrix& g,
                                 std::size_t max_steps, double tol) {
  const Index n = local.rows();
  const Matrix id = identity(n);
  Eigen::PartialPivLU<Matrix> lu(id - local);
  Matrix h = lu.solve(up);
  Matrix l = lu.solve(down);
  g = l;
  Matrix t = h;
  for (std::size_t step = 1; step <= max_steps; ++step) {
    const Matrix u = h * l + l * h;
    Eigen::PartialPivLU<Matrix> lu2(id - u);
    const Matrix h2 = lu2.solve(h * h);
    const Matrix l2 = lu2.solve(l * l);
    h = h2;
    l = l2;
    const Matrix inc = t * l;
    g += inc;
    t = t * h;
    if (!g.allFinite()) throw Error(ErrorKind::NoConvergence, "logarithmic reduction diverged");
    if (inc.cwiseAbs().maxCoeff() <= tol && t.cwiseAbs().maxCoeff() <= tol) return step;
  }
  return max_steps;
}

}  // namespace detail

struct GMinusResult {
  Matrix G;
  double theta1 = 0.0;
  std::size_t iterations = 0;
  bool tangent = false;  // Gamma_+ is a single point: null-recurrent twisted chain, slow convergence
};

/// Minimal nonnegative solution of G = Am1 + A0 G + A1 G^2, solved in
/// coordinates twisted at the left end of Gamma_+ and then untwisted.
inline GMinusResult g_minus(const QbdBlocks& k) {
  MinResult mn;
  const Interval gp = gamma1d_plus(k, &mn);
  if (gp.empty) throw Error(ErrorKind::GammaPlusEmpty, "gamma_a exceeds one everywhere");
  GMinusResult res;
  // A minimum this close to one leaves the root pair ill-conditioned; twist at the minimizer.
  res.tangent = mn.f > 1.0 - 1e-12;
  res.theta1 = res.tangent ? mn.x : gp.lo;
  const Matrix a = a_mgf(k, res.theta1);
  const PerronResult pf = pf_eigen(a, {1e-14, 1'000'000, true, false});
  const auto tw = twist({k.Am1, k.A0, k.A1}, pf.right, res.theta1, {-1, 0, 1});
  Matrix ghat;
  const std::size_t cap = res.tangent ? 200 : 100;
  res.iterations = detail::log_reduction(tw[0], tw[1], tw[2], ghat, cap, 1e-15);
  // A few functional-iteration sweeps remove the residual drift of the doubling.
  const Matrix id = identity(k.m());
  for (int s = 0; s < 3; ++s) ghat = (id - tw[1] - tw[2] * ghat).partialPivLu().solve(tw[0]);
  const DiagScale d(pf.right);
  res.G = std::exp(res.theta1) * (d.diag.asDiagonal() * ghat * d.diag.cwiseInverse().asDiagonal());
  return res;
}

inline bool superharmonic_exists_via_G(const QbdBlocks& k) {
  if (gamma1d_plus(k).empty) return false;
  CanonicalQbd c;
  try {
    c = canonical_form(k);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::BoundaryNotInvertible) return false;
    throw;
  }
  const GMinusResult g = g_minus(k);
  return spectral_radius(c.C0 + k.A1 * g.G) <= 1.0 + kLeqOneSlack;
}

namespace detail {

/// Right eigenvector of the spectral radius of a nonnegative matrix that
/// may be reducible; returned entrywise nonnegative and normalized.
inline double perron_any(const Matrix& t, Vector& v) {
  if (t.rows() == 1) {
    v = Vector::Ones(1);
    return t(0, 0);
  }
  if (is_irreducible(t)) {
    const PerronResult r = pf_eigen(t, {1e-14, 1'000'000, false, false});
    v = r.right;
    return r.value;
  }
  Eigen::EigenSolver<Matrix> es(t, true);
  Index best = 0;
  for (Index i = 1; i < t.rows(); ++i)
    if (es.eigenvalues()(i).real() > es.eigenvalues()(best).real()) best = i;
  v = es.eigenvectors().col(best).real().cwiseAbs();
  v /= v.sum();
  return es.eigenvalues()(best).real();
}

}  // namespace detail

/// Growth rate of h -> rowwise max(A h, C h): the largest spectral radius
/// over matrices whose k-th row is taken from A or from C. A positive h with
/// A h <= h and C h <= h exists exactly when this is at most one. Computed by
/// policy iteration on the row choice.
inline double max_row_radius(const Matrix& a, const Matrix& c, Vector* vec = nullptr) {
  const Index n = a.rows();
  std::vector<char> pick(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; ++i) pick[static_cast<std::size_t>(i)] = c.row(i).sum() > a.row(i).sum();
  Matrix m(n, n);
  Vector v;
  double rho = 0.0;
  for (int it = 0; it < 4 * n + 10; ++it) {
    for (Index i = 0; i < n; ++i) m.row(i) = pick[static_cast<std::size_t>(i)] ? c.row(i) : a.row(i);
    rho = detail::perron_any(m, v);
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      const double va = a.row(i).dot(v), vc = c.row(i).dot(v);
      const double cur = pick[static_cast<std::size_t>(i)] ? vc : va;
      const double alt = pick[static_cast<std::size_t>(i)] ? va : vc;
      if (alt > cur + 1e-13 * std::max(cur, 1e-300)) {
        pick[static_cast<std::size_t>(i)] ^= 1;
        changed = true;
      }
    }
    if (!changed) break;
  }
  if (vec) *vec = v;
  return rho;
}

/// {theta : some h > 0 has A_*(theta) h <= h and C_*(theta) h <= h}.
inline Interval gamma1d_0plus(const QbdBlocks& k) {
  const CanonicalQbd c = canonical_form(k);
  return convex::sublevel_interval(
      [&](double t) { return max_row_radius(a_mgf(k, t), c_mgf(c, t)); }, 1.0, kLeqOneSlack);
}

struct Assumption1Check {
  bool holds = false;
  int branch = 0;  // 1: c1 fixed to one, 0: c0 fixed to one, -1: neither
  double c0 = 0.0;
  double c1 = 0.0;
  Vector h0;
  double residual = 0.0;
};

/// Looks for a positive boundary vector h0 making the boundary rows
/// proportional to (h0, h) with h the PF vector of A_*(theta), one of the
/// two proportionality constants being one.
inline Assumption1Check check_assumption1(const QbdBlocks& k, double theta) {
  k.validate();
  const Matrix a = a_mgf(k, theta);
  const PerronResult pf = pf_eigen(a, {1e-14, 1'000'000, true, false});
  if (pf.value > 1.0 + kLeqOneSlack)
    throw Error(ErrorKind::ThetaOutsideGammaPlus, "gamma_a(theta) = " + std::to_string(pf.value));
  const Vector& h = pf.right;
  const double et = std::exp(theta);
  const Vector inner = (k.A0 + et * k.A1) * h;

  auto proportional = [](const Vector& lhs, const Vector& base, double& coef) {
    coef = lhs.dot(base) / base.squaredNorm();
    const double scale = std::max(lhs.norm(), base.norm() * std::abs(coef));
    return scale > 0.0 ? (lhs - coef * base).norm() / scale : 0.0;
  };

  Assumption1Check best;
  best.branch = -1;
  best.residual = std::numeric_limits<double>::infinity();

  // c1 = 1: e^{-theta} Bm1 h0 = h - inner, then B0 h0 + e^theta B1 h = c0 h0.
  {
    Assumption1Check r;
    r.branch = 1;
    r.c1 = 1.0;
    const Matrix lhs = std::exp(-theta) * k.Bm1;
    const Vector rhs = h - inner;
    r.h0 = lhs.colPivHouseholderQr().solve(rhs);
    const double solve_res = (lhs * r.h0 - rhs).norm() / h.norm();
    const double prop = proportional(k.B0 * r.h0 + et * k.B1 * h, r.h0, r.c0);
    r.residual = std::max(solve_res, prop);
    r.holds = r.h0.allFinite() && (r.h0.array() > 0.0).all() && r.residual <= 1e-8;
    if (r.holds) return r;
    if (r.residual < best.residual) best = r;
  }
  // c0 = 1: h0 = (I - B0)^{-1} e^theta B1 h, then e^{-theta} Bm1 h0 + inner = c1 h.
  try {
    Assumption1Check r;
    r.branch = 0;
    r.c0 = 1.0;
    r.h0 = neumann_inverse(k.B0) * (et * k.B1 * h);
    r.residual = proportional(std::exp(-theta) * k.Bm1 * r.h0 + inner, h, r.c1);
    r.holds = (r.h0.array() > 0.0).all() && r.residual <= 1e-8;
    if (r.holds) return r;
    if (r.residual < best.residual) best = r;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::SpectralRadiusNotBelowOne) throw;
  }
  best.holds = false;
  return best;
}

namespace detail {

inline void require_stochastic(const QbdBlocks& k, double tol = 1e-10) {
  auto rows_one = [&](const Matrix& s) { return ((s.rowwise().sum().array() - 1.0).abs() <= tol).all(); };
  Matrix top(k.m0(), k.m0() + k.m());
  top << k.B0, k.B1;
  Matrix first(k.m(), k.m0() + k.m());
  first << k.Bm1, k.A0 + k.A1;
  if (!rows_one(top) || !rows_one(first) || !rows_one(k.Am1 + k.A0 + k.A1))
    throw Error(ErrorKind::NotStochastic, "rows of K do not sum to one");
}

/// Mean level increment of the interior under the stationary phase law.
inline double interior_drift(const QbdBlocks& k) {
  const RowVector alpha = stationary_vector(k.Am1 + k.A0 + k.A1, false);
  return alpha * (k.A1 - k.Am1) * ones(k.m());
}

}  // namespace detail

/// Minimal nonnegative R with R = A1 + R A0 + R^2 Am1, through
/// R = A1 (I - A0 - A1 G).
inline Matrix rate_matrix(const QbdBlocks& k) {
  k.validate();
  const Matrix id = identity(k.m());
  Matrix g;
  if (!gamma1d_plus(k).empty) {
    g = g_minus(k).G;
  } else {
    detail::log_reduction(k.Am1, k.A0, k.A1, g, 200, 1e-15);
  }
  Matrix r = k.A1 * (id - k.A0 - k.A1 * g).inverse();
  for (int s = 0; s < 3; ++s) r = k.A1 * (id - k.A0 - r * k.Am1).inverse();
  return r;
}

/// Stationary vectors pi_0 .. pi_{max_level} of a positive-recurrent QBD chain.
inline std::vector<RowVector> qbd_stationary(const QbdBlocks& k, std::size_t max_level) {
  k.validate();
  detail::require_stochastic(k);
  if (detail::interior_drift(k) >= -1e-14)
    throw Error(ErrorKind::NotPositiveRecurrent, "interior drift is not negative");
  const Index a = k.m0(), b = k.m();
  const Matrix r = rate_matrix(k);
  Matrix sys(a + b, a + b);
  sys << k.B0 - identity(a), k.B1, k.Bm1, k.A0 + r * k.Am1 - identity(b);
  // x sys = 0 with one equation swapped for the normalization.
  Vector norm(a + b);
  norm << ones(a), (identity(b) - r).partialPivLu().solve(ones(b));
  Matrix mt = sys.transpose();
  mt.row(0) = norm.transpose();
  Vector rhs = Vector::Zero(a + b);
  rhs(0) = 1.0;
  const Vector x = mt.fullPivLu().solve(rhs);
  std::vector<RowVector> out;
  out.reserve(max_level + 1);
  out.push_back(x.head(a).transpose());
  if (max_level >= 1) out.push_back(x.tail(b).transpose());
  for (std::size_t n = 2; n <= max_level; ++n) out.push_back(out.back() * r);
  return out;
}

enum class Recurrence { t_positive, t_null_or_transient };

inline const char* to_string(Recurrence r) {
  return r == Recurrence::t_positive ? "t_positive" : "t_null_or_transient";
}

struct RecurrenceResult {
  Recurrence kind;
  double t = 0.0;       // convergence parameter of K
  double t_plus = 0.0;  // convergence parameter of K_+
};

/// Compares c_p(K), found by bisection on the scale u of uK, with c_p(K_+).
inline RecurrenceResult classify_recurrence(const QbdBlocks& k) {
  if (!superharmonic_exists_via_G(k))
    throw Error(ErrorKind::NoSuperharmonicVector, "K has no superharmonic vector");
  RecurrenceResult res;
  res.t_plus = cp_kplus(k);
  double lo = 1.0, hi = res.t_plus;
  auto ok = [&](double u) {
    try {
      return superharmonic_exists_via_G(k.scaled(u));
    } catch (const Error&) {
      return false;
    }
  };
  if (hi > lo && ok(hi)) {
    lo = hi;
  } else {
    for (int s = 0; s < 40 && hi > lo; ++s) {
      const double mid = 0.5 * (lo + hi);
      (ok(mid) ? lo : hi) = mid;
    }
  }
  res.t = lo;
  res.kind = res.t < res.t_plus - 1e-9 ? Recurrence::t_positive : Recurrence::t_null_or_transient;
  return res;
}

}  // namespace qbdtail
