#pragma once

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <unordered_map>
#include <vector>

#include "qbdtail/qbd2d.hpp"

namespace qbdtail::oracle {

enum class TruncationPolicy { reflect_excess_to_self };

/// Finite box {0..N1} x {0..N2} of a two-dimensional QBD with the phase
/// count of each lattice point.
struct Lattice {
  std::array<long, 2> extent{0, 0};
  Index m0 = 0, m1 = 0, m2 = 0, m = 0;
  std::vector<Index> offset;  // first state index of lattice point (l1, l2)
  Index states = 0;

  Lattice() = default;
  Lattice(const Qbd2dSpec& s, std::array<long, 2> ext) : extent(ext), m0(s.m0), m1(s.m1), m2(s.m2), m(s.m) {
    offset.resize(static_cast<std::size_t>((ext[0] + 1) * (ext[1] + 1)));
    for (long a = 0; a <= ext[0]; ++a)
      for (long b = 0; b <= ext[1]; ++b) {
        offset[point(a, b)] = states;
        states += phases(a, b);
      }
  }
  std::size_t point(long l1, long l2) const { return static_cast<std::size_t>(l1 * (extent[1] + 1) + l2); }
  Index phases(long l1, long l2) const {
    if (l1 == 0 && l2 == 0) return m0;
    if (l2 == 0) return m1;
    if (l1 == 0) return m2;
    return m;
  }
  bool inside(long l1, long l2) const { return l1 >= 0 && l2 >= 0 && l1 <= extent[0] && l2 <= extent[1]; }
  Index index(long l1, long l2, Index k) const { return offset[point(l1, l2)] + k; }
};

inline int zone_of(long l) { return l == 0 ? kZero : l == 1 ? kOne : kPlus; }

/// Transition matrix of the chain restricted to a box. Mass that would
/// leave the box stays at the source state.
struct TruncatedChain {
  Lattice lattice;
  TruncationPolicy policy = TruncationPolicy::reflect_excess_to_self;
  std::vector<Eigen::Triplet<double>> triplets;  // (from, to, probability)
  double nu = 1.0;                               // uniformization rate (1 for discrete specs)
};

inline TruncatedChain truncate(const Qbd2dSpec& spec, std::array<long, 2> extent) {
  require_valid(spec);
  if (extent[0] < 2 || extent[1] < 2) throw Error(ErrorKind::InvalidSpec, "truncation extent must be at least 2");
  TruncatedChain ch;
  Qbd2dSpec p = spec;
  if (spec.time == TimeKind::continuous) {
    ch.nu = default_uniformization_rate(spec);
    p = uniformize(spec, ch.nu);
  }
  ch.lattice = Lattice(p, extent);
  const Lattice& L = ch.lattice;
  for (long a = 0; a <= extent[0]; ++a)
    for (long b = 0; b <= extent[1]; ++b) {
      const int s1 = zone_of(a), s2 = zone_of(b);
      const Index n = L.phases(a, b);
      Vector kept = Vector::Zero(n);
      for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j) {
          if (!Qbd2dSpec::allowed(s1, s2, i, j) || !L.inside(a + i, b + j)) continue;
          const Matrix& blk = p.at(s1, s2, i, j);
          for (Index k = 0; k < blk.rows(); ++k)
            for (Index q = 0; q < blk.cols(); ++q)
              if (blk(k, q) != 0.0) {
                ch.triplets.emplace_back(L.index(a, b, k), L.index(a + i, b + j, q), blk(k, q));
                kept(k) += blk(k, q);
              }
        }
      for (Index k = 0; k < n; ++k)
        if (kept(k) < 1.0) ch.triplets.emplace_back(L.index(a, b, k), L.index(a, b, k), 1.0 - kept(k));
    }
  return ch;
}

/// Stationary probabilities on a box, indexed by (l1, l2, phase).
struct StationaryTable {
  Lattice lattice;
  Vector pi;
  double residual = 0.0;  // |pi P - pi|_1 of the truncated chain

  double at(long l1, long l2, Index k) const { return pi(lattice.index(l1, l2, k)); }
  RowVector block(long l1, long l2) const {
    return pi.segment(lattice.offset[lattice.point(l1, l2)], lattice.phases(l1, l2)).transpose();
  }
  /// P(L_i = n) for n = 0..N_i, i = 1, 2.
  std::vector<double> marginal(int i) const {
    std::vector<double> out(static_cast<std::size_t>(lattice.extent[i - 1] + 1), 0.0);
    for (long a = 0; a <= lattice.extent[0]; ++a)
      for (long b = 0; b <= lattice.extent[1]; ++b) out[static_cast<std::size_t>(i == 1 ? a : b)] += block(a, b).sum();
    return out;
  }
};

inline Eigen::SparseMatrix<double> transition_matrix(const TruncatedChain& ch) {
  Eigen::SparseMatrix<double> P(ch.lattice.states, ch.lattice.states);
  P.setFromTriplets(ch.triplets.begin(), ch.triplets.end());
  return P;
}

/// Direct sparse solve of pi (I - P) = 0 with one component pinned, then
/// Gauss-Seidel sweeps until |pi P - pi|_1 <= tol.
inline StationaryTable solve(const TruncatedChain& ch, double tol = 1e-12) {
  const Index n = ch.lattice.states;
  const Eigen::SparseMatrix<double> P = transition_matrix(ch);
  StationaryTable out;
  out.lattice = ch.lattice;
  out.pi = Vector::Zero(n);
  if (n == 1) {
    out.pi(0) = 1.0;
    return out;
  }
  // (I - P)^T x = 0, pin x_0 = 1: drop equation 0 and move column 0 right.
  Eigen::SparseMatrix<double> eye(n, n);
  eye.setIdentity();
  const Eigen::SparseMatrix<double> At = Eigen::SparseMatrix<double>(eye - P).transpose();
  std::vector<Eigen::Triplet<double>> red;
  Vector rhs = Vector::Zero(n - 1);
  for (Index c = 0; c < At.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(At, c); it; ++it) {
      if (it.row() == 0) continue;
      if (it.col() == 0) rhs(it.row() - 1) -= it.value();
      else red.emplace_back(it.row() - 1, it.col() - 1, it.value());
    }
  Eigen::SparseMatrix<double> A(n - 1, n - 1);
  A.setFromTriplets(red.begin(), red.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw Error(ErrorKind::NoConvergence, "sparse factorization failed");
  const Vector x = lu.solve(rhs);
  out.pi(0) = 1.0;
  out.pi.tail(n - 1) = x;
  out.pi = out.pi.cwiseMax(0.0);
  out.pi /= out.pi.sum();

  // Gauss-Seidel polish on pi = pi P, column by column.
  const Eigen::SparseMatrix<double> Pc = P;  // column-major: column j lists predecessors of j
  auto residual = [&] { return (Vector(P.transpose() * out.pi) - out.pi).lpNorm<1>(); };
  out.residual = residual();
  for (int sweep = 0; sweep < 500 && out.residual > tol; ++sweep) {
    for (Index j = 0; j < n; ++j) {
      double acc = 0.0, diag = 0.0;
      for (Eigen::SparseMatrix<double>::InnerIterator it(Pc, j); it; ++it) {
        if (it.row() == j) diag = it.value();
        else acc += out.pi(it.row()) * it.value();
      }
      if (diag < 1.0) out.pi(j) = acc / (1.0 - diag);
    }
    out.pi /= out.pi.sum();
    out.residual = residual();
  }
  if (out.residual > tol)
    throw Error(ErrorKind::NoConvergence, "stationary residual " + std::to_string(out.residual) + " above tolerance");
  return out;
}

inline StationaryTable truncate_and_solve(const Qbd2dSpec& spec, std::array<long, 2> extent, double tol = 1e-12) {
  return solve(truncate(spec, extent), tol);
}

// ---------------------------------------------------------------------------
// Simulation.

struct SimState {
  long l1 = 0, l2 = 0;
  Index phase = 0;
  bool operator==(const SimState&) const = default;
};

/// Visit counts keyed by (l1, l2, phase).
struct OccupancyCounts {
  std::unordered_map<std::uint64_t, std::uint64_t> visits;
  std::uint64_t steps = 0;
  std::array<long, 2> max_level{0, 0};

  static std::uint64_t key(long l1, long l2, Index k) {
    return (static_cast<std::uint64_t>(l1) << 36) | (static_cast<std::uint64_t>(l2) << 8) | static_cast<std::uint64_t>(k);
  }
  std::uint64_t count(long l1, long l2, Index k) const {
    const auto it = visits.find(key(l1, l2, k));
    return it == visits.end() ? 0 : it->second;
  }
};

/// Uniform double in [0,1) from the top 53 bits of a 64-bit Mersenne
/// Twister draw; independent of the standard library's distributions.
inline double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Runs the chain (continuous specs are uniformized) for `steps` steps from
/// `start`, counting the state occupied before each step. Levels are
/// limited to 2^28 and phases to 256.
inline OccupancyCounts simulate(const Qbd2dSpec& spec, std::uint64_t seed, std::uint64_t steps, SimState start = {},
                                std::vector<SimState>* path = nullptr) {
  require_valid(spec);
  const Qbd2dSpec p = spec.time == TimeKind::continuous ? uniformize(spec) : spec;
  struct Move {
    double cum;
    int i, j;
    Index to;
  };
  // Cumulative move tables per family and phase.
  std::array<std::vector<std::vector<Move>>, 9> table;
  for (int s1 = 0; s1 < 3; ++s1)
    for (int s2 = 0; s2 < 3; ++s2) {
      auto& fam = table[Qbd2dSpec::family(s1, s2)];
      fam.resize(static_cast<std::size_t>(p.source_dim(s1, s2)));
      for (Index k = 0; k < p.source_dim(s1, s2); ++k) {
        double c = 0.0;
        for (int i = -1; i <= 1; ++i)
          for (int j = -1; j <= 1; ++j) {
            if (!Qbd2dSpec::allowed(s1, s2, i, j)) continue;
            const Matrix& b = p.at(s1, s2, i, j);
            for (Index q = 0; q < b.cols(); ++q)
              if (b(k, q) > 0.0) fam[k].push_back({c += b(k, q), i, j, q});
          }
      }
    }
  std::mt19937_64 rng(seed);
  OccupancyCounts out;
  SimState x = start;
  for (std::uint64_t n = 0; n < steps; ++n) {
    ++out.visits[OccupancyCounts::key(x.l1, x.l2, x.phase)];
    out.max_level[0] = std::max(out.max_level[0], x.l1);
    out.max_level[1] = std::max(out.max_level[1], x.l2);
    if (path) path->push_back(x);
    const auto& moves = table[Qbd2dSpec::family(zone_of(x.l1), zone_of(x.l2))][x.phase];
    const double u = unit_draw(rng) * moves.back().cum;
    auto it = std::upper_bound(moves.begin(), moves.end(), u, [](double v, const Move& mv) { return v < mv.cum; });
    if (it == moves.end()) --it;
    x = {x.l1 + it->i, x.l2 + it->j, it->to};
  }
  out.steps = steps;
  return out;
}

/// Empirical distribution of simulated visits on the smallest box holding them.
inline StationaryTable empirical_table(const Qbd2dSpec& spec, const OccupancyCounts& c) {
  StationaryTable t;
  t.lattice = Lattice(spec, {std::max(2L, c.max_level[0]), std::max(2L, c.max_level[1])});
  t.pi = Vector::Zero(t.lattice.states);
  for (long a = 0; a <= t.lattice.extent[0]; ++a)
    for (long b = 0; b <= t.lattice.extent[1]; ++b)
      for (Index k = 0; k < t.lattice.phases(a, b); ++k)
        t.pi(t.lattice.index(a, b, k)) = static_cast<double>(c.count(a, b, k)) / static_cast<double>(c.steps);
  return t;
}

// ---------------------------------------------------------------------------
// Tail slopes.

struct TailEstimate {
  std::optional<int> coordinate;  // set for coordinate tails
  Point2 direction{};             // set for directional tails
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::array<double, 2> window{0.0, 0.0};
  std::size_t points = 0;
};

/// Least-squares line through (x, log y) over the positive y with x in [lo, hi].
inline TailEstimate fit_log_slope(const std::vector<double>& xs, const std::vector<double>& ys, double lo, double hi) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (xs[k] < lo || xs[k] > hi || !(ys[k] > 0.0)) continue;
    const double x = xs[k], y = std::log(ys[k]);
    sx += x, sy += y, sxx += x * x, sxy += x * y, syy += y * y;
    ++n;
  }
  if (n < 2) throw Error(ErrorKind::EmptyWindow, "fewer than two positive tail values in the window");
  const double dn = static_cast<double>(n);
  const double vx = sxx - sx * sx / dn, vy = syy - sy * sy / dn, cxy = sxy - sx * sy / dn;
  if (!(vx > 0.0)) throw Error(ErrorKind::EmptyWindow, "window holds a single abscissa");
  TailEstimate t;
  t.slope = cxy / vx;
  t.intercept = (sy - t.slope * sx) / dn;
  t.r_squared = vy > 0.0 ? cxy * cxy / (vx * vy) : 1.0;
  t.window = {lo, hi};
  t.points = n;
  return t;
}

/// Slope of log P(L_i > n, L_{3-i} = level, J = phase) over n in
/// [N_i/4, 3N_i/4]; it estimates -tau_i.
inline TailEstimate estimate_decay(const StationaryTable& t, int coordinate, long level, Index phase) {
  const Lattice& L = t.lattice;
  const long ni = L.extent[coordinate - 1];
  if (level < 0 || level > L.extent[2 - coordinate]) throw Error(ErrorKind::EmptyWindow, "transverse level outside the table");
  std::vector<double> xs, ys;
  double tail = 0.0;
  std::vector<double> cell(static_cast<std::size_t>(ni + 1), 0.0);
  for (long n = 0; n <= ni; ++n) {
    const long a = coordinate == 1 ? n : level, b = coordinate == 1 ? level : n;
    if (phase < L.phases(a, b)) cell[static_cast<std::size_t>(n)] = t.at(a, b, phase);
  }
  for (long n = ni; n >= 0; --n) {
    xs.push_back(static_cast<double>(n));
    ys.push_back(tail);  // P(L_i > n, ...)
    tail += cell[static_cast<std::size_t>(n)];
  }
  TailEstimate e = fit_log_slope(xs, ys, std::ceil(ni / 4.0), std::floor(3.0 * ni / 4.0));
  e.coordinate = coordinate;
  return e;
}

/// Slope of log P(<L, c> > x) over x in [X/4, 3X/4] with X the largest x
/// whose half-plane tail is not cut by the box; it estimates -rate * |c|_1
/// per unit of <L, c>, i.e. the decay rate of the direction c.
inline TailEstimate estimate_decay(const StationaryTable& t, const Point2& c) {
  if (c[0] < 0.0 || c[1] < 0.0 || !(c[0] + c[1] > 0.0))
    throw Error(ErrorKind::ZeroDirection, "direction must be nonnegative and nonzero");
  const Lattice& L = t.lattice;
  double X = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 2; ++k)
    if (c[k] > 0.0) X = std::min(X, c[k] * static_cast<double>(L.extent[k]));
  std::vector<std::pair<double, double>> mass;
  for (long a = 0; a <= L.extent[0]; ++a)
    for (long b = 0; b <= L.extent[1]; ++b) mass.emplace_back(c[0] * a + c[1] * b, t.block(a, b).sum());
  std::sort(mass.begin(), mass.end());
  // Tail at each distinct value x of <L, c>: mass strictly above x.
  std::vector<double> xs, ys;
  double tail = 0.0;
  for (std::size_t k = mass.size(); k-- > 0;) {
    if (k + 1 == mass.size() || mass[k].first != mass[k + 1].first) {
      xs.push_back(mass[k].first);
      ys.push_back(tail);
    }
    tail += mass[k].second;
  }
  TailEstimate e = fit_log_slope(xs, ys, X / 4.0, 3.0 * X / 4.0);
  e.direction = c;
  return e;
}

// ---------------------------------------------------------------------------
// Stationary MGF identity.

/// Norm of the four-term stationary identity
///   phi_pp (I - A(theta)) + e^{t2} phi_p1 (I - C1(theta)) + e^{t1} phi_1p (I - C2(theta)) + psi0 = 0,
/// with phi_pp the MGF over l >= 2, phi_p1 over (l1 >= 2, l2 = 1) in theta1,
/// phi_1p symmetric, and psi0 collecting the states (1,1), (1,0), (0,1), 0.
/// The face terms come from eliminating the MGFs of the two faces.
/// Continuous specs are checked on their uniformized kernel.
inline double stationary_identity_residual(const StationaryTable& t, const Qbd2dSpec& spec, const Point2& th,
                                          double edge_tol = 1e-8) {
  const Qbd2dSpec p = spec.time == TimeKind::continuous ? uniformize(spec) : spec;
  const Lattice& L = t.lattice;
  const double e1 = std::exp(th[0]), e2 = std::exp(th[1]);
  using qbdtail::detail::sum_first;
  using qbdtail::detail::sum_second;

  // Region MGFs; the weight on the box edge, where truncation rewrites the
  // kernel, bounds the error of the identity.
  RowVector phi_pp = RowVector::Zero(p.m), phi_p1 = RowVector::Zero(p.m), phi_1p = RowVector::Zero(p.m);
  double edge = 0.0, whole = 0.0;
  for (long a = 0; a <= L.extent[0]; ++a)
    for (long b = 0; b <= L.extent[1]; ++b) {
      const double w = std::exp(th[0] * a + th[1] * b);
      const double contrib = w * t.block(a, b).sum();
      whole += contrib;
      if (a == L.extent[0] || b == L.extent[1]) edge += contrib;
      if (a >= 2 && b >= 2) phi_pp += w * t.block(a, b);
      else if (a >= 2 && b == 1) phi_p1 += std::exp(th[0] * a) * t.block(a, b);
      else if (a == 1 && b >= 2) phi_1p += std::exp(th[1] * b) * t.block(a, b);
    }
  if (!(edge <= edge_tol * whole))
    throw Error(ErrorKind::ThetaOutsideDomain, "the table's MGF at theta is carried by the truncation edge");

  const Index m = p.m;
  const Matrix I = identity(m);
  const RowVector pi11 = t.block(1, 1), pi10 = t.block(1, 0), pi01 = t.block(0, 1), pi00 = t.block(0, 0);

  // sum over i >= 0 (resp. j >= 0) of tilted blocks of one family.
  auto plus_first = [&](int s1, int s2, int j) { return sum_first(p, s1, s2, j, th[0], 0); };
  auto plus_second = [&](int s1, int s2, int i) { return sum_second(p, s1, s2, i, th[1], 0); };

  // Eliminating the face MGFs needs I minus each face kernel to be invertible.
  Matrix c1, c2;
  try {
    c1 = c2_mgf(p, 1, th[0], th[1]);
    c2 = c2_mgf(p, 2, th[0], th[1]);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::FaceNotInvertible) throw;
    throw Error(ErrorKind::ThetaOutsideDomain, "a face kernel is not invertible at theta");
  }
  const Matrix a_pp = sum_first(p, kPlus, kPlus, 0, th[0], 0) + e2 * sum_first(p, kPlus, kPlus, 1, th[0], 0);
  const Matrix face1 = sum_first(p, kPlus, kZero, 0, th[0]);
  const Matrix face2 = sum_second(p, kZero, kPlus, 0, th[1]);
  const Matrix up1 = sum_first(p, kPlus, kZero, 1, th[0]);
  const Matrix up2 = sum_second(p, kZero, kPlus, 1, th[1]);

  const RowVector psi1 = e1 * (pi11 * plus_first(kOne, kOne, -1) + pi10 * (plus_first(kOne, kZero, 0) - identity(p.m1)) +
                               pi01 * p.at(kZero, kOne, 1, -1) + pi00 * p.at(kZero, kZero, 1, 0));
  const RowVector psi2 = e2 * (pi11 * plus_second(kOne, kOne, -1) + pi01 * (plus_second(kZero, kOne, 0) - identity(p.m2)) +
                               pi10 * p.at(kOne, kZero, -1, 1) + pi00 * p.at(kZero, kZero, 0, 1));
  const RowVector psi0 =
      e1 * e2 * (pi11 * (I - a_pp)) -
      e1 * e2 * (pi10 * plus_first(kOne, kZero, 1) + pi01 * plus_second(kZero, kOne, 1) + pi00 * p.at(kZero, kZero, 1, 1)) -
      e2 * (psi1 * (identity(p.m1) - face1).partialPivLu().solve(up1)) -
      e1 * (psi2 * (identity(p.m2) - face2).partialPivLu().solve(up2));

  const RowVector lhs = phi_pp * (I - a2_mgf(p, th[0], th[1])) + e2 * phi_p1 * (I - c1) + e1 * phi_1p * (I - c2) + psi0;
  return lhs.cwiseAbs().maxCoeff();
}

}  // namespace qbdtail::oracle
