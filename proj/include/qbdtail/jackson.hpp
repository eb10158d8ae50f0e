#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "qbdtail/qbd2d.hpp"

namespace qbdtail::jackson {

/// Markovian arrival process: T carries the transitions without an arrival,
/// U the ones that bring one.
struct MapSpec {
  Matrix T;
  Matrix U;

  static MapSpec poisson(double lambda) {
    return {Matrix::Constant(1, 1, -lambda), Matrix::Constant(1, 1, lambda)};
  }
};

/// Phase-type service time with initial distribution beta and subgenerator S.
struct PhSpec {
  RowVector beta;
  Matrix S;

  Vector exit() const { return -(S * ones(S.rows())); }
  Matrix D() const { return exit() * beta; }
  Index size() const { return S.rows(); }

  static PhSpec exponential(double mu) { return {RowVector::Ones(1), Matrix::Constant(1, 1, -mu)}; }
  static PhSpec erlang(int k, double rate) {
    Matrix s = Matrix::Zero(k, k);
    for (int i = 0; i < k; ++i) {
      s(i, i) = -rate;
      if (i + 1 < k) s(i, i + 1) = rate;
    }
    RowVector b = RowVector::Zero(k);
    b(0) = 1.0;
    return {b, s};
  }
};

struct JacksonSpec {
  std::array<MapSpec, 2> arrivals;
  std::array<PhSpec, 2> services;
  double r12 = 0.0;
  double r21 = 0.0;

  /// r_{i0}, r_{i(3-i)} for node i in {1, 2}.
  double exit_prob(int i) const { return 1.0 - route(i); }
  double route(int i) const { return i == 1 ? r12 : r21; }
};

// ---------------------------------------------------------------------------
// Validation.

namespace detail {

inline void fail(const std::string& what) { throw Error(ErrorKind::InvalidSpec, what); }

inline double scale_of(const Matrix& m) { return std::max(1.0, m.cwiseAbs().maxCoeff()); }

inline void check_map(const MapSpec& a, const std::string& who) {
  const Matrix& t = a.T;
  const Matrix& u = a.U;
  if (t.rows() == 0 || t.rows() != t.cols() || u.rows() != t.rows() || u.cols() != t.cols())
    fail(who + ": T and U must be square of the same size");
  if (!is_nonnegative(u)) fail(who + ": U has a negative entry");
  for (Index i = 0; i < t.rows(); ++i)
    for (Index j = 0; j < t.cols(); ++j)
      if (i != j && t(i, j) < 0.0) fail(who + ": T has a negative off-diagonal entry");
  const Matrix q = t + u;
  const double scale = scale_of(q);
  if ((q * ones(q.rows())).cwiseAbs().maxCoeff() > 1e-10 * scale) fail(who + ": rows of T+U must sum to zero");
  if (q.rows() > 1 && !is_irreducible_offdiag(q)) fail(who + ": T+U is reducible");
}

inline void check_ph(const PhSpec& p, const std::string& who) {
  const Matrix& s = p.S;
  if (s.rows() == 0 || s.rows() != s.cols() || p.beta.size() != s.rows())
    fail(who + ": beta and S have inconsistent sizes");
  if ((p.beta.array() < 0.0).any() || std::abs(p.beta.sum() - 1.0) > 1e-10)
    fail(who + ": beta must be a probability vector");
  for (Index i = 0; i < s.rows(); ++i)
    for (Index j = 0; j < s.cols(); ++j)
      if (i != j && s(i, j) < 0.0) fail(who + ": S has a negative off-diagonal entry");
  const Vector ex = p.exit();
  if ((ex.array() < -1e-12 * scale_of(s)).any() || !(ex.maxCoeff() > 0.0)) fail(who + ": S must leak somewhere");
  if (!(qbdtail::detail::metzler_abscissa(s) < 0.0)) fail(who + ": -S is singular");
}

}  // namespace detail

/// Throws InvalidSpec. `require_coupling` adds r12 + r21 > 0, which the
/// block construction needs but traffic intensities do not.
inline void validate(const JacksonSpec& s, bool require_coupling = true) {
  for (int i = 0; i < 2; ++i) {
    detail::check_map(s.arrivals[i], "arrival " + std::to_string(i + 1));
    detail::check_ph(s.services[i], "service " + std::to_string(i + 1));
  }
  for (double r : {s.r12, s.r21})
    if (!(r >= 0.0 && r <= 1.0)) detail::fail("routing probabilities must lie in [0,1]");
  if (!(s.r12 * s.r21 < 1.0)) detail::fail("r12 * r21 must be below 1");
  if (require_coupling && !(s.r12 + s.r21 > 0.0)) detail::fail("r12 + r21 must be positive");
}

// ---------------------------------------------------------------------------
// Traffic.

struct TrafficReport {
  std::array<double, 2> lambda{};        // arrival rates
  std::array<double, 2> mean_service{};  // <beta, (-S)^-1 1>
  std::array<double, 2> mu{};            // service rates 1 / mean_service
  std::array<double, 2> rho{};
  bool stable = false;
};

inline double arrival_rate(const MapSpec& a) {
  const Matrix q = a.T + a.U;
  if (q.rows() == 1) return a.U(0, 0);
  const RowVector nu = stationary_vector(q, true);
  return (nu * a.U * ones(q.rows())).value();
}

inline double mean_service_time(const PhSpec& p) {
  return (p.beta * (-p.S).partialPivLu().solve(ones(p.size()))).value();
}

inline TrafficReport traffic_check(const JacksonSpec& s) {
  validate(s, false);
  TrafficReport r;
  for (int i = 0; i < 2; ++i) {
    r.lambda[i] = arrival_rate(s.arrivals[i]);
    r.mean_service[i] = mean_service_time(s.services[i]);
    r.mu[i] = 1.0 / r.mean_service[i];
  }
  const double d = 1.0 - s.r12 * s.r21;
  r.rho[0] = (r.lambda[0] + r.lambda[1] * s.r21) / (d * r.mu[0]);
  r.rho[1] = (r.lambda[1] + r.lambda[0] * s.r12) / (d * r.mu[1]);
  r.stable = r.rho[0] < 1.0 && r.rho[1] < 1.0;
  return r;
}

// ---------------------------------------------------------------------------
// Blocks. Phases are ordered (arrival 1, arrival 2, service 1, service 2);
// a service factor is present only while its node is busy.

inline Qbd2dSpec build_blocks(const JacksonSpec& js) {
  validate(js);
  const Matrix &T1 = js.arrivals[0].T, &U1 = js.arrivals[0].U;
  const Matrix &T2 = js.arrivals[1].T, &U2 = js.arrivals[1].U;
  const Matrix &S1 = js.services[0].S, &S2 = js.services[1].S;
  const RowVector &b1 = js.services[0].beta, &b2 = js.services[1].beta;
  const Matrix D1 = js.services[0].D(), D2 = js.services[1].D();
  const Matrix x1 = js.services[0].exit(), x2 = js.services[1].exit();  // column vectors
  const double r10 = js.exit_prob(1), r12 = js.r12, r20 = js.exit_prob(2), r21 = js.r21;
  const Matrix I1 = identity(T1.rows()), I2 = identity(T2.rows());
  const Matrix I3 = identity(S1.rows()), I4 = identity(S2.rows());
  const Matrix B1 = b1, B2 = b2;

  Qbd2dSpec s;
  s.time = TimeKind::continuous;
  s.m0 = T1.rows() * T2.rows();
  s.m1 = s.m0 * S1.rows();
  s.m2 = s.m0 * S2.rows();
  s.m = s.m1 * S2.rows();

  // Origin: both nodes idle.
  s.at(kZero, kZero, 0, 0) = kron_sum(T1, T2);
  s.at(kZero, kZero, 1, 0) = kron_prod({U1, I2, B1});
  s.at(kZero, kZero, 0, 1) = kron_prod({I1, U2, B2});

  // Face 1: node 1 busy, node 2 idle.
  s.at(kPlus, kZero, -1, 0) = kron_prod({I1, I2, r10 * D1});
  s.at(kPlus, kZero, 0, 0) = kron_sum({T1, T2, S1});
  s.at(kPlus, kZero, 1, 0) = kron_prod({U1, I2, I3});
  s.at(kPlus, kZero, -1, 1) = kron_prod({I1, I2, r12 * D1, B2});
  s.at(kPlus, kZero, 0, 1) = kron_prod({I1, U2, I3, B2});
  // Level one of face 1: a completion empties node 1.
  s.at(kOne, kZero, -1, 0) = kron_prod({I1, I2, r10 * x1});
  s.at(kOne, kZero, -1, 1) = kron_prod({I1, I2, r12 * x1 * b2});

  // Face 2: node 2 busy, node 1 idle.
  s.at(kZero, kPlus, 0, -1) = kron_prod({I1, I2, r20 * D2});
  s.at(kZero, kPlus, 0, 0) = kron_sum({T1, T2, S2});
  s.at(kZero, kPlus, 0, 1) = kron_prod({I1, U2, I4});
  s.at(kZero, kPlus, 1, -1) = kron_prod({I1, I2, B1, r21 * D2});
  s.at(kZero, kPlus, 1, 0) = kron_prod({U1, I2, B1, I4});
  s.at(kZero, kOne, 0, -1) = kron_prod({I1, I2, r20 * x2});
  s.at(kZero, kOne, 1, -1) = kron_prod({I1, I2, r21 * x2 * b1});

  // Interior.
  s.a(0, 0) = kron_sum({T1, T2, S1, S2});
  s.a(1, 0) = kron_prod({U1, I2, I3, I4});
  s.a(0, 1) = kron_prod({I1, U2, I3, I4});
  s.a(-1, 0) = kron_prod({I1, I2, r10 * D1, I4});
  s.a(-1, 1) = kron_prod({I1, I2, r12 * D1, I4});
  s.a(0, -1) = kron_prod({I1, I2, I3, r20 * D2});
  s.a(1, -1) = kron_prod({I1, I2, I3, r21 * D2});

  // A completion at a node holding one customer drops its service factor.
  const Matrix down1_out = kron_prod({I1, I2, r10 * x1, I4});
  const Matrix down1_route = kron_prod({I1, I2, r12 * x1, I4});
  const Matrix down2_out = kron_prod({I1, I2, I3, r20 * x2});
  const Matrix down2_route = kron_prod({I1, I2, I3, r21 * x2});
  s.at(kOne, kPlus, -1, 0) = down1_out;
  s.at(kOne, kPlus, -1, 1) = down1_route;
  s.at(kPlus, kOne, 0, -1) = down2_out;
  s.at(kPlus, kOne, 1, -1) = down2_route;
  s.at(kOne, kOne, -1, 0) = down1_out;
  s.at(kOne, kOne, -1, 1) = down1_route;
  s.at(kOne, kOne, 0, -1) = down2_out;
  s.at(kOne, kOne, 1, -1) = down2_route;

  s.complete();
  require_valid(s);
  return s;
}

// ---------------------------------------------------------------------------
// Cumulants.

/// Evaluators of the arrival, departure and total cumulants. Node indices
/// are 1 and 2.
struct CumulantSet {
  JacksonSpec spec;

  double t(int i, const Point2& th) const {
    const double own = th[i - 1], other = th[2 - i];
    return std::exp(-own) * spec.exit_prob(i) + std::exp(-own + other) * spec.route(i);
  }
  double gamma_a(int i, double theta) const {
    const MapSpec& a = spec.arrivals[i - 1];
    return qbdtail::detail::metzler_abscissa(a.T + std::exp(theta) * a.U);
  }
  double gamma_d(int i, const Point2& th) const {
    const PhSpec& p = spec.services[i - 1];
    return qbdtail::detail::metzler_abscissa(p.S + t(i, th) * p.D());
  }
  double gamma_plus(const Point2& th) const {
    return gamma_a(1, th[0]) + gamma_a(2, th[1]) + gamma_d(1, th) + gamma_d(2, th);
  }
  /// gamma^{(i)}: everything except the departures of the other node.
  double gamma_face(int i, const Point2& th) const {
    return gamma_a(1, th[0]) + gamma_a(2, th[1]) + gamma_d(i, th);
  }
};

inline CumulantSet cumulants(const JacksonSpec& s) {
  validate(s, false);
  return {s};
}

/// Largest theta at which the service MGF is finite (minus the PF value of S).
inline double service_mgf_pole(const PhSpec& p) { return -qbdtail::detail::metzler_abscissa(p.S); }

/// <beta, (-theta I - S)^-1 (-S 1)>, finite for theta below the pole.
inline double service_mgf(const PhSpec& p, double theta) {
  if (!(theta < service_mgf_pole(p))) throw Error(ErrorKind::ThetaOutsideDomain, "theta at or beyond the MGF pole");
  const Matrix m = -theta * identity(p.size()) - p.S;
  return (p.beta * m.partialPivLu().solve(p.exit())).value();
}

namespace detail {

/// Root of an increasing f below `pole`. The lower end of the bracket
/// doubles until f drops under y; values outside the range clamp to the ends.
inline double increasing_inverse(const ScalarFn& f, double pole, double y) {
  double lo = std::min(-1.0, pole - 1.0), hi = pole - 1e-12;
  while (f(lo) >= y && lo > -1e12) lo *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < y ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

inline double service_mgf_inverse(const PhSpec& p, double y) {
  const double pole = service_mgf_pole(p);
  return detail::increasing_inverse([&](double x) { return service_mgf(p, x); }, pole, y);
}

/// Departure cumulant through the service MGF: -g^{-1}(1 / t).
inline double departure_cumulant_via_mgf(const JacksonSpec& s, int i, const Point2& th) {
  const CumulantSet cs{s};
  return -service_mgf_inverse(s.services[i - 1], 1.0 / cs.t(i, th));
}

/// Interarrival distribution alpha when U = (-T 1) alpha.
inline std::optional<RowVector> renewal_structure(const MapSpec& a) {
  const Vector ex = -(a.T * ones(a.T.rows()));
  const double tol = 1e-12 * detail::scale_of(a.U);
  std::optional<RowVector> alpha;
  for (Index k = 0; k < ex.size(); ++k) {
    if (ex(k) > tol) {
      const RowVector row = a.U.row(k) / ex(k);
      if (!alpha) alpha = row;
      else if ((row - *alpha).cwiseAbs().maxCoeff() > 1e-10) return std::nullopt;
    } else if (a.U.row(k).cwiseAbs().maxCoeff() > tol) {
      return std::nullopt;
    }
  }
  if (!alpha || std::abs(alpha->sum() - 1.0) > 1e-10) return std::nullopt;
  return alpha;
}

/// Arrival cumulant of a renewal MAP as -f^{-1}(e^{-theta}), f the
/// interarrival MGF.
inline double renewal_arrival_cumulant(const MapSpec& a, double theta) {
  const auto alpha = renewal_structure(a);
  if (!alpha) throw Error(ErrorKind::NotRenewalStructure, "U is not of the form (-T 1) alpha");
  const PhSpec inter{*alpha, a.T};
  return -service_mgf_inverse(inter, std::exp(-theta));
}

// ---------------------------------------------------------------------------
// Boundary certificate.

struct FaceCertificate {
  double c0 = 0.0;         // Rayleigh estimate of the face constant
  double gamma_face = 0.0; // gamma^{(i)} evaluated directly
  double residual_face = 0.0;
  double residual_interior = 0.0;
  Vector h_boundary;       // h^{(0i)}
};

struct Assumption3Certificate {
  Point2 theta{};
  Vector h_plus;
  std::array<FaceCertificate, 2> faces;
  double max_residual() const {
    double r = 0.0;
    for (const auto& f : faces) r = std::max({r, f.residual_face, f.residual_interior, std::abs(f.c0 - f.gamma_face)});
    return r;
  }
};

inline Assumption3Certificate assumption3_certificate(const JacksonSpec& js, const Point2& th) {
  const CumulantSet cs = cumulants(js);
  const double gp = cs.gamma_plus(th);
  if (std::abs(gp) > 1e-8) throw Error(ErrorKind::ThetaNotOnCurve, "gamma_plus(theta) = " + std::to_string(gp));
  const Qbd2dSpec s = build_blocks(js);
  using qbdtail::detail::sum_first;
  using qbdtail::detail::sum_second;

  std::array<Vector, 2> ha, hd;
  for (int i = 1; i <= 2; ++i) {
    const MapSpec& a = js.arrivals[i - 1];
    ha[i - 1] = pf_metzler(a.T + std::exp(th[i - 1]) * a.U, {1e-14, 1'000'000, true, false}).right;
    const PhSpec& p = js.services[i - 1];
    const Matrix m = cs.gamma_d(i, th) * identity(p.size()) - p.S;
    hd[i - 1] = m.partialPivLu().solve(p.exit());
  }
  Assumption3Certificate out;
  out.theta = th;
  out.h_plus = kron_prod({ha[0], ha[1], hd[0], hd[1]});

  auto relres = [](const Vector& r, const Vector& h) { return r.cwiseAbs().maxCoeff() / h.cwiseAbs().maxCoeff(); };
  for (int i = 1; i <= 2; ++i) {
    FaceCertificate& fc = out.faces[i - 1];
    const int o = 3 - i;
    const double a = (js.services[o - 1].beta * hd[o - 1]).value();
    fc.h_boundary = a * kron_prod({ha[0], ha[1], hd[i - 1]});
    const Vector& h0 = fc.h_boundary;
    const Vector& hp = out.h_plus;
    Vector face_lhs, interior;
    if (i == 1) {
      face_lhs = sum_first(s, kPlus, kZero, 0, th[0]) * h0 + std::exp(th[1]) * sum_first(s, kPlus, kZero, 1, th[0]) * hp;
      interior = std::exp(-th[1]) * sum_first(s, kPlus, kOne, -1, th[0]) * h0 + sum_first(s, kPlus, kPlus, 0, th[0]) * hp +
                 std::exp(th[1]) * sum_first(s, kPlus, kPlus, 1, th[0]) * hp;
    } else {
      face_lhs = sum_second(s, kZero, kPlus, 0, th[1]) * h0 + std::exp(th[0]) * sum_second(s, kZero, kPlus, 1, th[1]) * hp;
      interior = std::exp(-th[0]) * sum_second(s, kOne, kPlus, -1, th[1]) * h0 + sum_second(s, kPlus, kPlus, 0, th[1]) * hp +
                 std::exp(th[0]) * sum_second(s, kPlus, kPlus, 1, th[1]) * hp;
    }
    fc.gamma_face = cs.gamma_face(i, th);
    fc.c0 = face_lhs.dot(h0) / h0.squaredNorm();
    fc.residual_face = relres(face_lhs - fc.gamma_face * h0, h0);
    fc.residual_interior = relres(interior, hp);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Decay rates two ways.

namespace detail {

/// Boundary geometry straight from the cumulants: the curve gamma_plus = 0
/// and its face-feasible arcs.
struct AnalyticGeometry {
  CumulantSet cs;
  ConvexRegion plus;
  mutable std::size_t remark_checks = 0;
  mutable std::size_t remark_mismatches = 0;
  std::size_t grid = 400;

  explicit AnalyticGeometry(const JacksonSpec& s) : cs{s}, plus{[this](const Point2& t) { return cs.gamma_plus(t); }} {}
  AnalyticGeometry(const AnalyticGeometry&) = delete;

  /// Curve point with theta_axis = x on the lower branch of the other coordinate.
  Point2 lower_point(int axis, double x) const {
    const Interval sec = plus.section(1 - axis, x);
    Point2 p;
    p[axis] = x;
    p[1 - axis] = sec.empty ? plus.profile(axis, x).x : sec.lo;
    return p;
  }

  /// gamma^{(i)} <= 0, cross-checked against the routing inequality of the
  /// other node.
  bool feasible(int face, const Point2& p) const {
    const double g = cs.gamma_face(face, p);
    const double t = cs.t(3 - face, p);
    if (std::abs(g) > 1e-9 && std::abs(t - 1.0) > 1e-9) {
      ++remark_checks;
      if ((g <= 0.0) != (t >= 1.0)) ++remark_mismatches;
    }
    return g <= 1e-12;
  }

  /// Largest theta_i over curve points feasible for face i whose other
  /// coordinate is at most `cap`.
  Point2 face_max(int face, double cap) const {
    const int ax = face - 1;
    auto ok = [&](const Point2& p) { return feasible(face, p) && p[1 - ax] <= cap + 1e-12; };
    const Point2 top = plus.argmax(ax);
    if (ok(top)) return top;
    const Interval ext = plus.extent(ax);
    const double inset = 1e-9 * ext.width();
    std::vector<double> xs(grid);
    for (std::size_t k = 0; k < grid; ++k)
      xs[k] = ext.lo + inset + (ext.width() - 2.0 * inset) * static_cast<double>(k) / static_cast<double>(grid - 1);
    std::ptrdiff_t last = -1;
    for (std::size_t k = 0; k < grid; ++k)
      if (ok(lower_point(ax, xs[k]))) last = static_cast<std::ptrdiff_t>(k);
    Point2 origin{0.0, 0.0};
    if (last < 0) return origin;
    double lo = xs[last];
    double hi = static_cast<std::size_t>(last) + 1 < grid ? xs[last + 1] : top[ax];
    for (int it = 0; it < 100 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
      const double mid = 0.5 * (lo + hi);
      (ok(lower_point(ax, mid)) ? lo : hi) = mid;
    }
    const Point2 best = lower_point(ax, lo);
    return best[ax] >= 0.0 ? best : origin;
  }

  TauReport tau() const {
    const std::array<Point2, 2> tg{face_max(1, std::numeric_limits<double>::infinity()),
                                   face_max(2, std::numeric_limits<double>::infinity())};
    return qbdtail::detail::assemble_tau(tg, {plus.argmax(0), plus.argmax(1)},
                                         [&](int face, double v) { return face_max(face, v)[face - 1]; });
  }
};

}  // namespace detail

struct JacksonDecay {
  Point2 direction{};
  double rate_analytic = 0.0;
  double rate_generic = 0.0;
  DecayReport generic;
};

struct JacksonDecayReport {
  TrafficReport traffic;
  TauReport tau_analytic;
  TauReport tau_generic;
  std::vector<JacksonDecay> directions;
  double discrepancy = 0.0;  // max over tau and rates
  std::size_t remark_checks = 0;
  std::size_t remark_mismatches = 0;
};

/// Throws PathDisagreement when the two paths differ by more than 1e-6.
inline JacksonDecayReport decay_report(const JacksonSpec& js, const std::vector<Point2>& dirs,
                                       const DecayOptions& opt = {}) {
  JacksonDecayReport rep;
  rep.traffic = traffic_check(js);
  if (!rep.traffic.stable) throw Error(ErrorKind::Unstable, "some traffic intensity is at least one");
  const Qbd2dSpec blocks = build_blocks(js);
  const std::vector<DecayReport> gen = decay_rates(blocks, dirs, opt);

  const detail::AnalyticGeometry geo(js);
  rep.tau_analytic = geo.tau();
  rep.tau_generic = gen.empty() ? tau_report(blocks) : gen.front().tau_report;
  for (int k = 0; k < 2; ++k)
    rep.discrepancy = std::max(rep.discrepancy, std::abs(rep.tau_analytic.tau[k] - rep.tau_generic.tau[k]));
  for (std::size_t n = 0; n < dirs.size(); ++n) {
    JacksonDecay d;
    d.direction = dirs[n];
    d.rate_analytic = qbdtail::detail::decay_value(
        rep.tau_analytic, [&](const Point2& u) { return geo.plus.ray_exit(u); }, dirs[n]);
    d.rate_generic = gen[n].rate;
    d.generic = gen[n];
    rep.discrepancy = std::max(rep.discrepancy, std::abs(d.rate_analytic - d.rate_generic));
    rep.directions.push_back(std::move(d));
  }
  rep.remark_checks = geo.remark_checks;
  rep.remark_mismatches = geo.remark_mismatches;
  if (rep.discrepancy > 1e-6)
    throw Error(ErrorKind::PathDisagreement, "analytic and generic paths differ by " + std::to_string(rep.discrepancy));
  return rep;
}

}  // namespace qbdtail::jackson
