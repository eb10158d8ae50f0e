#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <utility>

namespace qbdtail {

using ScalarFn = std::function<double(double)>;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool empty = true;

  static Interval none() { return {}; }
  static Interval closed(double a, double b) { return {a, b, false}; }
  bool contains(double x, double slack = 0.0) const {
    return !empty && x >= lo - slack && x <= hi + slack;
  }
  double width() const { return empty ? 0.0 : hi - lo; }
};

struct MinResult {
  double x = 0.0;
  double f = 0.0;
};

namespace convex {

constexpr double kInvPhi = 0.6180339887498949;
constexpr double kMaxAbs = 600.0;  // exponential tilts overflow beyond this

/// Bracket [a,b] around the minimizer of a convex f that grows without
/// bound in both directions.
inline std::pair<double, double> bracket_min(const ScalarFn& f, double x0 = 0.0, double step = 1.0) {
  double f0 = f(x0);
  double fr = f(x0 + step);
  double fl = f(x0 - step);
  if (fr >= f0 && fl >= f0) return {x0 - step, x0 + step};
  const double dir = fr < f0 ? 1.0 : -1.0;
  double prev = x0;
  double cur = x0 + dir * step;
  double fcur = dir > 0 ? fr : fl;
  double s = step;
  while (std::abs(cur) < kMaxAbs) {
    s *= 2.0;
    const double next = cur + dir * s;
    const double fnext = f(next);
    if (fnext >= fcur) return dir > 0 ? std::make_pair(prev, next) : std::make_pair(next, prev);
    prev = cur;
    cur = next;
    fcur = fnext;
  }
  return dir > 0 ? std::make_pair(prev, cur) : std::make_pair(cur, prev);
}

/// Golden-section minimization of a unimodal function on [a,b].
inline MinResult golden_min(const ScalarFn& f, double a, double b, double tol = 1e-12, int max_iter = 200) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c), fd = f(d);
  double fa = inf, fb = inf;
  bool ends = false;
  for (int it = 0; it < max_iter && (b - a) > tol * std::max(1.0, std::abs(a) + std::abs(b)); ++it) {
    if (fc == inf && fd == inf) {
      // Extended-value f: the finite part lies toward whichever end is finite.
      if (!ends) {
        fa = f(a);
        fb = f(b);
        ends = true;
      }
      if (fa == inf && fb == inf) break;
      if (fa <= fb) {
        b = c;
        fb = inf;
      } else {
        a = d;
        fa = inf;
      }
      c = b - kInvPhi * (b - a);
      d = a + kInvPhi * (b - a);
      fc = f(c);
      fd = f(d);
      continue;
    }
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  if (ends && std::min(fa, fb) < std::min(fc, fd)) return fa <= fb ? MinResult{a, fa} : MinResult{b, fb};
  return fc <= fd ? MinResult{c, fc} : MinResult{d, fd};
}

inline MinResult minimize(const ScalarFn& f, double x0 = 0.0, double tol = 1e-12) {
  const auto [a, b] = bracket_min(f, x0);
  return golden_min(f, a, b, tol);
}

/// Root of g on [a,b] where g(a) and g(b) have opposite signs (a may exceed b).
/// Runs until the bracket stops shrinking in floating point.
inline double bisect(const ScalarFn& g, double a, double b, double tol = 0.0, int max_iter = 200) {
  double ga = g(a);
  for (int it = 0; it < max_iter; ++it) {
    const double m = 0.5 * (a + b);
    if (m == a || m == b || std::abs(b - a) <= tol) break;
    const double gm = g(m);
    if ((gm > 0.0) == (ga > 0.0)) {
      a = m;
      ga = gm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

/// Largest x >= from with f(x) <= level, for convex f with f(from) <= level.
inline double sublevel_edge(const ScalarFn& f, double from, double level, double dir) {
  double step = 1.0;
  double inside = from;
  double outside = from + dir * step;
  while (f(outside) <= level) {
    inside = outside;
    step *= 2.0;
    outside = from + dir * step;
    if (std::abs(outside) > kMaxAbs) return outside;
  }
  return bisect([&](double x) { return f(x) - level; }, inside, outside);
}

/// {x : f(x) <= level} for convex f growing in both directions. A minimum
/// in [level, level + slack] yields the single minimizer.
inline Interval sublevel_interval(const ScalarFn& f, double level, double slack = 1e-12, MinResult* min_out = nullptr) {
  const MinResult m = minimize(f);
  if (min_out) *min_out = m;
  if (m.f > level + slack) return Interval::none();
  if (m.f >= level) return Interval::closed(m.x, m.x);
  return Interval::closed(sublevel_edge(f, m.x, level, -1.0), sublevel_edge(f, m.x, level, 1.0));
}

}  // namespace convex
}  // namespace qbdtail
