#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "qbdtail/convex1d.hpp"
#include "qbdtail/matcore.hpp"
#include "qbdtail/qbd1d.hpp"

namespace qbdtail {

enum class TimeKind { discrete, continuous };

inline const char* to_string(TimeKind t) { return t == TimeKind::discrete ? "discrete" : "continuous"; }

/// Zone of one coordinate: 0, 1, or "2 and above" (written +).
enum Zone : int { kZero = 0, kOne = 1, kPlus = 2 };

/// Transition blocks of a two-dimensional QBD. Family (s1,s2) holds the
/// kernel used on the region where coordinate k is in zone s_k; increment
/// (i,j) moves the level by (i,j). Interior blocks A_ij live in family (+,+).
/// Blocks that the region identities force to coincide with a primary family
/// are stored as copies; `complete` fills them in.
struct Qbd2dSpec {
  TimeKind time = TimeKind::discrete;
  Index m0 = 0, m1 = 0, m2 = 0, m = 0;
  std::array<std::array<Matrix, 9>, 9> blocks;

  static int family(int s1, int s2) { return 3 * s1 + s2; }
  static int increment(int i, int j) { return 3 * (i + 1) + (j + 1); }
  static bool allowed(int s1, int s2, int i, int j) { return !(s1 == kZero && i < 0) && !(s2 == kZero && j < 0); }

  Matrix& at(int s1, int s2, int i, int j) { return blocks[family(s1, s2)][increment(i, j)]; }
  const Matrix& at(int s1, int s2, int i, int j) const { return blocks[family(s1, s2)][increment(i, j)]; }
  Matrix& a(int i, int j) { return at(kPlus, kPlus, i, j); }
  const Matrix& a(int i, int j) const { return at(kPlus, kPlus, i, j); }

  /// Phase count of a state whose coordinates are zero or not.
  Index dim_of(bool first_zero, bool second_zero) const {
    if (first_zero && second_zero) return m0;
    if (second_zero) return m1;
    if (first_zero) return m2;
    return m;
  }
  Index source_dim(int s1, int s2) const { return dim_of(s1 == kZero, s2 == kZero); }
  Index target_dim(int s1, int s2, int i, int j) const { return dim_of(s1 + i == 0, s2 + j == 0); }

  /// Family that block (s1,s2,i,j) must equal, or -1 when it is free.
  static int primary_of(int s1, int s2, int i, int j) {
    const bool ip = i >= 0, jp = j >= 0;
    if (s1 == kOne && s2 == kZero && ip && jp) return family(kPlus, kZero);
    if (s1 == kZero && s2 == kOne && ip && jp) return family(kZero, kPlus);
    if (s1 == kOne && s2 == kOne && ip && jp) return family(kPlus, kPlus);
    if (s1 == kPlus && s2 == kOne && jp) return family(kPlus, kPlus);
    if (s1 == kOne && s2 == kPlus && ip) return family(kPlus, kPlus);
    return -1;
  }

  /// Copies primary blocks into unset aliased slots and zero-fills every
  /// other unset allowed block.
  void complete() {
    for (int s1 = 0; s1 < 3; ++s1)
      for (int s2 = 0; s2 < 3; ++s2)
        for (int i = -1; i <= 1; ++i)
          for (int j = -1; j <= 1; ++j) {
            if (!allowed(s1, s2, i, j)) continue;
            Matrix& b = at(s1, s2, i, j);
            if (b.size() > 0) continue;
            const int p = primary_of(s1, s2, i, j);
            if (p >= 0 && blocks[p][increment(i, j)].size() > 0) {
              b = blocks[p][increment(i, j)];
            } else {
              b = Matrix::Zero(source_dim(s1, s2), target_dim(s1, s2, i, j));
            }
          }
  }
};

inline std::string family_label(int s1, int s2) {
  const char* z[3] = {"0", "1", "+"};
  return std::string("(") + z[s1] + "," + z[s2] + ")";
}

enum class ViolationKind { ShapeViolation, RowSumViolation, AliasViolation, SignViolation, NotIrreducible };

inline const char* to_string(ViolationKind v) {
  switch (v) {
    case ViolationKind::ShapeViolation: return "ShapeViolation";
    case ViolationKind::RowSumViolation: return "RowSumViolation";
    case ViolationKind::AliasViolation: return "AliasViolation";
    case ViolationKind::SignViolation: return "SignViolation";
    case ViolationKind::NotIrreducible: return "NotIrreducible";
  }
  return "?";
}

struct Violation {
  ViolationKind kind;
  std::string family;
  std::string message;
};

namespace detail {

inline std::string inc_label(int i, int j) { return "(" + std::to_string(i) + "," + std::to_string(j) + ")"; }

inline Matrix interior_sum(const Qbd2dSpec& s) {
  Matrix a = Matrix::Zero(s.m, s.m);
  for (int i = -1; i <= 1; ++i)
    for (int j = -1; j <= 1; ++j) a += s.a(i, j);
  return a;
}

}  // namespace detail

/// Default relative tolerance of the row-sum and alias checks. The CLI
/// sets it from the model file or the environment.
inline double& spec_tolerance() {
  static double tol = 1e-12;
  return tol;
}

/// `tol` scales with the largest entry of each family for row sums and
/// with each primary block for aliases.
inline std::vector<Violation> validate_spec(const Qbd2dSpec& s, std::optional<double> tolerance = {}) {
  const double tol = tolerance.value_or(spec_tolerance());
  std::vector<Violation> out;
  if (s.m0 <= 0 || s.m1 <= 0 || s.m2 <= 0 || s.m <= 0) {
    out.push_back({ViolationKind::ShapeViolation, "", "all phase counts must be positive"});
    return out;
  }
  const bool cont = s.time == TimeKind::continuous;
  for (int s1 = 0; s1 < 3; ++s1)
    for (int s2 = 0; s2 < 3; ++s2)
      for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j) {
          const Matrix& b = s.at(s1, s2, i, j);
          const std::string fam = family_label(s1, s2);
          if (!Qbd2dSpec::allowed(s1, s2, i, j)) {
            if (b.size() > 0 && b.cwiseAbs().maxCoeff() > 0.0)
              out.push_back({ViolationKind::ShapeViolation, fam,
                             "increment " + detail::inc_label(i, j) + " leaves the quarter plane"});
            continue;
          }
          if (b.rows() != s.source_dim(s1, s2) || b.cols() != s.target_dim(s1, s2, i, j))
            out.push_back({ViolationKind::ShapeViolation, fam,
                           "block " + detail::inc_label(i, j) + " is " + std::to_string(b.rows()) + "x" +
                               std::to_string(b.cols()) + ", expected " + std::to_string(s.source_dim(s1, s2)) +
                               "x" + std::to_string(s.target_dim(s1, s2, i, j))});
        }
  if (!out.empty()) return out;

  for (int s1 = 0; s1 < 3; ++s1)
    for (int s2 = 0; s2 < 3; ++s2) {
      const std::string fam = family_label(s1, s2);
      const Index n = s.source_dim(s1, s2);
      Vector rows = Vector::Zero(n);
      double scale = 1.0;
      bool sign_ok = true;
      for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j) {
          if (!Qbd2dSpec::allowed(s1, s2, i, j)) continue;
          const Matrix& b = s.at(s1, s2, i, j);
          rows += b.rowwise().sum();
          if (b.size() > 0) scale = std::max(scale, b.cwiseAbs().maxCoeff());
          Matrix chk = b;
          if (cont && i == 0 && j == 0) chk.diagonal().setZero();
          if (!is_nonnegative(chk)) sign_ok = false;
          const int p = Qbd2dSpec::primary_of(s1, s2, i, j);
          if (p >= 0) {
            const Matrix& prim = s.blocks[p][Qbd2dSpec::increment(i, j)];
            if (prim.rows() != b.rows() || prim.cols() != b.cols() ||
                (prim - b).cwiseAbs().maxCoeff() > tol * std::max(1.0, prim.cwiseAbs().maxCoeff()))
              out.push_back({ViolationKind::AliasViolation, fam,
                             "block " + detail::inc_label(i, j) + " differs from the one it must equal"});
          }
        }
      if (!sign_ok)
        out.push_back({ViolationKind::SignViolation, fam,
                       cont ? "negative entries outside the diagonal of the (0,0) block" : "negative entries"});
      const double target = cont ? 0.0 : 1.0;
      const double dev = (rows.array() - target).abs().maxCoeff();
      if (dev > tol * scale)
        out.push_back({ViolationKind::RowSumViolation, fam,
                       "row sums deviate from " + std::to_string(static_cast<int>(target)) + " by " +
                           std::to_string(dev)});
    }

  const Matrix a = detail::interior_sum(s);
  if (!(cont ? is_irreducible_offdiag(a) : is_irreducible(a)))
    out.push_back({ViolationKind::NotIrreducible, family_label(kPlus, kPlus), "sum of interior blocks is reducible"});
  return out;
}

inline void require_valid(const Qbd2dSpec& s) {
  const auto v = validate_spec(s);
  if (v.empty()) return;
  const ErrorKind kind = v.front().kind == ViolationKind::NotIrreducible ? ErrorKind::NotIrreducible
                         : v.front().kind == ViolationKind::ShapeViolation ? ErrorKind::ShapeMismatch
                                                                            : ErrorKind::InvalidSpec;
  throw Error(kind, std::string(to_string(v.front().kind)) + " at " + v.front().family + ": " + v.front().message);
}

/// Largest total outflow rate over all families and phases.
inline double max_outflow(const Qbd2dSpec& s) {
  double out = 0.0;
  for (int f = 0; f < 9; ++f) {
    const Matrix& b = s.blocks[f][Qbd2dSpec::increment(0, 0)];
    if (b.size() > 0) out = std::max(out, (-b.diagonal()).maxCoeff());
  }
  return out;
}

inline double default_uniformization_rate(const Qbd2dSpec& s) {
  const double q = max_outflow(s);
  return q > 0.0 ? 1.05 * q : 1.0;
}

/// P = I + Q/nu, the identity going to each family's (0,0) increment.
inline Qbd2dSpec uniformize(const Qbd2dSpec& s, double nu) {
  if (s.time != TimeKind::continuous) throw Error(ErrorKind::InvalidSpec, "uniformize needs a continuous-time spec");
  if (!(nu > 0.0) || nu < max_outflow(s))
    throw Error(ErrorKind::InvalidSpec, "uniformization rate below the largest outflow");
  Qbd2dSpec p = s;
  p.time = TimeKind::discrete;
  for (int f = 0; f < 9; ++f)
    for (int k = 0; k < 9; ++k) {
      Matrix& b = p.blocks[f][k];
      if (b.size() == 0) continue;
      b /= nu;
      if (k == Qbd2dSpec::increment(0, 0)) b.diagonal().array() += 1.0;
    }
  return p;
}

inline Qbd2dSpec uniformize(const Qbd2dSpec& s) { return uniformize(s, default_uniformization_rate(s)); }

// ---------------------------------------------------------------------------
// Matrix moment generating functions, convention e^{+(i theta1 + j theta2)}.

namespace detail {

/// sum_i e^{i t} blocks(s1,s2,i,k) for fixed second increment k.
inline Matrix sum_first(const Qbd2dSpec& s, int s1, int s2, int k, double t, int imin = -1) {
  Matrix out;
  for (int i = imin; i <= 1; ++i) {
    if (!Qbd2dSpec::allowed(s1, s2, i, k)) continue;
    const Matrix& b = s.at(s1, s2, i, k);
    if (out.size() == 0) out = Matrix::Zero(b.rows(), b.cols());
    out += std::exp(i * t) * b;
  }
  return out;
}

/// sum_j e^{j t} blocks(s1,s2,k,j) for fixed first increment k.
inline Matrix sum_second(const Qbd2dSpec& s, int s1, int s2, int k, double t, int jmin = -1) {
  Matrix out;
  for (int j = jmin; j <= 1; ++j) {
    if (!Qbd2dSpec::allowed(s1, s2, k, j)) continue;
    const Matrix& b = s.at(s1, s2, k, j);
    if (out.size() == 0) out = Matrix::Zero(b.rows(), b.cols());
    out += std::exp(j * t) * b;
  }
  return out;
}

/// Rightmost real part of the spectrum of a Metzler matrix.
inline double metzler_abscissa(const Matrix& q) {
  if (q.rows() == 0) return -std::numeric_limits<double>::infinity();
  if (is_irreducible_offdiag(q)) return pf_metzler(q, {1e-14, 1'000'000, false, false}).value;
  const double c = q.diagonal().cwiseAbs().maxCoeff();
  Matrix s = q;
  s.diagonal().array() += c;
  return spectral_radius(s) - c;
}

inline double unit_of(const Qbd2dSpec& s) { return s.time == TimeKind::discrete ? 1.0 : 0.0; }

}  // namespace detail

inline Matrix a2_mgf(const Qbd2dSpec& s, double t1, double t2) {
  Matrix out = Matrix::Zero(s.m, s.m);
  for (int i = -1; i <= 1; ++i)
    for (int j = -1; j <= 1; ++j) out += std::exp(i * t1 + j * t2) * s.a(i, j);
  return out;
}

/// C^{(1)} (face where the second coordinate is zero) or C^{(2)}. Throws
/// FaceNotInvertible when the face kernel has no nonnegative resolvent.
inline Matrix c2_mgf(const Qbd2dSpec& s, int face, double t1, double t2) {
  const double unit = detail::unit_of(s);
  Matrix f, down, up, inner;
  if (face == 1) {
    f = detail::sum_first(s, kPlus, kZero, 0, t1);
    up = detail::sum_first(s, kPlus, kZero, 1, t1);
    down = detail::sum_first(s, kPlus, kOne, -1, t1);
    inner = detail::sum_first(s, kPlus, kPlus, 0, t1) + std::exp(t2) * detail::sum_first(s, kPlus, kPlus, 1, t1);
  } else if (face == 2) {
    f = detail::sum_second(s, kZero, kPlus, 0, t2);
    up = detail::sum_second(s, kZero, kPlus, 1, t2);
    down = detail::sum_second(s, kOne, kPlus, -1, t2);
    inner = detail::sum_second(s, kPlus, kPlus, 0, t2) + std::exp(t1) * detail::sum_second(s, kPlus, kPlus, 1, t2);
  } else {
    throw Error(ErrorKind::InvalidSpec, "face index must be 1 or 2");
  }
  Matrix shifted = f;
  shifted.diagonal().array() -= unit;
  if (!(detail::metzler_abscissa(shifted) < -1e-12))
    throw Error(ErrorKind::FaceNotInvertible, "face kernel at theta has no nonnegative resolvent");
  const Matrix res = (-shifted).partialPivLu().solve(up);
  return inner + down * res;
}

// ---------------------------------------------------------------------------
// Convex regions in the plane.

using Point2 = std::array<double, 2>;
using PlaneFn = std::function<double(const Point2&)>;

/// {theta : f(theta) <= 0} for a convex (possibly extended-valued) f.
struct ConvexRegion {
  PlaneFn f;
  double slack = 1e-12;

  double at(int axis, double x, double y) const {
    Point2 p;
    p[axis] = x;
    p[1 - axis] = y;
    return f(p);
  }

  /// Values of coordinate `axis` in the region when the other coordinate is fixed.
  Interval section(int axis, double other) const {
    return convex::sublevel_interval([&](double x) { return at(axis, x, other); }, 0.0, slack);
  }

  /// min over the other coordinate, with the minimizer.
  MinResult profile(int axis, double x) const {
    return convex::minimize([&](double y) { return at(axis, x, y); });
  }

  Interval extent(int axis) const {
    return convex::sublevel_interval([&](double x) { return profile(axis, x).f; }, 0.0, slack);
  }

  /// Point of the region with the largest coordinate `axis`.
  Point2 argmax(int axis) const {
    auto prof = [&](double x) { return profile(axis, x).f; };
    const MinResult m = convex::minimize(prof);
    if (m.f > slack) throw Error(ErrorKind::GammaPlusEmpty, "region is empty");
    const double x = m.f >= 0.0 ? m.x : convex::sublevel_edge(prof, m.x, 0.0, 1.0);
    Point2 p;
    p[axis] = x;
    p[1 - axis] = profile(axis, x).x;
    return p;
  }

  /// Largest u >= 0 with u*dir inside (0 when the ray leaves at once).
  double ray_exit(const Point2& dir) const {
    auto h = [&](double u) { return f({u * dir[0], u * dir[1]}); };
    const MinResult m = convex::minimize(h);
    if (m.x <= 0.0 || m.f > 0.0) return 0.0;
    return convex::sublevel_edge(h, m.x, 0.0, 1.0);
  }
};

// ---------------------------------------------------------------------------
// Reports.

struct CurveSample {
  double theta1 = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::array<bool, 2> lower_feasible{false, false};  // C1, C2 at (theta1, lower)
  std::array<bool, 2> upper_feasible{false, false};
};

struct CurvePoint {
  double theta1, theta2;
  bool feasible_c1, feasible_c2;
};

struct GammaCurve {
  std::vector<CurveSample> samples;
  bool closed = false;

  /// Boundary walked once: lower branch left to right, upper branch back.
  std::vector<CurvePoint> points() const {
    std::vector<CurvePoint> out;
    for (const auto& s : samples) out.push_back({s.theta1, s.lower, s.lower_feasible[0], s.lower_feasible[1]});
    for (auto it = samples.rbegin(); it != samples.rend(); ++it)
      if (it->upper != it->lower)
        out.push_back({it->theta1, it->upper, it->upper_feasible[0], it->upper_feasible[1]});
    return out;
  }
};

enum class Category { I, II_1, II_2 };

inline const char* to_string(Category c) {
  switch (c) {
    case Category::I: return "I";
    case Category::II_1: return "II-1";
    case Category::II_2: return "II-2";
  }
  return "?";
}

struct TauReport {
  Point2 tau{};
  std::array<Point2, 2> theta_gamma{};  // argmax of theta_i over the face-i region
  std::array<Point2, 2> theta_max{};    // argmax of theta_i over Gamma_+
  Category category = Category::I;
};

struct DecayReport {
  Point2 direction{};
  double rate = 0.0;
  TauReport tau_report;
  GammaCurve boundary_sample;
  std::optional<bool> assumption_holds;  // set when the lower-bound assumption was checked
};

enum class Stability { stable, unstable, undetermined };

inline const char* to_string(Stability s) {
  switch (s) {
    case Stability::stable: return "stable";
    case Stability::unstable: return "unstable";
    case Stability::undetermined: return "undetermined";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Drifts and stability.

inline Point2 mean_drifts(const Qbd2dSpec& s) {
  require_valid(s);
  const bool cont = s.time == TimeKind::continuous;
  const RowVector nu = stationary_vector(detail::interior_sum(s), cont);
  Matrix d1 = Matrix::Zero(s.m, s.m), d2 = Matrix::Zero(s.m, s.m);
  for (int k = -1; k <= 1; ++k) {
    d1 += s.a(1, k) - s.a(-1, k);
    d2 += s.a(k, 1) - s.a(k, -1);
  }
  return {(nu * d1 * ones(s.m)).value(), (nu * d2 * ones(s.m)).value()};
}

namespace detail {

/// Per-phase expected change of the coordinate `axis` (0 or 1) in one
/// family. Blocks of one family can have different target sizes, so each
/// is row-summed on its own.
inline Vector row_drift(const Qbd2dSpec& s, int s1, int s2, int axis) {
  Vector out = Vector::Zero(s.source_dim(s1, s2));
  for (int i = -1; i <= 1; ++i)
    for (int j = -1; j <= 1; ++j) {
      const int step = axis == 0 ? i : j;
      if (step == 0 || !Qbd2dSpec::allowed(s1, s2, i, j)) continue;
      out += step * s.at(s1, s2, i, j).rowwise().sum();
    }
  return out;
}

/// Drift in coordinate i of the chain with the face of coordinate i removed,
/// for a discrete spec.
inline double induced_drift_discrete(const Qbd2dSpec& s, int i) {
  QbdBlocks q;
  Vector d0, d1, dint;
  if (i == 1) {
    q.B0 = sum_first(s, kPlus, kZero, 0, 0.0);
    q.B1 = sum_first(s, kPlus, kZero, 1, 0.0);
    q.Bm1 = sum_first(s, kPlus, kOne, -1, 0.0);
    q.Am1 = sum_first(s, kPlus, kPlus, -1, 0.0);
    q.A0 = sum_first(s, kPlus, kPlus, 0, 0.0);
    q.A1 = sum_first(s, kPlus, kPlus, 1, 0.0);
    d0 = row_drift(s, kPlus, kZero, 0);
    d1 = row_drift(s, kPlus, kOne, 0);
    dint = row_drift(s, kPlus, kPlus, 0);
  } else {
    q.B0 = sum_second(s, kZero, kPlus, 0, 0.0);
    q.B1 = sum_second(s, kZero, kPlus, 1, 0.0);
    q.Bm1 = sum_second(s, kOne, kPlus, -1, 0.0);
    q.Am1 = sum_second(s, kPlus, kPlus, -1, 0.0);
    q.A0 = sum_second(s, kPlus, kPlus, 0, 0.0);
    q.A1 = sum_second(s, kPlus, kPlus, 1, 0.0);
    d0 = row_drift(s, kZero, kPlus, 1);
    d1 = row_drift(s, kOne, kPlus, 1);
    dint = row_drift(s, kPlus, kPlus, 1);
  }
  std::vector<RowVector> pi;
  try {
    pi = qbd_stationary(q, 1);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::NotPositiveRecurrent || e.kind() == ErrorKind::GammaPlusEmpty)
      throw Error(ErrorKind::QiNotPositiveRecurrent,
                  "induced chain for coordinate " + std::to_string(i) + " is not positive recurrent");
    throw;
  }
  const Matrix r = rate_matrix(q);
  const Matrix id = identity(s.m);
  const RowVector tail = pi[1] * r * (id - r).inverse();
  return (pi[0] * d0).value() + (pi[1] * d1).value() + (tail * dint).value();
}

}  // namespace detail

/// Mean drift of coordinate i in the induced chain that forgets the face of
/// coordinate i, i = 1, 2. Rates for continuous specs.
inline Point2 induced_drifts(const Qbd2dSpec& s) {
  require_valid(s);
  if (s.time == TimeKind::continuous) {
    const double nu = default_uniformization_rate(s);
    const Qbd2dSpec p = uniformize(s, nu);
    return {nu * detail::induced_drift_discrete(p, 1), nu * detail::induced_drift_discrete(p, 2)};
  }
  return {detail::induced_drift_discrete(s, 1), detail::induced_drift_discrete(s, 2)};
}

inline double induced_drift(const Qbd2dSpec& s, int i) {
  require_valid(s);
  if (s.time == TimeKind::continuous) {
    const double nu = default_uniformization_rate(s);
    return nu * detail::induced_drift_discrete(uniformize(s, nu), i);
  }
  return detail::induced_drift_discrete(s, i);
}

inline Stability stability_check(const Qbd2dSpec& s) {
  const Point2 mu = mean_drifts(s);
  if (std::abs(mu[0]) <= 1e-9 && std::abs(mu[1]) <= 1e-9) return Stability::undetermined;
  if (mu[0] > 0.0 && mu[1] > 0.0) return Stability::unstable;
  auto neg_induced = [&](int i) {
    try {
      return induced_drift(s, i) < 0.0;
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::QiNotPositiveRecurrent) return false;
      throw;
    }
  };
  if (mu[0] < 0.0 && mu[1] < 0.0) return neg_induced(1) && neg_induced(2) ? Stability::stable : Stability::unstable;
  if (mu[0] >= 0.0 && mu[1] < 0.0) return neg_induced(1) ? Stability::stable : Stability::unstable;
  if (mu[0] < 0.0 && mu[1] >= 0.0) return neg_induced(2) ? Stability::stable : Stability::unstable;
  return Stability::unstable;
}

// ---------------------------------------------------------------------------
// Geometry of the tilt regions, always evaluated on a discrete spec.

namespace detail {

struct Geometry {
  Qbd2dSpec p;  // discrete (uniformized when the input is continuous)
  double nu = 1.0;

  explicit Geometry(const Qbd2dSpec& s, std::optional<double> rate = std::nullopt) {
    require_valid(s);
    if (s.time == TimeKind::continuous) {
      nu = rate ? *rate : default_uniformization_rate(s);
      p = uniformize(s, nu);
    } else {
      p = s;
    }
  }

  double gamma(double t1, double t2) const {
    return pf_eigen(a2_mgf(p, t1, t2), {1e-14, 1'000'000, false, false}).value;
  }

  double g(const Point2& t) const { return gamma(t[0], t[1]) - 1.0; }

  double r(int face, const Point2& t) const {
    Matrix c;
    try {
      c = c2_mgf(p, face, t[0], t[1]);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::FaceNotInvertible) return std::numeric_limits<double>::infinity();
      throw;
    }
    return max_row_radius(a2_mgf(p, t[0], t[1]), c) - 1.0;
  }

  ConvexRegion gamma_plus() const {
    return {[this](const Point2& t) { return g(t); }};
  }
  ConvexRegion face_region(int face) const {
    return {[this, face](const Point2& t) { return r(face, t); }};
  }

  /// Equality-form test: C^{(i)} h <= h + tol at a point of the curve.
  bool curve_feasible(int face, const Point2& t) const {
    const Matrix a = a2_mgf(p, t[0], t[1]);
    Vector h = pf_eigen(a, {1e-14, 1'000'000, false, false}).right;
    h /= h.maxCoeff();
    try {
      const Matrix c = c2_mgf(p, face, t[0], t[1]);
      return ((c * h - h).array() <= 1e-10).all();
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::FaceNotInvertible) return false;
      throw;
    }
  }
};

inline GammaCurve trace_curve(const Geometry& geo, std::size_t samples) {
  const ConvexRegion reg = geo.gamma_plus();
  const Interval ext = reg.extent(0);
  if (ext.empty) throw Error(ErrorKind::GammaPlusEmpty, "gamma exceeds one everywhere");
  GammaCurve curve;
  curve.closed = true;
  const std::size_t n = std::max<std::size_t>(samples, 2);
  const double inset = 1e-9 * ext.width();
  for (std::size_t k = 0; k < n; ++k) {
    double x = ext.lo + ext.width() * static_cast<double>(k) / static_cast<double>(n - 1);
    if (k == 0) x += inset;
    if (k + 1 == n) x -= inset;
    Interval sec = reg.section(1, x);
    if (sec.empty) {
      const double y = reg.profile(0, x).x;
      sec = Interval::closed(y, y);
    }
    CurveSample cs;
    cs.theta1 = x;
    cs.lower = sec.lo;
    cs.upper = sec.hi;
    for (int face = 1; face <= 2; ++face) {
      cs.lower_feasible[face - 1] = geo.curve_feasible(face, {x, sec.lo});
      cs.upper_feasible[face - 1] = geo.curve_feasible(face, {x, sec.hi});
    }
    curve.samples.push_back(cs);
  }
  return curve;
}

/// Category and tau from the face maximizers. xi(i, v) is the largest
/// theta_i in the face-i region with theta_{3-i} = v (capped at v for the
/// analytic path).
inline TauReport assemble_tau(const std::array<Point2, 2>& theta_gamma, const std::array<Point2, 2>& theta_max,
                              const std::function<double(int, double)>& xi) {
  constexpr double tol = 1e-9;
  TauReport rep;
  rep.theta_gamma = theta_gamma;
  rep.theta_max = theta_max;
  const Point2& a = theta_gamma[0];
  const Point2& b = theta_gamma[1];
  const bool first_below = a[1] < b[1] + tol;  // theta^{(1,G)}_2 < theta^{(2,G)}_2
  const bool second_left = b[0] < a[0] + tol;  // theta^{(2,G)}_1 < theta^{(1,G)}_1
  if (!first_below && !second_left)
    throw Error(ErrorKind::NoConvergence, "face maximizers violate the category trichotomy");
  if (first_below && second_left) {
    rep.category = Category::I;
    rep.tau = {a[0], b[1]};
  } else if (second_left) {
    rep.category = Category::II_1;
    rep.tau = {xi(1, b[1]), b[1]};
  } else {
    rep.category = Category::II_2;
    rep.tau = {a[0], xi(2, a[0])};
  }
  return rep;
}

inline TauReport tau_of(const Geometry& geo) {
  const ConvexRegion plus = geo.gamma_plus();
  const ConvexRegion f1 = geo.face_region(1), f2 = geo.face_region(2);
  const std::array<Point2, 2> tg{f1.argmax(0), f2.argmax(1)};
  return assemble_tau(tg, {plus.argmax(0), plus.argmax(1)}, [&](int face, double v) {
    const Interval sec = face == 1 ? f1.section(0, v) : f2.section(1, v);
    return sec.empty ? tg[face - 1][face - 1] : sec.hi;
  });
}

/// sup{u >= 0 : u c in Gamma_max, u c < tau}; `ray_exit` is the last u with
/// u * c/|c|_1 in Gamma_+.
inline double decay_value(const TauReport& tr, const std::function<double(const Point2&)>& ray_exit, const Point2& c) {
  if (c[0] < 0.0 || c[1] < 0.0 || !(c[0] + c[1] > 0.0))
    throw Error(ErrorKind::ZeroDirection, "direction must be nonnegative and nonzero");
  const double norm = c[0] + c[1];
  const Point2 ch{c[0] / norm, c[1] / norm};
  auto value = [&](const Point2& t) {
    double v = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 2; ++k)
      if (ch[k] > 0.0) v = std::min(v, t[k] / ch[k]);
    return v;
  };
  auto admissible = [&](const Point2& t) {
    for (int k = 0; k < 2; ++k)
      if (ch[k] == 0.0 && t[k] < -1e-12) return false;
    return true;
  };
  const double u_box = value(tr.tau);
  double u_curve = ray_exit(ch);
  for (const Point2& t : tr.theta_max)
    if (admissible(t)) u_curve = std::max(u_curve, value(t));
  return std::max(0.0, std::min(u_box, u_curve)) / norm;
}

inline double decay_from(const Geometry& geo, const TauReport& tr, const Point2& c) {
  const ConvexRegion plus = geo.gamma_plus();
  return decay_value(tr, [&](const Point2& d) { return plus.ray_exit(d); }, c);
}

}  // namespace detail

inline GammaCurve trace_gamma_curve(const Qbd2dSpec& s, std::size_t samples = 512) {
  return detail::trace_curve(detail::Geometry(s), samples);
}

inline TauReport tau_report(const Qbd2dSpec& s) { return detail::tau_of(detail::Geometry(s)); }

struct DecayOptions {
  std::size_t samples = 32;
  bool check_assumption = false;
  std::optional<double> uniformization_rate;  // continuous specs only
};

struct Assumption2Check {
  bool holds = false;
  int branch = -1;  // 1: c1 is the unit constant, 0: c0 is, -1: neither
  double c0 = 0.0;
  double c1 = 0.0;
  Vector h0;
  double residual = 0.0;
};

namespace detail {

inline Assumption2Check assumption2_discrete(const Qbd2dSpec& p, const Point2& t, int face) {
  const double gam = pf_eigen(a2_mgf(p, t[0], t[1]), {1e-14, 1'000'000, false, false}).value;
  if (std::abs(gam - 1.0) > 1e-8)
    throw Error(ErrorKind::ThetaNotOnCurve, "gamma(theta) - 1 = " + std::to_string(gam - 1.0));
  QbdBlocks q;
  double level_theta;
  if (face == 1) {
    q.B0 = sum_first(p, kPlus, kZero, 0, t[0]);
    q.B1 = sum_first(p, kPlus, kZero, 1, t[0]);
    q.Bm1 = sum_first(p, kPlus, kOne, -1, t[0]);
    q.Am1 = sum_first(p, kPlus, kPlus, -1, t[0]);
    q.A0 = sum_first(p, kPlus, kPlus, 0, t[0]);
    q.A1 = sum_first(p, kPlus, kPlus, 1, t[0]);
    level_theta = t[1];
  } else {
    q.B0 = sum_second(p, kZero, kPlus, 0, t[1]);
    q.B1 = sum_second(p, kZero, kPlus, 1, t[1]);
    q.Bm1 = sum_second(p, kOne, kPlus, -1, t[1]);
    q.Am1 = sum_second(p, kPlus, kPlus, -1, t[1]);
    q.A0 = sum_second(p, kPlus, kPlus, 0, t[1]);
    q.A1 = sum_second(p, kPlus, kPlus, 1, t[1]);
    level_theta = t[0];
  }
  // Pull gamma onto one exactly so the one-dimensional check accepts the point.
  if (gam > 1.0) q = q.scaled(1.0 / gam);
  const Assumption1Check a = check_assumption1(q, level_theta);
  return {a.holds, a.branch, a.c0, a.c1, a.h0, a.residual};
}

}  // namespace detail

/// Boundary proportionality at a point of the curve for face i. Continuous
/// specs report the constants on the rate scale, where the unit constant
/// becomes zero.
inline Assumption2Check check_assumption2(const Qbd2dSpec& s, const Point2& theta, int face) {
  const detail::Geometry geo(s);
  Assumption2Check r = detail::assumption2_discrete(geo.p, theta, face);
  if (s.time == TimeKind::continuous) {
    r.c0 = geo.nu * (r.c0 - 1.0);
    r.c1 = geo.nu * (r.c1 - 1.0);
  }
  return r;
}

inline DecayReport decay_rate(const Qbd2dSpec& s, const Point2& c, const DecayOptions& opt = {}) {
  if (c[0] < 0.0 || c[1] < 0.0 || !(c[0] + c[1] > 0.0))
    throw Error(ErrorKind::ZeroDirection, "direction must be nonnegative and nonzero");
  if (stability_check(s) != Stability::stable) throw Error(ErrorKind::Unstable, "spec is not stable");
  const detail::Geometry geo(s, opt.uniformization_rate);
  DecayReport rep;
  rep.direction = c;
  rep.tau_report = detail::tau_of(geo);
  rep.rate = detail::decay_from(geo, rep.tau_report, c);
  if (opt.samples > 0) rep.boundary_sample = detail::trace_curve(geo, opt.samples);
  if (opt.check_assumption) {
    bool all = true;
    for (const CurvePoint& pt : rep.boundary_sample.points())
      for (int face = 1; face <= 2 && all; ++face) {
        try {
          all = detail::assumption2_discrete(geo.p, {pt.theta1, pt.theta2}, face).holds;
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::ThetaNotOnCurve) throw;
        }
      }
    rep.assumption_holds = all;
  }
  return rep;
}

/// Rates for several directions sharing one tau computation.
inline std::vector<DecayReport> decay_rates(const Qbd2dSpec& s, const std::vector<Point2>& dirs,
                                            const DecayOptions& opt = {}) {
  if (stability_check(s) != Stability::stable) throw Error(ErrorKind::Unstable, "spec is not stable");
  const detail::Geometry geo(s, opt.uniformization_rate);
  const TauReport tr = detail::tau_of(geo);
  GammaCurve curve;
  if (opt.samples > 0) curve = detail::trace_curve(geo, opt.samples);
  std::vector<DecayReport> out;
  for (const Point2& c : dirs) {
    DecayReport rep;
    rep.direction = c;
    rep.tau_report = tr;
    rep.rate = detail::decay_from(geo, tr, c);
    rep.boundary_sample = curve;
    out.push_back(std::move(rep));
  }
  return out;
}

}  // namespace qbdtail
