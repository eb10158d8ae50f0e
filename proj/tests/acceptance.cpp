// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qbdtail/jackson.hpp"
#include "qbdtail/oracle.hpp"
#include "qbdtail/qbd1d.hpp"
#include "qbdtail/qbd2d.hpp"
#include "support/jackson_instances.hpp"
#include "support/random_qbd.hpp"

using namespace qbdtail;
using namespace qbdtail::testing;
using jackson::JacksonSpec;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. Counterexample kernel: G is degenerate and A1 G is not a multiple of A1.
Outcome c1_counterexample() {
  const auto t0 = std::chrono::steady_clock::now();
  const double p = 0.2, q = 0.1, r = 0.3, s = 0.5;
  QbdBlocks k;
  k.Am1.resize(2, 2);
  k.A0.resize(2, 2);
  k.A1.resize(2, 2);
  k.Am1 << r, 0, s, 0;
  k.A0 << 0, 1 - (p + q + r), 0, 1 - s;
  k.A1 << p, q, 0, 0;
  k.B0 = Matrix::Zero(2, 2);
  k.B1 = k.A1;
  k.Bm1 = k.Am1;
  const Matrix g = g_minus(k).G;
  Matrix g_expect(2, 2), a1g_expect(2, 2);
  g_expect << 1, 0, 1, 0;
  a1g_expect << 0.3, 0, 0, 0;
  const Matrix a1g = k.A1 * g;
  const double g_err = (g - g_expect).cwiseAbs().maxCoeff();
  const double a1g_err = (a1g - a1g_expect).cwiseAbs().maxCoeff();
  // Best multiple e^theta A1 in the Frobenius norm.
  const MinResult best = convex::minimize([&](double t) { return (a1g - std::exp(t) * k.A1).norm(); });
  const double secs = elapsed_since(t0);
  const bool pass = 2 * p + q < 1 && g_err <= 1e-10 && a1g_err <= 1e-10 && best.f > 0.05 && secs < 1.0;
  return {pass, fmt("|G - G*| = %.1e", g_err) + fmt(", |A1 G - A1G*| = %.1e", a1g_err) +
                    fmt(", min_theta |A1 G - e^theta A1| = %.4f", best.f) + fmt(", %.3f s", secs)};
}

// 2. Exponential network with product form.
Outcome c2_product_form() {
  const auto t0 = std::chrono::steady_clock::now();
  const double l1 = 1.0, l2 = 0.5, mu1 = 2.0, mu2 = 3.0, r12 = 0.3, r21 = 0.2;
  const JacksonSpec js = exponential_network(l1, l2, mu1, mu2, r12, r21);
  const double d = 1.0 - r12 * r21;
  const double rho[2] = {(l1 + l2 * r21) / (d * mu1), (l2 + l1 * r12) / (d * mu2)};
  const auto rep = jackson::decay_report(js, {{1, 0}, {0, 1}});
  double rate_err = 0.0;
  for (int i = 0; i < 2; ++i) {
    rate_err = std::max(rate_err, std::abs(rep.directions[i].rate_analytic + std::log(rho[i])));
    rate_err = std::max(rate_err, std::abs(rep.directions[i].rate_generic + std::log(rho[i])));
  }
  const oracle::StationaryTable t = oracle::truncate_and_solve(jackson::build_blocks(js), {120, 120});
  double slope_err = 0.0;
  for (int i = 1; i <= 2; ++i) {
    const double est = -oracle::estimate_decay(t, i, 0, 0).slope;
    slope_err = std::max(slope_err, std::abs(est + std::log(rho[i - 1])) / -std::log(rho[i - 1]));
  }
  const double secs = elapsed_since(t0);
  const bool pass = rate_err <= 1e-6 && rep.discrepancy <= 1e-6 && slope_err <= 0.02 && secs < 60.0;
  return {pass, fmt("|rate + log rho| = %.1e", rate_err) + fmt(", path gap = %.1e", rep.discrepancy) +
                    fmt(", slope rel err (extent 120) = %.2e", slope_err) + fmt(", %.1f s", secs)};
}

// 3. Tandem.
Outcome c3_tandem() {
  const JacksonSpec js = exponential_network(1.0, 0.0, 2.0, 3.0, 1.0, 0.0);
  const Point2 target{std::log(2.0), std::log(3.0)};
  const double g = std::abs(jackson::cumulants(js).gamma_plus(target));
  const auto rep = jackson::decay_report(js, {});
  double err = 0.0;
  for (int i = 0; i < 2; ++i) err = std::max(err, std::abs(rep.tau_analytic.tau[i] - target[i]));
  return {g <= 1e-10 && err <= 1e-6, fmt("|gamma_plus(log 2, log 3)| = %.1e", g) + fmt(", |tau - target| = %.1e", err)};
}

// 4. MMPP-2 / Erlang-2 network without product form, both intensities 0.7.
Outcome c4_map_ph() {
  const auto t0 = std::chrono::steady_clock::now();
  JacksonSpec js{{mmpp2(1.2, 0.4, 0.3, 0.2), jackson::MapSpec::poisson(0.4)},
                 {jackson::PhSpec::erlang(2, 1.0), jackson::PhSpec::erlang(2, 1.0)},
                 0.3,
                 0.2};
  const auto tr = jackson::traffic_check(js);
  for (int i = 0; i < 2; ++i) js.services[i].S *= tr.rho[i] / 0.7;
  const auto rep = jackson::decay_report(js, {});
  const double tau1 = rep.tau_analytic.tau[0];
  const Qbd2dSpec s = jackson::build_blocks(js);
  const oracle::StationaryTable t = oracle::truncate_and_solve(s, {150, 150});
  const double est = -oracle::estimate_decay(t, 1, 0, 0).slope;
  const double rel = std::abs(est - tau1) / tau1;
  const auto pts = trace_gamma_curve(s, 16).points();
  double cert = 0.0;
  std::size_t used = 0;
  for (; used < 32 && used < pts.size(); ++used)
    cert = std::max(cert, jackson::assumption3_certificate(js, {pts[used].theta1, pts[used].theta2}).max_residual());
  const double secs = elapsed_since(t0);
  const bool pass = rel <= 0.05 && used == 32 && cert <= 1e-8 && secs < 300.0;
  return {pass, fmt("tau1 = %.6f", tau1) + fmt(", slope = %.6f", est) + fmt(", rel err = %.2e", rel) +
                    fmt(", certificate max residual = %.1e", cert) + " at " + std::to_string(used) + " points" +
                    fmt(", %.1f s", secs)};
}

// 5. Convergence parameter of K_+ against its 200-level truncation.
Outcome c5_kplus() {
  std::mt19937_64 rng(501);
  std::uniform_real_distribution<double> total(0.7, 1.2);
  double worst_gap = 0.0, worst_excess = -1.0;
  for (int trial = 0; trial < 20; ++trial) {
    const QbdBlocks k = random_interior(rng, 1 + trial % 3, total(rng));
    QbdBlocks full = k;
    full.B0 = k.A0;
    full.B1 = k.A1;
    full.Bm1 = k.Am1;
    const double rho = pf_eigen(full.truncated(200), {1e-14, 1'000'000, true, false}).value;
    const double target = 1.0 / cp_kplus(k);
    worst_excess = std::max(worst_excess, rho - target);
    worst_gap = std::max(worst_gap, target - rho);
  }
  return {worst_excess <= 1e-12 && worst_gap <= 1e-3,
          fmt("max(rho_200 - 1/cp) = %.1e", worst_excess) + fmt(", max gap = %.1e", worst_gap) + " over 20 sets"};
}

// 6. Superharmonic existence through G against nonemptiness of the
// boundary-compatible tilt interval.
Outcome c6_cross_characterization() {
  std::mt19937_64 rng(601);
  int compared = 0, disagreements = 0, skipped = 0, positive = 0;
  for (int trial = 0; compared < 100 && trial < 5000; ++trial) {
    const auto k = assumption_instance(rng);
    if (!k) continue;
    if (!check_assumption1(*k, gamma1d_plus(*k).lo).holds) continue;
    double rho;
    try {
      rho = spectral_radius(canonical_form(*k).C0 + k->A1 * g_minus(*k).G);
    } catch (const Error&) {
      ++skipped;
      continue;
    }
    // Too close to the threshold for either side to be decided numerically.
    if (std::abs(rho - 1.0) < 1e-6) {
      ++skipped;
      continue;
    }
    const bool via_g = superharmonic_exists_via_G(*k);
    if (via_g != !gamma1d_0plus(*k).empty) ++disagreements;
    positive += via_g;
    ++compared;
  }
  return {compared == 100 && disagreements == 0,
          std::to_string(compared) + " instances, " + std::to_string(disagreements) + " disagreements, " +
              std::to_string(positive) + " with a superharmonic vector, " + std::to_string(skipped) + " skipped"};
}

// 7. Midpoint convexity of three cumulant-type functions.
Outcome c7_convexity() {
  std::mt19937_64 rng(701);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::array<int, 3> violations{0, 0, 0};
  auto check = [](double mid, double a, double b) {
    const double avg = 0.5 * (a + b);
    return mid <= avg + 1e-10 * std::max(1.0, std::abs(avg));
  };
  for (int trial = 0; trial < 1000; ++trial) {
    const QbdBlocks k = random_interior(rng, 1 + trial % 3, 1.0);
    const double a = u(rng), b = u(rng);
    if (!check(gamma_a(k, 0.5 * (a + b)), gamma_a(k, a), gamma_a(k, b))) ++violations[0];
  }
  for (int trial = 0; trial < 1000; ++trial) {
    Qbd2dSpec s;
    s.m = 1 + trial % 3;
    for (int i = -1; i <= 1; ++i)
      for (int j = -1; j <= 1; ++j) s.a(i, j) = random_matrix(rng, s.m, s.m, 0.0, 1.0 / 9.0);
    auto gam = [&](double x, double y) { return pf_eigen(a2_mgf(s, x, y)).value; };
    const double a1 = u(rng), b1 = u(rng), a2 = u(rng), b2 = u(rng);
    if (!check(gam(0.5 * (a1 + a2), 0.5 * (b1 + b2)), gam(a1, b1), gam(a2, b2))) ++violations[1];
  }
  for (int trial = 0; trial < 1000; ++trial) {
    const jackson::CumulantSet cs = jackson::cumulants(random_network(rng));
    const Point2 p{u(rng), u(rng)}, q{u(rng), u(rng)};
    const Point2 m{0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])};
    if (!check(cs.gamma_plus(m), cs.gamma_plus(p), cs.gamma_plus(q))) ++violations[2];
  }
  return {violations == std::array<int, 3>{0, 0, 0},
          "violations (1d interior, 2d interior, network) = " + std::to_string(violations[0]) + ", " +
              std::to_string(violations[1]) + ", " + std::to_string(violations[2]) + " of 1000 each"};
}

// 8. Departure and renewal-arrival cumulants computed two ways.
Outcome c8_dual_path() {
  Matrix e2(2, 2);
  e2 << -3, 3, 0, -3;
  const jackson::PhSpec h = hyperexponential(0.25, 0.6, 5.0);
  Matrix e3 = Matrix::Zero(3, 3);
  e3 << -2, 2, 0, 0, -2, 2, 0, 0, -2;
  Matrix cox(2, 2);
  cox << -4, 1.5, 0, -1;
  RowVector cox_beta(2);
  cox_beta << 0.8, 0.2;
  using jackson::MapSpec;
  using jackson::PhSpec;
  const std::vector<JacksonSpec> specs{
      {{MapSpec::poisson(0.8), renewal_map(RowVector::Unit(2, 0), e2)}, {PhSpec::erlang(2, 3.0), hyperexponential(0.3, 1.0, 4.0)}, 0.3, 0.2},
      {{renewal_map(h.beta, h.S), MapSpec::poisson(0.5)}, {PhSpec::exponential(2.0), PhSpec::erlang(3, 5.0)}, 0.1, 0.4},
      {{renewal_map(RowVector::Unit(3, 0), e3), renewal_map(cox_beta, cox)}, {hyperexponential(0.6, 2.0, 7.0), PhSpec::exponential(3.0)}, 0.5, 0.0},
      {{renewal_map(cox_beta, cox), renewal_map(h.beta, h.S)}, {PhSpec{cox_beta, cox * 2.0}, PhSpec::erlang(2, 2.5)}, 0.2, 0.2},
      {{MapSpec::poisson(1.1), MapSpec::poisson(0.2)}, {PhSpec{h.beta, h.S * 3.0}, PhSpec{cox_beta, cox * 3.0}}, 0.0, 0.6},
  };
  double dep = 0.0, arr = 0.0;
  for (const JacksonSpec& js : specs) {
    const jackson::CumulantSet cs = jackson::cumulants(js);
    for (int n = 0; n < 50; ++n) {
      // Grid of 50 points on a 10 x 5 lattice in [-1, 1.5] x [-1, 1].
      const Point2 th{-1.0 + 2.5 * (n % 10) / 9.0, -1.0 + 2.0 * (n / 10) / 4.0};
      for (int i = 1; i <= 2; ++i) {
        dep = std::max(dep, std::abs(cs.gamma_d(i, th) - jackson::departure_cumulant_via_mgf(js, i, th)));
        const double t = th[i - 1];
        arr = std::max(arr, std::abs(cs.gamma_a(i, t) - jackson::renewal_arrival_cumulant(js.arrivals[i - 1], t)));
      }
    }
  }
  return {dep <= 1e-10 && arr <= 1e-10,
          fmt("max departure gap = %.1e", dep) + fmt(", max renewal arrival gap = %.1e", arr) + " (5 specs, 50 points)"};
}

// 9. Stationary MGF identity on the truncated exponential network.
Outcome c9_identity() {
  const JacksonSpec js = exponential_network(1.0, 0.5, 2.0, 3.0, 0.3, 0.2);
  const Qbd2dSpec s = jackson::build_blocks(js);
  const oracle::StationaryTable t = oracle::truncate_and_solve(s, {100, 100});
  const std::vector<Point2> pts{{0.0, 0.0},  {0.1, 0.2},  {-0.1, 0.3}, {0.2, -0.2}, {0.3, 0.6},
                                {0.05, 0.05}, {0.2, 0.1}, {0.1, 0.5},  {0.25, 0.3}, {0.15, 0.8}};
  double worst = 0.0;
  for (const Point2& p : pts) worst = std::max(worst, oracle::stationary_identity_residual(t, s, p));
  return {worst <= 1e-6, fmt("max residual = %.1e", worst) + " at 10 points (extent 100)"};
}

// 10. Invariances.
Outcome c10_invariance() {
  const JacksonSpec js = exponential_network(1.0, 0.5, 2.0, 3.0, 0.3, 0.2);
  const Qbd2dSpec s = jackson::build_blocks(js);
  const Qbd2dSpec mp = jackson::build_blocks(map_ph_network());
  double unif = 0.0, homog = 0.0, sim = 0.0;
  for (const Qbd2dSpec* spec : {&s, &mp}) {
    const double nu = default_uniformization_rate(*spec);
    for (const Point2 c : {Point2{1, 0}, Point2{0, 1}, Point2{1, 2}, Point2{3, 1}}) {
      DecayOptions a, b;
      a.samples = b.samples = 0;
      a.uniformization_rate = nu;
      b.uniformization_rate = 2.5 * nu;
      const double ra = decay_rate(*spec, c, a).rate;
      unif = std::max(unif, std::abs(ra - decay_rate(*spec, c, b).rate));
      const double r2 = decay_rate(*spec, {2 * c[0], 2 * c[1]}, a).rate;
      homog = std::max(homog, std::abs(r2 - ra / 2));
    }
  }
  std::mt19937_64 rng(1001);
  std::uniform_real_distribution<double> u(0.1, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 2 + trial % 4;
    const Matrix t = random_matrix(rng, n, n, 0.0, 1.0);
    Vector d(n);
    for (Index i = 0; i < n; ++i) d(i) = u(rng);
    sim = std::max(sim, std::abs(pf_eigen(t).value - pf_eigen(DiagScale(d).apply(t)).value));
  }
  return {unif <= 1e-8 && homog <= 1e-12 && sim <= 1e-10,
          fmt("uniformization gap = %.1e", unif) + fmt(", homogeneity gap = %.1e", homog) +
              fmt(", similarity gap = %.1e", sim)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"counterexample kernel: degenerate G and A1 G not proportional to A1", c1_counterexample},
      {"product-form network: rates, path agreement, truncated-solve slopes", c2_product_form},
      {"tandem: curve point and tau", c3_tandem},
      {"MAP/PH network: slope vs tau1 and boundary certificate", c4_map_ph},
      {"K_+ convergence parameter vs 200-level truncation", c5_kplus},
      {"superharmonic existence cross-characterization", c6_cross_characterization},
      {"midpoint convexity", c7_convexity},
      {"dual-path cumulants", c8_dual_path},
      {"stationary MGF identity", c9_identity},
      {"invariances", c10_invariance},
  };
  int failed = 0;
  for (std::size_t n = 0; n < criteria.size(); ++n) {
    Outcome o;
    try {
      o = criteria[n].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] C%zu %s: %s\n", o.pass ? "PASS" : "FAIL", n + 1, criteria[n].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
