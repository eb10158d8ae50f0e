// Command-line front end: reads a model file, runs one analysis, prints a
// JSON record on stdout. Exit codes: 0 ok, 2 invalid model or usage,
// 3 numerical or analysis failure.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qbdtail/jackson.hpp"
#include "qbdtail/model_io.hpp"
#include "qbdtail/oracle.hpp"
#include "qbdtail/qbd1d.hpp"
#include "qbdtail/qbd2d.hpp"

namespace {

using namespace qbdtail;
using io::Json;
using io::ModelFile;
using io::ModelKind;

constexpr int kExitOk = 0;
constexpr int kExitModel = 2;
constexpr int kExitNumeric = 3;

[[noreturn]] void usage(const std::string& what) { throw Error(ErrorKind::SchemaError, what); }

Json pair(double a, double b) { return Json::array({a, b}); }
Json pair(const Point2& p) { return pair(p[0], p[1]); }

Point2 parse_pair(const std::string& text, const char* flag) {
  std::istringstream in(text);
  Point2 p{};
  char comma = 0;
  if (!(in >> p[0] >> comma >> p[1]) || comma != ',' || !(in >> std::ws).eof())
    usage(std::string(flag) + " expects two comma-separated numbers, got '" + text + "'");
  return p;
}

std::vector<Point2> directions_of(const ModelFile& f, const std::vector<std::string>& flags) {
  std::vector<Point2> out;
  for (const auto& d : flags) out.push_back(parse_pair(d, "--direction"));
  if (out.empty()) out = f.options.directions;
  if (out.empty()) out = {{1.0, 0.0}, {0.0, 1.0}};
  return out;
}

Json header(const char* command, const ModelFile& f) {
  return Json{{"command", command}, {"kind", io::to_string(f.kind)}};
}

Json violation_json(const std::string& kind, const std::string& where, const std::string& message) {
  return Json{{"kind", kind}, {"family", where}, {"message", message}};
}

Json tau_json(const TauReport& t) {
  return Json{{"tau", pair(t.tau)},
              {"category", to_string(t.category)},
              {"theta_face", Json::array({pair(t.theta_gamma[0]), pair(t.theta_gamma[1])})},
              {"theta_max", Json::array({pair(t.theta_max[0]), pair(t.theta_max[1])})}};
}

Json traffic_json(const jackson::TrafficReport& t) {
  return Json{{"lambda", pair(t.lambda[0], t.lambda[1])},
              {"mean_service", pair(t.mean_service[0], t.mean_service[1])},
              {"mu", pair(t.mu[0], t.mu[1])},
              {"rho", pair(t.rho[0], t.rho[1])},
              {"stable", t.stable}};
}

bool stochastic(const QbdBlocks& k, double tol) {
  try {
    detail::require_stochastic(k, tol);
    return true;
  } catch (const Error&) {
    return false;
  }
}

// ---------------------------------------------------------------------------
// Commands. Each returns the record and its exit code.

int cmd_validate(const ModelFile& f, Json& out) {
  out = header("validate", f);
  const double tol = io::tolerance_of(f);
  out["tolerance"] = tol;
  Json list = Json::array();
  if (f.kind == ModelKind::qbd1d) {
    const QbdBlocks& k = f.qbd1d();
    try {
      k.validate();
      out["stochastic"] = stochastic(k, tol);
    } catch (const Error& e) {
      list.push_back(violation_json(e.kind() == ErrorKind::ShapeMismatch ? "ShapeViolation" : "SignViolation", "K",
                                    e.what()));
    }
  } else {
    std::optional<Qbd2dSpec> spec;
    if (f.kind == ModelKind::jackson) {
      try {
        jackson::validate(f.jackson());
        spec = jackson::build_blocks(f.jackson());
      } catch (const Error& e) {
        if (!is_model_error(e.kind())) throw;
        list.push_back(violation_json(std::string(to_string(e.kind())), "network", e.what()));
      }
    } else {
      spec = f.qbd2d();
    }
    if (spec) {
      out["phases"] = Json{{"m0", spec->m0}, {"m1", spec->m1}, {"m2", spec->m2}, {"m", spec->m}};
      for (const Violation& v : validate_spec(*spec, tol)) list.push_back(violation_json(to_string(v.kind), v.family, v.message));
    }
  }
  out["valid"] = list.empty();
  out["violations"] = std::move(list);
  return out["valid"].get<bool>() ? kExitOk : kExitModel;
}

Json stability_2d(const Qbd2dSpec& s) {
  Json induced = Json::array();
  for (int i = 1; i <= 2; ++i) {
    try {
      induced.push_back(induced_drift(s, i));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::QiNotPositiveRecurrent) throw;
      induced.push_back(nullptr);
    }
  }
  return Json{{"mean_drift", pair(mean_drifts(s))}, {"induced_drift", std::move(induced)},
              {"stability", to_string(stability_check(s))}};
}

int cmd_stability(const ModelFile& f, Json& out) {
  out = header("stability", f);
  if (f.kind == ModelKind::qbd1d) {
    const QbdBlocks& k = f.qbd1d();
    k.validate();
    out["stochastic"] = stochastic(k, io::tolerance_of(f));
    try {
      const RecurrenceResult r = classify_recurrence(k);
      out["superharmonic"] = true;
      out["recurrence"] = to_string(r.kind);
      out["cp"] = r.t;
      out["cp_plus"] = r.t_plus;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoSuperharmonicVector) throw;
      out["superharmonic"] = false;
    }
    return kExitOk;
  }
  if (f.kind == ModelKind::jackson) out["traffic"] = traffic_json(jackson::traffic_check(f.jackson()));
  out.update(stability_2d(io::as_qbd2d(f)));
  return kExitOk;
}

int cmd_decay(const ModelFile& f, const std::vector<std::string>& flags, Json& out) {
  out = header("decay", f);
  if (f.kind == ModelKind::qbd1d) {
    if (!flags.empty()) usage("--direction does not apply to a qbd1d model");
    const QbdBlocks& k = f.qbd1d();
    k.validate();
    const Interval gp = gamma1d_plus(k);
    out["gamma_plus"] = gp.empty ? Json(nullptr) : pair(gp.lo, gp.hi);
    out["rate"] = -std::log(spectral_radius(rate_matrix(k)));
    return kExitOk;
  }
  const std::vector<Point2> dirs = directions_of(f, flags);
  DecayOptions opt;
  opt.samples = 0;
  Json rates = Json::array();
  if (f.kind == ModelKind::jackson) {
    const jackson::JacksonDecayReport rep = jackson::decay_report(f.jackson(), dirs, opt);
    out["traffic"] = traffic_json(rep.traffic);
    out.update(tau_json(rep.tau_generic));
    out["tau_analytic"] = pair(rep.tau_analytic.tau);
    out["path_discrepancy"] = rep.discrepancy;
    out["routing_cross_check"] = Json{{"checks", rep.remark_checks}, {"mismatches", rep.remark_mismatches}};
    for (const auto& d : rep.directions)
      rates.push_back(Json{{"direction", pair(d.direction)}, {"rate", d.rate_generic}, {"rate_analytic", d.rate_analytic}});
  } else {
    const std::vector<DecayReport> reps = decay_rates(f.qbd2d(), dirs, opt);
    out.update(tau_json(reps.empty() ? tau_report(f.qbd2d()) : reps.front().tau_report));
    for (const auto& r : reps) rates.push_back(Json{{"direction", pair(r.direction)}, {"rate", r.rate}});
  }
  out["directions"] = std::move(rates);
  return kExitOk;
}

std::string csv_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

int cmd_boundary(const ModelFile& f, std::size_t samples, const std::string& path, Json& out) {
  out = header("boundary", f);
  const GammaCurve curve = trace_gamma_curve(io::as_qbd2d(f), samples);
  std::ostringstream csv;
  csv << "theta1,theta2_lower,theta2_upper,feasible_C1,feasible_C2\n";
  for (const CurveSample& s : curve.samples) {
    // Bit 1: the lower-branch point is feasible; bit 2: the upper one.
    const int c1 = (s.lower_feasible[0] ? 1 : 0) | (s.upper_feasible[0] ? 2 : 0);
    const int c2 = (s.lower_feasible[1] ? 1 : 0) | (s.upper_feasible[1] ? 2 : 0);
    csv << csv_number(s.theta1) << ',' << csv_number(s.lower) << ',' << csv_number(s.upper) << ',' << c1 << ',' << c2
        << '\n';
  }
  if (path.empty()) {
    std::cout << csv.str();
    out = nullptr;  // the CSV is the whole output
    return kExitOk;
  }
  std::ofstream file(path, std::ios::binary);
  if (!(file << csv.str())) throw std::runtime_error("cannot write " + path);
  out["rows"] = curve.samples.size();
  out["closed"] = curve.closed;
  out["out"] = path;
  return kExitOk;
}

int cmd_jackson(const ModelFile& f, const std::string& action, const std::vector<std::string>& thetas,
                const std::vector<std::string>& flags, std::size_t samples, Json& out) {
  if (f.kind != ModelKind::jackson) usage("the jackson command needs a model of kind jackson");
  out = header("jackson", f);
  out["action"] = action;
  const jackson::JacksonSpec& js = f.jackson();
  if (action == "traffic") {
    out.update(traffic_json(jackson::traffic_check(js)));
  } else if (action == "cumulants") {
    const jackson::CumulantSet cs = jackson::cumulants(js);
    std::vector<Point2> pts;
    for (const auto& t : thetas) pts.push_back(parse_pair(t, "--theta"));
    if (pts.empty()) pts.push_back({0.0, 0.0});
    Json rows = Json::array();
    for (const Point2& th : pts)
      rows.push_back(Json{{"theta", pair(th)},
                          {"gamma_arrival", pair(cs.gamma_a(1, th[0]), cs.gamma_a(2, th[1]))},
                          {"gamma_departure", pair(cs.gamma_d(1, th), cs.gamma_d(2, th))},
                          {"gamma_face", pair(cs.gamma_face(1, th), cs.gamma_face(2, th))},
                          {"gamma_plus", cs.gamma_plus(th)},
                          {"t", pair(cs.t(1, th), cs.t(2, th))}});
    out["points"] = std::move(rows);
  } else if (action == "decay") {
    const int rc = cmd_decay(f, flags, out);
    out["command"] = "jackson";
    out["action"] = action;
    return rc;
  } else {
    // Certificate at the first `samples` points of the traced curve.
    const auto pts = trace_gamma_curve(jackson::build_blocks(js), samples / 2 + 1).points();
    Json rows = Json::array();
    double worst = 0.0;
    for (std::size_t k = 0; k < pts.size() && k < samples; ++k) {
      const auto c = jackson::assumption3_certificate(js, {pts[k].theta1, pts[k].theta2});
      worst = std::max(worst, c.max_residual());
      rows.push_back(Json{{"theta", pair(c.theta)},
                          {"face_constant", pair(c.faces[0].c0, c.faces[1].c0)},
                          {"gamma_face", pair(c.faces[0].gamma_face, c.faces[1].gamma_face)},
                          {"residual", c.max_residual()}});
    }
    out["points"] = std::move(rows);
    out["max_residual"] = worst;
  }
  return kExitOk;
}

int cmd_verify(const ModelFile& f, std::optional<long> extent_flag, std::optional<std::uint64_t> seed_flag,
               std::optional<std::uint64_t> steps_flag, Json& out) {
  out = header("verify", f);
  const Qbd2dSpec spec = io::as_qbd2d(f);
  std::array<long, 2> extent = f.options.extent.value_or(std::array<long, 2>{60, 60});
  if (extent_flag) extent = {*extent_flag, *extent_flag};
  const std::uint64_t seed = seed_flag.value_or(f.options.seed.value_or(1));
  const std::uint64_t steps = steps_flag.value_or(f.options.steps.value_or(1'000'000));

  const TauReport tau = tau_report(spec);
  const oracle::StationaryTable table = oracle::truncate_and_solve(spec, extent);
  out["extent"] = Json::array({extent[0], extent[1]});
  out["solver_residual"] = table.residual;
  Json rows = Json::array();
  double worst = 0.0;
  for (int i = 1; i <= 2; ++i) {
    const oracle::TailEstimate e = oracle::estimate_decay(table, i, 0, 0);
    const double analytic = tau.tau[i - 1];
    const double rel = std::abs(analytic + e.slope) / std::max(std::abs(analytic), 1e-300);
    worst = std::max(worst, rel);
    rows.push_back(Json{{"coordinate", i},
                        {"analytic", analytic},
                        {"slope_estimate", -e.slope},
                        {"relative_error", rel},
                        {"window", pair(e.window[0], e.window[1])},
                        {"points", e.points}});
  }
  out["coordinates"] = std::move(rows);
  out["max_relative_error"] = worst;

  if (steps > 0) {
    const oracle::OccupancyCounts counts = oracle::simulate(spec, seed, steps);
    const oracle::Lattice& L = table.lattice;
    double inside = 0.0, tv = 0.0;
    for (long a = 0; a <= L.extent[0]; ++a)
      for (long b = 0; b <= L.extent[1]; ++b)
        for (Index k = 0; k < L.phases(a, b); ++k) {
          const double emp = static_cast<double>(counts.count(a, b, k)) / static_cast<double>(steps);
          inside += emp;
          tv += std::abs(emp - table.at(a, b, k));
        }
    tv = 0.5 * (tv + std::max(0.0, 1.0 - inside));
    out["simulation"] = Json{{"seed", seed}, {"steps", steps}, {"total_variation", tv}};
  }
  return kExitOk;
}

int report_error(const std::string& kind, const std::string& message, int code) {
  std::cerr << Json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tail decay analysis of two-dimensional quasi-birth-death processes"};
  app.require_subcommand(1);
  std::string file;
  std::vector<std::string> directions, thetas;
  std::size_t samples = 0;
  std::string out_path, action = "traffic";
  std::optional<long> extent;
  std::optional<std::uint64_t> seed, steps;

  auto* validate = app.add_subcommand("validate", "Check a model file against the schema and the block rules");
  auto* stability = app.add_subcommand("stability", "Drifts and stability classification");
  auto* decay = app.add_subcommand("decay", "Coordinate and directional decay rates");
  auto* boundary = app.add_subcommand("boundary", "CSV trace of the boundary of the tilt region");
  auto* jack = app.add_subcommand("jackson", "Traffic, cumulants, decay or certificate of a two-node network");
  auto* verify = app.add_subcommand("verify", "Compare analytic decay rates with a truncated solve and a simulation");
  for (auto* sub : {validate, stability, decay, boundary, jack, verify})
    sub->add_option("file", file, "Model file")->required();
  decay->add_option("--direction", directions, "Direction c1,c2 (repeatable)");
  boundary->add_option("--samples", samples, "Number of theta1 samples");
  boundary->add_option("--out", out_path, "Write the CSV here instead of stdout");
  jack->add_option("action", action, "traffic, cumulants, decay or certificate")
      ->check(CLI::IsMember({"traffic", "cumulants", "decay", "certificate"}));
  jack->add_option("--theta", thetas, "Point theta1,theta2 for cumulants (repeatable)");
  jack->add_option("--direction", directions, "Direction c1,c2 for decay (repeatable)");
  jack->add_option("--samples", samples, "Curve points for the certificate");
  verify->add_option("--extent", extent, "Truncation extent in both coordinates")->check(CLI::Range(2L, 100000L));
  verify->add_option("--seed", seed, "Simulation seed");
  verify->add_option("--steps", steps, "Simulation steps (0 skips the simulation)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitModel;
  }

  try {
    const ModelFile f = io::load_model(file);
    spec_tolerance() = io::tolerance_of(f);
    Json out;
    int rc = kExitOk;
    if (validate->parsed()) {
      rc = cmd_validate(f, out);
    } else if (stability->parsed()) {
      rc = cmd_stability(f, out);
    } else if (decay->parsed()) {
      rc = cmd_decay(f, directions, out);
    } else if (boundary->parsed()) {
      rc = cmd_boundary(f, samples > 0 ? samples : f.options.samples.value_or(64), out_path, out);
    } else if (jack->parsed()) {
      rc = cmd_jackson(f, action, thetas, directions, samples > 0 ? samples : f.options.samples.value_or(32), out);
    } else {
      rc = cmd_verify(f, extent, seed, steps, out);
    }
    if (!out.is_null()) std::cout << out.dump() << '\n';
    return rc;
  } catch (const Error& e) {
    return report_error(std::string(to_string(e.kind())), e.what(),
                        is_model_error(e.kind()) ? kExitModel : kExitNumeric);
  } catch (const std::exception& e) {
    return report_error("Failure", e.what(), kExitNumeric);
  }
}
