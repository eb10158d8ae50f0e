#pragma once

#include <array>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "qbdtail/jackson.hpp"
#include "qbdtail/qbd1d.hpp"
#include "qbdtail/qbd2d.hpp"

/// Model files: JSON (comments allowed) with matrices written as row-major
/// nested lists. See README.md for the schema.
namespace qbdtail::io {

using Json = nlohmann::ordered_json;

inline constexpr const char* kSchemaVersion = "1";
inline constexpr const char* kToleranceEnv = "QBDTAIL_TOL";
inline constexpr double kBuiltinTolerance = 1e-12;

enum class ModelKind { qbd1d, qbd2d_discrete, qbd2d_continuous, jackson };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::qbd1d: return "qbd1d";
    case ModelKind::qbd2d_discrete: return "qbd2d_discrete";
    case ModelKind::qbd2d_continuous: return "qbd2d_continuous";
    case ModelKind::jackson: return "jackson";
  }
  return "?";
}

struct Options {
  std::optional<double> tolerance;
  std::optional<std::size_t> samples;
  std::optional<std::uint64_t> seed;
  std::optional<std::array<long, 2>> extent;
  std::optional<std::uint64_t> steps;
  std::vector<Point2> directions;
};

struct ModelFile {
  std::string schema_version = kSchemaVersion;
  std::string description;
  ModelKind kind = ModelKind::qbd2d_discrete;
  std::variant<QbdBlocks, Qbd2dSpec, jackson::JacksonSpec> model;
  Options options;

  const QbdBlocks& qbd1d() const { return std::get<QbdBlocks>(model); }
  const Qbd2dSpec& qbd2d() const { return std::get<Qbd2dSpec>(model); }
  const jackson::JacksonSpec& jackson() const { return std::get<jackson::JacksonSpec>(model); }
};

/// Built-in tolerance unless QBDTAIL_TOL holds a positive number.
inline double default_tolerance() {
  const char* env = std::getenv(kToleranceEnv);
  if (env == nullptr || *env == '\0') return kBuiltinTolerance;
  char* end = nullptr;
  const double v = std::strtod(env, &end);
  if (end == env || *end != '\0' || !(v > 0.0))
    throw Error(ErrorKind::SchemaError, std::string(kToleranceEnv) + " must be a positive number");
  return v;
}

/// The file's own tolerance wins over the environment.
inline double tolerance_of(const ModelFile& f) { return f.options.tolerance.value_or(default_tolerance()); }

namespace detail {

[[noreturn]] inline void schema(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::SchemaError, where + ": " + what);
}

inline double number(const Json& j, const std::string& where) {
  if (!j.is_number()) schema(where, "expected a number");
  return j.get<double>();
}

/// A bare number is read as a 1x1 matrix.
inline Matrix matrix(const Json& j, const std::string& where) {
  if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) schema(where, "expected a nonempty list of rows");
  const std::size_t cols = j.front().is_array() ? j.front().size() : 0;
  if (cols == 0) schema(where, "rows must be nonempty lists");
  Matrix m(static_cast<Index>(j.size()), static_cast<Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Json& row = j[r];
    if (!row.is_array() || row.size() != cols) schema(where, "row " + std::to_string(r) + " breaks the rectangle");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Index>(r), static_cast<Index>(c)) = number(row[c], where);
  }
  return m;
}

inline RowVector row_vector(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) schema(where, "expected a nonempty list of numbers");
  RowVector v(static_cast<Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) v(static_cast<Index>(k)) = number(j[k], where);
  return v;
}

inline Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json to_json(const RowVector& v) {
  Json out = Json::array();
  for (Index k = 0; k < v.size(); ++k) out.push_back(v(k));
  return out;
}

inline void only_keys(const Json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) schema(where, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) schema(where, "unknown key '" + it.key() + "'");
  }
}

inline const Json& required(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) schema(where, std::string("missing '") + key + "'");
  return j.at(key);
}

// qbd1d.

inline QbdBlocks parse_qbd1d(const Json& j) {
  only_keys(j, {"B0", "B1", "Bm1", "Am1", "A0", "A1"}, "model");
  auto get = [&](const char* k) { return matrix(required(j, k, "model"), std::string("model.") + k); };
  return {get("B0"), get("B1"), get("Bm1"), get("Am1"), get("A0"), get("A1")};
}

inline Json qbd1d_json(const QbdBlocks& k) {
  return Json{{"B0", to_json(k.B0)},   {"B1", to_json(k.B1)}, {"Bm1", to_json(k.Bm1)},
              {"Am1", to_json(k.Am1)}, {"A0", to_json(k.A0)}, {"A1", to_json(k.A1)}};
}

// qbd2d.

inline std::string zone_code(int s) { return s == kZero ? "0" : s == kOne ? "1" : "+"; }
inline std::string family_code(int s1, int s2) { return zone_code(s1) + zone_code(s2); }

inline int zone_from(char c) { return c == '0' ? kZero : c == '1' ? kOne : c == '+' ? kPlus : -1; }

inline std::string increment_code(int i, int j) { return std::to_string(i) + "," + std::to_string(j); }

inline bool parse_increment(const std::string& key, int& i, int& j) {
  static const char* codes[] = {"-1", "0", "1"};
  for (int a = -1; a <= 1; ++a)
    for (int b = -1; b <= 1; ++b)
      if (key == std::string(codes[a + 1]) + "," + codes[b + 1]) {
        i = a, j = b;
        return true;
      }
  return false;
}

inline Qbd2dSpec parse_qbd2d(const Json& j, TimeKind time) {
  only_keys(j, {"families"}, "model");
  const Json& fams = required(j, "families", "model");
  if (!fams.is_object()) schema("model.families", "expected an object");
  Qbd2dSpec s;
  s.time = time;
  for (auto f = fams.begin(); f != fams.end(); ++f) {
    const std::string& code = f.key();
    const std::string where = "model.families." + code;
    const int s1 = code.size() == 2 ? zone_from(code[0]) : -1;
    const int s2 = code.size() == 2 ? zone_from(code[1]) : -1;
    if (s1 < 0 || s2 < 0) schema(where, "family keys are two characters from {0, 1, +}");
    if (!f.value().is_object()) schema(where, "expected an object of increments");
    for (auto b = f.value().begin(); b != f.value().end(); ++b) {
      int i = 0, k = 0;
      if (!parse_increment(b.key(), i, k)) schema(where, "bad increment '" + b.key() + "'");
      if (!Qbd2dSpec::allowed(s1, s2, i, k)) schema(where, "increment " + b.key() + " leaves the quadrant");
      s.at(s1, s2, i, k) = matrix(b.value(), where + "." + b.key());
    }
  }
  auto dim = [&](int s1, int s2) {
    const Matrix& b = s.at(s1, s2, 0, 0);
    if (b.size() == 0) schema("model.families." + family_code(s1, s2), "the 0,0 block is required");
    return b.rows();
  };
  s.m0 = dim(kZero, kZero);
  s.m1 = dim(kPlus, kZero);
  s.m2 = dim(kZero, kPlus);
  s.m = dim(kPlus, kPlus);
  s.complete();
  return s;
}

/// What `complete` would put in a slot if it were left out.
inline Matrix implied_block(const Qbd2dSpec& s, int s1, int s2, int i, int j) {
  const int p = Qbd2dSpec::primary_of(s1, s2, i, j);
  if (p >= 0) return s.blocks[p][Qbd2dSpec::increment(i, j)];
  return Matrix::Zero(s.source_dim(s1, s2), s.target_dim(s1, s2, i, j));
}

inline bool same(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

/// Writes the four dimension-fixing blocks and every block that differs
/// from what completion would reconstruct, so parse and write commute.
inline Json qbd2d_json(const Qbd2dSpec& s) {
  static const std::array<std::array<int, 2>, 9> order{{{kPlus, kPlus}, {kPlus, kZero}, {kZero, kPlus}, {kZero, kZero},
                                                       {kOne, kZero}, {kZero, kOne}, {kOne, kOne}, {kPlus, kOne},
                                                       {kOne, kPlus}}};
  Json fams = Json::object();
  for (const auto& [s1, s2] : order) {
    const bool dims = (s1 != kOne && s2 != kOne);
    Json fam = Json::object();
    for (int i = -1; i <= 1; ++i)
      for (int j = -1; j <= 1; ++j) {
        if (!Qbd2dSpec::allowed(s1, s2, i, j)) continue;
        const Matrix& b = s.at(s1, s2, i, j);
        if ((dims && i == 0 && j == 0) || !same(b, implied_block(s, s1, s2, i, j)))
          fam[increment_code(i, j)] = to_json(b);
      }
    if (!fam.empty()) fams[family_code(s1, s2)] = std::move(fam);
  }
  return Json{{"families", std::move(fams)}};
}

// jackson.

inline jackson::MapSpec parse_arrival(const Json& j, const std::string& where) {
  if (j.is_object() && j.contains("poisson")) {
    only_keys(j, {"poisson"}, where);
    return jackson::MapSpec::poisson(number(j.at("poisson"), where + ".poisson"));
  }
  only_keys(j, {"T", "U"}, where);
  return {matrix(required(j, "T", where), where + ".T"), matrix(required(j, "U", where), where + ".U")};
}

inline jackson::PhSpec parse_service(const Json& j, const std::string& where) {
  if (j.is_object() && j.contains("exponential")) {
    only_keys(j, {"exponential"}, where);
    return jackson::PhSpec::exponential(number(j.at("exponential"), where + ".exponential"));
  }
  if (j.is_object() && j.contains("erlang")) {
    only_keys(j, {"erlang"}, where);
    const Json& e = j.at("erlang");
    only_keys(e, {"phases", "rate"}, where + ".erlang");
    const Json& k = required(e, "phases", where + ".erlang");
    if (!k.is_number_integer() || k.get<long>() < 1 || k.get<long>() > 64)
      schema(where + ".erlang.phases", "expected an integer in [1, 64]");
    return jackson::PhSpec::erlang(k.get<int>(), number(required(e, "rate", where + ".erlang"), where + ".erlang.rate"));
  }
  only_keys(j, {"beta", "S"}, where);
  return {row_vector(required(j, "beta", where), where + ".beta"), matrix(required(j, "S", where), where + ".S")};
}

inline jackson::JacksonSpec parse_jackson(const Json& j) {
  only_keys(j, {"arrivals", "services", "routing"}, "model");
  const Json& arr = required(j, "arrivals", "model");
  const Json& srv = required(j, "services", "model");
  if (!arr.is_array() || arr.size() != 2) schema("model.arrivals", "expected a list of two arrival processes");
  if (!srv.is_array() || srv.size() != 2) schema("model.services", "expected a list of two service distributions");
  const Json& rt = required(j, "routing", "model");
  only_keys(rt, {"r12", "r21"}, "model.routing");
  jackson::JacksonSpec js;
  for (std::size_t i = 0; i < 2; ++i) {
    js.arrivals[i] = parse_arrival(arr[i], "model.arrivals[" + std::to_string(i) + "]");
    js.services[i] = parse_service(srv[i], "model.services[" + std::to_string(i) + "]");
  }
  js.r12 = number(required(rt, "r12", "model.routing"), "model.routing.r12");
  js.r21 = number(required(rt, "r21", "model.routing"), "model.routing.r21");
  return js;
}

inline Json jackson_json(const jackson::JacksonSpec& js) {
  Json arr = Json::array(), srv = Json::array();
  for (int i = 0; i < 2; ++i) {
    arr.push_back(Json{{"T", to_json(js.arrivals[i].T)}, {"U", to_json(js.arrivals[i].U)}});
    srv.push_back(Json{{"beta", to_json(js.services[i].beta)}, {"S", to_json(js.services[i].S)}});
  }
  return Json{{"arrivals", std::move(arr)}, {"services", std::move(srv)}, {"routing", {{"r12", js.r12}, {"r21", js.r21}}}};
}

// Options.

inline std::uint64_t count(const Json& j, const std::string& where) {
  if (!j.is_number_integer() || j.get<long long>() < 0) schema(where, "expected a nonnegative integer");
  return j.get<std::uint64_t>();
}

inline Point2 point(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) schema(where, "expected a pair");
  return {number(j[0], where), number(j[1], where)};
}

inline Options parse_options(const Json& j) {
  only_keys(j, {"tolerance", "samples", "seed", "extent", "steps", "directions"}, "options");
  Options o;
  if (j.contains("tolerance")) {
    o.tolerance = number(j.at("tolerance"), "options.tolerance");
    if (!(*o.tolerance > 0.0)) schema("options.tolerance", "must be positive");
  }
  if (j.contains("samples")) o.samples = count(j.at("samples"), "options.samples");
  if (j.contains("seed")) o.seed = count(j.at("seed"), "options.seed");
  if (j.contains("steps")) o.steps = count(j.at("steps"), "options.steps");
  if (j.contains("extent")) {
    const Json& e = j.at("extent");
    if (!e.is_array() || e.size() != 2) schema("options.extent", "expected [N1, N2]");
    o.extent = {static_cast<long>(count(e[0], "options.extent")), static_cast<long>(count(e[1], "options.extent"))};
  }
  if (j.contains("directions")) {
    const Json& d = j.at("directions");
    if (!d.is_array()) schema("options.directions", "expected a list of pairs");
    for (const Json& c : d) o.directions.push_back(point(c, "options.directions"));
  }
  return o;
}

inline Json options_json(const Options& o) {
  Json j = Json::object();
  if (o.tolerance) j["tolerance"] = *o.tolerance;
  if (o.samples) j["samples"] = *o.samples;
  if (o.seed) j["seed"] = *o.seed;
  if (o.extent) j["extent"] = Json::array({(*o.extent)[0], (*o.extent)[1]});
  if (o.steps) j["steps"] = *o.steps;
  if (!o.directions.empty()) {
    Json d = Json::array();
    for (const Point2& c : o.directions) d.push_back(Json::array({c[0], c[1]}));
    j["directions"] = std::move(d);
  }
  return j;
}

}  // namespace detail

/// Throws ParseError for malformed text and SchemaError for a well-formed
/// document that does not describe a model. Semantic checks (row sums,
/// signs, irreducibility) are left to the analysis entry points.
inline ModelFile parse_model(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::ParseError, e.what());
  }
  detail::only_keys(doc, {"schema_version", "description", "kind", "model", "options"}, "document");
  ModelFile f;
  const Json& ver = detail::required(doc, "schema_version", "document");
  if (!ver.is_string() || ver.get<std::string>() != kSchemaVersion)
    detail::schema("schema_version", std::string("expected \"") + kSchemaVersion + "\"");
  if (doc.contains("description")) {
    if (!doc.at("description").is_string()) detail::schema("description", "expected a string");
    f.description = doc.at("description").get<std::string>();
  }
  const Json& kind = detail::required(doc, "kind", "document");
  const std::string k = kind.is_string() ? kind.get<std::string>() : "";
  const Json& model = detail::required(doc, "model", "document");
  if (k == "qbd1d") {
    f.kind = ModelKind::qbd1d;
    f.model = detail::parse_qbd1d(model);
  } else if (k == "qbd2d_discrete" || k == "qbd2d_continuous") {
    f.kind = k == "qbd2d_discrete" ? ModelKind::qbd2d_discrete : ModelKind::qbd2d_continuous;
    f.model = detail::parse_qbd2d(model, k == "qbd2d_discrete" ? TimeKind::discrete : TimeKind::continuous);
  } else if (k == "jackson") {
    f.kind = ModelKind::jackson;
    f.model = detail::parse_jackson(model);
  } else {
    detail::schema("kind", "expected one of qbd1d, qbd2d_discrete, qbd2d_continuous, jackson");
  }
  if (doc.contains("options")) f.options = detail::parse_options(doc.at("options"));
  return f;
}

inline ModelFile load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

/// Normalized document: shorthands expanded to explicit matrices and
/// completion-implied blocks dropped.
inline Json to_json(const ModelFile& f) {
  Json doc = Json::object();
  doc["schema_version"] = f.schema_version;
  if (!f.description.empty()) doc["description"] = f.description;
  doc["kind"] = to_string(f.kind);
  switch (f.kind) {
    case ModelKind::qbd1d: doc["model"] = detail::qbd1d_json(f.qbd1d()); break;
    case ModelKind::qbd2d_discrete:
    case ModelKind::qbd2d_continuous: doc["model"] = detail::qbd2d_json(f.qbd2d()); break;
    case ModelKind::jackson: doc["model"] = detail::jackson_json(f.jackson()); break;
  }
  const Json opt = detail::options_json(f.options);
  if (!opt.empty()) doc["options"] = opt;
  return doc;
}

inline std::string serialize(const ModelFile& f) { return to_json(f).dump(2) + "\n"; }

/// The 2d-QBD a model describes: Jackson networks go through their block
/// construction, one-dimensional models have none.
inline Qbd2dSpec as_qbd2d(const ModelFile& f) {
  if (f.kind == ModelKind::jackson) return jackson::build_blocks(f.jackson());
  if (f.kind == ModelKind::qbd1d) throw Error(ErrorKind::SchemaError, "a qbd1d model has no two-dimensional blocks");
  return f.qbd2d();
}

}  // namespace qbdtail::io
