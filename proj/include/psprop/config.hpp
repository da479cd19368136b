#pragma once

#include "flow.hpp"
#include "models.hpp"
#include "transform.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace psprop {

// Flat "key = value" text, '#' starts a comment, keys are dotted paths.
// Lists are comma separated; polynomial terms are "i j c" triples separated by ';'.
//
//   schema_version = 1
//   model.kind = free            # free | linear | harmonic | polynomial
//   model.terms = 0 2 1; 4 0 0.1 # polynomial only: c q^i p^j
//   hbar = 0.05
//   times = 0.1, 0.5, 1.0
//   grid.q = -6.6, 6.6, 81       # min, max, count
//   grid.p = -6.6, 6.6, 81
//   grid.x = -8, 8, 321
//   grid.alpha = -3, 3, 61
//   initial.kind = exact         # exact | wkb | packet
//   initial.quartic = 0          # S0 = x^2/2 + quartic x^4
//   initial.r = 2
//   initial.center = 0, 0
//   flow.method = exact          # exact | rk4 | adaptive
//   flow.step = 1e-3
//   tolerance.relative = 1e-4
//   tolerance.region = 1e-3
//   convergence.parameter = hbar # hbar | grid | step
//   convergence.values = 0.1, 0.05, 0.025
//   output.fields = true
class KeyValueFile {
 public:
  struct Entry {
    std::string value;
    int line;
  };

  static KeyValueFile parse(std::istream& in) {
    KeyValueFile f;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
      ++line;
      const auto hash = raw.find('#');
      std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
      if (s.empty()) continue;
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line) + ": expected 'key = value'");
      const std::string key = trim(s.substr(0, eq));
      const std::string val = trim(s.substr(eq + 1));
      if (key.empty()) throw ConfigError("line " + std::to_string(line) + ": empty key");
      if (f.entries_.count(key))
        throw ConfigError("line " + std::to_string(line) + ": field '" + key + "' given twice");
      f.entries_[key] = {val, line};
    }
    return f;
  }

  static KeyValueFile parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  static KeyValueFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    return parse(in);
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    const auto it = entries_.find(key);
    const std::string where = it == entries_.end() ? "" : "line " + std::to_string(it->second.line) + ": ";
    throw ConfigError(where + "field '" + key + "': " + what);
  }

  std::string str(const std::string& key, const std::string& def) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? def : it->second.value;
  }

  double num(const std::string& key, double def) const {
    if (!has(key)) return def;
    return to_double(key, entries_.at(key).value);
  }

  int integer(const std::string& key, int def) const {
    if (!has(key)) return def;
    const double v = num(key, def);
    if (v != std::floor(v)) fail(key, "expected an integer");
    return static_cast<int>(v);
  }

  bool flag(const std::string& key, bool def) const {
    if (!has(key)) return def;
    const std::string v = entries_.at(key).value;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(key, "expected true or false");
  }

  std::vector<double> list(const std::string& key) const {
    std::vector<double> out;
    if (!has(key)) return out;
    std::stringstream ss(entries_.at(key).value);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok = trim(tok);
      if (tok.empty()) continue;
      out.push_back(to_double(key, tok));
    }
    return out;
  }

  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }

 private:
  double to_double(const std::string& key, const std::string& tok) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) fail(key, "'" + tok + "' is not a number");
      return v;
    } catch (const std::logic_error&) {
      fail(key, "'" + tok + "' is not a number");
    }
  }

  std::map<std::string, Entry> entries_;
};

enum class InitialKind { exact, wkb, packet };

struct RunConfig {
  static constexpr int schema = 1;

  std::string model_kind = "free";
  std::vector<Monomial> terms;
  double hbar = 0.05;
  std::vector<double> times;
  Axis grid_q{-6.6, 6.6, 81}, grid_p{-6.6, 6.6, 81};
  Axis grid_x{-8, 8, 321};
  Axis grid_alpha{-3, 3, 61};
  InitialKind initial = InitialKind::exact;
  double quartic = 0;
  int r = 2;
  PhasePoint center{0.0, 0.0};
  FlowOptions flow;
  double rel_tol = 1e-4;
  double region = 1e-3;
  std::string conv_parameter = "hbar";
  std::vector<double> conv_values;
  bool write_fields = true;

  bool builtin() const { return model_kind != "polynomial"; }

  ModelPtr model() const {
    if (model_kind == "polynomial") return polynomial_model(terms);
    return builtin_model(model_kind, 1);
  }
};

namespace detail {

inline Axis parse_axis(const KeyValueFile& f, const std::string& key, const Axis& def) {
  if (!f.has(key)) return def;
  const auto v = f.list(key);
  if (v.size() != 3) f.fail(key, "expected 'min, max, count'");
  if (v[2] != std::floor(v[2]) || v[2] < 2) f.fail(key, "count must be an integer >= 2");
  if (!(v[1] > v[0])) f.fail(key, "max must exceed min");
  return Axis(v[0], v[1], static_cast<int>(v[2]));
}

inline std::vector<Monomial> parse_terms(const KeyValueFile& f, const std::string& key) {
  std::vector<Monomial> out;
  std::stringstream ss(f.str(key, ""));
  std::string tok;
  while (std::getline(ss, tok, ';')) {
    tok = KeyValueFile::trim(tok);
    if (tok.empty()) continue;
    std::istringstream ts(tok);
    Monomial m;
    if (!(ts >> m.i >> m.j >> m.c) || !(ts >> std::ws).eof()) f.fail(key, "term '" + tok + "' is not 'i j c'");
    out.push_back(m);
  }
  return out;
}

}  // namespace detail

inline RunConfig parse_run_config(const KeyValueFile& f) {
  static const std::vector<std::string> known = {
      "schema_version", "model.kind",        "model.terms",          "hbar",
      "times",          "grid.q",            "grid.p",               "grid.x",
      "grid.alpha",     "initial.kind",      "initial.quartic",      "initial.r",
      "initial.center", "flow.method",       "flow.step",            "flow.rtol",
      "flow.atol",      "tolerance.relative", "tolerance.region",    "convergence.parameter",
      "convergence.values", "output.fields"};
  for (const auto& [k, e] : f.entries())
    if (std::find(known.begin(), known.end(), k) == known.end()) f.fail(k, "unknown field");

  if (!f.has("schema_version")) throw ConfigError("field 'schema_version': missing (expected 1)");
  if (f.integer("schema_version", 0) != RunConfig::schema)
    f.fail("schema_version", "unsupported schema version (expected 1)");

  RunConfig c;
  c.model_kind = f.str("model.kind", c.model_kind);
  if (c.model_kind == "polynomial") {
    try {
      c.terms = detail::parse_terms(f, "model.terms");
      polynomial_model(c.terms);
    } catch (const ConfigError& e) {
      if (std::string(e.what()).find("field '") != std::string::npos) throw;
      f.fail("model.terms", e.what());
    }
    if (c.terms.empty()) f.fail("model.terms", "polynomial model needs at least one term");
  } else {
    try {
      parse_builtin_kind(c.model_kind);
    } catch (const ConfigError&) {
      f.fail("model.kind", "unknown model kind '" + c.model_kind + "' (expected free, linear, harmonic, polynomial)");
    }
  }

  c.hbar = f.num("hbar", c.hbar);
  if (!(c.hbar > 0)) f.fail("hbar", "must be positive");
  c.times = f.list("times");
  for (std::size_t k = 0; k < c.times.size(); ++k) {
    if (!(c.times[k] >= 0)) f.fail("times", "times must be >= 0");
    if (k && !(c.times[k] > c.times[k - 1])) f.fail("times", "times must be strictly ascending");
  }
  c.grid_q = detail::parse_axis(f, "grid.q", c.grid_q);
  c.grid_p = detail::parse_axis(f, "grid.p", c.grid_p);
  c.grid_x = detail::parse_axis(f, "grid.x", c.grid_x);
  c.grid_alpha = detail::parse_axis(f, "grid.alpha", c.grid_alpha);

  const std::string ik = f.str("initial.kind", "exact");
  if (ik == "exact") c.initial = InitialKind::exact;
  else if (ik == "wkb") c.initial = InitialKind::wkb;
  else if (ik == "packet") c.initial = InitialKind::packet;
  else f.fail("initial.kind", "expected exact, wkb or packet");
  c.quartic = f.num("initial.quartic", 0.0);
  c.r = f.integer("initial.r", 2);
  if (c.r < 2 || c.r > 4) f.fail("initial.r", "must be in [2, 4]");
  if (f.has("initial.center")) {
    const auto v = f.list("initial.center");
    if (v.size() != 2) f.fail("initial.center", "expected 'q, p'");
    c.center = PhasePoint(v[0], v[1]);
  }
  if (c.initial == InitialKind::exact && (c.quartic != 0 || c.model_kind == "polynomial"))
    f.fail("initial.kind", "'exact' initial data requires a built-in model and quartic = 0");

  if (f.has("flow.method")) {
    try {
      c.flow.method = parse_flow_method(f.str("flow.method", ""));
    } catch (const ConfigError& e) {
      f.fail("flow.method", e.what());
    }
  }
  c.flow.step = f.num("flow.step", c.flow.step);
  c.flow.rtol = f.num("flow.rtol", c.flow.rtol);
  c.flow.atol = f.num("flow.atol", c.flow.atol);
  if (!(c.flow.step > 0)) f.fail("flow.step", "must be positive");
  if (!(c.flow.rtol > 0)) f.fail("flow.rtol", "must be positive");
  if (!(c.flow.atol > 0)) f.fail("flow.atol", "must be positive");
  c.flow.hbar = c.hbar;

  c.rel_tol = f.num("tolerance.relative", c.rel_tol);
  c.region = f.num("tolerance.region", c.region);
  if (!(c.rel_tol > 0)) f.fail("tolerance.relative", "must be positive");
  if (!(c.region >= 0 && c.region < 1)) f.fail("tolerance.region", "must be in [0, 1)");

  c.conv_parameter = f.str("convergence.parameter", c.conv_parameter);
  if (c.conv_parameter != "hbar" && c.conv_parameter != "grid" && c.conv_parameter != "step")
    f.fail("convergence.parameter", "expected hbar, grid or step");
  c.conv_values = f.list("convergence.values");
  c.write_fields = f.flag("output.fields", true);
  return c;
}

inline RunConfig load_run_config(const std::string& path) { return parse_run_config(KeyValueFile::load(path)); }

}  // namespace psprop
