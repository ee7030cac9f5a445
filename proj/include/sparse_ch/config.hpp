// Run configuration: one JSON document, dotted-path overrides, validation.
//
// Field-valued entries (gamma, phi0, w0, phi_Q, phi_Omega) accept a number,
// an array with one value per cell, or {"cos": {"amplitude", "mode",
// "offset"}} meaning offset + amplitude cos(mode pi x / L).
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparse_ch/io.hpp"
#include "sparse_ch/optimizer.hpp"
#include "sparse_ch/problem.hpp"
#include "sparse_ch/sampling.hpp"
#include "sparse_ch/verification.hpp"

namespace sparse_ch {

using Json = nlohmann::json;

struct OutputOptions {
  std::string dir = "out";
  std::size_t snapshot_stride = 1;
  bool profiles = false;
};

struct SweepOptions {
  std::vector<double> kappas;  // explicit values; when empty, fractions of max |r| at u = 0
  std::vector<double> fractions{0.0, 0.1, 0.3, 0.6, 1.1};
};

struct SecondOrderOptions {
  int directions = 0;  // 0 disables the check after optimize
  int fd_checks = 3;
  int growth_directions = 16;
  std::vector<double> growth_steps{1e-3, 1e-2};
  double growth_tolerance = 1e-12;
};

struct RunConfig {
  ProblemSpec spec;
  SpaceTimeField control;
  std::uint64_t seed = 20240601;
  OptimizerConfig optimizer;
  OracleConfig oracle;
  SuiteOptions suite;
  SweepOptions sweep;
  SecondOrderOptions second_order;
  OutputOptions output;
  Json resolved;
};

inline Json default_config_json() {
  auto cosine = [](double a) { return Json{{"cos", {{"amplitude", a}, {"mode", 1}, {"offset", 0.0}}}}; };
  return Json{
      {"seed", 20240601},
      {"grid", {{"length", 1.0}, {"n_cells", 128}}},
      {"time", {{"T", 0.5}, {"n_steps", 256}}},
      {"physics", {{"tau", 0.1}, {"gamma", 0.5}, {"gamma0", 0.5}, {"c1", 1.0}, {"c2", 2.5}}},
      {"initial", {{"phi0", cosine(0.2)}, {"w0", 0.0}}},
      {"targets", {{"phi_Q", cosine(0.4)}, {"phi_Omega", nullptr}}},
      {"cost", {{"b1", 1.0}, {"b2", 0.5}, {"b3", 0.01}, {"kappa", 0.0}}},
      {"bounds", {{"lower", -5.0}, {"upper", 5.0}}},
      {"control", 0.0},
      {"optimizer",
       {{"alpha0", 0.0}, {"backtrack", 0.5}, {"sufficient", 1e-4}, {"max_iters", 3000}, {"stat_tol", 1e-8},
        {"barzilai_borwein", true}, {"tol_u", 1e-10}}},
      {"second_order",
       {{"directions", 0}, {"fd_checks", 3}, {"growth_directions", 16}, {"growth_steps", {1e-3, 1e-2}},
        {"growth_tolerance", 1e-12}}},
      {"sweep", {{"kappas", Json::array()}, {"fractions", {0.0, 0.1, 0.3, 0.6, 1.1}}}},
      {"oracle", {{"fd_steps", {1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7}}, {"richardson", false}}},
      {"check", {{"suites", Json::array()}, {"random_controls", 8}, {"kappa_fractions", {0.1, 0.3, 0.6}}}},
      {"newton",
       {{"tol", 1e-10}, {"max_iters", 50}, {"boundary_gap", 1e-9}, {"fallback_eps", 1e-3},
        {"allow_fallback", true}}},
      {"output", {{"dir", "out"}, {"snapshot_stride", 1}, {"profiles", false}}},
      {"debug", {{"laplacian_row_sum_fault", 0.0}}},
  };
}

/// Sets a dotted path, e.g. "cost.kappa=0.02". The value is parsed as JSON
/// and taken as a plain string when that fails.
inline void apply_override(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::parse_error&) {
    value = text;
  }
  Json* node = &j;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ValidationError("empty component in override key: " + key);
    parts.push_back(part);
  }
  for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
    if (!node->is_object()) throw ValidationError("override path crosses a non-object: " + key);
    node = &(*node)[parts[k]];
    if (node->is_null()) *node = Json::object();
  }
  if (!node->is_object()) throw ValidationError("override path crosses a non-object: " + key);
  (*node)[parts.back()] = value;
}

namespace detail {

inline void check_keys(const Json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ValidationError(where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) throw ValidationError("unknown key " + where + "." + it.key());
  }
}

inline Field parse_field(const Json& v, const Grid& grid, const std::string& where) {
  const std::size_t n = grid.n_cells;
  Field f(n);
  if (v.is_number()) {
    f.assign(n, v.get<double>());
  } else if (v.is_array()) {
    if (v.size() != n) throw ValidationError(where + " must have one value per cell");
    for (std::size_t i = 0; i < n; ++i) f[i] = v[i].get<double>();
  } else if (v.is_object() && v.contains("cos")) {
    check_keys(v, where, {"cos"});
    const Json& c = v["cos"];
    check_keys(c, where + ".cos", {"amplitude", "mode", "offset"});
    const double a = c.value("amplitude", 1.0);
    const double mode = c.value("mode", 1.0);
    const double off = c.value("offset", 0.0);
    for (std::size_t i = 0; i < n; ++i) f[i] = off + a * std::cos(mode * std::numbers::pi * grid.x(i) / grid.length);
  } else {
    throw ValidationError(where + " must be a number, an array or {\"cos\": {...}}");
  }
  for (double x : f) {
    if (!std::isfinite(x)) throw ValidationError(where + " must be finite");
  }
  return f;
}

inline std::vector<double> parse_list(const Json& v, const std::string& where) {
  if (!v.is_array()) throw ValidationError(where + " must be an array");
  std::vector<double> out;
  for (const Json& x : v) out.push_back(x.get<double>());
  return out;
}

inline std::size_t positive_count(const Json& v, const std::string& where) {
  if (!v.is_number_integer() || v.get<long long>() < 1) throw ValidationError(where + " must be a positive integer");
  return static_cast<std::size_t>(v.get<long long>());
}

inline RunConfig build_config(const Json& j, const std::filesystem::path& base_dir) {
  check_keys(j, "config",
             {"seed", "grid", "time", "physics", "initial", "targets", "cost", "bounds", "control", "optimizer",
              "second_order", "sweep", "oracle", "check", "newton", "output", "debug"});
  RunConfig rc;
  if (!j["seed"].is_number_integer() || j["seed"].get<long long>() < 0) {
    throw ValidationError("seed must be a non-negative integer");
  }
  rc.seed = j["seed"].get<std::uint64_t>();

  const Json& g = j["grid"];
  check_keys(g, "grid", {"length", "n_cells"});
  const std::size_t n = positive_count(g["n_cells"], "grid.n_cells");
  if (n < 4) throw ValidationError("grid.n_cells must be >= 4");
  const double length = g["length"].get<double>();
  if (!(length > 0.0) || !std::isfinite(length)) throw ValidationError("grid.length must be > 0");
  ProblemSpec& s = rc.spec;
  s.grid = build_grid(length, n);

  const Json& t = j["time"];
  check_keys(t, "time", {"T", "n_steps"});
  s.phys.T = t["T"].get<double>();
  s.phys.n_steps = positive_count(t["n_steps"], "time.n_steps");
  const std::size_t nt = s.phys.n_steps;

  const Json& ph = j["physics"];
  check_keys(ph, "physics", {"tau", "gamma", "gamma0", "c1", "c2"});
  s.phys.tau = ph["tau"].get<double>();
  s.phys.gamma = parse_field(ph["gamma"], s.grid, "physics.gamma");
  s.phys.gamma0 = ph["gamma0"].get<double>();
  s.potential = {ph["c1"].get<double>(), ph["c2"].get<double>()};

  const Json& ini = j["initial"];
  check_keys(ini, "initial", {"phi0", "w0"});
  s.initial.phi0 = parse_field(ini["phi0"], s.grid, "initial.phi0");
  s.initial.w0 = parse_field(ini["w0"], s.grid, "initial.w0");

  const Json& tg = j["targets"];
  check_keys(tg, "targets", {"phi_Q", "phi_Omega"});
  const Field q = parse_field(tg["phi_Q"], s.grid, "targets.phi_Q");
  s.targets.phi_Q = SpaceTimeField(nt + 1, n);
  for (std::size_t k = 0; k <= nt; ++k) std::copy(q.begin(), q.end(), s.targets.phi_Q[k].begin());
  s.targets.phi_Omega = tg["phi_Omega"].is_null() ? q : parse_field(tg["phi_Omega"], s.grid, "targets.phi_Omega");

  const Json& c = j["cost"];
  check_keys(c, "cost", {"b1", "b2", "b3", "kappa"});
  s.weights = {c["b1"].get<double>(), c["b2"].get<double>(), c["b3"].get<double>(), c["kappa"].get<double>()};

  const Json& b = j["bounds"];
  check_keys(b, "bounds", {"lower", "upper"});
  const double lb = b["lower"].get<double>(), ub = b["upper"].get<double>();
  if (!(lb <= ub)) throw ValidationError("bounds need lower <= upper");
  s.bounds = BoxBounds::uniform(nt, n, lb, ub);

  const Json& nw = j["newton"];
  check_keys(nw, "newton", {"tol", "max_iters", "boundary_gap", "fallback_eps", "allow_fallback"});
  s.newton.tol = nw["tol"].get<double>();
  s.newton.max_iters = nw["max_iters"].get<int>();
  s.newton.boundary_gap = nw["boundary_gap"].get<double>();
  s.newton.fallback_eps = nw["fallback_eps"].get<double>();
  s.newton.allow_fallback = nw["allow_fallback"].get<bool>();
  if (!(s.newton.tol > 0.0) || s.newton.max_iters < 1 || !(s.newton.boundary_gap > 0.0) ||
      !(s.newton.fallback_eps > 0.0)) {
    throw ValidationError("newton options must be positive");
  }

  const Json& dbg = j["debug"];
  check_keys(dbg, "debug", {"laplacian_row_sum_fault"});
  s.laplacian_row_sum_fault = dbg["laplacian_row_sum_fault"].get<double>();

  s.validate();

  const Json& u = j["control"];
  if (u.is_number()) {
    rc.control = SpaceTimeField(nt, n, u.get<double>());
  } else if (u.is_object() && u.contains("random")) {
    check_keys(u, "control", {"random"});
    check_keys(u["random"], "control.random", {"amplitude", "seed"});
    const double amp = u["random"].value("amplitude", 1.0);
    const std::uint64_t seed = u["random"].contains("seed") ? u["random"]["seed"].get<std::uint64_t>() : rc.seed;
    rc.control = random_uniform_control(s, amp, seed);
  } else if (u.is_object() && u.contains("file")) {
    check_keys(u, "control", {"file"});
    std::filesystem::path p = u["file"].get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    try {
      rc.control = read_control_csv(p, nt, n);
    } catch (const IoError& e) {
      throw ValidationError(e.what());
    }
  } else {
    throw ValidationError("control must be a number, {\"random\": {...}} or {\"file\": path}");
  }
  for (double v : rc.control.flat()) {
    if (!std::isfinite(v)) throw ValidationError("control must be finite");
  }

  const Json& o = j["optimizer"];
  check_keys(o, "optimizer", {"alpha0", "backtrack", "sufficient", "max_iters", "stat_tol", "barzilai_borwein", "tol_u"});
  rc.optimizer.alpha0 = o["alpha0"].get<double>();
  rc.optimizer.backtrack = o["backtrack"].get<double>();
  rc.optimizer.sufficient = o["sufficient"].get<double>();
  rc.optimizer.max_iters = o["max_iters"].get<int>();
  rc.optimizer.stat_tol = o["stat_tol"].get<double>();
  rc.optimizer.barzilai_borwein = o["barzilai_borwein"].get<bool>();
  rc.optimizer.tol_u = o["tol_u"].get<double>();
  rc.optimizer.u_init = rc.control;
  rc.optimizer.validate();

  const Json& so = j["second_order"];
  check_keys(so, "second_order", {"directions", "fd_checks", "growth_directions", "growth_steps", "growth_tolerance"});
  rc.second_order.directions = so["directions"].get<int>();
  rc.second_order.fd_checks = so["fd_checks"].get<int>();
  rc.second_order.growth_directions = so["growth_directions"].get<int>();
  rc.second_order.growth_steps = parse_list(so["growth_steps"], "second_order.growth_steps");
  rc.second_order.growth_tolerance = so["growth_tolerance"].get<double>();
  if (rc.second_order.directions < 0 || rc.second_order.fd_checks < 0 || rc.second_order.growth_directions < 0 ||
      !(rc.second_order.growth_tolerance >= 0.0)) {
    throw ValidationError("second_order counts and tolerance must be >= 0");
  }

  const Json& sw = j["sweep"];
  check_keys(sw, "sweep", {"kappas", "fractions"});
  rc.sweep.kappas = parse_list(sw["kappas"], "sweep.kappas");
  rc.sweep.fractions = parse_list(sw["fractions"], "sweep.fractions");
  const auto& list = rc.sweep.kappas.empty() ? rc.sweep.fractions : rc.sweep.kappas;
  if (list.empty()) throw ValidationError("sweep needs kappas or fractions");
  for (std::size_t k = 0; k < list.size(); ++k) {
    if (!(list[k] >= 0.0) || (k > 0 && !(list[k] > list[k - 1]))) {
      throw ValidationError("sweep values must be >= 0 and strictly ascending");
    }
  }

  const Json& orc = j["oracle"];
  check_keys(orc, "oracle", {"fd_steps", "richardson"});
  rc.oracle.fd_steps = parse_list(orc["fd_steps"], "oracle.fd_steps");
  rc.oracle.richardson = orc["richardson"].get<bool>();
  rc.oracle.seed = rc.seed;
  try {
    detail::check_steps(rc.oracle);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }

  const Json& ch = j["check"];
  check_keys(ch, "check", {"suites", "random_controls", "kappa_fractions"});
  rc.suite.seed = rc.seed;
  rc.suite.oracle = rc.oracle;
  rc.suite.optimizer = rc.optimizer;
  rc.suite.optimizer.u_init.reset();
  for (const Json& name : ch["suites"]) {
    const std::string sname = name.get<std::string>();
    if (std::find(suite_names().begin(), suite_names().end(), sname) == suite_names().end()) {
      throw ValidationError("unknown verification suite: " + sname);
    }
    rc.suite.suites.push_back(sname);
  }
  rc.suite.random_controls = ch["random_controls"].get<int>();
  if (rc.suite.random_controls < 0) throw ValidationError("check.random_controls must be >= 0");
  rc.suite.kappa_fractions = parse_list(ch["kappa_fractions"], "check.kappa_fractions");

  const Json& out = j["output"];
  check_keys(out, "output", {"dir", "snapshot_stride", "profiles"});
  rc.output.dir = out["dir"].get<std::string>();
  rc.output.snapshot_stride = positive_count(out["snapshot_stride"], "output.snapshot_stride");
  rc.output.profiles = out["profiles"].get<bool>();

  rc.resolved = j;
  return rc;
}

}  // namespace detail

/// Merges the user document over the defaults, applies overrides and builds
/// the run configuration. Every malformed or inadmissible input raises
/// ValidationError.
inline RunConfig resolve_config(const Json& user, const std::vector<std::string>& overrides = {},
                                const std::filesystem::path& base_dir = ".") {
  if (!user.is_object()) throw ValidationError("config must be a JSON object");
  Json j = default_config_json();
  // Field-valued entries replace the default wholesale instead of merging
  // into it (a number must not inherit the keys of a cosine default).
  for (auto it = user.begin(); it != user.end(); ++it) {
    if (it.value().is_object() && j.contains(it.key()) && j[it.key()].is_object() && it.key() != "control") {
      for (auto f = it.value().begin(); f != it.value().end(); ++f) j[it.key()][f.key()] = f.value();
    } else {
      j[it.key()] = it.value();
    }
  }
  for (const std::string& o : overrides) apply_override(j, o);
  try {
    return detail::build_config(j, base_dir);
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("config type error: ") + e.what());
  }
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config " + path.string());
  try {
    return Json::parse(in, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

inline RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
  return resolve_config(read_json_file(path), overrides, path.parent_path().empty() ? "." : path.parent_path());
}

}  // namespace sparse_ch
