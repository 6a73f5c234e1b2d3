#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "sdg/control_set.hpp"
#include "sdg/dynamics.hpp"
#include "sdg/errors.hpp"
#include "sdg/hamiltonian.hpp"
#include "sdg/hji.hpp"
#include "sdg/io.hpp"
#include "sdg/monte_carlo.hpp"
#include "sdg/paths.hpp"
#include "sdg/strategy.hpp"
#include "sdg/time_grid.hpp"
#include "sdg/value_grid.hpp"

namespace sdg {

/// Strategy or generator descriptor as it appears in a scenario file.
/// Descriptors are kept symbolic until a stage needs the concrete strategy,
/// because feedback strategies can only be materialized once the value grids
/// have been solved.
struct StrategyDesc {
  std::string kind;           ///< constant | copy-lagged | table | feedback
  int index = 0;              ///< constant: which control point
  int first_index = 0;        ///< copy-lagged: block-0 control point
  std::uint64_t seed = 0;     ///< table: hash seed
  std::string policy = "";    ///< feedback: "plus" or "minus" grid
  int delay_steps = 0;        ///< 0 = use the time grid's delay
  int assumed_opp_index = 0;  ///< generators only: assumed constant opponent
  std::string label;
};

/// Optional closed-form reference for the solver stage.
struct ReferenceSpec {
  bool present = false;
  std::string kind;  ///< terminal | quadratic-diffusion | eikonal
  double tolerance = 0.05;
};

/// A fully validated scenario: everything the stages need except the solved
/// grids and materialized strategies.
struct Scenario {
  std::string name;
  std::string description;

  GameDynamics dynamics;
  std::string dynamics_kind;
  ControlSet u_set{{0.0}, 1};
  ControlSet v_set{{0.0}, 1};
  TimeGrid grid{0.0, 1.0, 1, 1};
  std::vector<double> x0;
  SpaceGrid space{{0.0}, {1.0}, {3}};
  Box report;

  StrategyDesc alpha_desc;
  StrategyDesc beta_desc;

  double hji_cfl = 0.45;
  bool store_policy = false;
  double ordering_tolerance = 1e-9;
  bool expect_sweeps_identical = false;
  ReferenceSpec reference;

  int mc_paths = 1000;
  std::uint64_t mc_seed = 1;

  bool has_isaacs = false;
  int isaacs_queries = 100;
  std::optional<std::uint64_t> isaacs_seed;
  double isaacs_tolerance = 1e-12;
  bool isaacs_expect_holds = true;
  double isaacs_grad_scale = 1.0;
  double isaacs_hess_scale = 1.0;

  bool has_dpp = false;
  double dpp_t1 = 0.0;
  double dpp_scheme_coeff = 2.0;
  int dpp_paths = 2000;
  bool dpp_expect_equality = false;
  std::vector<StrategyDesc> alpha_family, v_family, beta_family, u_family;

  double reg_probe_h = 0.1;
  double reg_headroom = 1.1;
  int reg_paths = 2000;

  /// Expected summary values (name -> {value, tol}), each emitted as a check.
  struct Expectation {
    std::string key;
    double value = 0.0;
    double tolerance = 0.0;
  };
  std::vector<Expectation> expects;

  std::vector<std::string> stages;
};

namespace config {

using njson = nlohmann::json;

inline const njson& need(const njson& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) {
    throw ConfigError("at " + (path.empty() ? std::string("/") : path) +
                      ": expected an object");
  }
  const auto it = obj.find(key);
  if (it == obj.end()) {
    throw ConfigError("at " + path + "/" + key + ": missing required field");
  }
  return *it;
}

inline double need_num(const njson& obj, const std::string& key, const std::string& path) {
  const njson& v = need(obj, key, path);
  if (!v.is_number()) throw ConfigError("at " + path + "/" + key + ": expected a number");
  return v.get<double>();
}

inline int need_int(const njson& obj, const std::string& key, const std::string& path) {
  const njson& v = need(obj, key, path);
  if (!v.is_number_integer()) {
    throw ConfigError("at " + path + "/" + key + ": expected an integer");
  }
  return v.get<int>();
}

inline std::string need_str(const njson& obj, const std::string& key,
                            const std::string& path) {
  const njson& v = need(obj, key, path);
  if (!v.is_string()) throw ConfigError("at " + path + "/" + key + ": expected a string");
  return v.get<std::string>();
}

inline std::vector<double> need_num_array(const njson& obj, const std::string& key,
                                          const std::string& path) {
  const njson& v = need(obj, key, path);
  if (!v.is_array()) throw ConfigError("at " + path + "/" + key + ": expected an array");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) {
      throw ConfigError("at " + path + "/" + key + ": expected numeric entries");
    }
    out.push_back(e.get<double>());
  }
  return out;
}

inline double opt_num(const njson& obj, const std::string& key, double fallback) {
  if (!obj.is_object() || !obj.contains(key)) return fallback;
  return obj.at(key).get<double>();
}

inline int opt_int(const njson& obj, const std::string& key, int fallback) {
  if (!obj.is_object() || !obj.contains(key)) return fallback;
  return obj.at(key).get<int>();
}

inline bool opt_bool(const njson& obj, const std::string& key, bool fallback) {
  if (!obj.is_object() || !obj.contains(key)) return fallback;
  return obj.at(key).get<bool>();
}

inline ControlSet parse_control_set(const njson& j, const std::string& path,
                                    const std::string& name) {
  if (j.contains("points") && j.at("points").is_array()) {
    // Product grid: per-axis lo/hi/points, enumerated row-major (last axis
    // fastest).
    const std::vector<double> lo = need_num_array(j, "lo", path);
    const std::vector<double> hi = need_num_array(j, "hi", path);
    std::vector<int> pts;
    for (const auto& e : j.at("points")) pts.push_back(e.get<int>());
    if (lo.size() != hi.size() || lo.size() != pts.size() || lo.empty()) {
      throw ConfigError("at " + path + ": lo/hi/points must have equal nonzero lengths");
    }
    std::size_t total = 1;
    std::vector<std::vector<double>> axes;
    for (std::size_t a = 0; a < lo.size(); ++a) {
      if (pts[a] < 1) throw ConfigError("at " + path + ": points must be >= 1");
      const ControlSet axis = discretize_interval(lo[a], hi[a], pts[a]);
      std::vector<double> vals;
      for (int i = 0; i < axis.size(); ++i) vals.push_back(axis.point(i)[0]);
      axes.push_back(std::move(vals));
      total *= static_cast<std::size_t>(pts[a]);
    }
    std::vector<double> flat;
    flat.reserve(total * lo.size());
    std::vector<std::size_t> idx(lo.size(), 0);
    for (std::size_t n = 0; n < total; ++n) {
      std::size_t rem = n;
      for (std::size_t a = lo.size(); a-- > 0;) {
        idx[a] = rem % axes[a].size();
        rem /= axes[a].size();
      }
      for (std::size_t a = 0; a < lo.size(); ++a) flat.push_back(axes[a][idx[a]]);
    }
    return ControlSet(std::move(flat), static_cast<int>(lo.size()), name);
  }
  const double lo = need_num(j, "lo", path);
  const double hi = need_num(j, "hi", path);
  const int points = need_int(j, "points", path);
  try {
    return discretize_interval(lo, hi, points, name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("at " + path + ": " + e.what());
  }
}

inline CostModel parse_cost(const njson& j, const std::string& path, const Box& domain) {
  const std::string kind = need_str(j, "kind", path);
  if (kind == "constant") return make_cost_constant(need_num(j, "value", path));
  if (kind == "linear") {
    return make_cost_linear(need_num_array(j, "coeffs", path), opt_num(j, "intercept", 0.0),
                            domain);
  }
  if (kind == "quadratic") return make_cost_quadratic(domain);
  if (kind == "abs") return make_cost_abs(domain);
  throw ConfigError("at " + path + "/kind: unknown cost kind '" + kind + "'");
}

inline GameDynamics parse_dynamics(const njson& j, const std::string& path, CostModel cost,
                                   const ControlSet& u_set, const ControlSet& v_set,
                                   const Box& domain) {
  const std::string kind = need_str(j, "kind", path);
  const int N = domain.dim();
  if (kind == "frozen") {
    return make_frozen(N, opt_int(j, "noise_dim", 1), std::move(cost));
  }
  if (kind == "constant-drift") {
    std::vector<double> a = need_num_array(j, "a", path);
    if (static_cast<int>(a.size()) != N) {
      throw ConfigError("at " + path + "/a: expected " + std::to_string(N) + " entries");
    }
    return make_constant_drift(std::move(a), opt_int(j, "noise_dim", 1), std::move(cost));
  }
  if (kind == "additive-noise") {
    return make_additive_noise(need_num(j, "sigma", path), N, opt_int(j, "noise_dim", N),
                               std::move(cost));
  }
  if (kind == "separated") {
    if (u_set.ambient_dim() != N || v_set.ambient_dim() != N) {
      throw ConfigError("at " + path + ": separated dynamics need control sets in R^" +
                        std::to_string(N));
    }
    return make_separated(need_num(j, "sigma", path), N, u_set, v_set, std::move(cost));
  }
  if (kind == "geometric") {
    if (N != 1) throw ConfigError("at " + path + ": geometric dynamics are one-dimensional");
    return make_geometric(need_num(j, "a", path), need_num(j, "c", path), domain,
                          std::move(cost));
  }
  if (kind == "bimatrix") {
    if (N != 1) throw ConfigError("at " + path + ": bimatrix dynamics are one-dimensional");
    const njson& m = need(j, "matrix", path);
    if (!m.is_array() || m.empty()) {
      throw ConfigError("at " + path + "/matrix: expected a non-empty array of rows");
    }
    std::vector<std::vector<double>> rows;
    for (const auto& r : m) {
      if (!r.is_array() || r.empty()) {
        throw ConfigError("at " + path + "/matrix: expected non-empty numeric rows");
      }
      rows.emplace_back();
      for (const auto& e : r) rows.back().push_back(e.get<double>());
    }
    // The drift indexes the matrix by rounding control values; make sure
    // every control point maps inside it.
    for (int i = 0; i < u_set.size(); ++i) {
      const auto r = std::llround(u_set.point(i)[0]);
      if (r < 0 || r >= static_cast<long long>(rows.size())) {
        throw ConfigError("at " + path + ": u control point " + std::to_string(i) +
                          " does not round into a matrix row");
      }
    }
    for (int i = 0; i < v_set.size(); ++i) {
      const auto c = std::llround(v_set.point(i)[0]);
      if (c < 0 || c >= static_cast<long long>(rows.front().size())) {
        throw ConfigError("at " + path + ": v control point " + std::to_string(i) +
                          " does not round into a matrix column");
      }
    }
    return make_bimatrix(std::move(rows), opt_num(j, "sigma", 0.0), std::move(cost));
  }
  throw ConfigError("at " + path + "/kind: unknown dynamics kind '" + kind + "'");
}

inline StrategyDesc parse_strategy_desc(const njson& j, const std::string& path) {
  StrategyDesc d;
  d.kind = need_str(j, "kind", path);
  if (d.kind == "constant") {
    d.index = need_int(j, "index", path);
  } else if (d.kind == "copy-lagged") {
    d.first_index = opt_int(j, "first_index", 0);
  } else if (d.kind == "table") {
    d.seed = static_cast<std::uint64_t>(need_int(j, "seed", path));
  } else if (d.kind == "feedback") {
    d.policy = need_str(j, "policy", path);
    if (d.policy != "plus" && d.policy != "minus") {
      throw ConfigError("at " + path + "/policy: expected 'plus' or 'minus'");
    }
  } else {
    throw ConfigError("at " + path + "/kind: unknown strategy kind '" + d.kind + "'");
  }
  d.delay_steps = opt_int(j, "delay_steps", 0);
  d.assumed_opp_index = opt_int(j, "assumed_opp_index", 0);
  d.label = j.contains("label") ? j.at("label").get<std::string>() : d.kind;
  return d;
}

inline std::vector<StrategyDesc> parse_family(const njson& parent, const std::string& key,
                                              const std::string& path) {
  const njson& arr = need(parent, key, path);
  if (!arr.is_array() || arr.empty()) {
    throw ConfigError("at " + path + "/" + key + ": expected a non-empty array");
  }
  std::vector<StrategyDesc> out;
  int i = 0;
  for (const auto& e : arr) {
    out.push_back(parse_strategy_desc(e, path + "/" + key + "[" + std::to_string(i) + "]"));
    ++i;
  }
  return out;
}

}  // namespace config

/// Parse and validate a scenario document.  Field errors are reported as
/// ConfigError with the JSON path of the offending field.
inline Scenario parse_scenario(const nlohmann::json& j) {
  using namespace config;
  Scenario sc;

  if (opt_int(j, "schema", -1) != 1) {
    throw ConfigError("at /schema: expected the integer 1");
  }
  sc.name = need_str(j, "name", "");
  sc.description = j.contains("description") ? j.at("description").get<std::string>() : "";

  // Space grid first: it doubles as the domain on which cost and coefficient
  // bounds are declared and probed.
  {
    const njson& s = need(j, "space", "");
    std::vector<double> lo = need_num_array(s, "lo", "/space");
    std::vector<double> hi = need_num_array(s, "hi", "/space");
    const njson& nodes_j = need(s, "nodes", "/space");
    if (!nodes_j.is_array()) throw ConfigError("at /space/nodes: expected an array");
    std::vector<int> nodes;
    for (const auto& e : nodes_j) nodes.push_back(e.get<int>());
    try {
      sc.space = SpaceGrid(std::move(lo), std::move(hi), std::move(nodes));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("at /space: ") + e.what());
    }
  }
  Box domain;
  for (int a = 0; a < sc.space.dim(); ++a) {
    domain.lo.push_back(sc.space.lo(a));
    domain.hi.push_back(sc.space.hi(a));
  }

  if (j.contains("report")) {
    const njson& r = j.at("report");
    sc.report.lo = need_num_array(r, "lo", "/report");
    sc.report.hi = need_num_array(r, "hi", "/report");
    if (sc.report.dim() != sc.space.dim()) {
      throw ConfigError("at /report: dimension differs from /space");
    }
    for (int a = 0; a < sc.space.dim(); ++a) {
      if (sc.report.lo[static_cast<std::size_t>(a)] < sc.space.lo(a) - 1e-12 ||
          sc.report.hi[static_cast<std::size_t>(a)] > sc.space.hi(a) + 1e-12) {
        throw ConfigError("at /report: region must lie inside /space");
      }
    }
  } else {
    sc.report = domain;
  }

  sc.u_set = parse_control_set(need(need(j, "controls", ""), "u", "/controls"),
                               "/controls/u", "u");
  sc.v_set = parse_control_set(need(need(j, "controls", ""), "v", "/controls"),
                               "/controls/v", "v");

  CostModel cost = parse_cost(need(j, "cost", ""), "/cost", domain);
  sc.dynamics_kind = need_str(need(j, "dynamics", ""), "kind", "/dynamics");
  sc.dynamics = parse_dynamics(j.at("dynamics"), "/dynamics", std::move(cost), sc.u_set,
                               sc.v_set, domain);
  if (sc.dynamics.state_dim != sc.space.dim()) {
    throw ConfigError("at /dynamics: state dimension does not match /space");
  }
  try {
    validate_dynamics(sc.dynamics, sc.u_set, sc.v_set, domain, 256, 0xddULL);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("at /dynamics: ") + e.what());
  }

  {
    const njson& t = need(j, "time", "");
    try {
      sc.grid = TimeGrid(need_num(t, "t0", "/time"), need_num(t, "t_final", "/time"),
                         need_int(t, "n_steps", "/time"), need_int(t, "delay_steps", "/time"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("at /time: ") + e.what());
    }
  }

  sc.x0 = need_num_array(j, "x0", "");
  if (static_cast<int>(sc.x0.size()) != sc.dynamics.state_dim) {
    throw ConfigError("at /x0: expected " + std::to_string(sc.dynamics.state_dim) +
                      " coordinates");
  }
  if (!domain.contains(sc.x0)) {
    throw ConfigError("at /x0: initial state lies outside /space");
  }

  {
    const njson& s = need(j, "strategies", "");
    sc.alpha_desc = parse_strategy_desc(need(s, "alpha", "/strategies"), "/strategies/alpha");
    sc.beta_desc = parse_strategy_desc(need(s, "beta", "/strategies"), "/strategies/beta");
  }

  if (j.contains("hji")) {
    const njson& h = j.at("hji");
    sc.hji_cfl = opt_num(h, "cfl", 0.45);
    sc.store_policy = opt_bool(h, "store_policy", false);
    sc.ordering_tolerance = opt_num(h, "ordering_tolerance", 1e-9);
    sc.expect_sweeps_identical = opt_bool(h, "expect_sweeps_identical", false);
    if (h.contains("reference")) {
      const njson& r = h.at("reference");
      sc.reference.present = true;
      sc.reference.kind = need_str(r, "kind", "/hji/reference");
      sc.reference.tolerance = need_num(r, "tolerance", "/hji/reference");
      if (sc.reference.kind != "terminal" && sc.reference.kind != "quadratic-diffusion" &&
          sc.reference.kind != "eikonal") {
        throw ConfigError("at /hji/reference/kind: unknown reference '" + sc.reference.kind +
                          "'");
      }
      if (sc.reference.kind == "eikonal" && sc.space.dim() != 1) {
        throw ConfigError("at /hji/reference: the eikonal reference is one-dimensional");
      }
    }
  }

  {
    const njson& m = need(j, "mc", "");
    sc.mc_paths = need_int(m, "n_paths", "/mc");
    sc.mc_seed = static_cast<std::uint64_t>(need_int(m, "seed", "/mc"));
    if (sc.mc_paths < 1) throw ConfigError("at /mc/n_paths: must be >= 1");
  }

  if (j.contains("isaacs")) {
    const njson& is = j.at("isaacs");
    sc.has_isaacs = true;
    sc.isaacs_queries = opt_int(is, "n_queries", 100);
    if (is.contains("seed")) {
      sc.isaacs_seed = static_cast<std::uint64_t>(is.at("seed").get<long long>());
    }
    sc.isaacs_tolerance = opt_num(is, "tolerance", 1e-12);
    sc.isaacs_expect_holds = opt_bool(is, "expect_holds", true);
    sc.isaacs_grad_scale = opt_num(is, "grad_scale", 1.0);
    sc.isaacs_hess_scale = opt_num(is, "hess_scale", 1.0);
  }

  if (j.contains("dpp")) {
    const njson& d = j.at("dpp");
    sc.has_dpp = true;
    sc.dpp_t1 = need_num(d, "t1", "/dpp");
    sc.dpp_scheme_coeff = opt_num(d, "scheme_coeff", 2.0);
    sc.dpp_paths = opt_int(d, "n_paths", 2000);
    sc.dpp_expect_equality = opt_bool(d, "expect_equality", false);
    sc.alpha_family = config::parse_family(d, "alpha_family", "/dpp");
    sc.v_family = config::parse_family(d, "v_family", "/dpp");
    sc.beta_family = config::parse_family(d, "beta_family", "/dpp");
    sc.u_family = config::parse_family(d, "u_family", "/dpp");
    try {
      (void)sc.grid.node_of(sc.dpp_t1);
    } catch (const std::invalid_argument&) {
      throw ConfigError("at /dpp/t1: must coincide with a time-grid node");
    }
    if (!(sc.dpp_t1 > sc.grid.t0()) || !(sc.dpp_t1 < sc.grid.t_final())) {
      throw ConfigError("at /dpp/t1: must lie strictly between t0 and t_final");
    }
  }

  if (j.contains("regularity")) {
    const njson& r = j.at("regularity");
    sc.reg_probe_h = opt_num(r, "probe_h", 0.1);
    sc.reg_headroom = opt_num(r, "headroom", 1.1);
    sc.reg_paths = opt_int(r, "n_paths", 2000);
  }

  if (j.contains("expect")) {
    const njson& e = j.at("expect");
    if (!e.is_object()) throw ConfigError("at /expect: expected an object");
    for (const auto& [key, spec] : e.items()) {
      Scenario::Expectation ex;
      ex.key = key;
      ex.value = need_num(spec, "value", "/expect/" + key);
      ex.tolerance = opt_num(spec, "tol", 0.0);
      sc.expects.push_back(std::move(ex));
    }
  }

  {
    const njson& st = need(j, "stages", "");
    if (!st.is_array() || st.empty()) {
      throw ConfigError("at /stages: expected a non-empty array");
    }
    static const std::vector<std::string> canonical = {
        "simulate", "fixpoint", "solve-hji", "check-isaacs", "check-dpp", "regularity"};
    int last = -1;
    for (const auto& e : st) {
      const std::string s = e.get<std::string>();
      const auto it = std::find(canonical.begin(), canonical.end(), s);
      if (it == canonical.end()) {
        throw ConfigError("at /stages: unknown stage '" + s + "'");
      }
      const int pos = static_cast<int>(it - canonical.begin());
      if (pos <= last) {
        throw ConfigError("at /stages: stages must follow the canonical order without "
                          "duplicates (" +
                          s + " is out of place)");
      }
      last = pos;
      sc.stages.push_back(s);
    }
    auto listed = [&](const std::string& s) {
      return std::find(sc.stages.begin(), sc.stages.end(), s) != sc.stages.end();
    };
    if (listed("check-isaacs") && !sc.has_isaacs) {
      throw ConfigError("at /stages: check-isaacs requires an /isaacs section");
    }
    if (listed("check-dpp") && !sc.has_dpp) {
      throw ConfigError("at /stages: check-dpp requires a /dpp section");
    }
    if ((listed("check-dpp") || listed("regularity")) && !listed("solve-hji")) {
      throw ConfigError("at /stages: check-dpp and regularity require solve-hji");
    }
    const bool base_feedback =
        sc.alpha_desc.kind == "feedback" || sc.beta_desc.kind == "feedback";
    if (base_feedback && (listed("simulate") || listed("fixpoint"))) {
      throw ConfigError(
          "at /strategies: feedback base strategies cannot drive simulate/fixpoint, "
          "which run before solve-hji");
    }
  }
  return sc;
}

inline Scenario load_scenario(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open scenario file: " + file);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("scenario file " + file + " is not valid JSON: " + e.what());
  }
  return parse_scenario(j);
}

// ---------------------------------------------------------------------------
// Scenario runner.
// ---------------------------------------------------------------------------

/// One named pass/fail observation in a run summary.
struct CheckResult {
  std::string stage;
  std::string name;
  double observed = 0.0;
  double bound = 0.0;
  bool pass = false;
  std::string note;
};

/// Command-line overrides applied on top of the scenario file.
struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> n_paths;
  std::string out_dir;
  bool quiet = false;
  std::vector<std::string> stages;  ///< non-empty: run exactly these stages
};

struct RunResult {
  nlohmann::ordered_json summary;
  std::vector<CheckResult> checks;
  bool all_pass = true;
};

namespace detail {

/// Materialize one strategy descriptor.  Feedback descriptors need a solved
/// grid with a stored policy.
inline DelayedStrategy make_strategy(const Scenario& sc, const StrategyDesc& d, Player side,
                                     const std::shared_ptr<const ValueGrid>& plus,
                                     const std::shared_ptr<const ValueGrid>& minus) {
  const ControlSet& own = side == Player::I ? sc.u_set : sc.v_set;
  const ControlSet& opp = side == Player::I ? sc.v_set : sc.u_set;
  const int delay = d.delay_steps > 0 ? d.delay_steps : sc.grid.delay_steps();
  if (d.kind == "constant") {
    return constant_strategy(side, own, delay, d.index, d.label);
  }
  if (d.kind == "copy-lagged") {
    return copy_lagged_strategy(side, own, delay, d.first_index, d.label);
  }
  if (d.kind == "table") {
    return table_strategy(side, own, delay, d.seed, d.label);
  }
  if (d.kind == "feedback") {
    const std::shared_ptr<const ValueGrid>& vg = d.policy == "minus" ? minus : plus;
    if (!vg) {
      throw std::runtime_error("strategy '" + d.label +
                               "' needs the solved " + d.policy +
                               " grid; run the solve-hji stage first");
    }
    return make_feedback_strategy(sc.dynamics, sc.x0,
                                  make_grid_policy(vg, side == Player::I), side, own, opp,
                                  sc.grid, delay, d.label);
  }
  throw std::logic_error("make_strategy: unhandled kind " + d.kind);
}

inline ControlGenerator make_generator(const Scenario& sc, const StrategyDesc& d, Player side,
                                       const std::shared_ptr<const ValueGrid>& plus,
                                       const std::shared_ptr<const ValueGrid>& minus) {
  ControlGenerator gen;
  gen.strat = make_strategy(sc, d, side, plus, minus);
  gen.assumed_opp_index = d.assumed_opp_index;
  gen.label = d.label;
  const ControlSet& opp = side == Player::I ? sc.v_set : sc.u_set;
  if (gen.assumed_opp_index < 0 || gen.assumed_opp_index >= opp.size()) {
    throw std::runtime_error("generator '" + d.label +
                             "': assumed_opp_index outside the opponent set");
  }
  return gen;
}

inline std::function<double(double, std::span<const double>)> make_reference(
    const Scenario& sc) {
  if (sc.reference.kind == "terminal") {
    return [g = sc.dynamics.cost.g](double, std::span<const double> x) { return g(x); };
  }
  if (sc.reference.kind == "quadratic-diffusion") {
    // V(t, x) = g(x) + tr(sigma sigma^T) * (T - t) for g(x) = |x|^2 and
    // state-independent diffusion; evaluate the trace once at (x0, u0, v0).
    const int N = sc.dynamics.state_dim;
    const int d = sc.dynamics.noise_dim;
    std::vector<double> sig(static_cast<std::size_t>(N) * d);
    sc.dynamics.diffusion(sc.x0, sc.u_set.point(0), sc.v_set.point(0), sig);
    double trace = 0.0;
    for (int i = 0; i < N; ++i) {
      for (int c = 0; c < d; ++c) {
        const double s = sig[static_cast<std::size_t>(i) * d + c];
        trace += s * s;
      }
    }
    const double t_final = sc.grid.t_final();
    return [g = sc.dynamics.cost.g, trace, t_final](double t, std::span<const double> x) {
      return g(x) + trace * (t_final - t);
    };
  }
  if (sc.reference.kind == "eikonal") {
    const double t_final = sc.grid.t_final();
    return [t_final](double t, std::span<const double> x) {
      return std::max(std::abs(x[0]) - (t_final - t), 0.0);
    };
  }
  throw std::logic_error("make_reference: unhandled kind " + sc.reference.kind);
}

inline void write_file(const std::filesystem::path& dir, const std::string& name,
                       const std::function<void(std::ostream&)>& body,
                       std::vector<std::string>& artifacts, bool binary = false) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  std::ofstream os(dir / name, binary ? std::ios::binary : std::ios::out);
  if (!os) throw std::runtime_error("cannot write artifact: " + (dir / name).string());
  body(os);
  artifacts.push_back(name);
}

}  // namespace detail

/// Run a scenario's stages (or the override subset) and assemble the summary
/// document.  All randomness derives from one base seed, so two runs with
/// identical inputs produce byte-identical summaries and artifacts.
inline RunResult run_scenario(const Scenario& sc, const RunOverrides& ov = {},
                              std::ostream* log = &std::cout) {
  const std::uint64_t seed = ov.seed.value_or(sc.mc_seed);
  const int mc_paths = ov.n_paths.value_or(sc.mc_paths);
  const int dpp_paths = ov.n_paths.value_or(sc.dpp_paths);
  const int reg_paths = ov.n_paths.value_or(sc.reg_paths);
  const std::filesystem::path out_dir = ov.out_dir;
  if (ov.quiet) log = nullptr;

  std::vector<std::string> stages = ov.stages.empty() ? sc.stages : ov.stages;
  for (const std::string& s : stages) {
    if (std::find(sc.stages.begin(), sc.stages.end(), s) == sc.stages.end() &&
        !(s == "solve-hji")) {
      throw std::invalid_argument("stage '" + s + "' is not configured in scenario '" +
                                  sc.name + "'");
    }
  }
  auto requested = [&](const std::string& s) {
    return std::find(stages.begin(), stages.end(), s) != stages.end();
  };

  RunResult result;
  std::vector<std::string> artifacts;
  nlohmann::ordered_json values;

  auto check = [&](const std::string& stage, const std::string& name, double observed,
                   double bound, bool pass, const std::string& note = "") {
    result.checks.push_back({stage, name, observed, bound, pass, note});
    result.all_pass = result.all_pass && pass;
    if (log) {
      (*log) << (pass ? "[PASS] " : "[FAIL] ") << stage << "/" << name
             << "  observed=" << detail::format_double(observed)
             << " bound=" << detail::format_double(bound);
      if (!note.empty()) (*log) << "  (" << note << ")";
      (*log) << "\n";
    }
  };

  std::shared_ptr<const ValueGrid> plus, minus;
  const bool needs_grids =
      requested("solve-hji") || requested("check-dpp") || requested("regularity");

  // Base strategies are needed by several stages; materialize lazily because
  // feedback strategies require solved grids.
  std::optional<DelayedStrategy> alpha, beta;
  auto base_pair = [&]() -> std::pair<const DelayedStrategy&, const DelayedStrategy&> {
    if (!alpha) {
      alpha = detail::make_strategy(sc, sc.alpha_desc, Player::I, plus, minus);
      beta = detail::make_strategy(sc, sc.beta_desc, Player::II, plus, minus);
    }
    return {*alpha, *beta};
  };

  // --- solve-hji (run early when later stages depend on the grids) ---------
  if (needs_grids) {
    HjiOptions opt;
    opt.cfl = sc.hji_cfl;
    opt.store_policy = sc.store_policy;
    plus = std::make_shared<const ValueGrid>(
        solve_hji(sc.dynamics, sc.space, sc.grid, HjiKind::Plus, sc.u_set, sc.v_set, opt));
    minus = std::make_shared<const ValueGrid>(
        solve_hji(sc.dynamics, sc.space, sc.grid, HjiKind::Minus, sc.u_set, sc.v_set, opt));
  }

  // --- simulate -------------------------------------------------------------
  if (requested("simulate")) {
    const auto [a, b] = base_pair();
    const BrownianPath w =
        sample_brownian(sc.grid, sc.dynamics.noise_dim, rng::derive_seed(seed, 100));
    const ControlPair pair = fixed_point(a, b, w);
    const StatePath path = integrate(sc.dynamics, sc.x0, pair.u, pair.v, w);
    detail::write_file(out_dir, "noise.csv",
                       [&](std::ostream& os) { write_noise_csv(os, w); }, artifacts);
    detail::write_file(out_dir, "states.csv",
                       [&](std::ostream& os) { write_states_csv(os, path); }, artifacts);
    const McEstimate cost =
        estimate_cost(sc.dynamics, sc.x0, a, b, sc.grid, mc_paths, rng::derive_seed(seed, 200));
    values["cost_mean"] = cost.mean;
    values["cost_std_error"] = cost.std_error;
    values["cost_n_paths"] = cost.n_paths;
    values["showcase_terminal_cost"] = sc.dynamics.cost.g(path.final_state());
  }

  // --- fixpoint ---------------------------------------------------------------
  if (requested("fixpoint")) {
    const auto [a, b] = base_pair();
    const int n_check = 16;
    int replay_fail = 0;
    int order_fail = 0;
    std::optional<ControlPair> showcase;
    for (int i = 0; i < n_check; ++i) {
      const BrownianPath w = sample_brownian(sc.grid, sc.dynamics.noise_dim,
                                             rng::derive_seed(seed, 300 + static_cast<std::uint64_t>(i)));
      const ControlPair p1 = fixed_point(a, b, w, ResolveOrder::PlayerIFirst);
      const ControlPair p2 = fixed_point(a, b, w, ResolveOrder::PlayerIIFirst);
      if (!verify_fixed_point(a, b, w, p1)) ++replay_fail;
      const int n = sc.grid.n_steps();
      if (!prefix_equal(p1.u, p2.u, n) || !prefix_equal(p1.v, p2.v, n)) ++order_fail;
      if (i == 0) showcase = p1;
    }
    check("fixpoint", "replay", replay_fail, 0, replay_fail == 0,
          std::to_string(n_check) + " noise paths");
    check("fixpoint", "order-invariance", order_fail, 0, order_fail == 0);

    const DelayReport da =
        verify_delay(a, sc.grid, sc.dynamics.noise_dim, sc.v_set, 32, rng::derive_seed(seed, 400));
    check("fixpoint", "alpha-delay-class", da.pass ? 0 : 1, 0, da.pass, da.counterexample);
    const DelayReport db =
        verify_delay(b, sc.grid, sc.dynamics.noise_dim, sc.u_set, 32, rng::derive_seed(seed, 401));
    check("fixpoint", "beta-delay-class", db.pass ? 0 : 1, 0, db.pass, db.counterexample);

    detail::write_file(out_dir, "controls.csv",
                       [&](std::ostream& os) { write_controls_csv(os, showcase->u, showcase->v); },
                       artifacts);
  }

  // --- solve-hji checks -------------------------------------------------------
  if (requested("solve-hji")) {
    const OrderingReport ord = compare_values(*plus, *minus, sc.ordering_tolerance);
    check("solve-hji", "value-ordering", ord.min_diff, -sc.ordering_tolerance, ord.ordered,
          "min over " + std::to_string(ord.n_compared) + " entries of upper - lower");
    values["value_gap_max"] = ord.max_diff;
    values["value_gap_min"] = ord.min_diff;

    double max_abs = 0.0;
    for (double v : plus->raw_values()) max_abs = std::max(max_abs, std::abs(v));
    for (double v : minus->raw_values()) max_abs = std::max(max_abs, std::abs(v));
    check("solve-hji", "value-bound", max_abs, sc.dynamics.cost.bound + 1e-9,
          max_abs <= sc.dynamics.cost.bound + 1e-9,
          "max |V| against the terminal-cost bound");

    if (sc.expect_sweeps_identical) {
      double max_diff = 0.0;
      const auto pv = plus->raw_values();
      const auto mv = minus->raw_values();
      for (std::size_t i = 0; i < pv.size(); ++i) {
        max_diff = std::max(max_diff, std::abs(pv[i] - mv[i]));
      }
      check("solve-hji", "sweeps-identical", max_diff, 0.0, max_diff == 0.0,
            "upper and lower sweeps must coincide bit for bit");
    }

    if (sc.reference.present) {
      const auto ref = detail::make_reference(sc);
      const double err_plus = max_error_against(*plus, ref, &sc.report);
      const double err_minus = max_error_against(*minus, ref, &sc.report);
      check("solve-hji", "reference-error-plus", err_plus, sc.reference.tolerance,
            err_plus <= sc.reference.tolerance, sc.reference.kind + " reference, report region");
      check("solve-hji", "reference-error-minus", err_minus, sc.reference.tolerance,
            err_minus <= sc.reference.tolerance, sc.reference.kind + " reference, report region");
    }

    values["v_plus_at_x0"] = plus->interpolate(0, sc.x0);
    values["v_minus_at_x0"] = minus->interpolate(0, sc.x0);

    detail::write_file(out_dir, "vplus.csv",
                       [&](std::ostream& os) { write_value_grid_csv(os, *plus); }, artifacts);
    detail::write_file(out_dir, "vminus.csv",
                       [&](std::ostream& os) { write_value_grid_csv(os, *minus); }, artifacts);
    detail::write_file(out_dir, "vplus.bin",
                       [&](std::ostream& os) { write_value_grid_binary(os, *plus); },
                       artifacts, /*binary=*/true);
    detail::write_file(out_dir, "vminus.bin",
                       [&](std::ostream& os) { write_value_grid_binary(os, *minus); },
                       artifacts, /*binary=*/true);
  }

  // --- check-isaacs ------------------------------------------------------------
  if (requested("check-isaacs")) {
    Box domain;
    for (int a2 = 0; a2 < sc.space.dim(); ++a2) {
      domain.lo.push_back(sc.space.lo(a2));
      domain.hi.push_back(sc.space.hi(a2));
    }
    const SaddleReport rep = check_isaacs(
        sc.dynamics, sc.u_set, sc.v_set, domain, sc.isaacs_queries,
        sc.isaacs_seed.value_or(rng::derive_seed(seed, 500)), sc.isaacs_tolerance,
        sc.isaacs_grad_scale, sc.isaacs_hess_scale);
    check("check-isaacs", "weak-duality", rep.min_gap, -1e-12, rep.min_gap >= -1e-12,
          "minimax must dominate maximin at every query");
    if (sc.isaacs_expect_holds) {
      check("check-isaacs", "expectation", rep.max_gap, sc.isaacs_tolerance, rep.holds,
            "largest gap over " + std::to_string(rep.n_queries) + " queries");
    } else {
      check("check-isaacs", "expectation", rep.max_gap, sc.isaacs_tolerance, !rep.holds,
            "dynamics are expected to produce a positive gap");
    }
    values["isaacs_max_gap"] = rep.max_gap;
    values["isaacs_mean_gap"] = rep.mean_gap;
  }

  // --- check-dpp -----------------------------------------------------------------
  if (requested("check-dpp")) {
    std::vector<DelayedStrategy> alphas, betas;
    std::vector<ControlGenerator> v_gens, u_gens;
    for (const auto& d : sc.alpha_family) {
      alphas.push_back(detail::make_strategy(sc, d, Player::I, plus, minus));
    }
    for (const auto& d : sc.beta_family) {
      betas.push_back(detail::make_strategy(sc, d, Player::II, plus, minus));
    }
    for (const auto& d : sc.v_family) {
      v_gens.push_back(detail::make_generator(sc, d, Player::II, plus, minus));
    }
    for (const auto& d : sc.u_family) {
      u_gens.push_back(detail::make_generator(sc, d, Player::I, plus, minus));
    }

    const DppReport sub = check_subdpp(sc.dynamics, sc.x0, sc.grid, *plus, sc.dpp_t1, alphas,
                                       v_gens, dpp_paths, rng::derive_seed(seed, 600),
                                       sc.dpp_scheme_coeff);
    check("check-dpp", "sub-margin", sub.margin, -sub.tolerance, sub.pass,
          "propagated minimax minus the grid value at (t0, x0)");
    const DppReport super = check_superdpp(sc.dynamics, sc.x0, sc.grid, *minus, sc.dpp_t1,
                                           betas, u_gens, dpp_paths,
                                           rng::derive_seed(seed, 601), sc.dpp_scheme_coeff);
    check("check-dpp", "super-margin", super.margin, -super.tolerance, super.pass,
          "grid value at (t0, x0) minus the propagated minimax");
    if (sc.dpp_expect_equality) {
      check("check-dpp", "sub-equality", std::abs(sub.margin), sub.tolerance,
            std::abs(sub.margin) <= sub.tolerance, "two-sided margin");
      check("check-dpp", "super-equality", std::abs(super.margin), super.tolerance,
            std::abs(super.margin) <= super.tolerance, "two-sided margin");
    }
    values["subdpp_lhs"] = sub.lhs;
    values["subdpp_rhs"] = sub.rhs;
    values["subdpp_margin"] = sub.margin;
    values["superdpp_lhs"] = super.lhs;
    values["superdpp_rhs"] = super.rhs;
    values["superdpp_margin"] = super.margin;
  }

  // --- regularity -------------------------------------------------------------
  if (requested("regularity")) {
    const double horizon = sc.grid.t_final() - sc.grid.t0();
    const double lip_bound = sc.dynamics.cost.lip * std::exp(sc.dynamics.lip_const * horizon);
    const RegularityReport rp = estimate_regularity(*plus, &sc.report);
    const RegularityReport rm = estimate_regularity(*minus, &sc.report);
    check("regularity", "lipschitz-vplus", rp.lip_x, lip_bound * sc.reg_headroom,
          rp.lip_x <= lip_bound * sc.reg_headroom, "report region");
    check("regularity", "lipschitz-vminus", rm.lip_x, lip_bound * sc.reg_headroom,
          rm.lip_x <= lip_bound * sc.reg_headroom, "report region");
    const bool holder_ok = std::isfinite(rp.holder_t) && std::isfinite(rm.holder_t);
    check("regularity", "holder-finite", std::max(rp.holder_t, rm.holder_t),
          std::numeric_limits<double>::max(), holder_ok,
          "1/2-Hoelder-in-time constants over dyadic level gaps");
    values["lip_vplus"] = rp.lip_x;
    values["lip_vminus"] = rm.lip_x;
    values["holder_vplus"] = rp.holder_t;
    values["holder_vminus"] = rm.holder_t;

    const auto [a, b] = base_pair();
    const CostLipschitzReport cj =
        probe_cost_lipschitz(sc.dynamics, sc.x0, a, b, sc.grid, reg_paths,
                             rng::derive_seed(seed, 700), sc.reg_probe_h, 0, sc.reg_headroom);
    check("regularity", "lipschitz-cost", cj.ratio,
          cj.bound * sc.reg_headroom + 3.0 * cj.std_error, cj.pass,
          "difference quotient of the estimated cost in x0");
    values["cost_lip_ratio"] = cj.ratio;
    values["cost_lip_bound"] = cj.bound;
  }

  // --- expectations -------------------------------------------------------------
  // Under a stage-subset override, expectations whose producing stage was
  // skipped are silently inapplicable; in a config-driven full run a missing
  // value is a configuration bug and fails loudly.
  const bool stage_subset = !ov.stages.empty();
  for (const auto& ex : sc.expects) {
    if (!values.contains(ex.key)) {
      if (stage_subset) continue;
      check("expect", ex.key, std::numeric_limits<double>::quiet_NaN(), ex.value, false,
            "expected value was not produced by the stages that ran");
      continue;
    }
    const double got = values.at(ex.key).get<double>();
    check("expect", ex.key, got, ex.value, std::abs(got - ex.value) <= ex.tolerance,
          "tolerance " + detail::format_double(ex.tolerance));
  }

  // --- summary -------------------------------------------------------------------
  nlohmann::ordered_json summary;
  summary["schema"] = 1;
  summary["scenario"] = sc.name;
  summary["seed"] = seed;
  summary["stages"] = stages;
  nlohmann::ordered_json checks_json = nlohmann::ordered_json::array();
  for (const CheckResult& c : result.checks) {
    nlohmann::ordered_json cj;
    cj["stage"] = c.stage;
    cj["name"] = c.name;
    cj["observed"] = c.observed;
    cj["bound"] = c.bound;
    cj["pass"] = c.pass;
    if (!c.note.empty()) cj["note"] = c.note;
    checks_json.push_back(std::move(cj));
  }
  summary["checks"] = std::move(checks_json);
  summary["values"] = std::move(values);
  summary["artifacts"] = artifacts;
  summary["all_pass"] = result.all_pass;
  result.summary = std::move(summary);

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream os(out_dir / "summary.json", std::ios::binary);
    if (!os) {
      throw std::runtime_error("cannot write " + (out_dir / "summary.json").string());
    }
    os << result.summary.dump(2) << "\n";
  }
  if (log) {
    (*log) << (result.all_pass ? "all checks passed" : "SOME CHECKS FAILED") << " ("
           << sc.name << ")\n";
  }
  return result;
}

}  // namespace sdg
