#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sdg/dynamics.hpp"
#include "sdg/paths.hpp"
#include "sdg/rng.hpp"
#include "sdg/strategy.hpp"
#include "sdg/time_grid.hpp"
#include "sdg/value_grid.hpp"

namespace sdg {

/// Sample mean with its standard error (sample standard deviation divided by
/// sqrt(n); zero when n == 1 or when every sample is identical).
struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  int n_paths = 0;
};

namespace detail {

/// Welford accumulation: numerically stable and single-pass, so estimates do
/// not depend on a second traversal order.
class MeanAccumulator {
 public:
  void add(double x) noexcept {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / n_;
    m2_ += delta * (x - mean_);
  }

  McEstimate estimate() const {
    McEstimate e;
    e.n_paths = static_cast<int>(n_);
    e.mean = mean_;
    if (n_ > 1) {
      const double var = m2_ / (static_cast<double>(n_) - 1.0);
      e.std_error = var > 0.0 ? std::sqrt(var / static_cast<double>(n_)) : 0.0;
    }
    return e;
  }

 private:
  long long n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

}  // namespace detail

/// Expected terminal cost of the game under a strategy pair: for each path,
/// resolve the pair to controls, integrate, and evaluate the terminal cost.
/// Path i always uses the sub-seed derive_seed(seed, i), so estimates are
/// reproducible and extend consistently when n_paths grows.
inline McEstimate estimate_cost(const GameDynamics& dyn, std::span<const double> x0,
                                const DelayedStrategy& alpha, const DelayedStrategy& beta,
                                const TimeGrid& grid, int n_paths, std::uint64_t seed) {
  if (n_paths < 1) throw std::invalid_argument("estimate_cost: n_paths must be >= 1");
  detail::MeanAccumulator acc;
  for (int i = 0; i < n_paths; ++i) {
    const BrownianPath w =
        sample_brownian(grid, dyn.noise_dim, rng::derive_seed(seed, static_cast<std::uint64_t>(i)));
    const ControlPair pair = fixed_point(alpha, beta, w);
    const StatePath path = integrate(dyn, x0, pair.u, pair.v, w);
    acc.add(dyn.cost.g(path.final_state()));
  }
  return acc.estimate();
}

/// A control generator: a delayed strategy closed off with a fixed assumed
/// opponent index, so it maps a noise path alone to a control path.  These
/// are the elements of the restricted control families that the value
/// estimates and the dynamic-programming checks range over.
struct ControlGenerator {
  DelayedStrategy strat;
  int assumed_opp_index = 0;
  std::string label;
};

/// Resolve a generator on one noise path.  opp_set is the opponent's control
/// set, from which the assumed constant path is built.
inline ControlPath generate_control(const ControlGenerator& gen, const ControlSet& opp_set,
                                    const BrownianPath& w) {
  if (gen.assumed_opp_index < 0 || gen.assumed_opp_index >= opp_set.size()) {
    throw std::invalid_argument("generate_control: assumed_opp_index outside opponent set");
  }
  const ControlPath assumed(w.grid(), opp_set,
                            std::vector<int>(static_cast<std::size_t>(w.grid().n_steps()),
                                             gen.assumed_opp_index));
  return apply_strategy(gen.strat, w, assumed);
}

/// A minimax estimate over finite families, with the full estimate table
/// (strategy-major) retained for reporting.
struct FamilyValue {
  McEstimate value;
  int best_strategy = -1;
  int best_generator = -1;
  std::vector<std::vector<McEstimate>> table;
};

namespace detail {

/// Common noise for every cell of a family table: one path set, sampled once
/// from the base seed, shared by all strategy/generator combinations.  This
/// makes cell comparisons low-variance and the whole table reproducible.
inline std::vector<BrownianPath> sample_common_paths(const TimeGrid& grid, int noise_dim,
                                                     int n_paths, std::uint64_t seed) {
  std::vector<BrownianPath> paths;
  paths.reserve(static_cast<std::size_t>(n_paths));
  for (int i = 0; i < n_paths; ++i) {
    paths.push_back(
        sample_brownian(grid, noise_dim, rng::derive_seed(seed, static_cast<std::uint64_t>(i))));
  }
  return paths;
}

}  // namespace detail

/// Upper-value estimate over restricted families: strategies `alphas` for
/// player I against control generators `v_gens` for player II,
///
///   upper = min over alpha of max over v of mean[ g(X_T^{alpha(v), v}) ].
///
/// Ties break toward the lowest index at both layers.  All cells share one
/// common set of noise paths.
inline FamilyValue estimate_upper_value(const GameDynamics& dyn, std::span<const double> x0,
                                        const TimeGrid& grid,
                                        const std::vector<DelayedStrategy>& alphas,
                                        const std::vector<ControlGenerator>& v_gens,
                                        int n_paths, std::uint64_t seed) {
  if (alphas.empty() || v_gens.empty()) {
    throw std::invalid_argument("estimate_upper_value: families must be non-empty");
  }
  if (n_paths < 1) throw std::invalid_argument("estimate_upper_value: n_paths must be >= 1");
  const std::vector<BrownianPath> paths =
      detail::sample_common_paths(grid, dyn.noise_dim, n_paths, seed);

  // Generator outputs do not depend on alpha; resolve them once per path.
  std::vector<std::vector<ControlPath>> v_paths;
  v_paths.reserve(v_gens.size());
  for (const ControlGenerator& gen : v_gens) {
    std::vector<ControlPath> per_path;
    per_path.reserve(paths.size());
    for (const BrownianPath& w : paths) {
      per_path.push_back(generate_control(gen, alphas.front().set, w));
    }
    v_paths.push_back(std::move(per_path));
  }

  FamilyValue out;
  out.table.assign(alphas.size(), std::vector<McEstimate>(v_gens.size()));
  double best_outer = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    double inner_max = -std::numeric_limits<double>::infinity();
    int inner_arg = -1;
    for (std::size_t j = 0; j < v_gens.size(); ++j) {
      detail::MeanAccumulator acc;
      for (std::size_t i = 0; i < paths.size(); ++i) {
        const ControlPath& v = v_paths[j][i];
        const ControlPath u = apply_strategy(alphas[a], paths[i], v);
        const StatePath path = integrate(dyn, x0, u, v, paths[i]);
        acc.add(dyn.cost.g(path.final_state()));
      }
      out.table[a][j] = acc.estimate();
      if (out.table[a][j].mean > inner_max) {
        inner_max = out.table[a][j].mean;
        inner_arg = static_cast<int>(j);
      }
    }
    if (inner_max < best_outer) {
      best_outer = inner_max;
      out.best_strategy = static_cast<int>(a);
      out.best_generator = inner_arg;
    }
  }
  out.value = out.table[static_cast<std::size_t>(out.best_strategy)]
                       [static_cast<std::size_t>(out.best_generator)];
  return out;
}

/// Lower-value estimate over restricted families: strategies `betas` for
/// player II against control generators `u_gens` for player I,
///
///   lower = max over beta of min over u of mean[ g(X_T^{u, beta(u)}) ].
inline FamilyValue estimate_lower_value(const GameDynamics& dyn, std::span<const double> x0,
                                        const TimeGrid& grid,
                                        const std::vector<DelayedStrategy>& betas,
                                        const std::vector<ControlGenerator>& u_gens,
                                        int n_paths, std::uint64_t seed) {
  if (betas.empty() || u_gens.empty()) {
    throw std::invalid_argument("estimate_lower_value: families must be non-empty");
  }
  if (n_paths < 1) throw std::invalid_argument("estimate_lower_value: n_paths must be >= 1");
  const std::vector<BrownianPath> paths =
      detail::sample_common_paths(grid, dyn.noise_dim, n_paths, seed);

  std::vector<std::vector<ControlPath>> u_paths;
  u_paths.reserve(u_gens.size());
  for (const ControlGenerator& gen : u_gens) {
    std::vector<ControlPath> per_path;
    per_path.reserve(paths.size());
    for (const BrownianPath& w : paths) {
      per_path.push_back(generate_control(gen, betas.front().set, w));
    }
    u_paths.push_back(std::move(per_path));
  }

  FamilyValue out;
  out.table.assign(betas.size(), std::vector<McEstimate>(u_gens.size()));
  double best_outer = -std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < betas.size(); ++b) {
    double inner_min = std::numeric_limits<double>::infinity();
    int inner_arg = -1;
    for (std::size_t j = 0; j < u_gens.size(); ++j) {
      detail::MeanAccumulator acc;
      for (std::size_t i = 0; i < paths.size(); ++i) {
        const ControlPath& u = u_paths[j][i];
        const ControlPath v = apply_strategy(betas[b], paths[i], u);
        const StatePath path = integrate(dyn, x0, u, v, paths[i]);
        acc.add(dyn.cost.g(path.final_state()));
      }
      out.table[b][j] = acc.estimate();
      if (out.table[b][j].mean < inner_min) {
        inner_min = out.table[b][j].mean;
        inner_arg = static_cast<int>(j);
      }
    }
    if (inner_min > best_outer) {
      best_outer = inner_min;
      out.best_strategy = static_cast<int>(b);
      out.best_generator = inner_arg;
    }
  }
  out.value = out.table[static_cast<std::size_t>(out.best_strategy)]
                       [static_cast<std::size_t>(out.best_generator)];
  return out;
}

/// Outcome of a dynamic-programming inequality check.
struct DppReport {
  double lhs = 0.0;            ///< grid value at (t0, x0)
  double rhs = 0.0;            ///< family minimax of the propagated value
  double rhs_std_error = 0.0;  ///< standard error of the selected cell
  double margin = 0.0;         ///< signed slack; >= -tolerance passes
  double tolerance = 0.0;
  bool pass = false;
  int best_strategy = -1;
  int best_generator = -1;
};

namespace detail {

/// Minimax over a table of estimates of E[V(t1, X_t1)] produced by
/// family-vs-family simulation to the split time t1.
template <typename ResolveOwn>
inline FamilyValue propagate_to_split(const TimeGrid& grid, const ValueGrid& vg, double t1,
                                      std::size_t n_own, std::size_t n_gen,
                                      const std::vector<std::vector<ControlPath>>& gen_paths,
                                      const std::vector<BrownianPath>& paths,
                                      ResolveOwn&& resolve_own, bool outer_is_min) {
  const int split_node = grid.node_of(t1);
  const int level1 = vg.level_of(t1);

  FamilyValue out;
  out.table.assign(n_own, std::vector<McEstimate>(n_gen));
  double best_outer =
      outer_is_min ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < n_own; ++a) {
    double inner = outer_is_min ? -std::numeric_limits<double>::infinity()
                                : std::numeric_limits<double>::infinity();
    int inner_arg = -1;
    for (std::size_t j = 0; j < n_gen; ++j) {
      detail::MeanAccumulator acc;
      for (std::size_t i = 0; i < paths.size(); ++i) {
        const StatePath path = resolve_own(a, gen_paths[j][i], paths[i]);
        acc.add(vg.interpolate(level1, path.state(split_node)));
      }
      out.table[a][j] = acc.estimate();
      const double mean = out.table[a][j].mean;
      const bool better = outer_is_min ? mean > inner : mean < inner;
      if (better) {
        inner = mean;
        inner_arg = static_cast<int>(j);
      }
    }
    const bool outer_better = outer_is_min ? inner < best_outer : inner > best_outer;
    if (outer_better) {
      best_outer = inner;
      out.best_strategy = static_cast<int>(a);
      out.best_generator = inner_arg;
    }
  }
  out.value = out.table[static_cast<std::size_t>(out.best_strategy)]
                       [static_cast<std::size_t>(out.best_generator)];
  return out;
}

inline double dpp_tolerance(const ValueGrid& vg, double rhs_std_error, double scheme_coeff) {
  const double dt =
      (vg.times().back() - vg.times().front()) / (static_cast<double>(vg.n_levels()) - 1.0);
  return 3.0 * rhs_std_error + scheme_coeff * (vg.space().max_dx() + std::sqrt(dt));
}

}  // namespace detail

/// Sub-dynamic-programming check for the upper value: the solved grid must
/// satisfy, on the restricted families,
///
///   V+(t0, x0) <= min over alpha of max over v of E[ V+(t1, X_t1^{alpha(v), v}) ]
///
/// up to a tolerance of 3 standard errors plus the scheme-error allowance
/// scheme_coeff * (dx + sqrt(dt)).  margin = rhs - lhs; pass when
/// margin >= -tolerance.
inline DppReport check_subdpp(const GameDynamics& dyn, std::span<const double> x0,
                              const TimeGrid& grid, const ValueGrid& v_plus, double t1,
                              const std::vector<DelayedStrategy>& alphas,
                              const std::vector<ControlGenerator>& v_gens, int n_paths,
                              std::uint64_t seed, double scheme_coeff = 2.0) {
  if (alphas.empty() || v_gens.empty()) {
    throw std::invalid_argument("check_subdpp: families must be non-empty");
  }
  const std::vector<BrownianPath> paths =
      detail::sample_common_paths(grid, dyn.noise_dim, n_paths, seed);
  std::vector<std::vector<ControlPath>> v_paths;
  v_paths.reserve(v_gens.size());
  for (const ControlGenerator& gen : v_gens) {
    std::vector<ControlPath> per_path;
    per_path.reserve(paths.size());
    for (const BrownianPath& w : paths) {
      per_path.push_back(generate_control(gen, alphas.front().set, w));
    }
    v_paths.push_back(std::move(per_path));
  }

  const FamilyValue rhs = detail::propagate_to_split(
      grid, v_plus, t1, alphas.size(), v_gens.size(), v_paths, paths,
      [&](std::size_t a, const ControlPath& v, const BrownianPath& w) {
        const ControlPath u = apply_strategy(alphas[a], w, v);
        return integrate(dyn, x0, u, v, w);
      },
      /*outer_is_min=*/true);

  DppReport rep;
  rep.lhs = v_plus.interpolate(0, x0);
  rep.rhs = rhs.value.mean;
  rep.rhs_std_error = rhs.value.std_error;
  rep.best_strategy = rhs.best_strategy;
  rep.best_generator = rhs.best_generator;
  rep.margin = rep.rhs - rep.lhs;
  rep.tolerance = detail::dpp_tolerance(v_plus, rep.rhs_std_error, scheme_coeff);
  rep.pass = rep.margin >= -rep.tolerance;
  return rep;
}

/// Super-dynamic-programming check for the lower value: the solved grid must
/// satisfy, on the restricted families,
///
///   V-(t0, x0) >= min over beta of max over u of E[ V-(t1, X_t1^{u, beta(u)}) ]
///
/// margin = lhs - rhs; pass when margin >= -tolerance, with the same
/// tolerance recipe as the sub check.
inline DppReport check_superdpp(const GameDynamics& dyn, std::span<const double> x0,
                                const TimeGrid& grid, const ValueGrid& v_minus, double t1,
                                const std::vector<DelayedStrategy>& betas,
                                const std::vector<ControlGenerator>& u_gens, int n_paths,
                                std::uint64_t seed, double scheme_coeff = 2.0) {
  if (betas.empty() || u_gens.empty()) {
    throw std::invalid_argument("check_superdpp: families must be non-empty");
  }
  const std::vector<BrownianPath> paths =
      detail::sample_common_paths(grid, dyn.noise_dim, n_paths, seed);
  std::vector<std::vector<ControlPath>> u_paths;
  u_paths.reserve(u_gens.size());
  for (const ControlGenerator& gen : u_gens) {
    std::vector<ControlPath> per_path;
    per_path.reserve(paths.size());
    for (const BrownianPath& w : paths) {
      per_path.push_back(generate_control(gen, betas.front().set, w));
    }
    u_paths.push_back(std::move(per_path));
  }

  // Outer layer: min over beta; inner layer: max over u generators.
  const FamilyValue rhs = detail::propagate_to_split(
      grid, v_minus, t1, betas.size(), u_gens.size(), u_paths, paths,
      [&](std::size_t b, const ControlPath& u, const BrownianPath& w) {
        const ControlPath v = apply_strategy(betas[b], w, u);
        return integrate(dyn, x0, u, v, w);
      },
      /*outer_is_min=*/true);

  DppReport rep;
  rep.lhs = v_minus.interpolate(0, x0);
  rep.rhs = rhs.value.mean;
  rep.rhs_std_error = rhs.value.std_error;
  rep.best_strategy = rhs.best_strategy;
  rep.best_generator = rhs.best_generator;
  rep.margin = rep.lhs - rep.rhs;
  rep.tolerance = detail::dpp_tolerance(v_minus, rep.rhs_std_error, scheme_coeff);
  rep.pass = rep.margin >= -rep.tolerance;
  return rep;
}

/// Empirical Lipschitz probe of the cost functional in its initial state:
/// estimate the cost at x0 and at x0 + h e_axis with the same noise (path
/// by path), and compare the difference quotient against the theoretical
/// envelope L_g * exp(L_f * (T - t0)) inflated by `headroom`, plus three
/// standard errors of the quotient.
struct CostLipschitzReport {
  double ratio = 0.0;
  double bound = 0.0;       ///< L_g * exp(L_f * (T - t0))
  double std_error = 0.0;   ///< standard error of the difference quotient
  double h = 0.0;
  bool pass = false;
};

inline CostLipschitzReport probe_cost_lipschitz(const GameDynamics& dyn,
                                                std::span<const double> x0,
                                                const DelayedStrategy& alpha,
                                                const DelayedStrategy& beta,
                                                const TimeGrid& grid, int n_paths,
                                                std::uint64_t seed, double h = 0.1,
                                                int axis = 0, double headroom = 1.1) {
  if (!(h > 0.0)) throw std::invalid_argument("probe_cost_lipschitz: h must be positive");
  if (axis < 0 || axis >= dyn.state_dim) {
    throw std::invalid_argument("probe_cost_lipschitz: axis outside state dimensions");
  }
  std::vector<double> x1(x0.begin(), x0.end());
  x1[static_cast<std::size_t>(axis)] += h;

  detail::MeanAccumulator diff;
  for (int i = 0; i < n_paths; ++i) {
    const BrownianPath w =
        sample_brownian(grid, dyn.noise_dim, rng::derive_seed(seed, static_cast<std::uint64_t>(i)));
    const ControlPair pair = fixed_point(alpha, beta, w);
    const StatePath p0 = integrate(dyn, x0, pair.u, pair.v, w);
    const StatePath p1 = integrate(dyn, x1, pair.u, pair.v, w);
    diff.add((dyn.cost.g(p1.final_state()) - dyn.cost.g(p0.final_state())) / h);
  }
  const McEstimate est = diff.estimate();

  CostLipschitzReport rep;
  rep.h = h;
  rep.ratio = std::abs(est.mean);
  rep.std_error = est.std_error;
  rep.bound = dyn.cost.lip * std::exp(dyn.lip_const * (grid.t_final() - grid.t0()));
  rep.pass = rep.ratio <= rep.bound * headroom + 3.0 * est.std_error;
  return rep;
}

}  // namespace sdg
