#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sdg/control_set.hpp"
#include "sdg/errors.hpp"
#include "sdg/paths.hpp"
#include "sdg/rng.hpp"
#include "sdg/time_grid.hpp"

namespace sdg {

/// Axis-aligned box in R^N.  Used as the domain on which coefficient and
/// cost bounds are declared and probed, and as the report region for error
/// and regularity measurements.
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  int dim() const noexcept { return static_cast<int>(lo.size()); }

  bool contains(std::span<const double> x, double tol = 0.0) const {
    if (x.size() != lo.size()) return false;
    for (std::size_t i = 0; i < lo.size(); ++i) {
      if (x[i] < lo[i] - tol || x[i] > hi[i] + tol) return false;
    }
    return true;
  }
};

/// Terminal cost together with its declared bound and Lipschitz constant
/// (Euclidean norm) on the domain box it was built for.
struct CostModel {
  std::function<double(std::span<const double>)> g;
  double bound = 0.0;
  double lip = 0.0;
  std::string name;
};

/// Coefficients of a controlled diffusion plus the terminal cost.
///
/// drift writes b(x, u, v) into an output span of length state_dim;
/// diffusion writes sigma(x, u, v) into an output span of length
/// state_dim * noise_dim, row-major.  Output spans avoid per-step
/// allocation in the integration loop.
///
/// bound_const and lip_const are the declared sup-norm bound and joint
/// Lipschitz-in-x constant of both coefficients over the intended domain
/// and control sets.  They are promises, not measurements: probe_dynamics
/// spot-checks them by randomized sampling, and the regularity stage uses
/// lip_const as L_f in its theoretical envelope.
struct GameDynamics {
  int state_dim = 1;
  int noise_dim = 1;
  std::function<void(std::span<const double> x, std::span<const double> u,
                     std::span<const double> v, std::span<double> out)>
      drift;
  std::function<void(std::span<const double> x, std::span<const double> u,
                     std::span<const double> v, std::span<double> out)>
      diffusion;
  CostModel cost;
  double bound_const = 0.0;
  double lip_const = 0.0;
  std::string name;
};

/// State trajectory on a time grid: n_steps + 1 nodes of dimension
/// state_dim, row-major.  Immutable after construction.
class StatePath {
 public:
  StatePath(TimeGrid grid, int state_dim, std::vector<double> states)
      : grid_(std::move(grid)), dim_(state_dim), states_(std::move(states)) {
    const auto expected = static_cast<std::size_t>(grid_.n_steps() + 1) *
                          static_cast<std::size_t>(dim_);
    if (dim_ < 1 || states_.size() != expected) {
      throw std::invalid_argument("StatePath: expected " + std::to_string(expected) +
                                  " entries, got " + std::to_string(states_.size()));
    }
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  int state_dim() const noexcept { return dim_; }

  std::span<const double> state(int node) const {
    if (node < 0 || node > grid_.n_steps()) {
      throw std::out_of_range("StatePath::state: node " + std::to_string(node));
    }
    return {states_.data() + static_cast<std::size_t>(node) * dim_,
            static_cast<std::size_t>(dim_)};
  }

  std::span<const double> final_state() const { return state(grid_.n_steps()); }

  std::span<const double> raw() const noexcept { return states_; }

 private:
  TimeGrid grid_;
  int dim_;
  std::vector<double> states_;
};

/// Euler-Maruyama integration of the controlled SDE along one noise path:
///
///   X_{k+1} = X_k + b(X_k, u_k, v_k) dt + sigma(X_k, u_k, v_k) dW_k.
///
/// The three paths must share one time grid, and the noise path must match
/// the dynamics' noise dimension.  A state that stops being finite aborts
/// with NonFiniteError carrying the offending step.
inline StatePath integrate(const GameDynamics& dyn, std::span<const double> x0,
                           const ControlPath& u, const ControlPath& v,
                           const BrownianPath& w) {
  const TimeGrid& grid = w.grid();
  if (!(u.grid() == grid) || !(v.grid() == grid)) {
    throw std::invalid_argument("integrate: control and noise paths use different grids");
  }
  if (w.noise_dim() != dyn.noise_dim) {
    throw std::invalid_argument("integrate: noise path dimension " +
                                std::to_string(w.noise_dim()) + " != dynamics noise_dim " +
                                std::to_string(dyn.noise_dim));
  }
  const int N = dyn.state_dim;
  const int d = dyn.noise_dim;
  if (static_cast<int>(x0.size()) != N) {
    throw std::invalid_argument("integrate: x0 has dimension " + std::to_string(x0.size()) +
                                ", dynamics expects " + std::to_string(N));
  }
  const int n = grid.n_steps();
  const double dt = grid.dt();

  std::vector<double> states(static_cast<std::size_t>(n + 1) * N);
  std::copy(x0.begin(), x0.end(), states.begin());

  std::vector<double> b(static_cast<std::size_t>(N));
  std::vector<double> sig(static_cast<std::size_t>(N) * d);

  for (int k = 0; k < n; ++k) {
    const std::span<const double> xk{states.data() + static_cast<std::size_t>(k) * N,
                                     static_cast<std::size_t>(N)};
    const std::span<double> xk1{states.data() + static_cast<std::size_t>(k + 1) * N,
                                static_cast<std::size_t>(N)};
    dyn.drift(xk, u.value_at(k), v.value_at(k), b);
    dyn.diffusion(xk, u.value_at(k), v.value_at(k), sig);
    for (int i = 0; i < N; ++i) {
      double acc = xk[i] + b[static_cast<std::size_t>(i)] * dt;
      for (int c = 0; c < d; ++c) {
        acc += sig[static_cast<std::size_t>(i) * d + c] * w.increment(k, c);
      }
      xk1[i] = acc;
      if (!std::isfinite(acc)) {
        throw NonFiniteError("integrate: state coordinate " + std::to_string(i) +
                             " became non-finite at step " + std::to_string(k + 1) +
                             " (t=" + std::to_string(grid.time(k + 1)) + ")");
      }
    }
  }
  return StatePath(grid, N, std::move(states));
}

// ---------------------------------------------------------------------------
// Terminal cost constructors.  Bounds and Lipschitz constants are computed
// for the given domain box, since globally most of these costs are unbounded.
// ---------------------------------------------------------------------------

inline CostModel make_cost_constant(double c) {
  return {[c](std::span<const double>) { return c; }, std::abs(c), 0.0, "constant"};
}

inline CostModel make_cost_linear(std::vector<double> coeffs, double intercept,
                                  const Box& domain) {
  if (coeffs.size() != domain.lo.size()) {
    throw std::invalid_argument("make_cost_linear: coefficient count != box dimension");
  }
  double bound = std::abs(intercept);
  double lip_sq = 0.0;
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    bound += std::abs(coeffs[i]) * std::max(std::abs(domain.lo[i]), std::abs(domain.hi[i]));
    lip_sq += coeffs[i] * coeffs[i];
  }
  auto fn = [c = std::move(coeffs), intercept](std::span<const double> x) {
    double acc = intercept;
    for (std::size_t i = 0; i < c.size(); ++i) acc += c[i] * x[i];
    return acc;
  };
  return {std::move(fn), bound, std::sqrt(lip_sq), "linear"};
}

/// g(x) = sum_i x_i^2.
inline CostModel make_cost_quadratic(const Box& domain) {
  double bound = 0.0;
  for (std::size_t i = 0; i < domain.lo.size(); ++i) {
    const double m = std::max(std::abs(domain.lo[i]), std::abs(domain.hi[i]));
    bound += m * m;
  }
  auto fn = [](std::span<const double> x) {
    double acc = 0.0;
    for (double xi : x) acc += xi * xi;
    return acc;
  };
  // |grad g| = 2|x| <= 2 * radius of the box in Euclidean norm.
  return {fn, bound, 2.0 * std::sqrt(bound), "quadratic"};
}

/// g(x) = sum_i |x_i|.
inline CostModel make_cost_abs(const Box& domain) {
  double bound = 0.0;
  for (std::size_t i = 0; i < domain.lo.size(); ++i) {
    bound += std::max(std::abs(domain.lo[i]), std::abs(domain.hi[i]));
  }
  auto fn = [](std::span<const double> x) {
    double acc = 0.0;
    for (double xi : x) acc += std::abs(xi);
    return acc;
  };
  return {fn, bound, std::sqrt(static_cast<double>(domain.lo.size())), "abs"};
}

// ---------------------------------------------------------------------------
// Named dynamics.  Each factory fills in exact bound and Lipschitz constants,
// so probing them should never flag a violation.
// ---------------------------------------------------------------------------

/// b = 0, sigma = 0: the state never moves, so every game value equals
/// g(x0).  The canonical smoke-test dynamics.
inline GameDynamics make_frozen(int state_dim, int noise_dim, CostModel cost) {
  GameDynamics dyn;
  dyn.state_dim = state_dim;
  dyn.noise_dim = noise_dim;
  dyn.drift = [](std::span<const double>, std::span<const double>, std::span<const double>,
                 std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
  dyn.diffusion = [](std::span<const double>, std::span<const double>,
                     std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
  };
  dyn.cost = std::move(cost);
  dyn.bound_const = 0.0;
  dyn.lip_const = 0.0;
  dyn.name = "frozen";
  return dyn;
}

/// b = a (fixed vector), sigma = 0: straight-line transport.
inline GameDynamics make_constant_drift(std::vector<double> a, int noise_dim,
                                        CostModel cost) {
  GameDynamics dyn;
  dyn.state_dim = static_cast<int>(a.size());
  dyn.noise_dim = noise_dim;
  double norm = 0.0;
  for (double ai : a) norm += ai * ai;
  dyn.bound_const = std::sqrt(norm);
  dyn.drift = [a = std::move(a)](std::span<const double>, std::span<const double>,
                                 std::span<const double>, std::span<double> out) {
    std::copy(a.begin(), a.end(), out.begin());
  };
  dyn.diffusion = [](std::span<const double>, std::span<const double>,
                     std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
  };
  dyn.cost = std::move(cost);
  dyn.lip_const = 0.0;
  dyn.name = "constant-drift";
  return dyn;
}

/// b = 0, sigma = s * I (square case noise_dim == state_dim; rectangular
/// cases pad with zeros): pure additive noise, the heat-equation benchmark.
inline GameDynamics make_additive_noise(double s, int state_dim, int noise_dim,
                                        CostModel cost) {
  GameDynamics dyn;
  dyn.state_dim = state_dim;
  dyn.noise_dim = noise_dim;
  dyn.drift = [](std::span<const double>, std::span<const double>, std::span<const double>,
                 std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
  dyn.diffusion = [s, state_dim, noise_dim](std::span<const double>, std::span<const double>,
                                            std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (int i = 0; i < std::min(state_dim, noise_dim); ++i) {
      out[static_cast<std::size_t>(i) * noise_dim + i] = s;
    }
  };
  dyn.cost = std::move(cost);
  dyn.bound_const =
      std::abs(s) * std::sqrt(static_cast<double>(std::min(state_dim, noise_dim)));
  dyn.lip_const = 0.0;
  dyn.name = "additive-noise";
  return dyn;
}

/// b = u + v, sigma = s * I with noise_dim == state_dim.  Drift separates
/// into a u-part plus a v-part, so the two Hamiltonians coincide and the
/// game has a value.  Control sets must live in R^state_dim; they are taken
/// here only to compute the exact coefficient bound.
inline GameDynamics make_separated(double s, int state_dim, const ControlSet& u_set,
                                   const ControlSet& v_set, CostModel cost) {
  if (u_set.ambient_dim() != state_dim || v_set.ambient_dim() != state_dim) {
    throw std::invalid_argument(
        "make_separated: control sets must have ambient_dim == state_dim");
  }
  GameDynamics dyn;
  dyn.state_dim = state_dim;
  dyn.noise_dim = state_dim;
  dyn.drift = [](std::span<const double>, std::span<const double> u,
                 std::span<const double> v, std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = u[i] + v[i];
  };
  dyn.diffusion = [s, state_dim](std::span<const double>, std::span<const double>,
                                 std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (int i = 0; i < state_dim; ++i) {
      out[static_cast<std::size_t>(i) * state_dim + i] = s;
    }
  };
  double drift_bound = 0.0;
  for (int i = 0; i < u_set.size(); ++i) {
    for (int j = 0; j < v_set.size(); ++j) {
      double norm = 0.0;
      for (int c = 0; c < state_dim; ++c) {
        const double bc = u_set.point(i)[static_cast<std::size_t>(c)] +
                          v_set.point(j)[static_cast<std::size_t>(c)];
        norm += bc * bc;
      }
      drift_bound = std::max(drift_bound, std::sqrt(norm));
    }
  }
  dyn.cost = std::move(cost);
  dyn.bound_const =
      std::max(drift_bound, std::abs(s) * std::sqrt(static_cast<double>(state_dim)));
  dyn.lip_const = 0.0;
  dyn.name = "separated";
  return dyn;
}

/// b = a x, sigma = c x in one dimension: geometric dynamics, the standard
/// state-dependent-coefficient stress test.  Controls are ignored.  Bounds
/// are declared on the given domain box.
inline GameDynamics make_geometric(double a, double c, const Box& domain, CostModel cost) {
  if (domain.dim() != 1) {
    throw std::invalid_argument("make_geometric: domain box must be one-dimensional");
  }
  GameDynamics dyn;
  dyn.state_dim = 1;
  dyn.noise_dim = 1;
  dyn.drift = [a](std::span<const double> x, std::span<const double>,
                  std::span<const double>, std::span<double> out) { out[0] = a * x[0]; };
  dyn.diffusion = [c](std::span<const double> x, std::span<const double>,
                      std::span<const double>, std::span<double> out) { out[0] = c * x[0]; };
  const double radius = std::max(std::abs(domain.lo[0]), std::abs(domain.hi[0]));
  dyn.cost = std::move(cost);
  dyn.bound_const = std::max(std::abs(a), std::abs(c)) * radius;
  dyn.lip_const = std::max(std::abs(a), std::abs(c));
  dyn.name = "geometric";
  return dyn;
}

/// b(x, u, v) = M[u][v] in one dimension with constant diffusion s.
/// Controls index the matrix through their (rounded) scalar values, so the
/// natural control sets are discretize_interval(0, rows-1, rows) and
/// discretize_interval(0, cols-1, cols).  With a suitable matrix this is the
/// standard example where the two Hamiltonians differ and the upper and
/// lower values split apart.
inline GameDynamics make_bimatrix(std::vector<std::vector<double>> m, double s,
                                  CostModel cost) {
  if (m.empty() || m.front().empty()) {
    throw std::invalid_argument("make_bimatrix: matrix must be non-empty");
  }
  const std::size_t cols = m.front().size();
  double mmax = 0.0;
  for (const auto& row : m) {
    if (row.size() != cols) {
      throw std::invalid_argument("make_bimatrix: ragged matrix");
    }
    for (double e : row) mmax = std::max(mmax, std::abs(e));
  }
  GameDynamics dyn;
  dyn.state_dim = 1;
  dyn.noise_dim = 1;
  dyn.drift = [m = std::move(m), cols](std::span<const double>, std::span<const double> u,
                                       std::span<const double> v, std::span<double> out) {
    const auto row = static_cast<std::size_t>(std::llround(u[0]));
    const auto col = static_cast<std::size_t>(std::llround(v[0]));
    if (row >= m.size() || col >= cols) {
      throw std::out_of_range("bimatrix drift: control value outside matrix");
    }
    out[0] = m[row][col];
  };
  dyn.diffusion = [s](std::span<const double>, std::span<const double>,
                      std::span<const double>, std::span<double> out) { out[0] = s; };
  dyn.cost = std::move(cost);
  dyn.bound_const = std::max(mmax, std::abs(s));
  dyn.lip_const = 0.0;
  dyn.name = "bimatrix";
  return dyn;
}

// ---------------------------------------------------------------------------
// Randomized probing of declared constants.
// ---------------------------------------------------------------------------

/// Measurements from randomized spot checks of a GameDynamics against its
/// declared constants on a domain box.
struct ProbeReport {
  double max_coeff_norm = 0.0;   ///< largest |b| or Frobenius |sigma| seen
  double max_coeff_ratio = 0.0;  ///< largest |f(x)-f(x')| / |x-x'| seen
  double max_cost = 0.0;         ///< largest |g| seen
  double max_cost_ratio = 0.0;   ///< largest |g(x)-g(x')| / |x-x'| seen
  bool within_declared = true;
  std::string detail;
};

/// Sample random states in `domain` and random control pairs, and compare
/// observed coefficient norms and difference quotients against the declared
/// bound_const / lip_const (and the cost against its own constants).  A
/// small relative slack absorbs rounding.  This is a spot check: passing it
/// does not prove the declaration, but a misdeclared dynamics is flagged
/// with overwhelming probability after a few hundred trials.
inline ProbeReport probe_dynamics(const GameDynamics& dyn, const ControlSet& u_set,
                                  const ControlSet& v_set, const Box& domain, int trials,
                                  std::uint64_t seed) {
  if (domain.dim() != dyn.state_dim) {
    throw std::invalid_argument("probe_dynamics: box dimension != state_dim");
  }
  rng::Stream stream(seed);
  const int N = dyn.state_dim;
  const int d = dyn.noise_dim;
  std::vector<double> x(static_cast<std::size_t>(N)), y(static_cast<std::size_t>(N));
  std::vector<double> bx(static_cast<std::size_t>(N)), by(static_cast<std::size_t>(N));
  std::vector<double> sx(static_cast<std::size_t>(N) * d), sy(static_cast<std::size_t>(N) * d);
  ProbeReport rep;

  auto draw_point = [&](std::vector<double>& out) {
    for (int i = 0; i < N; ++i) {
      out[static_cast<std::size_t>(i)] =
          domain.lo[static_cast<std::size_t>(i)] +
          stream.uniform() *
              (domain.hi[static_cast<std::size_t>(i)] - domain.lo[static_cast<std::size_t>(i)]);
    }
  };
  auto norm2 = [](std::span<const double> a) {
    double acc = 0.0;
    for (double e : a) acc += e * e;
    return std::sqrt(acc);
  };
  auto dist = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
  };
  auto diff_norm = [](std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
  };

  for (int t = 0; t < trials; ++t) {
    draw_point(x);
    draw_point(y);
    const auto u = u_set.point(stream.below(u_set.size()));
    const auto v = v_set.point(stream.below(v_set.size()));

    dyn.drift(x, u, v, bx);
    dyn.diffusion(x, u, v, sx);
    dyn.drift(y, u, v, by);
    dyn.diffusion(y, u, v, sy);

    rep.max_coeff_norm = std::max({rep.max_coeff_norm, norm2(bx), norm2(sx)});
    const double dxy = dist(x, y);
    if (dxy > 1e-12) {
      rep.max_coeff_ratio = std::max(
          {rep.max_coeff_ratio, diff_norm(bx, by) / dxy, diff_norm(sx, sy) / dxy});
    }
    const double gx = dyn.cost.g(x);
    const double gy = dyn.cost.g(y);
    rep.max_cost = std::max(rep.max_cost, std::max(std::abs(gx), std::abs(gy)));
    if (dxy > 1e-12) {
      rep.max_cost_ratio = std::max(rep.max_cost_ratio, std::abs(gx - gy) / dxy);
    }
  }

  constexpr double kSlack = 1.0 + 1e-9;
  auto flag = [&](const std::string& what, double seen, double declared) {
    rep.within_declared = false;
    if (!rep.detail.empty()) rep.detail += "; ";
    rep.detail += what + " observed " + std::to_string(seen) + " exceeds declared " +
                  std::to_string(declared);
  };
  if (rep.max_coeff_norm > dyn.bound_const * kSlack + 1e-12) {
    flag("coefficient bound", rep.max_coeff_norm, dyn.bound_const);
  }
  if (rep.max_coeff_ratio > dyn.lip_const * kSlack + 1e-12) {
    flag("coefficient Lipschitz constant", rep.max_coeff_ratio, dyn.lip_const);
  }
  if (rep.max_cost > dyn.cost.bound * kSlack + 1e-12) {
    flag("cost bound", rep.max_cost, dyn.cost.bound);
  }
  if (rep.max_cost_ratio > dyn.cost.lip * kSlack + 1e-12) {
    flag("cost Lipschitz constant", rep.max_cost_ratio, dyn.cost.lip);
  }
  return rep;
}

/// Probe and throw std::invalid_argument when the declared constants are
/// refuted.  Called when dynamics are assembled from configuration, where
/// the declarations come from outside.
inline void validate_dynamics(const GameDynamics& dyn, const ControlSet& u_set,
                              const ControlSet& v_set, const Box& domain,
                              int trials = 256, std::uint64_t seed = 0x5d6ULL) {
  const ProbeReport rep = probe_dynamics(dyn, u_set, v_set, domain, trials, seed);
  if (!rep.within_declared) {
    throw std::invalid_argument("dynamics '" + dyn.name +
                                "' violates declared constants: " + rep.detail);
  }
}

}  // namespace sdg
