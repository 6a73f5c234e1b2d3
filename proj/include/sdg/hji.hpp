#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sdg/control_set.hpp"
#include "sdg/dynamics.hpp"
#include "sdg/errors.hpp"
#include "sdg/time_grid.hpp"
#include "sdg/value_grid.hpp"

namespace sdg {

/// Options for the finite-difference solver.
struct HjiOptions {
  /// Safety factor applied inside the time-step bound; must lie in (0, 0.5].
  double cfl = 0.45;
  /// Record the minimax control choices per (level, node) so feedback
  /// strategies can be read off the solved grid.
  bool store_policy = false;
};

/// One explicit backward step of the monotone Lax-Friedrichs scheme for the
/// upper or lower Hamilton-Jacobi-Isaacs equation
///
///   -dV/dt - H(D2 V, DV, x) = 0,   V(T, .) = g,
///
/// on a rectangular grid in one or two space dimensions.
///
/// Interior update (backward in time, from level k+1 to level k):
///
///   V_k = V_{k+1} + dt * [ minimax_{u,v} payoff(u, v) + sum_i c_i * (second
///         difference along axis i) * dx_i / 2 ]
///
/// where payoff uses central gradients and second differences of V_{k+1},
/// the minimax is min-max for the upper equation and max-min for the lower
/// one, and c_i = max |b_i| over interior nodes and control pairs is the
/// Lax-Friedrichs dissipation.  Boundary nodes are Dirichlet, held at the
/// terminal data.  In two dimensions the mixed second derivative uses the
/// seven-point stencil oriented by the sign of the off-diagonal diffusion
/// entry, which is monotone exactly when the diffusion matrix is diagonally
/// dominant relative to the mesh ratios — that dominance is checked node by
/// node at construction and violations are rejected with a re-meshing hint.
/// Three or more space dimensions are rejected: the mixed-derivative
/// treatment implemented here does not extend beyond two.
///
/// Two time-step conditions are enforced.  The documented bound
///
///   dt <= cfl * min( dx_min^2 / (N * max_ii (sigma sigma^T)_ii),
///                    dx_min / max_i |b_i| )
///
/// is necessary but, with two space dimensions, not always sufficient once
/// both dissipation terms stack, so the constructor also computes the exact
/// monotonicity bound dt * max_node,pair (center-coefficient load) <= 1 and
/// rejects steps that pass the first test but fail the second.
class HjiStepper {
 public:
  HjiStepper(const GameDynamics& dyn, const SpaceGrid& space, const TimeGrid& tgrid,
             HjiKind kind, const ControlSet& u_set, const ControlSet& v_set,
             double cfl = 0.45)
      : space_(space),
        kind_(kind),
        nu_(u_set.size()),
        nv_(v_set.size()),
        dim_(space.dim()),
        dt_(tgrid.dt()) {
    if (dyn.state_dim != dim_) {
      throw std::invalid_argument("HjiStepper: grid dimension " + std::to_string(dim_) +
                                  " != dynamics state_dim " + std::to_string(dyn.state_dim));
    }
    if (dim_ != 1 && dim_ != 2) {
      throw std::invalid_argument(
          "HjiStepper: only one- and two-dimensional grids are supported (mixed "
          "derivatives beyond two dimensions are not implemented)");
    }
    if (!(cfl > 0.0) || cfl > 0.5) {
      throw std::invalid_argument("HjiStepper: cfl factor must lie in (0, 0.5]");
    }

    const int N = dim_;
    const int d = dyn.noise_dim;
    const int P = nu_ * nv_;
    const int mc = N == 1 ? 1 : 3;  // M11 [, M22, M12]
    const std::size_t total = space_.total();

    drift_.resize(total * static_cast<std::size_t>(P) * N);
    diff_.resize(total * static_cast<std::size_t>(P) * mc);
    interior_.reserve(total);

    std::vector<double> x(static_cast<std::size_t>(N));
    std::vector<double> b(static_cast<std::size_t>(N));
    std::vector<double> sig(static_cast<std::size_t>(N) * d);
    for (std::size_t f = 0; f < total; ++f) {
      if (!space_.on_boundary(f)) interior_.push_back(f);
      space_.coords(f, x);
      for (int i = 0; i < nu_; ++i) {
        for (int j = 0; j < nv_; ++j) {
          const std::size_t p = f * static_cast<std::size_t>(P) +
                                static_cast<std::size_t>(i * nv_ + j);
          dyn.drift(x, u_set.point(i), v_set.point(j), b);
          dyn.diffusion(x, u_set.point(i), v_set.point(j), sig);
          for (int a = 0; a < N; ++a) drift_[p * N + static_cast<std::size_t>(a)] = b[static_cast<std::size_t>(a)];
          double m11 = 0.0, m22 = 0.0, m12 = 0.0;
          for (int c = 0; c < d; ++c) {
            const double s0 = sig[static_cast<std::size_t>(c)];
            m11 += s0 * s0;
            if (N == 2) {
              const double s1 = sig[static_cast<std::size_t>(d + c)];
              m22 += s1 * s1;
              m12 += s0 * s1;
            }
          }
          diff_[p * mc] = m11;
          if (N == 2) {
            diff_[p * mc + 1] = m22;
            diff_[p * mc + 2] = m12;
          }
        }
      }
    }
    if (interior_.empty()) {
      throw std::invalid_argument("HjiStepper: grid has no interior nodes");
    }

    // Lax-Friedrichs dissipation per axis: the largest drift magnitude the
    // scheme must dominate.
    c_.assign(static_cast<std::size_t>(N), 0.0);
    double amax = 0.0;
    for (std::size_t f : interior_) {
      for (int p = 0; p < P; ++p) {
        const std::size_t base = (f * static_cast<std::size_t>(P) +
                                  static_cast<std::size_t>(p));
        for (int a = 0; a < N; ++a) {
          c_[static_cast<std::size_t>(a)] =
              std::max(c_[static_cast<std::size_t>(a)],
                       std::abs(drift_[base * N + static_cast<std::size_t>(a)]));
        }
        amax = std::max(amax, diff_[base * mc]);
        if (N == 2) amax = std::max(amax, diff_[base * mc + 1]);
      }
    }

    // Diagonal dominance of the diffusion matrix relative to the mesh, the
    // monotonicity condition of the mixed-derivative stencil.
    if (N == 2) {
      const double dx0 = space_.dx(0), dx1 = space_.dx(1);
      for (std::size_t f : interior_) {
        for (int p = 0; p < P; ++p) {
          const std::size_t base =
              (f * static_cast<std::size_t>(P) + static_cast<std::size_t>(p)) * mc;
          const double m11 = diff_[base], m22 = diff_[base + 1],
                       m12 = std::abs(diff_[base + 2]);
          const double slack = 1e-12 * std::max({1.0, m11, m22, m12});
          if (m11 * dx1 + slack < m12 * dx0 || m22 * dx0 + slack < m12 * dx1) {
            std::vector<double> xc(2);
            space_.coords(f, xc);
            throw std::invalid_argument(
                "HjiStepper: diffusion matrix not diagonally dominant for this mesh at "
                "x=(" +
                std::to_string(xc[0]) + ", " + std::to_string(xc[1]) + "), control pair " +
                std::to_string(p) + " (M11=" + std::to_string(m11) + ", M22=" +
                std::to_string(m22) + ", M12=" + std::to_string(diff_[base + 2]) +
                "); refine the mesh ratio or reduce the off-diagonal diffusion");
          }
        }
      }
    }

    // Documented time-step bound.
    const double dx_min = space_.min_dx();
    double bmax = 0.0;
    for (double ca : c_) bmax = std::max(bmax, ca);
    double bound = std::numeric_limits<double>::infinity();
    if (amax > 0.0) bound = std::min(bound, cfl * dx_min * dx_min / (N * amax));
    if (bmax > 0.0) bound = std::min(bound, cfl * dx_min / bmax);
    if (dt_ > bound * (1.0 + 1e-12)) {
      throw CflError("HjiStepper: dt=" + std::to_string(dt_) +
                     " violates the time-step bound " + std::to_string(bound) +
                     " (needs at least " +
                     std::to_string(static_cast<long long>(
                         std::ceil((tgrid.t_final() - tgrid.t0()) / bound))) +
                     " steps)");
    }

    // Exact monotonicity: the center coefficient 1 - dt * load must stay
    // nonnegative at every interior node and control pair.
    center_load_max_ = 0.0;
    for (std::size_t f : interior_) {
      for (int p = 0; p < P; ++p) {
        const std::size_t base =
            (f * static_cast<std::size_t>(P) + static_cast<std::size_t>(p)) * mc;
        double load = diff_[base] / (space_.dx(0) * space_.dx(0));
        if (N == 2) {
          load += diff_[base + 1] / (space_.dx(1) * space_.dx(1));
          load -= std::abs(diff_[base + 2]) / (space_.dx(0) * space_.dx(1));
        }
        for (int a = 0; a < N; ++a) {
          load += c_[static_cast<std::size_t>(a)] / space_.dx(a);
        }
        center_load_max_ = std::max(center_load_max_, load);
      }
    }
    if (dt_ * center_load_max_ > 1.0 + 1e-9) {
      throw CflError("HjiStepper: dt=" + std::to_string(dt_) +
                     " passes the documented bound but violates the exact monotonicity "
                     "bound dt * " +
                     std::to_string(center_load_max_) + " <= 1; needs at least " +
                     std::to_string(static_cast<long long>(std::ceil(
                         (tgrid.t_final() - tgrid.t0()) * center_load_max_))) +
                     " steps");
    }
  }

  double dt() const noexcept { return dt_; }
  double lf_coeff(int axis) const { return c_.at(static_cast<std::size_t>(axis)); }
  double center_load_max() const noexcept { return center_load_max_; }

  /// Advance one level backward: `in` holds V at level k+1, `out` receives V
  /// at level k.  Both spans cover the whole grid.  Policy spans, when given,
  /// receive the minimax choices at interior nodes and -1 elsewhere.
  void step(std::span<const double> in, std::span<double> out, std::span<int> policy_u = {},
            std::span<int> policy_v = {}) const {
    const std::size_t total = space_.total();
    if (in.size() != total || out.size() != total) {
      throw std::invalid_argument("HjiStepper::step: span size mismatch");
    }
    const bool want_policy = !policy_u.empty();
    if (want_policy && (policy_u.size() != total || policy_v.size() != total)) {
      throw std::invalid_argument("HjiStepper::step: policy span size mismatch");
    }
    std::copy(in.begin(), in.end(), out.begin());
    if (want_policy) {
      std::fill(policy_u.begin(), policy_u.end(), -1);
      std::fill(policy_v.begin(), policy_v.end(), -1);
    }

    const int N = dim_;
    const int P = nu_ * nv_;
    const int mc = N == 1 ? 1 : 3;
    const double dx0 = space_.dx(0);
    const double inv_dx0sq = 1.0 / (dx0 * dx0);
    const double inv_2dx0 = 1.0 / (2.0 * dx0);
    const std::size_t s0 = space_.stride(0);
    const double dx1 = N == 2 ? space_.dx(1) : 1.0;
    const double inv_dx1sq = N == 2 ? 1.0 / (dx1 * dx1) : 0.0;
    const double inv_2dx1 = N == 2 ? 1.0 / (2.0 * dx1) : 0.0;
    const double inv_cross = N == 2 ? 1.0 / (2.0 * dx0 * dx1) : 0.0;
    const std::size_t s1 = N == 2 ? space_.stride(1) : 0;

    std::vector<double> payoff(static_cast<std::size_t>(P));

    for (std::size_t f : interior_) {
      const double vc = in[f];
      const double ve = in[f + s0];
      const double vw = in[f - s0];
      const double sec0 = (ve - 2.0 * vc + vw) * inv_dx0sq;
      const double cen0 = (ve - vw) * inv_2dx0;
      double lf = c_[0] * (ve - 2.0 * vc + vw) * (0.5 * dx0 * inv_dx0sq);

      double sec1 = 0.0, cen1 = 0.0, cross_pos = 0.0, cross_neg = 0.0;
      if (N == 2) {
        const double vn = in[f + s1];
        const double vs = in[f - s1];
        sec1 = (vn - 2.0 * vc + vs) * inv_dx1sq;
        cen1 = (vn - vs) * inv_2dx1;
        const double vne = in[f + s0 + s1];
        const double vsw = in[f - s0 - s1];
        const double vnw = in[f - s0 + s1];
        const double vse = in[f + s0 - s1];
        const double axis_sum = ve + vw + vn + vs;
        cross_pos = (2.0 * vc + vne + vsw - axis_sum) * inv_cross;
        cross_neg = -(2.0 * vc + vnw + vse - axis_sum) * inv_cross;
        lf += c_[1] * (vn - 2.0 * vc + vs) * (0.5 * dx1 * inv_dx1sq);
      }

      // One payoff evaluation per control pair, shared verbatim by both
      // minimax orders: the upper and lower sweeps extremize exactly the same
      // floating-point array, never re-derived values.
      const std::size_t node_base = f * static_cast<std::size_t>(P);
      for (int p = 0; p < P; ++p) {
        const std::size_t pb = node_base + static_cast<std::size_t>(p);
        double val = 0.5 * diff_[pb * mc] * sec0 + drift_[pb * N] * cen0;
        if (N == 2) {
          const double m12 = diff_[pb * mc + 2];
          val += 0.5 * diff_[pb * mc + 1] * sec1 + drift_[pb * N + 1] * cen1;
          val += m12 * (m12 >= 0.0 ? cross_pos : cross_neg);
        }
        payoff[static_cast<std::size_t>(p)] = val;
      }

      double chosen;
      int best_u = 0, best_v = 0;
      if (kind_ == HjiKind::Plus) {
        chosen = std::numeric_limits<double>::infinity();
        for (int i = 0; i < nu_; ++i) {
          double inner = -std::numeric_limits<double>::infinity();
          int inner_v = 0;
          for (int j = 0; j < nv_; ++j) {
            const double pv = payoff[static_cast<std::size_t>(i * nv_ + j)];
            if (pv > inner) {
              inner = pv;
              inner_v = j;
            }
          }
          if (inner < chosen) {
            chosen = inner;
            best_u = i;
            best_v = inner_v;
          }
        }
      } else {
        chosen = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < nv_; ++j) {
          double inner = std::numeric_limits<double>::infinity();
          int inner_u = 0;
          for (int i = 0; i < nu_; ++i) {
            const double pv = payoff[static_cast<std::size_t>(i * nv_ + j)];
            if (pv < inner) {
              inner = pv;
              inner_u = i;
            }
          }
          if (inner > chosen) {
            chosen = inner;
            best_v = j;
            best_u = inner_u;
          }
        }
      }

      out[f] = vc + dt_ * (chosen + lf);
      if (want_policy) {
        policy_u[f] = best_u;
        policy_v[f] = best_v;
      }
    }
  }

 private:
  SpaceGrid space_;
  HjiKind kind_;
  int nu_, nv_, dim_;
  double dt_;
  std::vector<std::size_t> interior_;
  std::vector<double> drift_;  // node-major, then pair, then axis
  std::vector<double> diff_;   // node-major, then pair, then {M11[,M22,M12]}
  std::vector<double> c_;      // Lax-Friedrichs coefficient per axis
  double center_load_max_ = 0.0;
};

/// Solve the upper (Plus) or lower (Minus) equation backward from the
/// terminal cost over the whole time grid.  Returns every level, level 0
/// being the initial time.  See HjiStepper for the scheme and its
/// preconditions; a value that stops being finite aborts with
/// NonFiniteError.
inline ValueGrid solve_hji(const GameDynamics& dyn, const SpaceGrid& space,
                           const TimeGrid& tgrid, HjiKind kind, const ControlSet& u_set,
                           const ControlSet& v_set, const HjiOptions& opt = {}) {
  const HjiStepper stepper(dyn, space, tgrid, kind, u_set, v_set, opt.cfl);
  const std::size_t total = space.total();
  const int n = tgrid.n_steps();

  std::vector<double> values(static_cast<std::size_t>(n + 1) * total);
  std::vector<int> policy_u, policy_v;
  if (opt.store_policy) {
    policy_u.assign(values.size(), -1);
    policy_v.assign(values.size(), -1);
  }

  // Terminal level.
  {
    const std::span<double> lvl{values.data() + static_cast<std::size_t>(n) * total, total};
    std::vector<double> x(static_cast<std::size_t>(space.dim()));
    for (std::size_t f = 0; f < total; ++f) {
      space.coords(f, x);
      lvl[f] = dyn.cost.g(x);
      if (!std::isfinite(lvl[f])) {
        throw NonFiniteError("solve_hji: terminal cost non-finite at node " +
                             std::to_string(f));
      }
    }
  }

  for (int k = n - 1; k >= 0; --k) {
    const std::span<const double> in{values.data() + static_cast<std::size_t>(k + 1) * total,
                                     total};
    const std::span<double> out{values.data() + static_cast<std::size_t>(k) * total, total};
    if (opt.store_policy) {
      stepper.step(in, out,
                   {policy_u.data() + static_cast<std::size_t>(k) * total, total},
                   {policy_v.data() + static_cast<std::size_t>(k) * total, total});
    } else {
      stepper.step(in, out);
    }
    for (std::size_t f = 0; f < total; ++f) {
      if (!std::isfinite(out[f])) {
        throw NonFiniteError("solve_hji: value non-finite at level " + std::to_string(k) +
                             ", node " + std::to_string(f));
      }
    }
  }

  if (opt.store_policy && n >= 1) {
    // The terminal level consumes no step; give it the last computed choices
    // so nearest-level policy lookups never see an empty slot.
    std::copy(policy_u.begin() + static_cast<std::ptrdiff_t>((n - 1) * total),
              policy_u.begin() + static_cast<std::ptrdiff_t>(n * total),
              policy_u.begin() + static_cast<std::ptrdiff_t>(n * total));
    std::copy(policy_v.begin() + static_cast<std::ptrdiff_t>((n - 1) * total),
              policy_v.begin() + static_cast<std::ptrdiff_t>(n * total),
              policy_v.begin() + static_cast<std::ptrdiff_t>(n * total));
  }

  std::vector<double> times(static_cast<std::size_t>(n + 1));
  for (int k = 0; k <= n; ++k) times[static_cast<std::size_t>(k)] = tgrid.time(k);
  return ValueGrid(space, std::move(times), kind, std::move(values), std::move(policy_u),
                   std::move(policy_v));
}

/// Empirical regularity measurements of a solved value grid, optionally
/// restricted to a sub-box (so Dirichlet boundary layers can be excluded
/// from the measurement the same way they are excluded from error reports).
struct RegularityReport {
  double lip_x = 0.0;     ///< max |V(x+dx e_a) - V(x)| / dx_a over levels, axes
  double holder_t = 0.0;  ///< max |V(t') - V(t)| / sqrt(t' - t) over dyadic level gaps
};

inline RegularityReport estimate_regularity(const ValueGrid& vg,
                                            const Box* region = nullptr) {
  const SpaceGrid& g = vg.space();
  const int N = g.dim();
  const std::size_t total = g.total();
  if (region && region->dim() != N) {
    throw std::invalid_argument("estimate_regularity: region dimension mismatch");
  }

  std::vector<char> in_region(total, 1);
  if (region) {
    std::vector<double> x(static_cast<std::size_t>(N));
    for (std::size_t f = 0; f < total; ++f) {
      g.coords(f, x);
      in_region[f] = region->contains(x, 1e-9 * g.min_dx()) ? 1 : 0;
    }
  }

  RegularityReport rep;

  // Spatial Lipschitz: difference quotients between axis neighbours that
  // both lie in the region.
  std::vector<int> idx(static_cast<std::size_t>(N));
  for (int k = 0; k < vg.n_levels(); ++k) {
    const std::span<const double> lvl = vg.level(k);
    for (std::size_t f = 0; f < total; ++f) {
      if (!in_region[f]) continue;
      g.unflatten(f, idx);
      for (int a = 0; a < N; ++a) {
        if (idx[static_cast<std::size_t>(a)] + 1 >= g.nodes(a)) continue;
        const std::size_t fn = f + g.stride(a);
        if (!in_region[fn]) continue;
        rep.lip_x = std::max(rep.lip_x, std::abs(lvl[fn] - lvl[f]) / g.dx(a));
      }
    }
  }

  // Temporal 1/2-Hoelder: quotients across dyadic level separations, not just
  // adjacent levels, so the constant reflects every scale of the horizon.
  const int L = vg.n_levels();
  for (int m = 1; m < L; m *= 2) {
    for (int k = 0; k + m < L; k += m) {
      const std::span<const double> a = vg.level(k);
      const std::span<const double> b = vg.level(k + m);
      const double root_gap = std::sqrt(vg.times()[static_cast<std::size_t>(k + m)] -
                                        vg.times()[static_cast<std::size_t>(k)]);
      for (std::size_t f = 0; f < total; ++f) {
        if (!in_region[f]) continue;
        rep.holder_t = std::max(rep.holder_t, std::abs(b[f] - a[f]) / root_gap);
      }
    }
  }
  return rep;
}

/// Nodewise comparison of an upper and a lower solution on one grid.
struct OrderingReport {
  double min_diff = 0.0;  ///< min over (level, node) of plus - minus
  double max_diff = 0.0;
  std::size_t n_compared = 0;
  double tolerance = 0.0;
  bool ordered = false;  ///< min_diff >= -tolerance
};

inline OrderingReport compare_values(const ValueGrid& plus, const ValueGrid& minus,
                                     double tolerance = 1e-9) {
  if (!(plus.space() == minus.space()) || plus.times() != minus.times()) {
    throw std::invalid_argument("compare_values: grids are not aligned");
  }
  OrderingReport rep;
  rep.tolerance = tolerance;
  rep.min_diff = std::numeric_limits<double>::infinity();
  rep.max_diff = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < plus.n_levels(); ++k) {
    const std::span<const double> a = plus.level(k);
    const std::span<const double> b = minus.level(k);
    for (std::size_t f = 0; f < a.size(); ++f) {
      const double d = a[f] - b[f];
      rep.min_diff = std::min(rep.min_diff, d);
      rep.max_diff = std::max(rep.max_diff, d);
      ++rep.n_compared;
    }
  }
  rep.ordered = rep.min_diff >= -tolerance;
  return rep;
}

/// Maximum absolute error of one stored level against a reference function
/// of (t, x), measured over the nodes inside `region` (all nodes when null).
/// Level 0, the initial time, is where scheme error has accumulated the
/// most, so it is the default.
inline double max_error_against(const ValueGrid& vg,
                                const std::function<double(double, std::span<const double>)>& ref,
                                const Box* region = nullptr, int level = 0) {
  const SpaceGrid& g = vg.space();
  std::vector<double> x(static_cast<std::size_t>(g.dim()));
  const std::span<const double> lvl = vg.level(level);
  const double t = vg.times()[static_cast<std::size_t>(level)];
  double err = 0.0;
  for (std::size_t f = 0; f < g.total(); ++f) {
    g.coords(f, x);
    if (region && !region->contains(x, 1e-9 * g.min_dx())) continue;
    err = std::max(err, std::abs(lvl[f] - ref(t, x)));
  }
  return err;
}

}  // namespace sdg
