#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sdg/control_set.hpp"
#include "sdg/dynamics.hpp"
#include "sdg/errors.hpp"
#include "sdg/paths.hpp"
#include "sdg/rng.hpp"
#include "sdg/time_grid.hpp"

namespace sdg {

enum class Player { I, II };

inline const char* to_string(Player p) noexcept { return p == Player::I ? "I" : "II"; }

/// A strategy with delay: the horizon is split into blocks of delay_steps
/// steps, and the controls for block k (steps [k*delay, (k+1)*delay)) are a
/// function of the noise and opponent-control prefixes up to step k*delay
/// only.  Block 0 therefore sees empty prefixes and is constant in both
/// arguments.
///
/// respond(noise, opponent, k) returns exactly delay_steps control indices
/// for block k.  The prefix views passed by the resolution routines are
/// hard-limited at step k*delay, so a respond body that tries to look ahead
/// raises PrefixViolation instead of silently cheating.  respond must be a
/// pure function of its arguments: resolution may call it for the same block
/// any number of times and in any order.
struct DelayedStrategy {
  Player side = Player::I;
  int delay_steps = 1;
  ControlSet set;
  std::string label;
  std::function<std::vector<int>(const NoisePrefix&, const ControlPrefix&, int block)>
      respond;
};

/// The pair of control paths produced by resolving two strategies against
/// one noise path.
struct ControlPair {
  ControlPath u;
  ControlPath v;
};

/// Which strategy's block is resolved first when both fire at the same step.
/// The outcome never depends on this (each block reads strictly before its
/// start step), and tests assert bit-identical results both ways; the knob
/// exists precisely so that independence can be demonstrated.
enum class ResolveOrder { PlayerIFirst, PlayerIIFirst };

namespace detail {

inline void check_block(const DelayedStrategy& s, const std::vector<int>& out, int block) {
  if (static_cast<int>(out.size()) != s.delay_steps) {
    throw std::logic_error("strategy '" + s.label + "' returned " +
                           std::to_string(out.size()) + " values for block " +
                           std::to_string(block) + ", expected " +
                           std::to_string(s.delay_steps));
  }
  for (int idx : out) {
    if (idx < 0 || idx >= s.set.size()) {
      throw std::logic_error("strategy '" + s.label + "' returned control index " +
                             std::to_string(idx) + " outside its set of size " +
                             std::to_string(s.set.size()));
    }
  }
}

}  // namespace detail

/// Resolve a strategy against a fully known opponent control path: block k
/// is computed from views limited at step k*delay.  This realizes the map
/// "noise path -> control path" induced by a strategy once the opponent's
/// play is fixed, and is also how fixed points are replayed and verified.
inline ControlPath apply_strategy(const DelayedStrategy& strat, const BrownianPath& w,
                                  const ControlPath& opponent) {
  if (!(w.grid() == opponent.grid())) {
    throw std::invalid_argument("apply_strategy: noise and opponent grids differ");
  }
  if (strat.delay_steps < 1) {
    throw std::invalid_argument("apply_strategy: delay_steps must be >= 1");
  }
  const int n = w.grid().n_steps();
  std::vector<int> own(static_cast<std::size_t>(n), 0);
  for (int start = 0, block = 0; start < n; start += strat.delay_steps, ++block) {
    const NoisePrefix np = w.prefix(start);
    const ControlPrefix cp = opponent.prefix(start);
    const std::vector<int> out = strat.respond(np, cp, block);
    detail::check_block(strat, out, block);
    const int len = std::min(strat.delay_steps, n - start);
    std::copy(out.begin(), out.begin() + len, own.begin() + start);
  }
  return ControlPath(w.grid(), strat.set, std::move(own));
}

/// Resolve a pair of strategies against one noise path into the unique pair
/// of control paths (u, v) with u = alpha(w, v) and v = beta(w, u).
///
/// Existence and uniqueness are by induction over steps: a block starting at
/// step s reads only entries at steps < s, which earlier iterations have
/// already fixed, and block 0 of each side reads nothing.  The loop resolves
/// each strategy at its own block boundaries, so the two delays may differ.
/// Prefix views are hard-limited, turning any causality bug into a
/// PrefixViolation rather than a wrong answer.
inline ControlPair fixed_point(const DelayedStrategy& alpha, const DelayedStrategy& beta,
                               const BrownianPath& w,
                               ResolveOrder order = ResolveOrder::PlayerIFirst) {
  if (alpha.side != Player::I || beta.side != Player::II) {
    throw std::invalid_argument("fixed_point: alpha must be side I and beta side II");
  }
  if (alpha.delay_steps < 1 || beta.delay_steps < 1) {
    throw std::invalid_argument("fixed_point: delay_steps must be >= 1");
  }
  const int n = w.grid().n_steps();
  std::vector<int> u_vals(static_cast<std::size_t>(n), 0);
  std::vector<int> v_vals(static_cast<std::size_t>(n), 0);

  auto resolve_alpha = [&](int s) {
    const int block = s / alpha.delay_steps;
    const NoisePrefix np = w.prefix(s);
    const ControlPrefix cp(v_vals, s);
    const std::vector<int> out = alpha.respond(np, cp, block);
    detail::check_block(alpha, out, block);
    const int len = std::min(alpha.delay_steps, n - s);
    std::copy(out.begin(), out.begin() + len, u_vals.begin() + s);
  };
  auto resolve_beta = [&](int s) {
    const int block = s / beta.delay_steps;
    const NoisePrefix np = w.prefix(s);
    const ControlPrefix cp(u_vals, s);
    const std::vector<int> out = beta.respond(np, cp, block);
    detail::check_block(beta, out, block);
    const int len = std::min(beta.delay_steps, n - s);
    std::copy(out.begin(), out.begin() + len, v_vals.begin() + s);
  };

  for (int s = 0; s < n; ++s) {
    const bool a_fires = (s % alpha.delay_steps == 0);
    const bool b_fires = (s % beta.delay_steps == 0);
    if (order == ResolveOrder::PlayerIFirst) {
      if (a_fires) resolve_alpha(s);
      if (b_fires) resolve_beta(s);
    } else {
      if (b_fires) resolve_beta(s);
      if (a_fires) resolve_alpha(s);
    }
  }
  return {ControlPath(w.grid(), alpha.set, std::move(u_vals)),
          ControlPath(w.grid(), beta.set, std::move(v_vals))};
}

/// Replay check: a resolved pair is a fixed point iff re-applying each
/// strategy to the other's finished path reproduces it exactly.
inline bool verify_fixed_point(const DelayedStrategy& alpha, const DelayedStrategy& beta,
                               const BrownianPath& w, const ControlPair& pair) {
  const ControlPath u_replay = apply_strategy(alpha, w, pair.v);
  const ControlPath v_replay = apply_strategy(beta, w, pair.u);
  const int n = w.grid().n_steps();
  return prefix_equal(u_replay, pair.u, n) && prefix_equal(v_replay, pair.v, n);
}

// ---------------------------------------------------------------------------
// Strategy constructors.
// ---------------------------------------------------------------------------

/// Always plays one fixed control index.
inline DelayedStrategy constant_strategy(Player side, ControlSet set, int delay_steps,
                                         int index, std::string label = "") {
  if (index < 0 || index >= set.size()) {
    throw std::invalid_argument("constant_strategy: index outside control set");
  }
  DelayedStrategy s;
  s.side = side;
  s.delay_steps = delay_steps;
  s.set = std::move(set);
  s.label = label.empty() ? ("constant[" + std::to_string(index) + "]") : std::move(label);
  s.respond = [index, delay_steps](const NoisePrefix&, const ControlPrefix&, int) {
    return std::vector<int>(static_cast<std::size_t>(delay_steps), index);
  };
  return s;
}

/// Block k repeats the opponent's indices from the previous own block
/// (steps [k*delay - delay, k*delay)), reduced modulo the own set size;
/// block 0 plays first_index.  The canonical "shift by one block" strategy:
/// it reads the deepest prefix a delayed strategy may legally touch.
inline DelayedStrategy copy_lagged_strategy(Player side, ControlSet set, int delay_steps,
                                            int first_index, std::string label = "") {
  if (first_index < 0 || first_index >= set.size()) {
    throw std::invalid_argument("copy_lagged_strategy: first_index outside control set");
  }
  DelayedStrategy s;
  s.side = side;
  s.delay_steps = delay_steps;
  s.set = std::move(set);
  const int size = s.set.size();
  s.label = label.empty() ? "copy-lagged" : std::move(label);
  s.respond = [delay_steps, first_index, size](const NoisePrefix&, const ControlPrefix& opp,
                                               int block) {
    std::vector<int> out(static_cast<std::size_t>(delay_steps), first_index);
    if (block > 0) {
      const int prev_start = (block - 1) * delay_steps;
      for (int r = 0; r < delay_steps; ++r) {
        out[static_cast<std::size_t>(r)] = opp.at(prev_start + r) % size;
      }
    }
    return out;
  };
  return s;
}

/// Deterministic pseudo-random table: block k's indices are drawn from a
/// hash of (seed, block, full permitted prefix of noise and opponent
/// controls).  Distinct prefixes give unrelated outputs, which makes table
/// strategies the workhorse of randomized causality tests: they depend on
/// everything they are allowed to see and nothing they are not.
inline DelayedStrategy table_strategy(Player side, ControlSet set, int delay_steps,
                                      std::uint64_t seed, std::string label = "") {
  DelayedStrategy s;
  s.side = side;
  s.delay_steps = delay_steps;
  s.set = std::move(set);
  const int size = s.set.size();
  s.label = label.empty() ? ("table[" + std::to_string(seed) + "]") : std::move(label);
  s.respond = [delay_steps, seed, size](const NoisePrefix& noise, const ControlPrefix& opp,
                                        int block) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    h = rng::fnv1a_int(block, h);
    const int limit = block * delay_steps;
    for (int step = 0; step < limit; ++step) {
      for (int c = 0; c < noise.noise_dim(); ++c) {
        h = rng::fnv1a_double(noise.increment(step, c), h);
      }
      h = rng::fnv1a_int(opp.at(step), h);
    }
    std::vector<int> out(static_cast<std::size_t>(delay_steps));
    for (int r = 0; r < delay_steps; ++r) {
      std::uint64_t state = h + static_cast<std::uint64_t>(r) * 0x9e3779b97f4a7c15ULL;
      out[static_cast<std::size_t>(r)] =
          static_cast<int>(rng::splitmix64(state) % static_cast<std::uint64_t>(size));
    }
    return out;
  };
  return s;
}

/// Plays back a fixed control path, ignoring noise and opponent.  Wraps an
/// open-loop control as a (trivially delayed) strategy.
inline DelayedStrategy lookup_strategy(Player side, const ControlPath& path,
                                       int delay_steps, std::string label = "") {
  DelayedStrategy s;
  s.side = side;
  s.delay_steps = delay_steps;
  s.set = path.set();
  s.label = label.empty() ? "lookup" : std::move(label);
  std::vector<int> values(path.raw().begin(), path.raw().end());
  s.respond = [delay_steps, values = std::move(values)](const NoisePrefix&,
                                                        const ControlPrefix&, int block) {
    std::vector<int> out(static_cast<std::size_t>(delay_steps), 0);
    for (int r = 0; r < delay_steps; ++r) {
      const auto step = static_cast<std::size_t>(block * delay_steps + r);
      out[static_cast<std::size_t>(r)] = step < values.size() ? values[step] : values.back();
    }
    return out;
  };
  return s;
}

/// Feedback policy: maps (time, state) to an index into the player's own
/// control set.
using FeedbackPolicy = std::function<int(double t, std::span<const double> x)>;

/// Wrap a feedback policy as a delayed strategy.  Block k reconstructs the
/// state trajectory by Euler integration up to node r = max(0, k*delay -
/// delay), using the noise and opponent prefixes (both permitted: r < k *
/// delay) and re-deriving its own earlier decisions recursively; the block
/// then plays policy(t_r, X_r) for all delay_steps steps.  The one-block lag
/// is what keeps the strategy inside the delayed class: two inputs agreeing
/// up to step k*delay - delay produce identical block-k outputs.
///
/// On frozen dynamics the reconstructed state never moves, so the policy
/// sees x0 at every block.
inline DelayedStrategy make_feedback_strategy(const GameDynamics& dyn,
                                              std::vector<double> x0, FeedbackPolicy policy,
                                              Player side, ControlSet own_set,
                                              ControlSet opp_set, const TimeGrid& grid,
                                              int delay_steps, std::string label = "") {
  if (static_cast<int>(x0.size()) != dyn.state_dim) {
    throw std::invalid_argument("make_feedback_strategy: x0 dimension != state_dim");
  }
  DelayedStrategy s;
  s.side = side;
  s.delay_steps = delay_steps;
  s.set = std::move(own_set);
  s.label = label.empty() ? "feedback" : std::move(label);

  s.respond = [dyn_ = dyn, x0 = std::move(x0), policy = std::move(policy), side,
               own = s.set, opp = std::move(opp_set), grid, delay_steps](
                  const NoisePrefix& noise, const ControlPrefix& opp_prefix,
                  int block) -> std::vector<int> {
    const int N = dyn_.state_dim;
    const int d = dyn_.noise_dim;
    const int r = std::max(0, block * delay_steps - delay_steps);
    const double dt = grid.dt();

    // Forward Euler re-simulation up to node r.  Own controls are re-derived
    // block by block from the same lagged rule, so the reconstruction matches
    // what actually happened without the strategy carrying any hidden state.
    std::vector<double> states(static_cast<std::size_t>(r + 1) * N);
    std::copy(x0.begin(), x0.end(), states.begin());
    std::vector<double> b(static_cast<std::size_t>(N));
    std::vector<double> sig(static_cast<std::size_t>(N) * d);
    int own_index = 0;
    for (int step = 0; step < r; ++step) {
      if (step % delay_steps == 0) {
        const int node = std::max(0, step - delay_steps);
        const std::span<const double> xn{states.data() + static_cast<std::size_t>(node) * N,
                                         static_cast<std::size_t>(N)};
        own_index = policy(grid.time(node), xn);
      }
      const std::span<const double> xs{states.data() + static_cast<std::size_t>(step) * N,
                                       static_cast<std::size_t>(N)};
      const std::span<double> xs1{states.data() + static_cast<std::size_t>(step + 1) * N,
                                  static_cast<std::size_t>(N)};
      const auto u_pt = side == Player::I ? own.point(own_index)
                                          : opp.point(opp_prefix.at(step));
      const auto v_pt = side == Player::I ? opp.point(opp_prefix.at(step))
                                          : own.point(own_index);
      dyn_.drift(xs, u_pt, v_pt, b);
      dyn_.diffusion(xs, u_pt, v_pt, sig);
      for (int i = 0; i < N; ++i) {
        double acc = xs[i] + b[static_cast<std::size_t>(i)] * dt;
        for (int c = 0; c < d; ++c) {
          acc += sig[static_cast<std::size_t>(i) * d + c] * noise.increment(step, c);
        }
        xs1[i] = acc;
        if (!std::isfinite(acc)) {
          throw NonFiniteError(
              "feedback strategy: reconstructed state became non-finite at step " +
              std::to_string(step + 1));
        }
      }
    }
    const std::span<const double> xr{states.data() + static_cast<std::size_t>(r) * N,
                                     static_cast<std::size_t>(N)};
    const int choice = policy(grid.time(r), xr);
    return std::vector<int>(static_cast<std::size_t>(delay_steps), choice);
  };
  return s;
}

/// The pathwise solution map: resolve alpha against the given opponent
/// control path on this noise path, then integrate the dynamics under the
/// resulting control pair.  Two inputs (v, w) agreeing up to step k produce
/// trajectories agreeing up to node k, which is the nonanticipativity of
/// the map; tests exercise exactly that invariant.
inline StatePath pathwise_map(const GameDynamics& dyn, std::span<const double> x0,
                              const DelayedStrategy& alpha, const ControlPath& v,
                              const BrownianPath& w) {
  const ControlPath u = apply_strategy(alpha, w, v);
  return integrate(dyn, x0, u, v, w);
}

// ---------------------------------------------------------------------------
// Randomized verification of the delay property.
// ---------------------------------------------------------------------------

/// Result of verify_delay: pass/fail plus a description of the first
/// counterexample found.
struct DelayReport {
  bool pass = true;
  int trials = 0;
  std::string counterexample;
};

/// Randomized falsification of the delay property.  Each trial draws a pair
/// of inputs (noise + opponent controls) that agree up to a random block
/// boundary m and differ afterwards, runs respond on every block with start
/// <= m under permissive (full-length) views, and checks two things:
///
///   1. outputs of those blocks are identical across the two inputs — a
///      block starting at s <= m may depend only on steps < s <= m, where
///      the inputs agree;
///   2. the view watermarks stay below each block's start — respond never
///      even read beyond its permitted prefix.
///
/// A strategy that anticipates (reads at or past its block start) fails
/// check 2 immediately and check 1 with overwhelming probability.  The cut
/// points are block-aligned because delayed-strategy outputs are blockwise
/// functions of their inputs: that is the granularity at which the class is
/// defined.
inline DelayReport verify_delay(const DelayedStrategy& strat, const TimeGrid& grid,
                                int noise_dim, const ControlSet& opp_set, int trials,
                                std::uint64_t seed) {
  DelayReport rep;
  rep.trials = trials;
  const int n = grid.n_steps();
  const int delay = strat.delay_steps;
  const int n_blocks = (n + delay - 1) / delay;

  for (int trial = 0; trial < trials; ++trial) {
    rng::Stream stream(rng::derive_seed(seed, static_cast<std::uint64_t>(trial)));
    const BrownianPath wa = sample_brownian(grid, noise_dim,
                                            rng::derive_seed(seed, 2 * trial + 1));

    std::vector<int> opp_a(static_cast<std::size_t>(n));
    for (auto& x : opp_a) x = stream.below(opp_set.size());

    // Cut at a random block boundary m = j * delay with m < n, then re-draw
    // everything from m on.
    const int m = stream.below(n_blocks) * delay;

    std::vector<double> inc_b(wa.raw().begin(), wa.raw().end());
    const double sd = std::sqrt(grid.dt());
    for (std::size_t idx = static_cast<std::size_t>(m) * noise_dim; idx < inc_b.size();
         ++idx) {
      inc_b[idx] = sd * stream.gaussian();
    }
    const BrownianPath wb(grid, noise_dim, std::move(inc_b));

    std::vector<int> opp_b = opp_a;
    for (int step = m; step < n; ++step) {
      opp_b[static_cast<std::size_t>(step)] =
          (opp_b[static_cast<std::size_t>(step)] + 1 + stream.below(opp_set.size())) %
          opp_set.size();
    }

    for (int block = 0; block * delay <= m && block * delay < n; ++block) {
      const NoisePrefix na = wa.prefix(n);
      const ControlPrefix ca(opp_a, n);
      const std::vector<int> out_a = strat.respond(na, ca, block);

      const NoisePrefix nb = wb.prefix(n);
      const ControlPrefix cb(opp_b, n);
      const std::vector<int> out_b = strat.respond(nb, cb, block);

      const int start = block * delay;
      if (std::max({na.max_read(), ca.max_read(), nb.max_read(), cb.max_read()}) >= start) {
        rep.pass = false;
        rep.counterexample = "trial " + std::to_string(trial) + ": block " +
                             std::to_string(block) + " read step " +
                             std::to_string(std::max({na.max_read(), ca.max_read(),
                                                      nb.max_read(), cb.max_read()})) +
                             ", permitted < " + std::to_string(start);
        return rep;
      }
      if (out_a != out_b) {
        rep.pass = false;
        rep.counterexample = "trial " + std::to_string(trial) + ": block " +
                             std::to_string(block) +
                             " output depends on input beyond step " + std::to_string(m);
        return rep;
      }
    }
  }
  return rep;
}

}  // namespace sdg
