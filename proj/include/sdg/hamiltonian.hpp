#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdg/control_set.hpp"
#include "sdg/dynamics.hpp"
#include "sdg/rng.hpp"

namespace sdg {

/// One evaluation point for the Hamiltonians: a state x, a gradient
/// surrogate xi in R^N, and a symmetric Hessian surrogate A in R^{NxN}
/// (row-major).
struct HamiltonianQuery {
  std::vector<double> x;
  std::vector<double> grad;
  std::vector<double> hess;  // N*N row-major, symmetric

  int dim() const noexcept { return static_cast<int>(x.size()); }
};

/// The inner expression both Hamiltonians extremize:
///
///   payoff(u, v) = 1/2 tr(sigma sigma^T A) + <b, xi>
///
/// evaluated at the query point.  h_plus and h_minus call this one function,
/// with identical argument order, so the two sweeps see bit-identical
/// payoff values — which is what makes their coincidence on separated
/// dynamics exact rather than approximate.
inline double hamiltonian_payoff(const GameDynamics& dyn, const HamiltonianQuery& q,
                                 std::span<const double> u, std::span<const double> v) {
  const int N = dyn.state_dim;
  const int d = dyn.noise_dim;
  if (q.dim() != N || static_cast<int>(q.grad.size()) != N ||
      static_cast<int>(q.hess.size()) != N * N) {
    throw std::invalid_argument("hamiltonian_payoff: query dimensions mismatch dynamics");
  }
  thread_local std::vector<double> b;
  thread_local std::vector<double> sig;
  b.assign(static_cast<std::size_t>(N), 0.0);
  sig.assign(static_cast<std::size_t>(N) * d, 0.0);
  dyn.drift(q.x, u, v, b);
  dyn.diffusion(q.x, u, v, sig);

  // tr(sigma sigma^T A) = sum_c sum_{i,j} sigma_ic sigma_jc A_ij
  double trace = 0.0;
  for (int c = 0; c < d; ++c) {
    for (int i = 0; i < N; ++i) {
      const double sic = sig[static_cast<std::size_t>(i) * d + c];
      if (sic == 0.0) continue;
      for (int j = 0; j < N; ++j) {
        trace += sic * sig[static_cast<std::size_t>(j) * d + c] *
                 q.hess[static_cast<std::size_t>(i) * N + j];
      }
    }
  }
  double drift_term = 0.0;
  for (int i = 0; i < N; ++i) drift_term += b[static_cast<std::size_t>(i)] * q.grad[i];
  return 0.5 * trace + drift_term;
}

/// Value of a finite minimax together with the selected control indices.
struct SaddlePoint {
  double value = 0.0;
  int u_index = -1;
  int v_index = -1;
};

/// Upper Hamiltonian: min over u of max over v of the payoff, by exact
/// enumeration.  Ties break toward the lowest index on both layers, so the
/// result is a deterministic function of the inputs.
inline SaddlePoint h_plus(const GameDynamics& dyn, const ControlSet& u_set,
                          const ControlSet& v_set, const HamiltonianQuery& q) {
  SaddlePoint best;
  for (int i = 0; i < u_set.size(); ++i) {
    double inner = -std::numeric_limits<double>::infinity();
    int inner_v = -1;
    for (int j = 0; j < v_set.size(); ++j) {
      const double p = hamiltonian_payoff(dyn, q, u_set.point(i), v_set.point(j));
      if (p > inner) {
        inner = p;
        inner_v = j;
      }
    }
    if (best.u_index < 0 || inner < best.value) {
      best.value = inner;
      best.u_index = i;
      best.v_index = inner_v;
    }
  }
  return best;
}

/// Lower Hamiltonian: max over v of min over u of the payoff.  Same
/// enumeration and tie-breaking discipline as h_plus.
inline SaddlePoint h_minus(const GameDynamics& dyn, const ControlSet& u_set,
                           const ControlSet& v_set, const HamiltonianQuery& q) {
  SaddlePoint best;
  for (int j = 0; j < v_set.size(); ++j) {
    double inner = std::numeric_limits<double>::infinity();
    int inner_u = -1;
    for (int i = 0; i < u_set.size(); ++i) {
      const double p = hamiltonian_payoff(dyn, q, u_set.point(i), v_set.point(j));
      if (p < inner) {
        inner = p;
        inner_u = i;
      }
    }
    if (best.v_index < 0 || inner > best.value) {
      best.value = inner;
      best.v_index = j;
      best.u_index = inner_u;
    }
  }
  return best;
}

/// Gap h_plus - h_minus at one query.  Always >= 0 up to rounding: for any
/// finite matrix, min-max dominates max-min.
inline double isaacs_gap(const GameDynamics& dyn, const ControlSet& u_set,
                         const ControlSet& v_set, const HamiltonianQuery& q) {
  return h_plus(dyn, u_set, v_set, q).value - h_minus(dyn, u_set, v_set, q).value;
}

/// Aggregate result of a randomized minimax comparison sweep.
struct SaddleReport {
  int n_queries = 0;
  double max_gap = 0.0;    ///< largest h_plus - h_minus seen
  double min_gap = 0.0;    ///< smallest gap seen (negative would refute weak duality)
  double mean_gap = 0.0;
  int worst_query = -1;    ///< index of the query attaining max_gap
  double tolerance = 0.0;
  bool holds = false;      ///< max_gap <= tolerance
};

/// Draw a random query: x uniform in the box, gradient entries uniform in
/// [-grad_scale, grad_scale], Hessian A = (B + B^T)/2 with entries of B
/// uniform in [-hess_scale, hess_scale].
inline HamiltonianQuery sample_query(const Box& domain, rng::Stream& stream,
                                     double grad_scale = 1.0, double hess_scale = 1.0) {
  const int N = domain.dim();
  HamiltonianQuery q;
  q.x.resize(static_cast<std::size_t>(N));
  q.grad.resize(static_cast<std::size_t>(N));
  q.hess.assign(static_cast<std::size_t>(N) * N, 0.0);
  for (int i = 0; i < N; ++i) {
    q.x[static_cast<std::size_t>(i)] =
        domain.lo[static_cast<std::size_t>(i)] +
        stream.uniform() * (domain.hi[static_cast<std::size_t>(i)] -
                            domain.lo[static_cast<std::size_t>(i)]);
    q.grad[static_cast<std::size_t>(i)] = grad_scale * (2.0 * stream.uniform() - 1.0);
  }
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      const double bij = hess_scale * (2.0 * stream.uniform() - 1.0);
      q.hess[static_cast<std::size_t>(i) * N + j] += 0.5 * bij;
      q.hess[static_cast<std::size_t>(j) * N + i] += 0.5 * bij;
    }
  }
  return q;
}

/// Randomized sweep comparing the two Hamiltonians over n_queries random
/// query points.  `holds` reports whether the largest gap stays within
/// tolerance, i.e. whether the minimax condition is (empirically) satisfied
/// for these dynamics and control sets.
inline SaddleReport check_isaacs(const GameDynamics& dyn, const ControlSet& u_set,
                                 const ControlSet& v_set, const Box& domain, int n_queries,
                                 std::uint64_t seed, double tolerance = 1e-12,
                                 double grad_scale = 1.0, double hess_scale = 1.0) {
  if (domain.dim() != dyn.state_dim) {
    throw std::invalid_argument("check_isaacs: box dimension != state_dim");
  }
  if (n_queries < 1) {
    throw std::invalid_argument("check_isaacs: n_queries must be >= 1");
  }
  SaddleReport rep;
  rep.n_queries = n_queries;
  rep.tolerance = tolerance;
  rep.min_gap = std::numeric_limits<double>::infinity();
  rep.max_gap = -std::numeric_limits<double>::infinity();
  rng::Stream stream(seed);
  double sum = 0.0;
  for (int k = 0; k < n_queries; ++k) {
    const HamiltonianQuery q = sample_query(domain, stream, grad_scale, hess_scale);
    const double gap = isaacs_gap(dyn, u_set, v_set, q);
    sum += gap;
    if (gap > rep.max_gap) {
      rep.max_gap = gap;
      rep.worst_query = k;
    }
    rep.min_gap = std::min(rep.min_gap, gap);
  }
  rep.mean_gap = sum / n_queries;
  rep.holds = rep.max_gap <= tolerance;
  return rep;
}

}  // namespace sdg
