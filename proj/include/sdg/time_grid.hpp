#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace sdg {

/// Uniform partition of a time interval [t0, T] together with the block
/// length (in steps) used by delayed strategies.
///
/// Invariants, checked at construction:
///   - T > t0 and n_steps >= 1, so dt() is positive;
///   - delay_steps >= 1 and n_steps is a multiple of delay_steps, so the
///     horizon splits into whole strategy blocks.
class TimeGrid {
 public:
  TimeGrid(double t0, double t_final, int n_steps, int delay_steps)
      : t0_(t0), t_final_(t_final), n_steps_(n_steps), delay_steps_(delay_steps) {
    if (!(t_final > t0)) {
      throw std::invalid_argument("TimeGrid: require T > t0, got t0=" + std::to_string(t0) +
                                  " T=" + std::to_string(t_final));
    }
    if (n_steps < 1) {
      throw std::invalid_argument("TimeGrid: require n_steps >= 1, got " +
                                  std::to_string(n_steps));
    }
    if (delay_steps < 1) {
      throw std::invalid_argument("TimeGrid: require delay_steps >= 1, got " +
                                  std::to_string(delay_steps));
    }
    if (n_steps % delay_steps != 0) {
      throw std::invalid_argument("TimeGrid: n_steps=" + std::to_string(n_steps) +
                                  " must be a multiple of delay_steps=" +
                                  std::to_string(delay_steps));
    }
  }

  double t0() const noexcept { return t0_; }
  double t_final() const noexcept { return t_final_; }
  int n_steps() const noexcept { return n_steps_; }
  int delay_steps() const noexcept { return delay_steps_; }
  int n_blocks() const noexcept { return n_steps_ / delay_steps_; }

  double dt() const noexcept { return (t_final_ - t0_) / n_steps_; }

  /// Time of the k-th node, k in [0, n_steps].  Computed as t0 + k*dt rather
  /// than by accumulation, so node times do not drift with k.
  double time(int k) const {
    if (k < 0 || k > n_steps_) {
      throw std::out_of_range("TimeGrid::time: node " + std::to_string(k) +
                              " outside [0, " + std::to_string(n_steps_) + "]");
    }
    return t0_ + static_cast<double>(k) * dt();
  }

  /// Index of the grid node equal to t (within tol); throws if t falls
  /// between nodes.  Used to align intermediate times, e.g. the split time
  /// of a programming-principle check, with the grid.
  int node_of(double t, double tol = 1e-9) const {
    const double raw = (t - t0_) / dt();
    const auto k = static_cast<int>(std::llround(raw));
    if (k < 0 || k > n_steps_ || std::abs(time(k) - t) > tol) {
      throw std::invalid_argument("TimeGrid::node_of: t=" + std::to_string(t) +
                                  " is not a grid node");
    }
    return k;
  }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) noexcept {
    return a.t0_ == b.t0_ && a.t_final_ == b.t_final_ && a.n_steps_ == b.n_steps_ &&
           a.delay_steps_ == b.delay_steps_;
  }

 private:
  double t0_;
  double t_final_;
  int n_steps_;
  int delay_steps_;
};

}  // namespace sdg
