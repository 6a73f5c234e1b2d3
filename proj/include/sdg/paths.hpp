#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sdg/control_set.hpp"
#include "sdg/errors.hpp"
#include "sdg/rng.hpp"
#include "sdg/time_grid.hpp"

namespace sdg {

/// Guarded read-only view of the first `limit` steps of a noise path.
///
/// Reads at steps >= limit throw PrefixViolation.  The view also records the
/// largest step actually read (the watermark), which lets tests assert not
/// just that a strategy cannot read ahead, but how far back it actually
/// looked.  The watermark is the only mutable state and exists purely for
/// diagnostics.
class NoisePrefix {
 public:
  NoisePrefix(std::span<const double> increments, int noise_dim, int limit)
      : data_(increments), dim_(noise_dim), limit_(limit) {
    if (noise_dim < 1 || limit < 0 ||
        static_cast<std::size_t>(limit) * noise_dim > data_.size()) {
      throw std::invalid_argument("NoisePrefix: inconsistent span/dim/limit");
    }
  }

  int limit() const noexcept { return limit_; }
  int noise_dim() const noexcept { return dim_; }

  /// Increment of coordinate `coord` over step `step` (from node step to
  /// node step+1).  Throws PrefixViolation when step >= limit().
  double increment(int step, int coord) const {
    if (step < 0 || step >= limit_) {
      throw PrefixViolation(step, limit_, "noise");
    }
    if (coord < 0 || coord >= dim_) {
      throw std::out_of_range("NoisePrefix::increment: coord " + std::to_string(coord));
    }
    if (step > max_read_) max_read_ = step;
    return data_[static_cast<std::size_t>(step) * dim_ + coord];
  }

  /// Largest step index read through this view so far; -1 if none.
  int max_read() const noexcept { return max_read_; }

 private:
  std::span<const double> data_;
  int dim_;
  int limit_;
  mutable int max_read_ = -1;
};

/// Guarded read-only view of the first `limit` steps of a control index
/// sequence.  Same contract as NoisePrefix.
class ControlPrefix {
 public:
  ControlPrefix(std::span<const int> values, int limit) : data_(values), limit_(limit) {
    if (limit < 0 || static_cast<std::size_t>(limit) > data_.size()) {
      throw std::invalid_argument("ControlPrefix: limit exceeds available values");
    }
  }

  int limit() const noexcept { return limit_; }

  /// Control index chosen for step `step`.  Throws PrefixViolation when
  /// step >= limit().
  int at(int step) const {
    if (step < 0 || step >= limit_) {
      throw PrefixViolation(step, limit_, "control");
    }
    if (step > max_read_) max_read_ = step;
    return data_[static_cast<std::size_t>(step)];
  }

  /// Largest step index read through this view so far; -1 if none.
  int max_read() const noexcept { return max_read_; }

 private:
  std::span<const int> data_;
  int limit_;
  mutable int max_read_ = -1;
};

/// Sampled Brownian path on a time grid, stored as per-step increments
/// (row-major, n_steps x noise_dim).  Immutable after construction.
class BrownianPath {
 public:
  BrownianPath(TimeGrid grid, int noise_dim, std::vector<double> increments)
      : grid_(std::move(grid)), dim_(noise_dim), increments_(std::move(increments)) {
    if (dim_ < 1) {
      throw std::invalid_argument("BrownianPath: noise_dim must be >= 1");
    }
    const auto expected =
        static_cast<std::size_t>(grid_.n_steps()) * static_cast<std::size_t>(dim_);
    if (increments_.size() != expected) {
      throw std::invalid_argument("BrownianPath: expected " + std::to_string(expected) +
                                  " increments, got " + std::to_string(increments_.size()));
    }
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  int noise_dim() const noexcept { return dim_; }

  double increment(int step, int coord) const {
    if (step < 0 || step >= grid_.n_steps() || coord < 0 || coord >= dim_) {
      throw std::out_of_range("BrownianPath::increment: (" + std::to_string(step) + ", " +
                              std::to_string(coord) + ") outside path");
    }
    return increments_[static_cast<std::size_t>(step) * dim_ + coord];
  }

  /// Cumulative value W_k of coordinate `coord` at node k (W_0 = 0).
  double value(int node, int coord) const {
    if (node < 0 || node > grid_.n_steps()) {
      throw std::out_of_range("BrownianPath::value: node " + std::to_string(node));
    }
    double acc = 0.0;
    for (int s = 0; s < node; ++s) acc += increment(s, coord);
    return acc;
  }

  std::span<const double> raw() const noexcept { return increments_; }

  /// Guarded view of the first `limit` steps.
  NoisePrefix prefix(int limit) const { return NoisePrefix(increments_, dim_, limit); }

 private:
  TimeGrid grid_;
  int dim_;
  std::vector<double> increments_;
};

/// Piecewise-constant control path: one index into a ControlSet per step.
/// The path owns a copy of its control set, so the index sequence is always
/// interpretable on its own.  Immutable after construction.
class ControlPath {
 public:
  ControlPath(TimeGrid grid, ControlSet set, std::vector<int> values)
      : grid_(std::move(grid)), set_(std::move(set)), values_(std::move(values)) {
    if (values_.size() != static_cast<std::size_t>(grid_.n_steps())) {
      throw std::invalid_argument("ControlPath: expected " +
                                  std::to_string(grid_.n_steps()) + " values, got " +
                                  std::to_string(values_.size()));
    }
    for (std::size_t s = 0; s < values_.size(); ++s) {
      if (values_[s] < 0 || values_[s] >= set_.size()) {
        throw std::invalid_argument("ControlPath: value at step " + std::to_string(s) +
                                    " is " + std::to_string(values_[s]) +
                                    ", outside control set of size " +
                                    std::to_string(set_.size()));
      }
    }
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  const ControlSet& set() const noexcept { return set_; }

  int index_at(int step) const {
    if (step < 0 || step >= grid_.n_steps()) {
      throw std::out_of_range("ControlPath::index_at: step " + std::to_string(step));
    }
    return values_[static_cast<std::size_t>(step)];
  }

  /// Control point in effect over step `step`.
  std::span<const double> value_at(int step) const { return set_.point(index_at(step)); }

  std::span<const int> raw() const noexcept { return values_; }

  /// Guarded view of the first `limit` steps.
  ControlPrefix prefix(int limit) const { return ControlPrefix(values_, limit); }

 private:
  TimeGrid grid_;
  ControlSet set_;
  std::vector<int> values_;
};

/// Draw a Brownian path: independent N(0, dt) increments per step and noise
/// coordinate, from the deterministic stream seeded with `seed`.  The same
/// (grid, noise_dim, seed) triple always reproduces the same path bit for
/// bit; see sdg::rng for why the generator is pinned down explicitly.
inline BrownianPath sample_brownian(const TimeGrid& grid, int noise_dim,
                                    std::uint64_t seed) {
  rng::Stream stream(seed);
  const double sd = std::sqrt(grid.dt());
  std::vector<double> inc(static_cast<std::size_t>(grid.n_steps()) *
                          static_cast<std::size_t>(noise_dim));
  for (auto& x : inc) x = sd * stream.gaussian();
  return BrownianPath(grid, noise_dim, std::move(inc));
}

/// Exact equality of the first k steps of two noise paths (and of their
/// grids and dimensions).  Equality is on stored doubles, not within a
/// tolerance: prefix agreement is a structural notion here, produced by
/// copying, never by arithmetic.
inline bool prefix_equal(const BrownianPath& a, const BrownianPath& b, int k) {
  if (!(a.grid() == b.grid()) || a.noise_dim() != b.noise_dim()) return false;
  if (k < 0 || k > a.grid().n_steps()) {
    throw std::out_of_range("prefix_equal: k=" + std::to_string(k) + " outside [0, " +
                            std::to_string(a.grid().n_steps()) + "]");
  }
  for (int s = 0; s < k; ++s) {
    for (int c = 0; c < a.noise_dim(); ++c) {
      if (a.increment(s, c) != b.increment(s, c)) return false;
    }
  }
  return true;
}

/// Exact equality of the first k steps of two control paths.
inline bool prefix_equal(const ControlPath& a, const ControlPath& b, int k) {
  if (!(a.grid() == b.grid()) || !(a.set() == b.set())) return false;
  if (k < 0 || k > a.grid().n_steps()) {
    throw std::out_of_range("prefix_equal: k=" + std::to_string(k) + " outside [0, " +
                            std::to_string(a.grid().n_steps()) + "]");
  }
  for (int s = 0; s < k; ++s) {
    if (a.index_at(s) != b.index_at(s)) return false;
  }
  return true;
}

}  // namespace sdg
