#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sdg/errors.hpp"

namespace sdg {

/// Which value function a grid approximates: the upper one (minimax) or the
/// lower one (maximin).
enum class HjiKind { Plus, Minus };

inline const char* to_string(HjiKind k) noexcept {
  return k == HjiKind::Plus ? "plus" : "minus";
}

/// Uniform rectangular grid over an axis-aligned box, at most a few
/// dimensions, nodes[axis] points per axis including both endpoints.
/// Storage order is row-major with the last axis fastest.
class SpaceGrid {
 public:
  SpaceGrid(std::vector<double> lo, std::vector<double> hi, std::vector<int> nodes)
      : lo_(std::move(lo)), hi_(std::move(hi)), nodes_(std::move(nodes)) {
    if (lo_.empty() || lo_.size() != hi_.size() || lo_.size() != nodes_.size()) {
      throw std::invalid_argument("SpaceGrid: lo/hi/nodes sizes must match and be >= 1");
    }
    dx_.resize(lo_.size());
    for (std::size_t a = 0; a < lo_.size(); ++a) {
      if (!(hi_[a] > lo_[a])) {
        throw std::invalid_argument("SpaceGrid: require hi > lo on axis " +
                                    std::to_string(a));
      }
      if (nodes_[a] < 3) {
        throw std::invalid_argument(
            "SpaceGrid: need at least 3 nodes per axis (one interior), axis " +
            std::to_string(a));
      }
      dx_[a] = (hi_[a] - lo_[a]) / (nodes_[a] - 1);
    }
    strides_.resize(lo_.size());
    std::size_t s = 1;
    for (int a = static_cast<int>(lo_.size()) - 1; a >= 0; --a) {
      strides_[static_cast<std::size_t>(a)] = s;
      s *= static_cast<std::size_t>(nodes_[static_cast<std::size_t>(a)]);
    }
    total_ = s;
  }

  int dim() const noexcept { return static_cast<int>(lo_.size()); }
  std::size_t total() const noexcept { return total_; }
  double lo(int axis) const { return lo_[check_axis(axis)]; }
  double hi(int axis) const { return hi_[check_axis(axis)]; }
  double dx(int axis) const { return dx_[check_axis(axis)]; }
  int nodes(int axis) const { return nodes_[check_axis(axis)]; }
  std::size_t stride(int axis) const { return strides_[check_axis(axis)]; }

  double min_dx() const { return *std::min_element(dx_.begin(), dx_.end()); }
  double max_dx() const { return *std::max_element(dx_.begin(), dx_.end()); }

  /// Coordinate of the i-th node on an axis; the last node is exactly hi.
  double coord(int axis, int i) const {
    const auto a = check_axis(axis);
    if (i < 0 || i >= nodes_[a]) {
      throw std::out_of_range("SpaceGrid::coord: node index " + std::to_string(i));
    }
    return i == nodes_[a] - 1 ? hi_[a] : lo_[a] + dx_[a] * i;
  }

  std::size_t flat(std::span<const int> idx) const {
    std::size_t f = 0;
    for (int a = 0; a < dim(); ++a) {
      f += static_cast<std::size_t>(idx[static_cast<std::size_t>(a)]) *
           strides_[static_cast<std::size_t>(a)];
    }
    return f;
  }

  void unflatten(std::size_t flat_index, std::span<int> out) const {
    for (int a = 0; a < dim(); ++a) {
      const auto s = strides_[static_cast<std::size_t>(a)];
      out[static_cast<std::size_t>(a)] = static_cast<int>(flat_index / s);
      flat_index %= s;
    }
  }

  void coords(std::size_t flat_index, std::span<double> out) const {
    for (int a = dim() - 1; a >= 0; --a) {
      const auto s = strides_[static_cast<std::size_t>(a)];
      const int i = static_cast<int>((flat_index / s) %
                                     static_cast<std::size_t>(nodes_[static_cast<std::size_t>(a)]));
      out[static_cast<std::size_t>(a)] = coord(a, i);
    }
  }

  bool on_boundary(std::size_t flat_index) const {
    for (int a = 0; a < dim(); ++a) {
      const auto s = strides_[static_cast<std::size_t>(a)];
      const int i = static_cast<int>((flat_index / s) %
                                     static_cast<std::size_t>(nodes_[static_cast<std::size_t>(a)]));
      if (i == 0 || i == nodes_[static_cast<std::size_t>(a)] - 1) return true;
    }
    return false;
  }

  friend bool operator==(const SpaceGrid& a, const SpaceGrid& b) noexcept {
    return a.lo_ == b.lo_ && a.hi_ == b.hi_ && a.nodes_ == b.nodes_;
  }

 private:
  std::size_t check_axis(int axis) const {
    if (axis < 0 || axis >= dim()) {
      throw std::out_of_range("SpaceGrid: axis " + std::to_string(axis));
    }
    return static_cast<std::size_t>(axis);
  }

  std::vector<double> lo_, hi_;
  std::vector<int> nodes_;
  std::vector<double> dx_;
  std::vector<std::size_t> strides_;
  std::size_t total_ = 0;
};

/// A value function on a space grid at a sequence of time levels (ascending,
/// level 0 = initial time, last level = horizon), plus optional per-level
/// control choices extracted from the minimax (used to build feedback
/// strategies).  Immutable after construction.
class ValueGrid {
 public:
  ValueGrid(SpaceGrid space, std::vector<double> times, HjiKind kind,
            std::vector<double> values, std::vector<int> policy_u = {},
            std::vector<int> policy_v = {})
      : space_(std::move(space)),
        times_(std::move(times)),
        kind_(kind),
        values_(std::move(values)),
        policy_u_(std::move(policy_u)),
        policy_v_(std::move(policy_v)) {
    if (times_.size() < 2) {
      throw std::invalid_argument("ValueGrid: need at least two time levels");
    }
    for (std::size_t k = 1; k < times_.size(); ++k) {
      if (!(times_[k] > times_[k - 1])) {
        throw std::invalid_argument("ValueGrid: times must be strictly increasing");
      }
    }
    const std::size_t expected = times_.size() * space_.total();
    if (values_.size() != expected) {
      throw std::invalid_argument("ValueGrid: expected " + std::to_string(expected) +
                                  " values, got " + std::to_string(values_.size()));
    }
    if (!policy_u_.empty() && (policy_u_.size() != expected || policy_v_.size() != expected)) {
      throw std::invalid_argument("ValueGrid: policy arrays must match value layout");
    }
  }

  const SpaceGrid& space() const noexcept { return space_; }
  const std::vector<double>& times() const noexcept { return times_; }
  HjiKind kind() const noexcept { return kind_; }
  int n_levels() const noexcept { return static_cast<int>(times_.size()); }
  bool has_policy() const noexcept { return !policy_u_.empty(); }

  double at(int level, std::size_t node) const {
    return values_[check(level, node)];
  }

  std::span<const double> level(int k) const {
    if (k < 0 || k >= n_levels()) {
      throw std::out_of_range("ValueGrid::level: " + std::to_string(k));
    }
    return {values_.data() + static_cast<std::size_t>(k) * space_.total(), space_.total()};
  }

  int policy_u_at(int level, std::size_t node) const {
    if (!has_policy()) throw std::logic_error("ValueGrid: no policy stored");
    return policy_u_[check(level, node)];
  }
  int policy_v_at(int level, std::size_t node) const {
    if (!has_policy()) throw std::logic_error("ValueGrid: no policy stored");
    return policy_v_[check(level, node)];
  }

  std::span<const double> raw_values() const noexcept { return values_; }
  std::span<const int> raw_policy_u() const noexcept { return policy_u_; }
  std::span<const int> raw_policy_v() const noexcept { return policy_v_; }

  /// Index of the level whose time equals t within tol; throws when t falls
  /// between levels.
  int level_of(double t, double tol = 1e-9) const {
    const auto it = std::lower_bound(times_.begin(), times_.end(), t - tol);
    if (it != times_.end() && std::abs(*it - t) <= tol) {
      return static_cast<int>(it - times_.begin());
    }
    throw std::invalid_argument("ValueGrid::level_of: t=" + std::to_string(t) +
                                " is not a stored level");
  }

  /// Multilinear interpolation at a point inside the box.  Points outside
  /// (beyond a relative tolerance) raise OutOfDomainError carrying the
  /// coordinates: escapes are reported, never clamped away.
  double interpolate(int level, std::span<const double> x) const {
    const int N = space_.dim();
    if (static_cast<int>(x.size()) != N) {
      throw std::invalid_argument("ValueGrid::interpolate: point dimension mismatch");
    }
    const std::span<const double> lvl = this->level(level);

    int base[8] = {0};  // per-axis lower node index (dim() <= 8 always holds here)
    double w[8] = {0.0};
    if (N > 8) throw std::logic_error("ValueGrid::interpolate: dimension too large");
    for (int a = 0; a < N; ++a) {
      const double tol = 1e-9 * space_.dx(a);
      const double xa = x[static_cast<std::size_t>(a)];
      if (xa < space_.lo(a) - tol || xa > space_.hi(a) + tol) {
        std::string msg = "interpolation point outside grid: axis " + std::to_string(a) +
                          " value " + std::to_string(xa) + " not in [" +
                          std::to_string(space_.lo(a)) + ", " + std::to_string(space_.hi(a)) +
                          "]";
        throw OutOfDomainError(msg);
      }
      const double s = (xa - space_.lo(a)) / space_.dx(a);
      int i0 = static_cast<int>(std::floor(s));
      i0 = std::clamp(i0, 0, space_.nodes(a) - 2);
      base[a] = i0;
      w[a] = std::clamp(s - i0, 0.0, 1.0);
    }
    double acc = 0.0;
    for (int corner = 0; corner < (1 << N); ++corner) {
      double weight = 1.0;
      std::size_t f = 0;
      for (int a = 0; a < N; ++a) {
        const int bit = (corner >> a) & 1;
        weight *= bit ? w[a] : 1.0 - w[a];
        f += static_cast<std::size_t>(base[a] + bit) * space_.stride(a);
      }
      acc += weight * lvl[f];
    }
    return acc;
  }

 private:
  std::size_t check(int level, std::size_t node) const {
    if (level < 0 || level >= n_levels() || node >= space_.total()) {
      throw std::out_of_range("ValueGrid: (level " + std::to_string(level) + ", node " +
                              std::to_string(node) + ") outside grid");
    }
    return static_cast<std::size_t>(level) * space_.total() + node;
  }

  SpaceGrid space_;
  std::vector<double> times_;
  HjiKind kind_;
  std::vector<double> values_;
  std::vector<int> policy_u_;
  std::vector<int> policy_v_;
};

/// Feedback rule derived from a solved grid: nearest time level, nearest
/// interior node, stored minimax choice for the requested side (player I
/// reads the u choice, player II the v choice).  Queries are clamped to the
/// interior because boundary nodes, being Dirichlet-held, carry no choice.
inline std::function<int(double, std::span<const double>)> make_grid_policy(
    std::shared_ptr<const ValueGrid> vg, bool player_one) {
  if (!vg || !vg->has_policy()) {
    throw std::invalid_argument("make_grid_policy: grid has no stored policy");
  }
  return [vg, player_one](double t, std::span<const double> x) -> int {
    const auto& times = vg->times();
    const auto it = std::lower_bound(times.begin(), times.end(), t);
    int level;
    if (it == times.begin()) {
      level = 0;
    } else if (it == times.end()) {
      level = static_cast<int>(times.size()) - 1;
    } else {
      const int hi = static_cast<int>(it - times.begin());
      level = (*it - t <= t - times[static_cast<std::size_t>(hi - 1)]) ? hi : hi - 1;
    }
    const SpaceGrid& g = vg->space();
    std::size_t f = 0;
    for (int a = 0; a < g.dim(); ++a) {
      const double s = (x[static_cast<std::size_t>(a)] - g.lo(a)) / g.dx(a);
      int i = static_cast<int>(std::llround(s));
      i = std::clamp(i, 1, g.nodes(a) - 2);
      f += static_cast<std::size_t>(i) * g.stride(a);
    }
    const int choice = player_one ? vg->policy_u_at(level, f) : vg->policy_v_at(level, f);
    if (choice < 0) {
      throw std::logic_error("make_grid_policy: no stored choice at queried node");
    }
    return choice;
  };
}

}  // namespace sdg
