#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdg {

/// Finite set of control points in R^m, stored row-major.  Controls on both
/// sides of the game are always drawn from such finite sets, so extrema over
/// controls (Hamiltonians, family values) are exact enumerations rather than
/// numerical optimizations.
class ControlSet {
 public:
  /// Empty placeholder (size 0).  Strategies and other owners default to this
  /// and must be given a populated set before use; point() on it throws.
  ControlSet() : dim_(1) {}

  /// points: size n_points * ambient_dim, row-major.
  ControlSet(std::vector<double> points, int ambient_dim, std::string name = "")
      : points_(std::move(points)), dim_(ambient_dim), name_(std::move(name)) {
    if (dim_ < 1) {
      throw std::invalid_argument("ControlSet: ambient_dim must be >= 1");
    }
    if (points_.empty() || points_.size() % static_cast<std::size_t>(dim_) != 0) {
      throw std::invalid_argument("ControlSet: points size " + std::to_string(points_.size()) +
                                  " is not a positive multiple of ambient_dim " +
                                  std::to_string(dim_));
    }
  }

  int size() const noexcept { return static_cast<int>(points_.size()) / dim_; }
  int ambient_dim() const noexcept { return dim_; }
  const std::string& name() const noexcept { return name_; }

  /// The i-th control point as a view into contiguous storage.
  std::span<const double> point(int i) const {
    if (i < 0 || i >= size()) {
      throw std::out_of_range("ControlSet::point: index " + std::to_string(i) +
                              " outside [0, " + std::to_string(size()) + ")");
    }
    return {points_.data() + static_cast<std::size_t>(i) * dim_,
            static_cast<std::size_t>(dim_)};
  }

  friend bool operator==(const ControlSet& a, const ControlSet& b) noexcept {
    return a.dim_ == b.dim_ && a.points_ == b.points_;
  }

 private:
  std::vector<double> points_;
  int dim_;
  std::string name_;
};

/// Uniformly spaced one-dimensional control set over [lo, hi] with n_points
/// points, endpoints included.  n_points == 1 yields the single point lo
/// (and requires lo == hi so the set is unambiguous).
inline ControlSet discretize_interval(double lo, double hi, int n_points,
                                      std::string name = "") {
  if (n_points < 1) {
    throw std::invalid_argument("discretize_interval: n_points must be >= 1");
  }
  if (n_points == 1) {
    if (lo != hi) {
      throw std::invalid_argument(
          "discretize_interval: a single point requires lo == hi");
    }
    return ControlSet({lo}, 1, std::move(name));
  }
  if (!(hi > lo)) {
    throw std::invalid_argument("discretize_interval: require hi > lo");
  }
  std::vector<double> pts(static_cast<std::size_t>(n_points));
  const double h = (hi - lo) / (n_points - 1);
  for (int i = 0; i < n_points; ++i) {
    pts[static_cast<std::size_t>(i)] = lo + h * i;
  }
  pts.back() = hi;  // exact right endpoint regardless of rounding
  return ControlSet(std::move(pts), 1, std::move(name));
}

}  // namespace sdg
