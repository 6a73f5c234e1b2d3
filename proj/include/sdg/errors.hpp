#pragma once

#include <stdexcept>
#include <string>

namespace sdg {

/// Thrown when a guarded prefix view is read at or beyond its limit.
/// Signals that a strategy (or other consumer) tried to use information
/// it is not allowed to see yet.
class PrefixViolation : public std::logic_error {
 public:
  PrefixViolation(int step, int limit, const std::string& what_kind)
      : std::logic_error("prefix violation: read of " + what_kind + " at step " +
                         std::to_string(step) + " but view is limited to steps < " +
                         std::to_string(limit)),
        step_(step),
        limit_(limit) {}

  int step() const noexcept { return step_; }
  int limit() const noexcept { return limit_; }

 private:
  int step_;
  int limit_;
};

/// Thrown when a state trajectory stops being finite during integration.
class NonFiniteError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown when a time-step violates the stability bound of the explicit scheme.
class CflError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown when a spatial query leaves the grid box.  Values are reported,
/// never clamped, so callers see exactly where a trajectory escaped.
class OutOfDomainError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown when a scenario configuration file fails validation.  The message
/// carries the JSON path of the offending field.
class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sdg
