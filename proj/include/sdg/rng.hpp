#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace sdg::rng {

/// Advance a splitmix64 state and return the next 64-bit output.
///
/// splitmix64 is used instead of std::mt19937 + std::normal_distribution
/// because the standard normal distribution's algorithm is
/// implementation-defined: two standard libraries may produce different
/// streams from the same seed, which would break byte-identical replay of
/// recorded runs.  splitmix64 plus an explicit Box-Muller transform is fully
/// specified here, so every platform reproduces the same increments bit for
/// bit.
inline std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Mix a base seed with a stream index into an independent sub-seed.
/// Used to give each Monte Carlo path its own deterministic stream, so the
/// i-th path is reproducible regardless of how many paths run before it.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
  std::uint64_t s = base ^ (0x9e3779b97f4a7c15ULL + stream * 0xd1b54a32d192ed03ULL);
  // One extra scramble so that (base, stream) and (base', stream') collisions
  // require inverting the full 64-bit mix.
  return splitmix64(s);
}

/// Deterministic random stream: splitmix64 underneath, Box-Muller on top.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept { return splitmix64(state_); }

  /// Uniform draw in the half-open interval (0, 1].  The open lower end makes
  /// log(u) in Box-Muller safe.
  double uniform_pos() noexcept {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Uniform draw in [0, 1).
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal draw via the Box-Muller transform.  Draws are produced
  /// in pairs; the second element is cached so consecutive calls consume the
  /// underlying stream at a fixed, reproducible rate.
  double gaussian() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Uniform integer in {0, 1, ..., n-1} via rejection-free scaled draw.
  /// n must be positive and far below 2^53, which holds for every control
  /// set and table used here.
  int below(int n) noexcept {
    return static_cast<int>(uniform() * static_cast<double>(n));
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// 64-bit FNV-1a over a byte span.  Used to hash path prefixes into table
/// lookups; chosen for its simplicity and stable cross-platform definition.
inline std::uint64_t fnv1a(std::span<const unsigned char> bytes,
                           std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Fold one double into a running FNV-1a hash through its bit pattern.
inline std::uint64_t fnv1a_double(double x, std::uint64_t h) noexcept {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  for (int i = 0; i < 8; ++i) {
    h ^= (bits >> (8 * i)) & 0xffULL;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Fold one 32-bit integer into a running FNV-1a hash.
inline std::uint64_t fnv1a_int(int v, std::uint64_t h) noexcept {
  const auto bits = static_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) {
    h ^= (bits >> (8 * i)) & 0xffULL;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace sdg::rng
