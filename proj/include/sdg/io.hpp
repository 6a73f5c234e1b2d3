#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "sdg/dynamics.hpp"
#include "sdg/paths.hpp"
#include "sdg/value_grid.hpp"

namespace sdg {

namespace detail {

/// Shortest round-trip decimal form of a double, so text artifacts are
/// byte-stable across runs and platforms.
inline std::string format_double(double x) {
  std::array<char, 32> buf;
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (res.ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf.data(), res.ptr);
}

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
inline void write_pod(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  write_bytes(os, &v, sizeof v);
}

template <typename T>
inline T read_pod(std::istream& is) {
  static_assert(std::is_trivially_copyable_v<T>);
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw std::runtime_error("value grid read: unexpected end of stream");
  return v;
}

}  // namespace detail

/// noise CSV: one row per step with the time at the step's left node and the
/// per-coordinate increments.
inline void write_noise_csv(std::ostream& os, const BrownianPath& w) {
  os << "step,time";
  for (int c = 0; c < w.noise_dim(); ++c) os << ",dw" << c;
  os << "\n";
  for (int s = 0; s < w.grid().n_steps(); ++s) {
    os << s << "," << detail::format_double(w.grid().time(s));
    for (int c = 0; c < w.noise_dim(); ++c) {
      os << "," << detail::format_double(w.increment(s, c));
    }
    os << "\n";
  }
}

/// controls CSV: the resolved pair, one row per step with both indices and
/// both control points.
inline void write_controls_csv(std::ostream& os, const ControlPath& u,
                               const ControlPath& v) {
  if (!(u.grid() == v.grid())) {
    throw std::invalid_argument("write_controls_csv: control paths on different grids");
  }
  os << "step,time,u_index,v_index";
  for (int c = 0; c < u.set().ambient_dim(); ++c) os << ",u" << c;
  for (int c = 0; c < v.set().ambient_dim(); ++c) os << ",v" << c;
  os << "\n";
  for (int s = 0; s < u.grid().n_steps(); ++s) {
    os << s << "," << detail::format_double(u.grid().time(s)) << "," << u.index_at(s) << ","
       << v.index_at(s);
    for (double e : u.value_at(s)) os << "," << detail::format_double(e);
    for (double e : v.value_at(s)) os << "," << detail::format_double(e);
    os << "\n";
  }
}

/// states CSV: one row per node including the initial one.
inline void write_states_csv(std::ostream& os, const StatePath& path) {
  os << "node,time";
  for (int i = 0; i < path.state_dim(); ++i) os << ",x" << i;
  os << "\n";
  for (int k = 0; k <= path.grid().n_steps(); ++k) {
    os << k << "," << detail::format_double(path.grid().time(k));
    for (double e : path.state(k)) os << "," << detail::format_double(e);
    os << "\n";
  }
}

/// value grid CSV: one row per (level, node) with time, node coordinates and
/// value.  Level-major, nodes in storage order, so the file is a direct
/// flattening of the in-memory layout.
inline void write_value_grid_csv(std::ostream& os, const ValueGrid& vg) {
  const SpaceGrid& g = vg.space();
  os << "t";
  for (int a = 0; a < g.dim(); ++a) os << ",x" << a;
  os << ",value\n";
  std::vector<double> x(static_cast<std::size_t>(g.dim()));
  for (int k = 0; k < vg.n_levels(); ++k) {
    const auto lvl = vg.level(k);
    for (std::size_t f = 0; f < g.total(); ++f) {
      g.coords(f, x);
      os << detail::format_double(vg.times()[static_cast<std::size_t>(k)]);
      for (double e : x) os << "," << detail::format_double(e);
      os << "," << detail::format_double(lvl[f]) << "\n";
    }
  }
}

/// Binary value-grid dump.  Layout (all integers and doubles little-endian;
/// written on little-endian hosts, which this library assumes):
///
///   bytes 0..3   magic "SDGV"
///   u32          format version, currently 1
///   u8           kind: 0 = upper ("plus"), 1 = lower ("minus")
///   u8           has_policy: 0 or 1
///   u16          reserved, 0
///   u32          space dimension D
///   D times      { f64 lo, f64 hi, u32 nodes }
///   u32          number of time levels L
///   L f64        level times, ascending
///   L*prod(nodes) f64   values, level-major, nodes in row-major order
///                       (last axis fastest)
///   if has_policy:
///     L*prod(nodes) i32  player-I choices (-1 on boundary nodes)
///     L*prod(nodes) i32  player-II choices
///
/// The matching reader reconstructs an identical ValueGrid; a round-trip is
/// bit-exact.
inline void write_value_grid_binary(std::ostream& os, const ValueGrid& vg) {
  detail::write_bytes(os, "SDGV", 4);
  detail::write_pod<std::uint32_t>(os, 1);
  detail::write_pod<std::uint8_t>(os, vg.kind() == HjiKind::Plus ? 0 : 1);
  detail::write_pod<std::uint8_t>(os, vg.has_policy() ? 1 : 0);
  detail::write_pod<std::uint16_t>(os, 0);
  const SpaceGrid& g = vg.space();
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(g.dim()));
  for (int a = 0; a < g.dim(); ++a) {
    detail::write_pod<double>(os, g.lo(a));
    detail::write_pod<double>(os, g.hi(a));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(g.nodes(a)));
  }
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(vg.n_levels()));
  for (double t : vg.times()) detail::write_pod<double>(os, t);
  detail::write_bytes(os, vg.raw_values().data(), vg.raw_values().size() * sizeof(double));
  if (vg.has_policy()) {
    static_assert(sizeof(int) == sizeof(std::int32_t),
                  "policy serialization assumes 32-bit int");
    detail::write_bytes(os, vg.raw_policy_u().data(),
                        vg.raw_policy_u().size() * sizeof(std::int32_t));
    detail::write_bytes(os, vg.raw_policy_v().data(),
                        vg.raw_policy_v().size() * sizeof(std::int32_t));
  }
}

inline ValueGrid read_value_grid_binary(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SDGV", 4) != 0) {
    throw std::runtime_error("value grid read: bad magic");
  }
  const auto version = detail::read_pod<std::uint32_t>(is);
  if (version != 1) {
    throw std::runtime_error("value grid read: unsupported version " +
                             std::to_string(version));
  }
  const auto kind_byte = detail::read_pod<std::uint8_t>(is);
  if (kind_byte > 1) throw std::runtime_error("value grid read: bad kind byte");
  const auto has_policy = detail::read_pod<std::uint8_t>(is);
  (void)detail::read_pod<std::uint16_t>(is);
  const auto dim = detail::read_pod<std::uint32_t>(is);
  if (dim == 0 || dim > 8) throw std::runtime_error("value grid read: bad dimension");
  std::vector<double> lo(dim), hi(dim);
  std::vector<int> nodes(dim);
  std::size_t total = 1;
  for (std::uint32_t a = 0; a < dim; ++a) {
    lo[a] = detail::read_pod<double>(is);
    hi[a] = detail::read_pod<double>(is);
    nodes[a] = static_cast<int>(detail::read_pod<std::uint32_t>(is));
    total *= static_cast<std::size_t>(nodes[a]);
  }
  const auto n_levels = detail::read_pod<std::uint32_t>(is);
  std::vector<double> times(n_levels);
  for (auto& t : times) t = detail::read_pod<double>(is);
  std::vector<double> values(static_cast<std::size_t>(n_levels) * total);
  is.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!is) throw std::runtime_error("value grid read: truncated values");
  std::vector<int> pu, pv;
  if (has_policy) {
    pu.resize(values.size());
    pv.resize(values.size());
    is.read(reinterpret_cast<char*>(pu.data()),
            static_cast<std::streamsize>(pu.size() * sizeof(std::int32_t)));
    is.read(reinterpret_cast<char*>(pv.data()),
            static_cast<std::streamsize>(pv.size() * sizeof(std::int32_t)));
    if (!is) throw std::runtime_error("value grid read: truncated policy");
  }
  return ValueGrid(SpaceGrid(std::move(lo), std::move(hi), std::move(nodes)),
                   std::move(times), kind_byte == 0 ? HjiKind::Plus : HjiKind::Minus,
                   std::move(values), std::move(pu), std::move(pv));
}

}  // namespace sdg
