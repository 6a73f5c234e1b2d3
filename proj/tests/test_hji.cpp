#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "sdg/dynamics.hpp"
#include "sdg/hji.hpp"
#include "sdg/io.hpp"
#include "sdg/value_grid.hpp"

using namespace sdg;

namespace {

const ControlSet kSingleton = discretize_interval(0.0, 0.0, 1);

GameDynamics heat_dynamics(const Box& domain) {
  return make_additive_noise(1.0, 1, 1, make_cost_quadratic(domain));
}

}  // namespace

TEST_CASE("pure diffusion reproduces its closed-form value") {
  // b = 0, sigma = 1, g = x^2 has V(t, x) = x^2 + (T - t).  The drift bound
  // is zero, so the scheme carries no artificial viscosity and the error is
  // pure central-difference truncation.  Measured away from the Dirichlet
  // boundary, whose frozen values only matter within a diffusion length.
  const Box domain{{-4.0}, {4.0}};
  const GameDynamics dyn = heat_dynamics(domain);
  const SpaceGrid space({-4.0}, {4.0}, {81});
  const TimeGrid tgrid(0.0, 0.5, 112, 2);

  const ValueGrid v = solve_hji(dyn, space, tgrid, HjiKind::Plus, kSingleton, kSingleton);
  const Box report{{-1.0}, {1.0}};
  const double err = max_error_against(
      v, [](double t, std::span<const double> x) { return x[0] * x[0] + (0.5 - t); },
      &report);
  CHECK(err <= 5e-3);

  // The lower solve coincides: singleton controls leave nothing to order.
  const ValueGrid vm = solve_hji(dyn, space, tgrid, HjiKind::Minus, kSingleton, kSingleton);
  const OrderingReport ord = compare_values(v, vm, 1e-9);
  CHECK(ord.ordered);
  CHECK(ord.max_diff == 0.0);
}

TEST_CASE("the eikonal game reproduces the distance solution") {
  // b = u with u in {-1, 0, 1}, sigma = 0, g = |x|: the minimizing player
  // moves toward the origin at unit speed, V(t, x) = max(|x| - (T-t), 0).
  // First-order fronts cost the Lax-Friedrichs scheme O(dx^(1/2))-ish
  // accuracy near kinks; 0.05 absorbs that at dx = 0.05.
  const Box domain{{-4.0}, {4.0}};
  const ControlSet u = discretize_interval(-1.0, 1.0, 3);
  const GameDynamics dyn = make_separated(0.0, 1, u, kSingleton, make_cost_abs(domain));
  const SpaceGrid space({-4.0}, {4.0}, {161});
  const TimeGrid tgrid(0.0, 0.25, 12, 2);

  const auto reference = [](double t, std::span<const double> x) {
    return std::max(std::abs(x[0]) - (0.25 - t), 0.0);
  };
  const Box report{{-1.0}, {1.0}};

  const ValueGrid plus = solve_hji(dyn, space, tgrid, HjiKind::Plus, u, kSingleton);
  CHECK(max_error_against(plus, reference, &report) <= 0.05);

  const ValueGrid minus = solve_hji(dyn, space, tgrid, HjiKind::Minus, u, kSingleton);
  CHECK(max_error_against(minus, reference, &report) <= 0.05);

  // With a singleton v the two sweeps scan identical payoffs in the same
  // order, so the grids agree bit for bit.
  const auto pv = plus.raw_values();
  const auto mv = minus.raw_values();
  bool identical = true;
  for (std::size_t i = 0; i < pv.size(); ++i) identical = identical && pv[i] == mv[i];
  CHECK(identical);
}

TEST_CASE("one backward step is monotone in its input") {
  const Box domain{{-2.0}, {2.0}};
  const ControlSet u = discretize_interval(-1.0, 1.0, 3);
  const GameDynamics dyn = make_separated(0.1, 1, u, u, make_cost_quadratic(domain));
  const SpaceGrid space({-2.0}, {2.0}, {41});
  const TimeGrid tgrid(0.0, 0.5, 64, 2);
  const HjiStepper stepper(dyn, space, tgrid, HjiKind::Plus, u, u, 0.45);

  rng::Stream stream(314);
  const std::size_t total = space.total();
  std::vector<double> lo(total), hi(total), out_lo(total), out_hi(total);
  for (int trial = 0; trial < 20; ++trial) {
    for (std::size_t f = 0; f < total; ++f) {
      lo[f] = 2.0 * stream.uniform() - 1.0;
      hi[f] = lo[f] + stream.uniform();  // hi >= lo pointwise
    }
    stepper.step(lo, out_lo);
    stepper.step(hi, out_hi);
    for (std::size_t f = 0; f < total; ++f) {
      REQUIRE(out_lo[f] <= out_hi[f] + 1e-12);
    }
  }

  // Consistency: a constant field is a steady state when the Hamiltonian
  // vanishes on constants (it does: gradient and Hessian terms are zero).
  std::vector<double> flat(total, 0.7), out(total);
  stepper.step(flat, out);
  for (std::size_t f = 0; f < total; ++f) CHECK(out[f] == 0.7);
}

TEST_CASE("time steps violating the stability bound are rejected") {
  const Box domain{{-4.0}, {4.0}};
  const ControlSet u = discretize_interval(-1.0, 1.0, 3);
  const GameDynamics dyn = make_separated(0.0, 1, u, kSingleton, make_cost_abs(domain));
  const SpaceGrid space({-4.0}, {4.0}, {161});
  // Needs dt <= 0.45 * dx / max|b| = 0.0225, i.e. at least 12 steps; 4 is
  // far too coarse.
  const TimeGrid coarse(0.0, 0.25, 4, 2);
  CHECK_THROWS_AS(HjiStepper(dyn, space, coarse, HjiKind::Plus, u, kSingleton, 0.45),
                  CflError);
  CHECK_THROWS_AS(solve_hji(dyn, space, coarse, HjiKind::Plus, u, kSingleton), CflError);

  const GameDynamics heat = heat_dynamics(domain);
  const SpaceGrid hs({-4.0}, {4.0}, {81});
  CHECK_THROWS_AS(
      HjiStepper(heat, hs, TimeGrid(0.0, 0.5, 16, 2), HjiKind::Plus, kSingleton, kSingleton,
                 0.45),
      CflError);

  CHECK_THROWS_AS(HjiStepper(heat, hs, TimeGrid(0.0, 0.5, 112, 2), HjiKind::Plus, kSingleton,
                             kSingleton, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(HjiStepper(heat, hs, TimeGrid(0.0, 0.5, 112, 2), HjiKind::Plus, kSingleton,
                             kSingleton, 0.75),
                  std::invalid_argument);
}

TEST_CASE("correlated diffusion without diagonal dominance is rejected") {
  // sigma = [[0.1, 0], [0.3, 0.1]] gives M12 = 0.03 > M11 = 0.01 on a square
  // mesh: the seven-point stencil cannot stay monotone, so construction must
  // fail rather than silently produce an unstable sweep.
  GameDynamics dyn = make_frozen(2, 2, make_cost_quadratic(Box{{-2.0, -2.0}, {2.0, 2.0}}));
  dyn.diffusion = [](std::span<const double>, std::span<const double>,
                     std::span<const double>, std::span<double> out) {
    out[0] = 0.1;
    out[1] = 0.0;
    out[2] = 0.3;
    out[3] = 0.1;
  };
  dyn.bound_const = 0.34;
  const SpaceGrid space({-2.0, -2.0}, {2.0, 2.0}, {21, 21});
  const TimeGrid tgrid(0.0, 0.1, 64, 2);
  CHECK_THROWS_AS(
      HjiStepper(dyn, space, tgrid, HjiKind::Plus, kSingleton, kSingleton, 0.45),
      std::invalid_argument);
}

TEST_CASE("dimensions above two are rejected") {
  const GameDynamics dyn =
      make_frozen(3, 1, make_cost_quadratic(Box{{-1.0, -1.0, -1.0}, {1.0, 1.0, 1.0}}));
  const SpaceGrid space({-1.0, -1.0, -1.0}, {1.0, 1.0, 1.0}, {5, 5, 5});
  const TimeGrid tgrid(0.0, 0.1, 4, 2);
  CHECK_THROWS_AS(
      HjiStepper(dyn, space, tgrid, HjiKind::Plus, kSingleton, kSingleton, 0.45),
      std::invalid_argument);
}

TEST_CASE("mixed second derivatives integrate exactly for quadratic data") {
  // sigma = [[0.2, 0], [r, 0.2]] with zero drift and g = (x0 + x1)^2:
  // V(t, x) = g(x) + (M11 + M22 + 2 M12)(T - t).  Every difference in the
  // scheme is exact on quadratics and the drift bound is zero, so interior
  // nodes out of reach of the boundary (one layer per step) match the
  // closed form to rounding.  The sign of r selects which diagonal stencil
  // carries the cross term, so both orientations are exercised.
  for (const double r : {0.1, -0.1}) {
    GameDynamics dyn = make_frozen(2, 2, CostModel{});
    dyn.diffusion = [r](std::span<const double>, std::span<const double>,
                        std::span<const double>, std::span<double> out) {
      out[0] = 0.2;
      out[1] = 0.0;
      out[2] = r;
      out[3] = 0.2;
    };
    dyn.bound_const = 0.5;
    dyn.cost.g = [](std::span<const double> x) {
      const double s = x[0] + x[1];
      return s * s;
    };
    dyn.cost.bound = 16.0;
    dyn.cost.lip = 8.0 * std::sqrt(2.0);
    dyn.cost.name = "sum-square";

    const double m11 = 0.04, m22 = r * r + 0.04, m12 = r * 0.2;
    const double rate = m11 + m22 + 2.0 * m12;

    const SpaceGrid space({-2.0, -2.0}, {2.0, 2.0}, {21, 21});
    const TimeGrid tgrid(0.0, 0.1, 4, 2);
    const ValueGrid v =
        solve_hji(dyn, space, tgrid, HjiKind::Plus, kSingleton, kSingleton);

    // 4 steps contaminate 4 boundary layers (0.8 units); [-1, 1]^2 is clean.
    const Box report{{-1.0, -1.0}, {1.0, 1.0}};
    const double err = max_error_against(
        v,
        [rate](double t, std::span<const double> x) {
          const double s = x[0] + x[1];
          return s * s + rate * (0.1 - t);
        },
        &report);
    CHECK(err <= 1e-12);
  }
}

TEST_CASE("interpolation is multilinear") {
  const SpaceGrid g1({0.0}, {1.0}, {3});
  const ValueGrid v1(g1, {0.0, 1.0}, HjiKind::Plus, {0.0, 1.0, 4.0, 0.0, 0.0, 0.0});
  CHECK(v1.interpolate(0, std::vector<double>{0.25}) == Catch::Approx(0.5));
  CHECK(v1.interpolate(0, std::vector<double>{0.75}) == Catch::Approx(2.5));
  CHECK(v1.interpolate(0, std::vector<double>{0.5}) == 1.0);
  CHECK(v1.interpolate(0, std::vector<double>{1.0}) == 4.0);
  CHECK_THROWS_AS(v1.interpolate(0, std::vector<double>{1.2}), OutOfDomainError);
  CHECK_THROWS_AS(v1.interpolate(0, std::vector<double>{-0.1}), OutOfDomainError);

  // Bilinear interpolation reproduces affine data exactly.
  const SpaceGrid g2({0.0, 0.0}, {1.0, 1.0}, {3, 3});
  std::vector<double> vals;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) vals.push_back(0.5 * i + 2.0 * (0.5 * j));
  }
  vals.insert(vals.end(), vals.begin(), vals.end());  // same data on both levels
  const ValueGrid v2(g2, {0.0, 1.0}, HjiKind::Plus, vals);
  CHECK(v2.interpolate(0, std::vector<double>{0.3, 0.7}) == Catch::Approx(1.7));
  CHECK(v2.interpolate(0, std::vector<double>{0.0, 0.9}) == Catch::Approx(1.8));
}

TEST_CASE("value grids survive a binary round trip bit for bit") {
  const Box domain{{-2.0}, {2.0}};
  const ControlSet u = discretize_interval(-1.0, 1.0, 3);
  const GameDynamics dyn = make_separated(0.1, 1, u, u, make_cost_quadratic(domain));
  const SpaceGrid space({-2.0}, {2.0}, {41});
  const TimeGrid tgrid(0.0, 0.25, 32, 2);
  HjiOptions opt;
  opt.store_policy = true;
  const ValueGrid v = solve_hji(dyn, space, tgrid, HjiKind::Minus, u, u, opt);

  std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
  write_value_grid_binary(buf, v);
  const ValueGrid back = read_value_grid_binary(buf);

  CHECK(back.kind() == v.kind());
  REQUIRE(back.times() == v.times());
  REQUIRE(back.space() == v.space());
  const auto a = v.raw_values(), b = back.raw_values();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
  const auto pu = v.raw_policy_u(), qu = back.raw_policy_u();
  REQUIRE(pu.size() == qu.size());
  for (std::size_t i = 0; i < pu.size(); ++i) REQUIRE(pu[i] == qu[i]);
}

TEST_CASE("policy storage marks the interior and copies the terminal level") {
  const GameDynamics dyn = make_frozen(1, 1, make_cost_quadratic(Box{{-1.0}, {1.0}}));
  const SpaceGrid space({-1.0}, {1.0}, {5});
  const TimeGrid tgrid(0.0, 0.5, 4, 2);
  HjiOptions opt;
  opt.store_policy = true;
  const ValueGrid v =
      solve_hji(dyn, space, tgrid, HjiKind::Plus, kSingleton, kSingleton, opt);

  REQUIRE(v.has_policy());
  for (int level = 0; level <= 4; ++level) {
    CHECK(v.policy_u_at(level, 0) == -1);  // boundary
    CHECK(v.policy_u_at(level, 2) == 0);   // interior: only one choice exists
    CHECK(v.policy_v_at(level, 4) == -1);
  }

  const auto policy =
      make_grid_policy(std::make_shared<const ValueGrid>(v), /*player_one=*/true);
  CHECK(policy(0.0, std::vector<double>{0.1}) == 0);
  CHECK(policy(0.47, std::vector<double>{-0.92}) == 0);  // clamped to interior

  const ValueGrid bare = solve_hji(dyn, space, tgrid, HjiKind::Plus, kSingleton, kSingleton);
  CHECK_THROWS_AS(make_grid_policy(std::make_shared<const ValueGrid>(bare), true),
                  std::invalid_argument);
}

TEST_CASE("ordering comparison flags a violation") {
  const SpaceGrid g({0.0}, {1.0}, {3});
  const ValueGrid plus(g, {0.0, 1.0}, HjiKind::Plus, {1.0, 1.0, 1.0, 1.0, 1.0, 1.0});
  const ValueGrid minus(g, {0.0, 1.0}, HjiKind::Minus, {0.0, 1.0, 2.0, 0.0, 0.0, 0.0});
  const OrderingReport rep = compare_values(plus, minus, 1e-9);
  CHECK_FALSE(rep.ordered);
  CHECK(rep.min_diff == -1.0);
  CHECK(rep.max_diff == 1.0);
  CHECK(rep.n_compared == 6);

  const ValueGrid other(SpaceGrid({0.0}, {2.0}, {3}), {0.0, 1.0}, HjiKind::Minus,
                        {0.0, 0.0, 0.0, 0.0, 0.0, 0.0});
  CHECK_THROWS_AS(compare_values(plus, other, 1e-9), std::invalid_argument);
}

TEST_CASE("regularity estimates recover known constants") {
  // V(t, x) = x on every level: spatial Lipschitz constant 1, no time
  // variation.
  const SpaceGrid g({0.0}, {1.0}, {5});
  std::vector<double> vals;
  const std::vector<double> times = {0.0, 0.25, 0.5, 0.75, 1.0};
  for (std::size_t k = 0; k < times.size(); ++k) {
    for (int i = 0; i < 5; ++i) vals.push_back(g.coord(0, i));
  }
  const ValueGrid linear(g, times, HjiKind::Plus, vals);
  const RegularityReport r1 = estimate_regularity(linear);
  CHECK(r1.lip_x == 1.0);
  CHECK(r1.holder_t == 0.0);

  // V(t, x) = sqrt(t): the 1/2-Hoelder quotient equals 1 from t = 0.
  vals.clear();
  for (const double t : times) {
    for (int i = 0; i < 5; ++i) vals.push_back(std::sqrt(t));
  }
  const ValueGrid rooty(g, times, HjiKind::Plus, vals);
  const RegularityReport r2 = estimate_regularity(rooty);
  CHECK(r2.lip_x == 0.0);
  CHECK(r2.holder_t == Catch::Approx(1.0));

  // Restricting to a region drops the outer nodes from the Lipschitz scan.
  vals.assign(5 * times.size(), 0.0);
  for (std::size_t k = 0; k < times.size(); ++k) {
    vals[k * 5 + 0] = 10.0;  // jump at the left edge
    vals[k * 5 + 4] = 10.0;
  }
  const ValueGrid spiky(g, times, HjiKind::Plus, vals);
  CHECK(estimate_regularity(spiky).lip_x == 40.0);
  const Box inner{{0.25}, {0.75}};
  CHECK(estimate_regularity(spiky, &inner).lip_x == 0.0);
}
