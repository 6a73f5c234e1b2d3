#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sdg/dynamics.hpp"
#include "sdg/paths.hpp"

using namespace sdg;

namespace {

ControlPath constant_path(const TimeGrid& g, const ControlSet& set, int index) {
  return ControlPath(g, set, std::vector<int>(static_cast<std::size_t>(g.n_steps()), index));
}

}  // namespace

TEST_CASE("frozen dynamics never move") {
  const TimeGrid g(0.0, 1.0, 16, 2);
  const ControlSet u = discretize_interval(-1.0, 1.0, 3);
  const GameDynamics dyn = make_frozen(2, 2, make_cost_constant(1.0));
  const BrownianPath w = sample_brownian(g, 2, 42);
  const StatePath path =
      integrate(dyn, std::vector<double>{0.25, -1.5}, constant_path(g, u, 0),
                constant_path(g, u, 2), w);
  for (int k = 0; k <= g.n_steps(); ++k) {
    CHECK(path.state(k)[0] == 0.25);
    CHECK(path.state(k)[1] == -1.5);
  }
}

TEST_CASE("constant drift with dyadic data integrates exactly") {
  // dt = 1/16 and a = 0.5 are dyadic, so every Euler update is exact in
  // binary and X_T = x0 + a*T without rounding.
  const TimeGrid g(0.0, 1.0, 16, 1);
  const ControlSet u = discretize_interval(0.0, 0.0, 1);
  GameDynamics dyn =
      make_constant_drift({0.5}, 1, make_cost_linear({1.0}, 0.0, Box{{-4.0}, {4.0}}));
  const BrownianPath w(g, 1, std::vector<double>(16, 0.0));
  const StatePath path = integrate(dyn, std::vector<double>{0.25}, constant_path(g, u, 0),
                                   constant_path(g, u, 0), w);
  CHECK(path.final_state()[0] == 0.75);
  CHECK(path.state(8)[0] == 0.5);
}

TEST_CASE("additive noise reproduces the summed increments bit for bit") {
  const TimeGrid g(0.0, 1.0, 32, 2);
  const ControlSet u = discretize_interval(0.0, 0.0, 1);
  const GameDynamics dyn = make_additive_noise(1.0, 1, 1, make_cost_quadratic(Box{{-4.0}, {4.0}}));
  const BrownianPath w = sample_brownian(g, 1, 99);
  const StatePath path = integrate(dyn, std::vector<double>{0.5}, constant_path(g, u, 0),
                                   constant_path(g, u, 0), w);
  double acc = 0.5;
  for (int s = 0; s < g.n_steps(); ++s) acc += w.increment(s, 0);
  CHECK(path.final_state()[0] == acc);
}

TEST_CASE("geometric dynamics follow the hand-computed Euler update") {
  const TimeGrid g(0.0, 0.5, 2, 1);
  const double dt = g.dt();
  const ControlSet u = discretize_interval(0.0, 0.0, 1);
  const Box domain{{0.1}, {3.0}};
  const GameDynamics dyn = make_geometric(0.3, 0.2, domain, make_cost_abs(domain));
  const BrownianPath w(g, 1, {0.05, -0.1});
  const StatePath path = integrate(dyn, std::vector<double>{1.0}, constant_path(g, u, 0),
                                   constant_path(g, u, 0), w);
  double x = 1.0;
  x = x + (0.3 * x) * dt + (0.2 * x) * 0.05;
  CHECK(path.state(1)[0] == x);
  x = x + (0.3 * x) * dt + (0.2 * x) * (-0.1);
  CHECK(path.state(2)[0] == x);
}

TEST_CASE("bimatrix dynamics read the drift table by rounded controls") {
  const TimeGrid g(0.0, 1.0, 4, 1);
  const ControlSet rows = discretize_interval(0.0, 1.0, 2);
  const ControlSet cols = discretize_interval(0.0, 1.0, 2);
  const GameDynamics dyn = make_bimatrix({{0.0, 1.0}, {1.0, 0.0}}, 0.0,
                                         make_cost_quadratic(Box{{-4.0}, {4.0}}));
  const BrownianPath w(g, 1, std::vector<double>(4, 0.0));
  // u = (0, 0, 1, 1), v = (0, 1, 0, 1) => drifts 0, 1, 1, 0.
  const ControlPath u(g, rows, {0, 0, 1, 1});
  const ControlPath v(g, cols, {0, 1, 0, 1});
  const StatePath path = integrate(dyn, std::vector<double>{0.0}, u, v, w);
  CHECK(path.state(1)[0] == 0.0);
  CHECK(path.state(2)[0] == Catch::Approx(0.25));
  CHECK(path.state(3)[0] == Catch::Approx(0.5));
  CHECK(path.final_state()[0] == Catch::Approx(0.5));
}

TEST_CASE("non-finite states abort with step diagnostics") {
  const TimeGrid g(0.0, 1.0, 4, 1);
  const ControlSet u = discretize_interval(0.0, 0.0, 1);
  GameDynamics dyn = make_frozen(1, 1, make_cost_constant(0.0));
  dyn.drift = [](std::span<const double>, std::span<const double>, std::span<const double>,
                 std::span<double> out) { out[0] = std::numeric_limits<double>::quiet_NaN(); };
  const BrownianPath w(g, 1, std::vector<double>(4, 0.0));
  CHECK_THROWS_AS(integrate(dyn, std::vector<double>{0.0}, constant_path(g, u, 0),
                            constant_path(g, u, 0), w),
                  NonFiniteError);
}

TEST_CASE("integration validates grids and dimensions") {
  const TimeGrid g(0.0, 1.0, 4, 1);
  const TimeGrid other(0.0, 2.0, 4, 1);
  const ControlSet u = discretize_interval(0.0, 0.0, 1);
  const GameDynamics dyn = make_frozen(1, 1, make_cost_constant(0.0));
  const BrownianPath w(g, 1, std::vector<double>(4, 0.0));
  CHECK_THROWS_AS(integrate(dyn, std::vector<double>{0.0}, constant_path(other, u, 0),
                            constant_path(g, u, 0), w),
                  std::invalid_argument);
  CHECK_THROWS_AS(integrate(dyn, std::vector<double>{0.0, 1.0}, constant_path(g, u, 0),
                            constant_path(g, u, 0), w),
                  std::invalid_argument);
  const BrownianPath w2(g, 2, std::vector<double>(8, 0.0));
  CHECK_THROWS_AS(integrate(dyn, std::vector<double>{0.0}, constant_path(g, u, 0),
                            constant_path(g, u, 0), w2),
                  std::invalid_argument);
}

TEST_CASE("cost factories compute domain constants") {
  const Box domain{{-2.0, -1.0}, {2.0, 1.0}};

  const CostModel q = make_cost_quadratic(domain);
  CHECK(q.g(std::vector<double>{1.5, 0.5}) == Catch::Approx(2.5));
  CHECK(q.bound == Catch::Approx(5.0));                    // |x|^2 at the far corner
  CHECK(q.lip == Catch::Approx(2.0 * std::sqrt(5.0)));     // 2|x| at the far corner

  const CostModel a = make_cost_abs(domain);
  CHECK(a.g(std::vector<double>{-1.5, 0.5}) == Catch::Approx(2.0));
  CHECK(a.bound == Catch::Approx(3.0));
  CHECK(a.lip == Catch::Approx(std::sqrt(2.0)));

  const CostModel l = make_cost_linear({2.0, -1.0}, 3.0, domain);
  CHECK(l.g(std::vector<double>{1.0, 1.0}) == Catch::Approx(4.0));
  CHECK(l.bound == Catch::Approx(2.0 * 2.0 + 1.0 * 1.0 + 3.0));
  CHECK(l.lip == Catch::Approx(std::sqrt(5.0)));

  const CostModel c = make_cost_constant(-2.5);
  CHECK(c.g(std::vector<double>{7.0, 7.0}) == -2.5);
  CHECK(c.bound == 2.5);
  CHECK(c.lip == 0.0);
}

TEST_CASE("probe flags underdeclared constants and passes honest ones") {
  const Box domain{{-2.0}, {2.0}};
  const ControlSet u = discretize_interval(-1.0, 1.0, 3);

  GameDynamics honest = make_geometric(0.3, 0.2, domain, make_cost_abs(domain));
  const ProbeReport ok = probe_dynamics(honest, u, u, domain, 256, 1);
  CHECK(ok.within_declared);
  CHECK(ok.max_coeff_norm <= honest.bound_const * (1.0 + 1e-9));

  GameDynamics liar = make_geometric(0.3, 0.2, domain, make_cost_abs(domain));
  liar.bound_const = 0.1;  // true max |b| on the box is 0.6
  const ProbeReport bad = probe_dynamics(liar, u, u, domain, 256, 1);
  CHECK_FALSE(bad.within_declared);
  CHECK_THROWS_AS(validate_dynamics(liar, u, u, domain), std::invalid_argument);

  GameDynamics sloppy_cost = make_geometric(0.3, 0.2, domain, make_cost_abs(domain));
  sloppy_cost.cost.lip = 0.01;
  CHECK_FALSE(probe_dynamics(sloppy_cost, u, u, domain, 256, 1).within_declared);
}

TEST_CASE("separated dynamics declare exact bounds from their control sets") {
  const ControlSet u = discretize_interval(-1.0, 1.0, 3, "u");
  const ControlSet v = discretize_interval(-0.5, 0.5, 3, "v");
  const GameDynamics dyn =
      make_separated(0.1, 1, u, v, make_cost_quadratic(Box{{-4.0}, {4.0}}));
  // max |u + v| = 1.5 and the diffusion norm is 0.1.
  CHECK(dyn.bound_const == Catch::Approx(1.5));
  CHECK(dyn.lip_const == 0.0);

  std::vector<double> b(1), sig(1);
  dyn.drift(std::vector<double>{0.0}, u.point(2), v.point(0), b);
  CHECK(b[0] == Catch::Approx(0.5));
  dyn.diffusion(std::vector<double>{3.0}, u.point(0), v.point(0), sig);
  CHECK(sig[0] == 0.1);
}
