#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "sdg/dynamics.hpp"
#include "sdg/strategy.hpp"

using namespace sdg;

namespace {

const TimeGrid kGrid(0.0, 1.0, 4, 2);
const ControlSet kSet = discretize_interval(0.0, 2.0, 3);

BrownianPath zero_noise(const TimeGrid& g, int dim = 1) {
  return BrownianPath(g, dim,
                      std::vector<double>(static_cast<std::size_t>(g.n_steps()) * dim, 0.0));
}

}  // namespace

TEST_CASE("two copy-lagged strategies reach the hand-unrolled fixed point") {
  // alpha: block 0 = [1, 1], block 1 copies v's first block.
  // beta:  block 0 = [2, 2], block 1 copies u's first block.
  // Expected: u = (1, 1, 2, 2), v = (2, 2, 1, 1), independent of the noise.
  const DelayedStrategy alpha = copy_lagged_strategy(Player::I, kSet, 2, 1);
  const DelayedStrategy beta = copy_lagged_strategy(Player::II, kSet, 2, 2);
  const BrownianPath w = sample_brownian(kGrid, 1, 5);

  const ControlPair pair = fixed_point(alpha, beta, w);
  const int expected_u[] = {1, 1, 2, 2};
  const int expected_v[] = {2, 2, 1, 1};
  for (int s = 0; s < 4; ++s) {
    CHECK(pair.u.index_at(s) == expected_u[s]);
    CHECK(pair.v.index_at(s) == expected_v[s]);
  }
  CHECK(verify_fixed_point(alpha, beta, w, pair));
}

TEST_CASE("mixed delays reach the hand-unrolled fixed point") {
  // alpha has delay 1: block 0 = [1], block k copies v_{k-1}.
  // beta has delay 2: block 0 = [2, 2], block 1 copies (u_0, u_1).
  // Unrolling by hand: u = (1, 2, 2, 1), v = (2, 2, 1, 2).
  const DelayedStrategy alpha = copy_lagged_strategy(Player::I, kSet, 1, 1);
  const DelayedStrategy beta = copy_lagged_strategy(Player::II, kSet, 2, 2);
  const BrownianPath w = sample_brownian(kGrid, 1, 6);

  const ControlPair pair = fixed_point(alpha, beta, w);
  const int expected_u[] = {1, 2, 2, 1};
  const int expected_v[] = {2, 2, 1, 2};
  for (int s = 0; s < 4; ++s) {
    CHECK(pair.u.index_at(s) == expected_u[s]);
    CHECK(pair.v.index_at(s) == expected_v[s]);
  }
  CHECK(verify_fixed_point(alpha, beta, w, pair));
}

TEST_CASE("the within-step resolve order does not matter") {
  const TimeGrid g(0.0, 1.0, 8, 2);
  const BrownianPath w = sample_brownian(g, 2, 17);
  const DelayedStrategy alpha = table_strategy(Player::I, kSet, 2, 100);
  const DelayedStrategy beta = table_strategy(Player::II, kSet, 4, 200);

  const ControlPair p1 = fixed_point(alpha, beta, w, ResolveOrder::PlayerIFirst);
  const ControlPair p2 = fixed_point(alpha, beta, w, ResolveOrder::PlayerIIFirst);
  CHECK(prefix_equal(p1.u, p2.u, g.n_steps()));
  CHECK(prefix_equal(p1.v, p2.v, g.n_steps()));
}

TEST_CASE("replay verification rejects tampered pairs") {
  const BrownianPath w = sample_brownian(kGrid, 1, 21);
  const DelayedStrategy alpha = table_strategy(Player::I, kSet, 2, 1);
  const DelayedStrategy beta = table_strategy(Player::II, kSet, 2, 2);
  const ControlPair pair = fixed_point(alpha, beta, w);
  CHECK(verify_fixed_point(alpha, beta, w, pair));

  std::vector<int> u_vals(pair.u.raw().begin(), pair.u.raw().end());
  u_vals[3] = (u_vals[3] + 1) % kSet.size();
  const ControlPair tampered{ControlPath(kGrid, kSet, u_vals), pair.v};
  CHECK_FALSE(verify_fixed_point(alpha, beta, w, tampered));
}

TEST_CASE("strategy delays need not divide the horizon") {
  // Five steps, strategy delay 3: the second block is truncated to 2 steps.
  const TimeGrid g(0.0, 1.0, 5, 1);
  const BrownianPath w = sample_brownian(g, 1, 3);
  const DelayedStrategy alpha = copy_lagged_strategy(Player::I, kSet, 3, 1);
  const DelayedStrategy beta = constant_strategy(Player::II, kSet, 2, 2);

  const ControlPair pair = fixed_point(alpha, beta, w);
  // alpha block 0 = [1,1,1]; block 1 copies v_0..v_2 = (2,2,2), truncated.
  const int expected_u[] = {1, 1, 1, 2, 2};
  for (int s = 0; s < 5; ++s) {
    CHECK(pair.u.index_at(s) == expected_u[s]);
    CHECK(pair.v.index_at(s) == 2);
  }
  CHECK(verify_fixed_point(alpha, beta, w, pair));
}

TEST_CASE("apply_strategy limits views at block starts") {
  const BrownianPath w = sample_brownian(kGrid, 1, 8);
  const ControlPath v(kGrid, kSet, {0, 1, 2, 0});

  // A strategy that tries to read its own block's first step must throw.
  DelayedStrategy peeker;
  peeker.side = Player::I;
  peeker.delay_steps = 2;
  peeker.set = kSet;
  peeker.label = "peeker";
  peeker.respond = [](const NoisePrefix& noise, const ControlPrefix&, int block) {
    if (block > 0) (void)noise.increment(2 * block, 0);
    return std::vector<int>{0, 0};
  };
  CHECK_THROWS_AS(apply_strategy(peeker, w, v), PrefixViolation);

  const DelayedStrategy legal = copy_lagged_strategy(Player::I, kSet, 2, 0);
  const ControlPath u = apply_strategy(legal, w, v);
  CHECK(u.index_at(0) == 0);
  CHECK(u.index_at(2) == 0);  // copies v_0
  CHECK(u.index_at(3) == 1);  // copies v_1
}

TEST_CASE("misbehaving responders are rejected") {
  const BrownianPath w = sample_brownian(kGrid, 1, 9);
  const ControlPath v(kGrid, kSet, {0, 0, 0, 0});

  DelayedStrategy wrong_size;
  wrong_size.side = Player::I;
  wrong_size.delay_steps = 2;
  wrong_size.set = kSet;
  wrong_size.respond = [](const NoisePrefix&, const ControlPrefix&, int) {
    return std::vector<int>{0};
  };
  CHECK_THROWS_AS(apply_strategy(wrong_size, w, v), std::logic_error);

  DelayedStrategy out_of_set;
  out_of_set.side = Player::I;
  out_of_set.delay_steps = 2;
  out_of_set.set = kSet;
  out_of_set.respond = [](const NoisePrefix&, const ControlPrefix&, int) {
    return std::vector<int>{0, 5};
  };
  CHECK_THROWS_AS(apply_strategy(out_of_set, w, v), std::logic_error);
}

TEST_CASE("delay verification accepts every shipped strategy kind") {
  const TimeGrid g(0.0, 1.0, 8, 2);
  const std::uint64_t seed = 0xabc;

  CHECK(verify_delay(constant_strategy(Player::I, kSet, 2, 1), g, 1, kSet, 16, seed).pass);
  CHECK(verify_delay(copy_lagged_strategy(Player::II, kSet, 2, 0), g, 1, kSet, 16, seed).pass);
  CHECK(verify_delay(table_strategy(Player::I, kSet, 4, 77), g, 2, kSet, 16, seed).pass);

  const GameDynamics dyn = make_frozen(1, 1, make_cost_constant(0.0));
  const DelayedStrategy fb = make_feedback_strategy(
      dyn, {0.5}, [](double, std::span<const double> x) { return x[0] > 0.0 ? 1 : 0; },
      Player::I, kSet, kSet, g, 2);
  CHECK(verify_delay(fb, g, 1, kSet, 16, seed).pass);
}

TEST_CASE("delay verification catches anticipating strategies") {
  const TimeGrid g(0.0, 1.0, 8, 2);

  // Reads the first step of its own block: illegal view access.
  DelayedStrategy peek_now;
  peek_now.side = Player::I;
  peek_now.delay_steps = 2;
  peek_now.set = kSet;
  peek_now.label = "peek-now";
  peek_now.respond = [](const NoisePrefix& noise, const ControlPrefix&, int block) {
    int bit = 0;
    if (block > 0) bit = noise.increment(2 * block, 0) > 0.0 ? 1 : 0;
    return std::vector<int>{bit, bit};
  };
  const DelayReport r1 = verify_delay(peek_now, g, 1, kSet, 16, 0x1);
  CHECK_FALSE(r1.pass);
  CHECK_FALSE(r1.counterexample.empty());

  // Reads the very last step: output falsification across the cut.
  DelayedStrategy peek_far;
  peek_far.side = Player::II;
  peek_far.delay_steps = 2;
  peek_far.set = kSet;
  peek_far.label = "peek-far";
  peek_far.respond = [&g](const NoisePrefix& noise, const ControlPrefix&, int) {
    const int bit = noise.increment(g.n_steps() - 1, 0) > 0.0 ? 1 : 0;
    return std::vector<int>{bit, bit};
  };
  CHECK_FALSE(verify_delay(peek_far, g, 1, kSet, 16, 0x2).pass);

  // Consults the opponent's current block.
  DelayedStrategy copy_now;
  copy_now.side = Player::I;
  copy_now.delay_steps = 2;
  copy_now.set = kSet;
  copy_now.label = "copy-now";
  copy_now.respond = [](const NoisePrefix&, const ControlPrefix& opp, int block) {
    const int idx = opp.at(2 * block);
    return std::vector<int>{idx, idx};
  };
  CHECK_FALSE(verify_delay(copy_now, g, 1, kSet, 16, 0x3).pass);
}

TEST_CASE("feedback strategies on frozen dynamics always see x0") {
  const TimeGrid g(0.0, 1.0, 8, 2);
  const GameDynamics dyn = make_frozen(1, 1, make_cost_constant(0.0));
  const DelayedStrategy fb = make_feedback_strategy(
      dyn, {0.5}, [](double, std::span<const double> x) { return x[0] > 0.0 ? 2 : 0; },
      Player::I, kSet, kSet, g, 2);
  const BrownianPath w = sample_brownian(g, 1, 31);
  const ControlPath v(g, kSet, std::vector<int>(8, 1));
  const ControlPath u = apply_strategy(fb, w, v);
  for (int s = 0; s < 8; ++s) CHECK(u.index_at(s) == 2);

  // Responders must be pure: applying twice gives identical paths.
  const ControlPath u2 = apply_strategy(fb, w, v);
  CHECK(prefix_equal(u, u2, 8));
}

TEST_CASE("feedback strategies react to the lagged reconstructed state") {
  // Constant drift +2 moves the state right; the policy switches control
  // once the state passes 1.  With delay 2 and dt = 1/8 the block-k state is
  // reconstructed at node max(0, 2k - 2): x(t) = 2t, so blocks see
  // x = 0, 0, 0.5, 1.0 and the switch happens in block 3 (steps 6, 7).
  const TimeGrid g(0.0, 1.0, 8, 2);
  const ControlSet set = discretize_interval(0.0, 2.0, 3);
  const GameDynamics dyn =
      make_constant_drift({2.0}, 1, make_cost_linear({1.0}, 0.0, Box{{-4.0}, {4.0}}));
  const DelayedStrategy fb = make_feedback_strategy(
      dyn, {0.0}, [](double, std::span<const double> x) { return x[0] >= 1.0 ? 2 : 0; },
      Player::I, set, set, g, 2);
  const BrownianPath w = zero_noise(g);
  const ControlPath v(g, set, std::vector<int>(8, 0));
  const ControlPath u = apply_strategy(fb, w, v);
  const int expected[] = {0, 0, 0, 0, 0, 0, 2, 2};
  for (int s = 0; s < 8; ++s) CHECK(u.index_at(s) == expected[s]);
}

TEST_CASE("the pathwise solution map is nonanticipative prefix to prefix") {
  const TimeGrid g(0.0, 1.0, 8, 2);
  const GameDynamics dyn =
      make_additive_noise(1.0, 1, 1, make_cost_quadratic(Box{{-6.0}, {6.0}}));
  const DelayedStrategy alpha = table_strategy(Player::I, kSet, 2, 5);
  const ControlPath v(g, kSet, {0, 1, 2, 0, 1, 2, 0, 1});

  const BrownianPath wa = sample_brownian(g, 1, 40);
  std::vector<double> inc(wa.raw().begin(), wa.raw().end());
  for (int s = 4; s < 8; ++s) inc[static_cast<std::size_t>(s)] += 1.0;
  const BrownianPath wb(g, 1, inc);
  REQUIRE(prefix_equal(wa, wb, 4));

  const StatePath xa = pathwise_map(dyn, std::vector<double>{0.0}, alpha, v, wa);
  const StatePath xb = pathwise_map(dyn, std::vector<double>{0.0}, alpha, v, wb);
  for (int k = 0; k <= 4; ++k) CHECK(xa.state(k)[0] == xb.state(k)[0]);
  CHECK(xa.state(5)[0] != xb.state(5)[0]);
}

TEST_CASE("table strategies depend on what they may see and nothing else") {
  const TimeGrid g(0.0, 1.0, 8, 2);
  const DelayedStrategy t = table_strategy(Player::I, kSet, 2, 123);
  const BrownianPath w = sample_brownian(g, 1, 55);
  const ControlPath v1(g, kSet, {0, 0, 0, 0, 0, 0, 0, 0});
  const ControlPath v2(g, kSet, {1, 0, 0, 0, 0, 0, 0, 0});  // differs at step 0 only

  const ControlPath u1 = apply_strategy(t, w, v1);
  const ControlPath u1_again = apply_strategy(t, w, v1);
  CHECK(prefix_equal(u1, u1_again, 8));

  const ControlPath u2 = apply_strategy(t, w, v2);
  CHECK(u1.index_at(0) == u2.index_at(0));  // block 0 sees nothing
  CHECK(u1.index_at(1) == u2.index_at(1));
  bool differs_later = false;
  for (int s = 2; s < 8; ++s) differs_later = differs_later || u1.index_at(s) != u2.index_at(s);
  CHECK(differs_later);
}

TEST_CASE("lookup strategies replay their recorded path") {
  const ControlPath rec(kGrid, kSet, {2, 0, 1, 2});
  const DelayedStrategy s = lookup_strategy(Player::II, rec, 2);
  const BrownianPath w = sample_brownian(kGrid, 1, 61);
  const ControlPath opp(kGrid, kSet, {0, 0, 0, 0});
  const ControlPath out = apply_strategy(s, w, opp);
  for (int k = 0; k < 4; ++k) CHECK(out.index_at(k) == rec.index_at(k));
}

TEST_CASE("fixed point validates sides") {
  const BrownianPath w = sample_brownian(kGrid, 1, 70);
  const DelayedStrategy a = constant_strategy(Player::I, kSet, 2, 0);
  const DelayedStrategy b = constant_strategy(Player::II, kSet, 2, 0);
  CHECK_THROWS_AS(fixed_point(a, a, w), std::invalid_argument);
  CHECK_THROWS_AS(fixed_point(b, b, w), std::invalid_argument);
}
