#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "qlambda/bicycle.hpp"

using namespace qlambda;

namespace {

BicycleParams quiet_params() {
  BicycleParams p;
  p.noise_half_width = 0.0;
  p.start_jitter = 0.0;
  p.random_heading = false;
  return p;
}

}  // namespace

TEST_CASE("action indexing covers the torque-displacement cross product") {
  BicycleAction first = bicycle_action(0);
  CHECK(first.torque == -2.0);
  CHECK(first.displacement == -0.02);
  BicycleAction mid = bicycle_action(4);
  CHECK(mid.torque == 0.0);
  CHECK(mid.displacement == 0.0);
  BicycleAction last = bicycle_action(8);
  CHECK(last.torque == 2.0);
  CHECK(last.displacement == 0.02);
  for (int i = 0; i < kBicycleActions; ++i)
    for (int j = i + 1; j < kBicycleActions; ++j) {
      BicycleAction a = bicycle_action(i), b = bicycle_action(j);
      CHECK((a.torque != b.torque || a.displacement != b.displacement));
    }
  CHECK_THROWS_AS(bicycle_action(-1), std::invalid_argument);
  CHECK_THROWS_AS(bicycle_action(9), std::invalid_argument);
}

TEST_CASE("angles wrap into the half-open interval") {
  CHECK(wrap_angle(0.0) == Catch::Approx(0.0).margin(1e-15));
  CHECK(wrap_angle(kPi) == Catch::Approx(kPi));
  CHECK(wrap_angle(-kPi) == Catch::Approx(kPi));
  CHECK(wrap_angle(1.5 * kPi) == Catch::Approx(-0.5 * kPi));
  CHECK(wrap_angle(-1.5 * kPi) == Catch::Approx(0.5 * kPi));
  CHECK(wrap_angle(2.0 * kPi) == Catch::Approx(0.0).margin(1e-12));
  CHECK(wrap_angle(7.0) == Catch::Approx(7.0 - 2.0 * kPi));
}

TEST_CASE("reset with everything disabled is the exact upright pose") {
  BicycleParams p = quiet_params();
  std::mt19937_64 g(1);
  BicycleState s = bicycle_reset(p, g);
  CHECK(s.omega == 0.0);
  CHECK(s.omega_dot == 0.0);
  CHECK(s.theta == 0.0);
  CHECK(s.theta_dot == 0.0);
  CHECK(s.psi == 0.0);
  CHECK(s.dist_goal == 1000.0);
}

TEST_CASE("reset jitter and bearing stay within their ranges") {
  BicycleParams p;
  std::mt19937_64 g(7);
  for (int k = 0; k < 1000; ++k) {
    BicycleState s = bicycle_reset(p, g);
    CHECK(std::abs(s.omega) <= 0.002);
    CHECK(std::abs(s.omega_dot) <= 0.002);
    CHECK(std::abs(s.theta) <= 0.002);
    CHECK(std::abs(s.theta_dot) <= 0.002);
    CHECK(std::abs(s.psi) <= kPi);
    CHECK(s.dist_goal == p.goal_distance);
    CHECK_FALSE(bicycle_terminal(s, p));
  }
}

TEST_CASE("reset is deterministic in the seed") {
  BicycleParams p;
  std::mt19937_64 g1(42), g2(42);
  BicycleState a = bicycle_reset(p, g1);
  BicycleState b = bicycle_reset(p, g2);
  CHECK(a.omega == b.omega);
  CHECK(a.omega_dot == b.omega_dot);
  CHECK(a.theta == b.theta);
  CHECK(a.theta_dot == b.theta_dot);
  CHECK(a.psi == b.psi);
}

TEST_CASE("exact upright coasting stays upright and closes on the goal") {
  BicycleParams p = quiet_params();
  std::mt19937_64 g(3);
  BicycleState s = bicycle_reset(p, g);
  BicycleAction coast = bicycle_action(4);
  double prev_omega = s.omega;
  for (int t = 0; t < 10000; ++t) {
    BicycleStepResult r = bicycle_step(s, coast, p, g);
    CHECK(std::abs(r.state.omega - prev_omega) < 1e-3);
    REQUIRE_FALSE(r.terminal);
    prev_omega = r.state.omega;
    s = r.state;
  }
  CHECK(s.omega == 0.0);
  CHECK(s.theta == 0.0);
  CHECK(s.psi == 0.0);
  CHECK(s.dist_goal == Catch::Approx(1000.0 - 10000 * p.v * p.dt).epsilon(1e-9));
}

TEST_CASE("tipping past the tilt threshold fails the episode") {
  BicycleParams p;
  std::mt19937_64 g(9);
  BicycleState s;
  s.omega = 0.2;
  s.omega_dot = 0.5;
  s.dist_goal = 500.0;
  bool fell = false;
  for (int t = 0; t < 10 && !fell; ++t) {
    BicycleStepResult r = bicycle_step(s, bicycle_action(4), p, g);
    if (r.terminal) {
      CHECK(r.reward == -1.0);
      CHECK(std::abs(r.state.omega) > p.fall_angle);
      CHECK_THROWS_AS(bicycle_step(r.state, bicycle_action(4), p, g), std::invalid_argument);
      fell = true;
    } else {
      s = r.state;
    }
  }
  CHECK(fell);
}

TEST_CASE("rolling into the goal radius wins the episode") {
  BicycleParams p = quiet_params();
  std::mt19937_64 g(5);
  BicycleState s;
  s.psi = 0.0;
  s.dist_goal = 10.02;
  BicycleStepResult r = bicycle_step(s, bicycle_action(4), p, g);
  CHECK(r.terminal);
  CHECK(r.reward == 1.0);
  CHECK(r.state.dist_goal <= p.goal_radius);
  CHECK_THROWS_AS(bicycle_step(r.state, bicycle_action(4), p, g), std::invalid_argument);
}

TEST_CASE("live steps pay the heading-improvement shaping reward") {
  BicycleParams p;
  std::mt19937_64 g(11);
  BicycleState s = bicycle_reset(p, g);
  for (int t = 0; t < 50; ++t) {
    int a = static_cast<int>(uniform_index(g, kBicycleActions));
    BicycleStepResult r = bicycle_step(s, bicycle_action(a), p, g);
    if (r.terminal) break;
    CHECK(r.reward ==
          Catch::Approx(p.psi_reward_coeff * (std::abs(s.psi) - std::abs(r.state.psi)))
              .margin(1e-15));
    s = r.state;
  }
}

TEST_CASE("trajectories are deterministic in the seed") {
  BicycleParams p;
  std::mt19937_64 g1(123), g2(123);
  BicycleState a = bicycle_reset(p, g1);
  BicycleState b = bicycle_reset(p, g2);
  for (int t = 0; t < 200; ++t) {
    BicycleStepResult ra = bicycle_step(a, bicycle_action(t % 9), p, g1);
    BicycleStepResult rb = bicycle_step(b, bicycle_action(t % 9), p, g2);
    REQUIRE(ra.state.omega == rb.state.omega);
    REQUIRE(ra.state.psi == rb.state.psi);
    REQUIRE(ra.state.dist_goal == rb.state.dist_goal);
    REQUIRE(ra.reward == rb.reward);
    if (ra.terminal) break;
    a = ra.state;
    b = rb.state;
  }
}

TEST_CASE("state features line up with the training grid") {
  BicycleParams p;
  UniformGridQ grid = make_bicycle_grid(p, 6);
  CHECK(grid.dims() == 6);
  CHECK(grid.n_nodes() == 6 * 6 * 6 * 6 * 6 * 6);
  CHECK(grid.n_actions == kBicycleActions);
  CHECK(grid.low[0] == -p.fall_angle);
  CHECK(grid.high[2] == p.max_handlebar);
  CHECK(grid.high[5] == p.goal_distance + 20.0);
  std::mt19937_64 g(2);
  BicycleState s = bicycle_reset(p, g);
  std::vector<double> f = bicycle_features(s);
  REQUIRE(f.size() == 6);
  CHECK(f[0] == s.omega);
  CHECK(f[4] == s.psi);
  CHECK(f[5] == s.dist_goal);
  CHECK_NOTHROW(stencil(grid, f));
}

TEST_CASE("an untrained rider falls and never reaches a distant goal") {
  BicycleParams p;
  UniformGridQ grid = make_bicycle_grid(p, 4);
  std::mt19937_64 g(31);
  CHECK(goal_rate(grid, p, 20, 2000, g) == 0.0);
}

TEST_CASE("greedy evaluation is deterministic and bounded") {
  BicycleParams p;
  p.goal_distance = 60.0;
  UniformGridQ grid = make_bicycle_grid(p, 4);
  std::mt19937_64 g1(77), g2(77);
  double r1 = goal_rate(grid, p, 10, 500, g1);
  double r2 = goal_rate(grid, p, 10, 500, g2);
  CHECK(r1 == r2);
  CHECK(r1 >= 0.0);
  CHECK(r1 <= 1.0);
  CHECK_THROWS_AS(goal_rate(grid, p, 0, 500, g1), std::invalid_argument);
}

TEST_CASE("episode logs serialize one row per step") {
  BicycleParams p;
  UniformGridQ grid = make_bicycle_grid(p, 4);
  std::mt19937_64 g(13);
  std::vector<BicycleLogRow> rows;
  greedy_bicycle_episode(grid, p, g, 300, &rows);
  REQUIRE(!rows.empty());
  std::ostringstream out;
  write_bicycle_log_csv(out, rows);
  std::istringstream in(out.str());
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "t,omega,omega_dot,theta,theta_dot,psi,dist,action,reward");
  std::size_t count = 0;
  while (std::getline(in, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 8);
    ++count;
  }
  CHECK(count == rows.size());
  CHECK(rows[0].t == 0);
}

TEST_CASE("short training runs finish cleanly and validate their config") {
  BicycleParams p;
  p.goal_distance = 40.0;
  BicycleTrainConfig cfg;
  cfg.episodes = 30;
  cfg.max_steps = 150;
  cfg.resolution = 4;
  cfg.seed = 5;
  BicycleTrainResult r = train_bicycle(p, cfg);
  CHECK_FALSE(r.diverged);
  CHECK(r.episodes_run == 30);
  CHECK(r.q.node_values.allFinite());
  CHECK(r.q.node_values.cwiseAbs().maxCoeff() > 0.0);

  BicycleTrainConfig bad = cfg;
  bad.lambda = 1.5;
  CHECK_THROWS_AS(train_bicycle(p, bad), std::invalid_argument);
  bad = cfg;
  bad.epsilon = -0.1;
  CHECK_THROWS_AS(train_bicycle(p, bad), std::invalid_argument);
  bad = cfg;
  bad.alpha = 0.0;
  CHECK_THROWS_AS(train_bicycle(p, bad), std::invalid_argument);
  bad = cfg;
  bad.gamma = 1.0;
  CHECK_THROWS_AS(train_bicycle(p, bad), std::invalid_argument);
}

TEST_CASE("bicycle training is deterministic in the seed") {
  BicycleParams p;
  p.goal_distance = 40.0;
  BicycleTrainConfig cfg;
  cfg.episodes = 12;
  cfg.max_steps = 120;
  cfg.resolution = 4;
  cfg.seed = 21;
  BicycleTrainResult a = train_bicycle(p, cfg);
  BicycleTrainResult b = train_bicycle(p, cfg);
  CHECK(a.q.node_values == b.q.node_values);
  CHECK(a.goal_episodes == b.goal_episodes);
}
