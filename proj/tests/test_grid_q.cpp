#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <vector>

#include "qlambda/grid_q.hpp"
#include "qlambda/online_td.hpp"
#include "qlambda/serialization.hpp"
#include "support/test_mdps.hpp"

using namespace qlambda;
using namespace qlambda::testing;

TEST_CASE("grid construction and validation") {
  UniformGridQ g = make_grid({0.0, -1.0}, {1.0, 1.0}, {3, 4}, 2);
  CHECK(g.dims() == 2);
  CHECK(g.n_nodes() == 12);
  CHECK(g.node_values.rows() == 12);
  CHECK(g.node_values.cols() == 2);

  CHECK_THROWS_AS(make_grid({0.0}, {1.0}, {1}, 2), std::invalid_argument);
  CHECK_THROWS_AS(make_grid({0.0}, {0.0}, {3}, 2), std::invalid_argument);
  CHECK_THROWS_AS(make_grid({1.0}, {0.0}, {3}, 2), std::invalid_argument);
  CHECK_THROWS_AS(make_grid({0.0, 0.0}, {1.0}, {3, 3}, 2), std::invalid_argument);
  CHECK_THROWS_AS(make_grid({0.0}, {1.0}, {3}, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_grid({}, {}, {}, 2), std::invalid_argument);
}

TEST_CASE("node points follow row-major indexing") {
  UniformGridQ g = make_grid({0.0, -1.0}, {1.0, 1.0}, {3, 4}, 1);
  std::vector<double> p = g.node_point(5);  // coordinates (1, 1)
  CHECK(p[0] == Catch::Approx(0.5));
  CHECK(p[1] == Catch::Approx(-1.0 + 2.0 / 3.0));
  std::vector<double> last = g.node_point(11);
  CHECK(last[0] == Catch::Approx(1.0));
  CHECK(last[1] == Catch::Approx(1.0));
}

TEST_CASE("stencil on a node concentrates on that node") {
  UniformGridQ g = make_grid({0.0, 0.0}, {4.0, 4.0}, {5, 5}, 1);
  for (std::int64_t n = 0; n < g.n_nodes(); ++n) {
    InterpWeights w = stencil(g, g.node_point(n));
    REQUIRE(w.size() == 1);
    CHECK(w.nodes[0] == n);
    CHECK(w.weights[0] == 1.0);
  }
}

TEST_CASE("one-dimensional interpolation weights") {
  UniformGridQ g = make_grid({0.0}, {1.0}, {2}, 1);
  InterpWeights w = stencil(g, {0.3});
  REQUIRE(w.size() == 2);
  CHECK(w.nodes[0] == 0);
  CHECK(w.weights[0] == Catch::Approx(0.7));
  CHECK(w.nodes[1] == 1);
  CHECK(w.weights[1] == Catch::Approx(0.3));
}

TEST_CASE("cell-center query spreads weight evenly") {
  UniformGridQ g = make_grid({0.0, 0.0}, {2.0, 2.0}, {3, 3}, 1);
  InterpWeights w = stencil(g, {0.5, 0.5});
  REQUIRE(w.size() == 4);
  for (double wi : w.weights) CHECK(wi == Catch::Approx(0.25));
}

TEST_CASE("stencil weights are a partition of unity") {
  UniformGridQ g = make_grid({-2.0, 0.0, 1.0}, {3.0, 0.7, 9.0}, {4, 3, 6}, 2);
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> x = {uniform(rng, -3.0, 4.0), uniform(rng, -0.5, 1.2),
                             uniform(rng, 0.0, 10.0)};
    InterpWeights w = stencil(g, x);
    CHECK(w.size() <= 8);
    double total = 0.0;
    for (double wi : w.weights) {
      CHECK(wi >= 0.0);
      total += wi;
    }
    CHECK(total == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("queries outside the bounds clip to the boundary") {
  UniformGridQ g = make_grid({0.0}, {2.0}, {3}, 1);
  g.node_values << 1.0, 5.0, -3.0;
  CHECK(q_value(g, {-10.0}, 0) == q_value(g, {0.0}, 0));
  CHECK(q_value(g, {99.0}, 0) == q_value(g, {2.0}, 0));
  CHECK_THROWS_AS(stencil(g, {std::nan("")}), std::invalid_argument);
  CHECK_THROWS_AS(stencil(g, {0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("constant tables interpolate to the constant") {
  UniformGridQ g = make_grid({0.0, 0.0}, {1.0, 3.0}, {4, 7}, 3);
  g.node_values.setConstant(2.75);
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x = {uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 3.0)};
    for (int a = 0; a < 3; ++a)
      CHECK(q_value(g, x, a) == Catch::Approx(2.75).margin(1e-12));
  }
}

TEST_CASE("multilinear tables are reproduced exactly") {
  UniformGridQ g = make_grid({-1.0, 2.0}, {1.0, 5.0}, {5, 6}, 2);
  auto f0 = [](double u, double v) { return 2.0 + 3.0 * u - 5.0 * v; };
  auto f1 = [](double u, double v) { return -0.5 + 0.25 * u * v; };  // bilinear term
  for (std::int64_t n = 0; n < g.n_nodes(); ++n) {
    std::vector<double> p = g.node_point(n);
    g.node_values(n, 0) = f0(p[0], p[1]);
    g.node_values(n, 1) = f1(p[0], p[1]);
  }
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 300; ++trial) {
    double u = uniform(rng, -1.0, 1.0);
    double v = uniform(rng, 2.0, 5.0);
    CHECK(q_value(g, {u, v}, 0) == Catch::Approx(f0(u, v)).margin(1e-12));
    CHECK(q_value(g, {u, v}, 1) == Catch::Approx(f1(u, v)).margin(1e-12));
  }
}

TEST_CASE("a node edit only moves values in adjacent cells") {
  UniformGridQ g = make_grid({0.0, 0.0}, {4.0, 4.0}, {5, 5}, 1);
  const std::int64_t bumped = 2 * 5 + 2;  // node at (2, 2)
  g.node_values(bumped, 0) = 1.0;
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 400; ++trial) {
    double u = uniform(rng, 0.0, 4.0);
    double v = uniform(rng, 0.0, 4.0);
    double q = q_value(g, {u, v}, 0);
    bool adjacent = std::abs(u - 2.0) < 1.0 && std::abs(v - 2.0) < 1.0;
    if (!adjacent)
      CHECK(q == 0.0);
    else
      CHECK(q == Catch::Approx((1.0 - std::abs(u - 2.0)) * (1.0 - std::abs(v - 2.0))));
  }
}

TEST_CASE("with lambda zero only the current stencil is credited") {
  UniformGridQ g = make_grid({0.0}, {3.0}, {4}, 2);
  TraceVector e;
  InterpWeights w0 = stencil(g, {0.5});
  trace_step(e, w0, 1, 0.0, 0.9, 2);
  apply_td_update(g, e, 2.0, 0.1);
  CHECK(g.node_values(0, 1) == Catch::Approx(0.1 * 2.0 * 0.5));
  CHECK(g.node_values(1, 1) == Catch::Approx(0.1 * 2.0 * 0.5));
  CHECK(g.node_values.col(0).cwiseAbs().sum() == 0.0);

  InterpWeights w1 = stencil(g, {2.0});
  trace_step(e, w1, 0, 0.0, 0.9, 2);
  CHECK(e.value(0 * 2 + 1) == 0.0);
  CHECK(e.value(1 * 2 + 1) == 0.0);
  CHECK(e.value(2 * 2 + 0) == 1.0);
}

TEST_CASE("stencil-weighted traces respect the geometric bound") {
  UniformGridQ g = make_grid({0.0, 0.0}, {1.0, 1.0}, {3, 3}, 2);
  TraceVector e;
  std::mt19937_64 rng(11);
  const double lambda = 0.95, gamma = 0.947;  // decay product just over 0.9
  const double bound = 1.0 / (1.0 - lambda * gamma) + 1e-12;
  for (int step = 0; step < 2000; ++step) {
    std::vector<double> x = {uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0)};
    trace_step(e, stencil(g, x), static_cast<int>(uniform_index(rng, 2)), lambda, gamma, 2);
    CHECK(e.max_value() <= bound);
  }
}

TEST_CASE("grid learning on node states matches the tabular learner bit for bit") {
  Mdp m = random_mdp(8, 2, 3, 0.8, 271);
  m.gamma = 0.9;
  const double lambda = 0.6, alpha = 0.25;
  Policy mu = uniform_policy(8, 2);

  QFunction q_tab = QFunction::Zero(8, 2);
  UniformGridQ grid = make_grid({0.0}, {7.0}, {8}, 2);  // unit spacing, nodes sit on states
  TraceVector e_tab, e_grid;

  std::mt19937_64 rng(splitmix64(907));
  for (int episode = 0; episode < 40; ++episode) {
    int start = static_cast<int>(uniform_index(rng, 8));
    Trajectory tr = sample_episode(m, mu, start, rng, 15);
    int terminal_action = sample_action(rng, mu, tr.terminal_state);

    episode_update(q_tab, m, tr, terminal_action, AlgorithmKind::QStar, mu, mu, lambda, alpha,
                   UpdateMode::WithinEpisodeOnline, true, e_tab);

    e_grid.reset();
    const int T = tr.length();
    for (int t = 0; t < T; ++t) {
      const TimeStep& s = tr.steps[static_cast<std::size_t>(t)];
      const int x_next =
          t + 1 < T ? tr.steps[static_cast<std::size_t>(t + 1)].state : tr.terminal_state;
      InterpWeights wt = stencil(grid, {static_cast<double>(s.state)});
      trace_step(e_grid, wt, s.action, lambda, m.gamma, 2);
      InterpWeights wn = stencil(grid, {static_cast<double>(x_next)});
      double delta = s.reward + m.gamma * grid_max_q(grid, wn) - q_value(grid, wt, s.action);
      apply_td_update(grid, e_grid, delta, alpha);
    }

    REQUIRE(q_tab == grid.node_values);
  }
  CHECK(sup_norm(q_tab) > 0.0);
}

TEST_CASE("grid snapshots round trip through json") {
  UniformGridQ g = make_grid({-1.0, 0.0}, {1.0, 2.0}, {3, 4}, 3);
  std::mt19937_64 rng(17);
  for (std::int64_t n = 0; n < g.n_nodes(); ++n)
    for (int a = 0; a < 3; ++a) g.node_values(n, a) = uniform(rng, -5.0, 5.0);

  UniformGridQ back = grid_from_json(grid_to_json(g));
  CHECK(back.low == g.low);
  CHECK(back.high == g.high);
  CHECK(back.resolution == g.resolution);
  CHECK(back.n_actions == g.n_actions);
  CHECK(back.node_values == g.node_values);

  std::string path = "qlambda_test_grid.json";
  save_grid(g, path);
  UniformGridQ loaded = load_grid(path);
  CHECK(loaded.node_values == g.node_values);
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_grid("missing_grid_file.json"), std::invalid_argument);
  nlohmann::json bad = grid_to_json(g);
  bad["resolution"] = {1, 4};
  CHECK_THROWS_AS(grid_from_json(bad), std::invalid_argument);
  nlohmann::json missing;
  missing["low"] = {0.0};
  CHECK_THROWS_AS(grid_from_json(missing), std::invalid_argument);
}
