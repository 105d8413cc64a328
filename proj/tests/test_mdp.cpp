#include <catch2/catch_amalgamated.hpp>

#include "qlambda/mdp.hpp"
#include "support/test_mdps.hpp"

using namespace qlambda;
using namespace qlambda::testing;

TEST_CASE("apply_p_pi on zero and constant tables") {
  Mdp m = chain_mdp();
  Policy pi = always_action(1, 2, 2);
  CHECK(sup_norm(apply_p_pi(m, pi, QFunction::Zero(2, 2))) == 0.0);

  Mdp garnet = random_mdp(8, 3, 3, 0.5, 7);
  Policy mu = uniform_policy(8, 3);
  QFunction c = QFunction::Constant(8, 3, 3.25);
  CHECK(sup_diff(apply_p_pi(garnet, mu, c), c) < 1e-12);
}

TEST_CASE("apply_p_pi hand-evaluated on the chain") {
  Mdp m = chain_mdp();
  Policy pi = always_action(1, 2, 2);
  QFunction q(2, 2);
  q << 0, 1, 0, 1;  // q(x, a) = a
  QFunction out = apply_p_pi(m, pi, q);
  for (int x = 0; x < 2; ++x)
    for (int a = 0; a < 2; ++a) CHECK(out(x, a) == 1.0);
}

TEST_CASE("apply_p_pi rejects mismatched dimensions") {
  Mdp m = chain_mdp();
  Policy pi = always_action(1, 2, 2);
  CHECK_THROWS_AS(apply_p_pi(m, pi, QFunction::Zero(3, 2)), std::invalid_argument);
  Policy bad = always_action(0, 3, 2);
  CHECK_THROWS_AS(apply_p_pi(m, bad, QFunction::Zero(2, 2)), std::invalid_argument);
}

TEST_CASE("apply_p_pi is monotone") {
  Mdp m = random_mdp(10, 3, 4, 0.6, 11);
  Policy mu = uniform_policy(10, 3);
  std::mt19937_64 g(42);
  for (int trial = 0; trial < 20; ++trial) {
    QFunction q1(10, 3), bump(10, 3);
    for (int x = 0; x < 10; ++x)
      for (int a = 0; a < 3; ++a) {
        q1(x, a) = uniform(g, -5.0, 5.0);
        bump(x, a) = uniform(g, 0.0, 3.0);
      }
    QFunction lo = apply_p_pi(m, mu, q1);
    QFunction hi = apply_p_pi(m, mu, q1 + bump);
    CHECK(((hi - lo).array() >= -1e-12).all());
  }
}

TEST_CASE("bellman_pi basics") {
  Mdp m = chain_mdp();
  Policy pi = always_action(1, 2, 2);
  CHECK(sup_diff(bellman_pi(m, pi, QFunction::Zero(2, 2)), m.reward) == 0.0);

  QFunction two = QFunction::Constant(2, 2, 2.0);
  QFunction out = bellman_pi(m, pi, two);
  CHECK(out(0, 0) == 1.0);
  CHECK(out(1, 0) == 1.0);
  CHECK(out(0, 1) == 2.0);
  CHECK(out(1, 1) == 2.0);
}

TEST_CASE("bellman_pi fixed point is exact_q_pi") {
  Mdp m = random_mdp(12, 3, 4, 0.7, 3);
  Policy mu = uniform_policy(12, 3);
  QFunction q = exact_q_pi(m, mu);
  CHECK(sup_diff(bellman_pi(m, mu, q), q) < 1e-10);
}

TEST_CASE("bellman_opt basics") {
  Mdp m = chain_mdp();
  CHECK(sup_diff(bellman_opt(m, QFunction::Zero(2, 2)), m.reward) == 0.0);

  QFunction q(2, 2);
  q << 1, 2, 1, 2;
  QFunction out = bellman_opt(m, q);
  CHECK(out(0, 0) == 1.0);
  CHECK(out(0, 1) == 2.0);
  CHECK(out(1, 0) == 1.0);
  CHECK(out(1, 1) == 2.0);

  QFunction star = exact_q_star(m);
  CHECK(sup_diff(bellman_opt(m, star), star) < 1e-10);
}

TEST_CASE("bellman operators contract at rate gamma") {
  Mdp m = random_mdp(9, 4, 3, 0.5, 19);
  Policy mu = uniform_policy(9, 4);
  std::mt19937_64 g(5);
  for (int trial = 0; trial < 50; ++trial) {
    QFunction q1(9, 4), q2(9, 4);
    for (int x = 0; x < 9; ++x)
      for (int a = 0; a < 4; ++a) {
        q1(x, a) = uniform(g, -10.0, 10.0);
        q2(x, a) = uniform(g, -10.0, 10.0);
      }
    double d = sup_diff(q1, q2);
    CHECK(sup_diff(bellman_pi(m, mu, q1), bellman_pi(m, mu, q2)) <= m.gamma * d + 1e-12);
    CHECK(sup_diff(bellman_opt(m, q1), bellman_opt(m, q2)) <= m.gamma * d + 1e-12);
  }
}

TEST_CASE("exact_q_pi on the chain") {
  Mdp m = chain_mdp();
  Policy pi = always_action(1, 2, 2);
  QFunction q = exact_q_pi(m, pi);
  CHECK(q(0, 0) == Catch::Approx(1.0).margin(1e-12));
  CHECK(q(0, 1) == Catch::Approx(2.0).margin(1e-12));
  CHECK(q(1, 0) == Catch::Approx(1.0).margin(1e-12));
  CHECK(q(1, 1) == Catch::Approx(2.0).margin(1e-12));
}

TEST_CASE("exact_q_pi with zero rewards is zero") {
  Mdp m = random_mdp(10, 2, 3, 0.0, 23);
  Policy mu = uniform_policy(10, 2);
  CHECK(sup_norm(exact_q_pi(m, mu)) < 1e-12);
}

TEST_CASE("exact_q_pi matches the power-iteration oracle") {
  Mdp m = random_mdp(10, 3, 3, 0.8, 31);
  Policy mu = uniform_policy(10, 3);
  QFunction direct = exact_q_pi(m, mu);
  QFunction iterated = QFunction::Zero(10, 3);
  for (int k = 0; k < 10000; ++k) iterated = bellman_pi(m, mu, iterated);
  CHECK(sup_diff(direct, iterated) < 1e-8);
}

TEST_CASE("exact_q_pi residual stays small across sizes") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    int n = 5 + static_cast<int>(seed) * 6;
    Mdp m = random_mdp(n, 3, std::min(n, 4), 0.6, seed);
    m.gamma = seed % 2 == 0 ? 0.9 : 0.99;
    Policy mu = uniform_policy(n, 3);
    QFunction q = exact_q_pi(m, mu);
    CHECK(sup_diff(bellman_pi(m, mu, q), q) <= 1e-10);
  }
}

TEST_CASE("exact_q_star on the chain") {
  Mdp m = chain_mdp();
  QFunction star = exact_q_star(m);
  CHECK(star(0, 0) == Catch::Approx(1.0).margin(1e-10));
  CHECK(star(0, 1) == Catch::Approx(2.0).margin(1e-10));
  CHECK(star(1, 0) == Catch::Approx(1.0).margin(1e-10));
  CHECK(star(1, 1) == Catch::Approx(2.0).margin(1e-10));
}

TEST_CASE("exact_q_star with zero rewards is zero") {
  Mdp m = random_mdp(7, 3, 2, 0.0, 2);
  CHECK(sup_norm(exact_q_star(m)) == 0.0);
}

TEST_CASE("exact_q_star agrees with evaluating its greedy policy") {
  for (std::uint64_t seed = 100; seed < 106; ++seed) {
    Mdp m = random_mdp(14, 4, 4, 0.7, seed);
    m.gamma = 0.95;
    const double tol = 1e-10;
    QFunction star = exact_q_star(m, tol);
    QFunction check = exact_q_pi(m, greedy_policy(star));
    CHECK(sup_diff(star, check) <= 10 * tol);
  }
}

TEST_CASE("greedy_policy tie-break and argmax") {
  Policy zero = greedy_policy(QFunction::Zero(3, 4));
  for (int x = 0; x < 3; ++x) {
    CHECK(zero.probs(x, 0) == 1.0);
    CHECK(zero.probs.row(x).sum() == 1.0);
  }

  QFunction q(2, 2);
  q << 1, 2, 1, 2;
  Policy pi = greedy_policy(q);
  CHECK(pi.probs(0, 1) == 1.0);
  CHECK(pi.probs(1, 1) == 1.0);

  // Positive affine maps leave the argmax unchanged.
  std::mt19937_64 g(9);
  QFunction r(6, 5);
  for (int x = 0; x < 6; ++x)
    for (int a = 0; a < 5; ++a) r(x, a) = uniform(g, -4.0, 4.0);
  Policy base = greedy_policy(r);
  Policy scaled = greedy_policy((QFunction)(2.5 * r.array() - 7.0));
  CHECK(base.probs == scaled.probs);
}

TEST_CASE("epsilon_greedy endpoints and formula") {
  QFunction q(2, 2);
  q << 1, 2, 1, 2;
  CHECK(epsilon_greedy(q, 0.0).probs == greedy_policy(q).probs);
  Policy uniform_case = epsilon_greedy(q, 1.0);
  for (int x = 0; x < 2; ++x)
    for (int a = 0; a < 2; ++a) CHECK(uniform_case.probs(x, a) == Catch::Approx(0.5));
  Policy mixed = epsilon_greedy(q, 0.1);
  for (int x = 0; x < 2; ++x) {
    CHECK(mixed.probs(x, 0) == Catch::Approx(0.05));
    CHECK(mixed.probs(x, 1) == Catch::Approx(0.95));
  }
  CHECK_THROWS_AS(epsilon_greedy(q, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(epsilon_greedy(q, 1.1), std::invalid_argument);
}

TEST_CASE("policy_distance closed forms") {
  Policy pi = always_action(1, 2, 2);
  CHECK(policy_distance(pi, pi) == 0.0);
  Policy mu = uniform_policy(2, 2);
  CHECK(policy_distance(pi, mu) == Catch::Approx(1.0));

  // Deterministic target vs epsilon-greedy sharing the greedy action.
  QFunction q(3, 4);
  q << 0, 3, 1, 2, 5, 0, 0, 0, 1, 1.5, 9, 2;
  Policy target = greedy_policy(q);
  for (double e : {0.1, 0.4, 0.9}) {
    Policy soft = epsilon_greedy(q, e);
    CHECK(policy_distance(target, soft) == Catch::Approx(2.0 * e * 3.0 / 4.0));
  }
}

TEST_CASE("policy_distance is a pseudometric") {
  std::mt19937_64 g(123);
  auto random_policy = [&](int ns, int na) {
    Policy p;
    p.probs = Eigen::MatrixXd::Zero(ns, na);
    for (int x = 0; x < ns; ++x) {
      std::vector<double> row = sample_simplex(g, static_cast<std::size_t>(na));
      for (int a = 0; a < na; ++a) p.probs(x, a) = row[static_cast<std::size_t>(a)];
    }
    return p;
  };
  for (int trial = 0; trial < 25; ++trial) {
    Policy a = random_policy(6, 3), b = random_policy(6, 3), c = random_policy(6, 3);
    double ab = policy_distance(a, b);
    double ba = policy_distance(b, a);
    CHECK(ab == ba);
    CHECK(ab >= 0.0);
    CHECK(ab <= 2.0);
    CHECK(policy_distance(a, c) <= ab + policy_distance(b, c) + 1e-12);
    CHECK(policy_distance(a, a) == 0.0);
  }
}

TEST_CASE("mixture_with_uniform distance bound") {
  QFunction q(4, 3);
  q.setZero();
  q.col(2).setOnes();
  Policy pi = greedy_policy(q);
  for (double eps : {0.2, 1.0, 2.0}) {
    Policy mu = mixture_with_uniform(pi, eps / 2.0);
    CHECK(policy_distance(pi, mu) <= eps + 1e-12);
    CHECK(policy_distance(pi, mu) == Catch::Approx(eps * 2.0 / 3.0));
  }
}

TEST_CASE("random_mdp determinism and shape") {
  Mdp a = random_mdp(9, 3, 2, 0.4, 555);
  Mdp b = random_mdp(9, 3, 2, 0.4, 555);
  CHECK(a.reward == b.reward);
  for (int act = 0; act < 3; ++act)
    CHECK(a.transition[static_cast<std::size_t>(act)] ==
          b.transition[static_cast<std::size_t>(act)]);

  Mdp c = random_mdp(9, 3, 2, 0.4, 556);
  CHECK(a.reward != c.reward);

  Mdp unit = random_mdp(6, 2, 1, 0.5, 8);
  for (int act = 0; act < 2; ++act)
    for (int x = 0; x < 6; ++x)
      CHECK(unit.transition[static_cast<std::size_t>(act)].row(x).maxCoeff() == 1.0);

  CHECK_THROWS_AS(random_mdp(4, 2, 5, 0.5, 1), std::invalid_argument);
}

TEST_CASE("random_mdp rows are stochastic across many seeds") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Mdp m = random_mdp(6, 2, 3, 0.5, seed);
    m.validate();  // includes the row-sum check at 1e-12
  }
}

TEST_CASE("sample_episode stops in absorbing starts with zero reward") {
  Mdp m = gridworld_5x5();
  std::mt19937_64 g(1);
  Trajectory tr = sample_episode(m, uniform_policy(25, 4), 24, g, 50);
  REQUIRE(tr.length() == 1);
  CHECK(tr.steps[0].state == 24);
  CHECK(tr.steps[0].reward == 0.0);
  CHECK(tr.terminal_state == 24);
}

TEST_CASE("sample_episode is deterministic when nothing is random") {
  Mdp m = chain_mdp();
  Policy mu = always_action(1, 2, 2);
  for (std::uint64_t seed : {0ULL, 7ULL, 99ULL}) {
    std::mt19937_64 g(seed);
    Trajectory tr = sample_episode(m, mu, 0, g, 4);
    REQUIRE(tr.length() == 4);
    CHECK(tr.steps[0].state == 0);
    for (const TimeStep& s : tr.steps) {
      CHECK(s.action == 1);
      CHECK(s.reward == 1.0);
    }
    CHECK(tr.terminal_state == 1);
  }
}

TEST_CASE("sample_episode hand-simulated on the chain") {
  Mdp m = chain_mdp();
  Policy mu = always_action(1, 2, 2);
  std::mt19937_64 g(3);
  Trajectory tr = sample_episode(m, mu, 0, g, 3);
  REQUIRE(tr.length() == 3);
  CHECK(tr.steps[0].state == 0);
  CHECK(tr.steps[0].action == 1);
  CHECK(tr.steps[0].reward == 1.0);
  CHECK(tr.steps[1].state == 1);
  CHECK(tr.steps[1].action == 1);
  CHECK(tr.steps[1].reward == 1.0);
  CHECK(tr.steps[2].state == 1);
  CHECK(tr.steps[2].action == 1);
  CHECK(tr.steps[2].reward == 1.0);
  CHECK(tr.terminal_state == 1);
}

TEST_CASE("sample_episode rejects a zero step cap") {
  Mdp m = chain_mdp();
  std::mt19937_64 g(1);
  CHECK_THROWS_AS(sample_episode(m, uniform_policy(2, 2), 0, g, 0), std::invalid_argument);
}

TEST_CASE("sampled transition frequencies match the model") {
  Mdp m = roulette_mdp();
  std::mt19937_64 g(2024);
  const int n = 10000;
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < n; ++i) counts[sample_successor(g, m, 0, 0)]++;
  const double expected[3] = {0.2 * n, 0.3 * n, 0.5 * n};
  double chi2 = 0.0;
  for (int y = 0; y < 3; ++y) {
    double d = counts[y] - expected[y];
    chi2 += d * d / expected[y];
  }
  // 0.999 quantile of chi-squared with 2 degrees of freedom.
  CHECK(chi2 < 13.816);
}

TEST_CASE("validation catches malformed models") {
  Mdp m = chain_mdp();
  m.reward(0, 1) = 5.0;  // beyond r_max
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);

  Mdp bad_rows = chain_mdp();
  bad_rows.transition[0](0, 0) = 0.5;
  CHECK_THROWS_AS(bad_rows.validate(), std::invalid_argument);

  Mdp bad_absorbing = chain_mdp();
  bad_absorbing.absorbing[0] = 1;  // state 0 self-loops under action 0 only
  CHECK_THROWS_AS(bad_absorbing.validate(), std::invalid_argument);
}
