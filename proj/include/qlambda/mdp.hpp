#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "qlambda/rng.hpp"

namespace qlambda {

/// Dense Q-table: one row per state, one column per action.
using QFunction = Eigen::MatrixXd;

/// Per-state action distribution. Every row lives on the probability simplex.
/// Target and behavior policies are both this type.
struct Policy {
  Eigen::MatrixXd probs;  // (state, action)

  int n_states() const { return static_cast<int>(probs.rows()); }
  int n_actions() const { return static_cast<int>(probs.cols()); }
  void validate() const;
};

/// Finite discounted MDP with state-action rewards. Absorbing states
/// self-loop with zero reward, so episodic sampling and the infinite-horizon
/// operators describe the same process without special cases.
struct Mdp {
  int n_states = 0;
  int n_actions = 0;
  double gamma = 0.9;
  double r_max = 1.0;
  std::vector<Eigen::MatrixXd> transition;  // transition[a](x, y) = P(y | x, a)
  Eigen::MatrixXd reward;                   // (state, action)
  std::vector<std::uint8_t> absorbing;      // per-state flag

  bool is_absorbing(int x) const { return absorbing[static_cast<std::size_t>(x)] != 0; }
  void validate() const;
};

inline void Policy::validate() const {
  for (int x = 0; x < probs.rows(); ++x) {
    double sum = 0.0;
    for (int a = 0; a < probs.cols(); ++a) {
      double p = probs(x, a);
      if (!(p >= 0.0) || !std::isfinite(p))
        throw std::invalid_argument("Policy: negative or non-finite probability at state " +
                                    std::to_string(x));
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw std::invalid_argument("Policy: row " + std::to_string(x) + " sums to " +
                                  std::to_string(sum) + ", expected 1");
  }
}

inline void Mdp::validate() const {
  if (n_states <= 0 || n_actions <= 0)
    throw std::invalid_argument("Mdp: n_states and n_actions must be positive");
  if (!(gamma >= 0.0) || gamma >= 1.0)
    throw std::invalid_argument("Mdp: gamma must lie in [0, 1)");
  if (!(r_max > 0.0)) throw std::invalid_argument("Mdp: r_max must be positive");
  if (static_cast<int>(transition.size()) != n_actions)
    throw std::invalid_argument("Mdp: transition tensor must have one matrix per action");
  if (reward.rows() != n_states || reward.cols() != n_actions)
    throw std::invalid_argument("Mdp: reward table dimensions mismatch");
  if (static_cast<int>(absorbing.size()) != n_states)
    throw std::invalid_argument("Mdp: absorbing flags must cover all states");
  for (int a = 0; a < n_actions; ++a) {
    const Eigen::MatrixXd& p = transition[static_cast<std::size_t>(a)];
    if (p.rows() != n_states || p.cols() != n_states)
      throw std::invalid_argument("Mdp: transition matrix dimensions mismatch for action " +
                                  std::to_string(a));
    for (int x = 0; x < n_states; ++x) {
      double sum = 0.0;
      for (int y = 0; y < n_states; ++y) {
        if (p(x, y) < 0.0 || !std::isfinite(p(x, y)))
          throw std::invalid_argument("Mdp: negative or non-finite transition probability");
        sum += p(x, y);
      }
      if (std::abs(sum - 1.0) > 1e-12)
        throw std::invalid_argument("Mdp: transition row (" + std::to_string(x) + "," +
                                    std::to_string(a) + ") sums to " + std::to_string(sum));
    }
  }
  for (int x = 0; x < n_states; ++x)
    for (int a = 0; a < n_actions; ++a) {
      if (std::abs(reward(x, a)) > r_max)
        throw std::invalid_argument("Mdp: |reward| exceeds r_max at (" + std::to_string(x) +
                                    "," + std::to_string(a) + ")");
      if (is_absorbing(x)) {
        if (transition[static_cast<std::size_t>(a)](x, x) != 1.0)
          throw std::invalid_argument("Mdp: absorbing state " + std::to_string(x) +
                                      " must self-loop under every action");
        if (reward(x, a) != 0.0)
          throw std::invalid_argument("Mdp: absorbing state " + std::to_string(x) +
                                      " must have zero reward");
      }
    }
}

inline void check_dims(const Mdp& m, const QFunction& q) {
  if (q.rows() != m.n_states || q.cols() != m.n_actions)
    throw std::invalid_argument("QFunction dimensions do not match the Mdp");
}

inline void check_dims(const Mdp& m, const Policy& pi) {
  if (pi.probs.rows() != m.n_states || pi.probs.cols() != m.n_actions)
    throw std::invalid_argument("Policy dimensions do not match the Mdp");
}

inline double sup_norm(const QFunction& q) { return q.cwiseAbs().maxCoeff(); }

inline double sup_diff(const QFunction& a, const QFunction& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

/// Expected Q-value at x under pi: sum_a pi(a|x) q(x,a).
inline double expected_q(const Policy& pi, const QFunction& q, int x) {
  double v = 0.0;
  for (int a = 0; a < q.cols(); ++a) v += pi.probs(x, a) * q(x, a);
  return v;
}

/// One-step expectation operator: (P^pi q)(x,a) = sum_y P(y|x,a) sum_b pi(b|y) q(y,b).
inline QFunction apply_p_pi(const Mdp& m, const Policy& pi, const QFunction& q) {
  check_dims(m, q);
  check_dims(m, pi);
  Eigen::VectorXd v = (pi.probs.array() * q.array()).rowwise().sum();
  QFunction out(m.n_states, m.n_actions);
  for (int a = 0; a < m.n_actions; ++a)
    out.col(a) = m.transition[static_cast<std::size_t>(a)] * v;
  return out;
}

/// Policy backup: r + gamma P^pi q.
inline QFunction bellman_pi(const Mdp& m, const Policy& pi, const QFunction& q) {
  return m.reward + m.gamma * apply_p_pi(m, pi, q);
}

/// Optimality backup: r(x,a) + gamma sum_y P(y|x,a) max_b q(y,b).
inline QFunction bellman_opt(const Mdp& m, const QFunction& q) {
  check_dims(m, q);
  Eigen::VectorXd v = q.rowwise().maxCoeff();
  QFunction out(m.n_states, m.n_actions);
  for (int a = 0; a < m.n_actions; ++a)
    out.col(a) = m.reward.col(a) + m.gamma * (m.transition[static_cast<std::size_t>(a)] * v);
  return out;
}

/// Flattens a Q-table to the state-action vector with index x * n_actions + a.
inline Eigen::VectorXd q_to_vec(const QFunction& q) {
  Eigen::VectorXd v(q.rows() * q.cols());
  for (int x = 0; x < q.rows(); ++x)
    for (int a = 0; a < q.cols(); ++a) v(x * q.cols() + a) = q(x, a);
  return v;
}

inline QFunction vec_to_q(const Eigen::VectorXd& v, int n_states, int n_actions) {
  QFunction q(n_states, n_actions);
  for (int x = 0; x < n_states; ++x)
    for (int a = 0; a < n_actions; ++a) q(x, a) = v(x * n_actions + a);
  return q;
}

/// State-action transition matrix under a successor policy:
/// M[(x,a),(y,b)] = P(y|x,a) pi(b|y). Row-stochastic by construction.
inline Eigen::MatrixXd p_policy_matrix(const Mdp& m, const Policy& pi) {
  check_dims(m, pi);
  const int n = m.n_states * m.n_actions;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (int x = 0; x < m.n_states; ++x)
    for (int a = 0; a < m.n_actions; ++a) {
      const int row = x * m.n_actions + a;
      for (int y = 0; y < m.n_states; ++y) {
        double p = m.transition[static_cast<std::size_t>(a)](x, y);
        if (p == 0.0) continue;
        for (int b = 0; b < m.n_actions; ++b)
          out(row, y * m.n_actions + b) = p * pi.probs(y, b);
      }
    }
  return out;
}

/// Solves A x = b by partial-pivot LU with one iterative-refinement pass.
inline Eigen::VectorXd solve_refined(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  Eigen::VectorXd x = lu.solve(b);
  x += lu.solve(b - A * x);
  return x;
}

/// Exact policy evaluation: solves (I - gamma P^pi) Q = r over state-action
/// space and verifies the backup residual.
inline QFunction exact_q_pi(const Mdp& m, const Policy& pi) {
  if (m.gamma >= 1.0) throw std::invalid_argument("exact_q_pi: gamma must be below 1");
  const int n = m.n_states * m.n_actions;
  Eigen::MatrixXd A =
      Eigen::MatrixXd::Identity(n, n) - m.gamma * p_policy_matrix(m, pi);
  QFunction q = vec_to_q(solve_refined(A, q_to_vec(m.reward)), m.n_states, m.n_actions);
  double residual = sup_diff(bellman_pi(m, pi, q), q);
  if (!(residual <= 1e-10))
    throw std::runtime_error("exact_q_pi: linear solve residual " + std::to_string(residual));
  return q;
}

/// Deterministic greedy policy; ties break to the lowest action index.
inline Policy greedy_policy(const QFunction& q) {
  Policy pi;
  pi.probs = Eigen::MatrixXd::Zero(q.rows(), q.cols());
  for (int x = 0; x < q.rows(); ++x) {
    int best = 0;
    for (int a = 1; a < q.cols(); ++a)
      if (q(x, a) > q(x, best)) best = a;
    pi.probs(x, best) = 1.0;
  }
  return pi;
}

/// Probability 1 - e + e/|A| on the greedy action (lowest-index tie-break),
/// e/|A| on every other action.
inline Policy epsilon_greedy(const QFunction& q, double e) {
  if (!(e >= 0.0) || e > 1.0) throw std::invalid_argument("epsilon_greedy: e must lie in [0,1]");
  const double base = e / static_cast<double>(q.cols());
  Policy pi = greedy_policy(q);
  pi.probs = (1.0 - e) * pi.probs;
  pi.probs.array() += base;
  return pi;
}

/// Blends a policy with the uniform policy: (1 - beta) pi + beta uniform.
inline Policy mixture_with_uniform(const Policy& pi, double beta) {
  if (!(beta >= 0.0) || beta > 1.0)
    throw std::invalid_argument("mixture_with_uniform: beta must lie in [0,1]");
  Policy out;
  out.probs = (1.0 - beta) * pi.probs;
  out.probs.array() += beta / static_cast<double>(pi.probs.cols());
  return out;
}

/// Largest per-state L1 distance between two policies; range [0, 2].
inline double policy_distance(const Policy& pi, const Policy& mu) {
  if (pi.probs.rows() != mu.probs.rows() || pi.probs.cols() != mu.probs.cols())
    throw std::invalid_argument("policy_distance: dimension mismatch");
  double worst = 0.0;
  for (int x = 0; x < pi.probs.rows(); ++x)
    worst = std::max(worst, (pi.probs.row(x) - mu.probs.row(x)).cwiseAbs().sum());
  return worst;
}

/// Value iteration to the standard stopping rule, then policy-iteration
/// polish: the greedy policy is evaluated exactly and kept whenever it lowers
/// the optimality-backup residual. The polish drives the residual to the
/// linear-solver floor, far below what plain value iteration reaches.
inline QFunction exact_q_star(const Mdp& m, double tol = 1e-10) {
  if (!(tol > 0.0)) throw std::invalid_argument("exact_q_star: tol must be positive");
  if (m.gamma >= 1.0) throw std::invalid_argument("exact_q_star: gamma must be below 1");
  if (m.gamma == 0.0) return m.reward;
  const double stop = tol * (1.0 - m.gamma) / (2.0 * m.gamma);
  QFunction q = QFunction::Zero(m.n_states, m.n_actions);
  double prev_delta = std::numeric_limits<double>::infinity();
  for (long iter = 0; iter < 10000000L; ++iter) {
    QFunction next = bellman_opt(m, q);
    double delta = sup_diff(next, q);
    q = next;
    if (delta <= stop) break;
    // Floating-point floor: successive backups stop shrinking near machine
    // precision; the polish below takes over from there.
    if (delta >= prev_delta && delta < 1e-8) break;
    prev_delta = delta;
  }
  double best_residual = sup_diff(bellman_opt(m, q), q);
  for (int round = 0; round < 100; ++round) {
    QFunction candidate = exact_q_pi(m, greedy_policy(q));
    double residual = sup_diff(bellman_opt(m, candidate), candidate);
    if (residual < best_residual) {
      q = candidate;
      best_residual = residual;
    } else {
      break;
    }
  }
  return q;
}

/// Garnet-style random MDP: every (x,a) reaches `branching` distinct states
/// with flat-Dirichlet weights; rewards are uniform on [-1,1] on a
/// reward_sparsity fraction of pairs and zero elsewhere.
inline Mdp random_mdp(int n_states, int n_actions, int branching, double reward_sparsity,
                      std::uint64_t seed) {
  if (n_states <= 0 || n_actions <= 0)
    throw std::invalid_argument("random_mdp: n_states and n_actions must be positive");
  if (branching < 1 || branching > n_states)
    throw std::invalid_argument("random_mdp: branching must lie in [1, n_states]");
  if (!(reward_sparsity >= 0.0) || reward_sparsity > 1.0)
    throw std::invalid_argument("random_mdp: reward_sparsity must lie in [0,1]");
  std::mt19937_64 g(splitmix64(seed));
  Mdp m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.gamma = 0.9;
  m.r_max = 1.0;
  m.transition.assign(static_cast<std::size_t>(n_actions),
                      Eigen::MatrixXd::Zero(n_states, n_states));
  m.reward = Eigen::MatrixXd::Zero(n_states, n_actions);
  m.absorbing.assign(static_cast<std::size_t>(n_states), 0);
  for (int x = 0; x < n_states; ++x)
    for (int a = 0; a < n_actions; ++a) {
      std::vector<std::size_t> succ =
          sample_distinct(g, static_cast<std::size_t>(n_states),
                          static_cast<std::size_t>(branching));
      std::vector<double> w = sample_simplex(g, static_cast<std::size_t>(branching));
      for (int i = 0; i < branching; ++i)
        m.transition[static_cast<std::size_t>(a)](x, static_cast<int>(succ[static_cast<std::size_t>(i)])) =
            w[static_cast<std::size_t>(i)];
      if (uniform01(g) < reward_sparsity) m.reward(x, a) = uniform(g, -1.0, 1.0);
    }
  return m;
}

struct TimeStep {
  int state;
  int action;
  double reward;
};

/// A sampled episode: steps (x_t, a_t, r_t) for t < T, plus the state the
/// process was in when sampling stopped.
struct Trajectory {
  std::vector<TimeStep> steps;
  int terminal_state = -1;

  int length() const { return static_cast<int>(steps.size()); }
};

inline int sample_action(std::mt19937_64& g, const Policy& pi, int x) {
  double u = uniform01(g);
  double acc = 0.0;
  const int n = pi.n_actions();
  for (int a = 0; a + 1 < n; ++a) {
    acc += pi.probs(x, a);
    if (u < acc) return a;
  }
  return n - 1;
}

inline int sample_successor(std::mt19937_64& g, const Mdp& m, int x, int a) {
  double u = uniform01(g);
  double acc = 0.0;
  const Eigen::MatrixXd& p = m.transition[static_cast<std::size_t>(a)];
  for (int y = 0; y + 1 < m.n_states; ++y) {
    acc += p(x, y);
    if (u < acc) return y;
  }
  return m.n_states - 1;
}

/// Samples one episode under mu. Sampling stops once the successor is
/// absorbing or max_steps steps are recorded, so every trajectory is finite
/// and has at least one step.
inline Trajectory sample_episode(const Mdp& m, const Policy& mu, int start,
                                 std::mt19937_64& g, int max_steps) {
  if (max_steps <= 0) throw std::invalid_argument("sample_episode: max_steps must be positive");
  if (start < 0 || start >= m.n_states)
    throw std::invalid_argument("sample_episode: start state out of range");
  check_dims(m, mu);
  Trajectory tr;
  int x = start;
  for (;;) {
    int a = sample_action(g, mu, x);
    tr.steps.push_back({x, a, m.reward(x, a)});
    int y = sample_successor(g, m, x, a);
    if (m.is_absorbing(y) || tr.length() >= max_steps) {
      tr.terminal_state = y;
      break;
    }
    x = y;
  }
  return tr;
}

}  // namespace qlambda
