// Minimal library walkthrough: build a two-state chain, evaluate a target
// policy exactly, and watch the lambda-operator contract toward it from zero.
#include <cstdio>

#include "qlambda/mdp.hpp"
#include "qlambda/operators.hpp"

using namespace qlambda;

static Mdp chain() {
  Mdp m;
  m.n_states = 2;
  m.n_actions = 2;
  m.gamma = 0.5;
  m.r_max = 1.0;
  m.transition.assign(2, Eigen::MatrixXd::Zero(2, 2));
  m.transition[0].col(0).setOnes();  // action 0 always lands in state 0
  m.transition[1].col(1).setOnes();  // action 1 always lands in state 1
  m.reward = Eigen::MatrixXd::Zero(2, 2);
  m.reward.col(1).setOnes();
  m.absorbing.assign(2, 0);
  m.validate();
  return m;
}

int main() {
  Mdp m = chain();
  Policy pi;
  pi.probs = Eigen::MatrixXd::Zero(2, 2);
  pi.probs.col(1).setOnes();  // always take action 1
  Policy mu;
  mu.probs = Eigen::MatrixXd::Constant(2, 2, 0.5);  // uniform behavior

  QFunction q_pi = exact_q_pi(m, pi);
  std::printf("exact Q^pi:\n  [[%g, %g], [%g, %g]]\n", q_pi(0, 0), q_pi(0, 1), q_pi(1, 0),
              q_pi(1, 1));

  const double lambda = 0.5;
  QFunction q = QFunction::Zero(2, 2);
  for (int k = 0; k < 12; ++k) {
    std::printf("iter %2d  error %.3e\n", k, sup_diff(q, q_pi));
    q = r_lambda(m, pi, mu, q, lambda);
  }
  std::printf("eta bound at distance 1: %g\n", eta_eval_bound(m.gamma, lambda, 1.0));
  return 0;
}
