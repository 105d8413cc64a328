#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>

#include "qlambda/csv.hpp"
#include "qlambda/mdp.hpp"
#include "qlambda/rng.hpp"

namespace qlambda {

/// Monte-Carlo form of the corrected return: the full discounted series
///   r + sum_{t>=1} gamma^t (P^mu)^{t-1} [P^mu r + P^pi q - P^mu q],
/// truncated once the geometric tail bound drops below horizon_tol. Its fixed
/// point is Q^pi for any behavior policy, which is what makes the correction
/// term interesting in the first place.
inline QFunction r_corrected_mc(const Mdp& m, const Policy& pi, const Policy& mu,
                                const QFunction& q, double horizon_tol) {
  if (m.gamma >= 1.0) throw std::invalid_argument("r_corrected_mc: gamma must be below 1");
  if (!(horizon_tol > 0.0))
    throw std::invalid_argument("r_corrected_mc: horizon_tol must be positive");
  check_dims(m, q);
  Eigen::MatrixXd p_mu = p_policy_matrix(m, mu);
  Eigen::MatrixXd p_pi = p_policy_matrix(m, pi);
  Eigen::VectorXd r = q_to_vec(m.reward);
  Eigen::VectorXd qv = q_to_vec(q);
  Eigen::VectorXd correction = p_mu * r + p_pi * qv - p_mu * qv;
  const double tail_scale =
      (r.cwiseAbs().maxCoeff() + 2.0 * qv.cwiseAbs().maxCoeff()) / (1.0 - m.gamma);
  Eigen::VectorXd acc = r;
  Eigen::VectorXd w = correction;  // (P^mu)^{t-1} correction
  double gamma_t = m.gamma;
  for (long t = 1; gamma_t * tail_scale >= horizon_tol && t < 100000000L; ++t) {
    acc += gamma_t * w;
    w = p_mu * w;
    gamma_t *= m.gamma;
  }
  return vec_to_q(acc, m.n_states, m.n_actions);
}

/// n-step corrected return, evaluated exactly in matrix form:
///   r + sum_{t=1}^{n} gamma^t (P^mu)^{t-1} [P^mu r + P^pi q - P^mu q]
///     + gamma^{n+1} (P^mu)^n P^pi q.
/// n = 0 collapses to the one-step policy backup.
inline QFunction r_n_step(const Mdp& m, const Policy& pi, const Policy& mu,
                          const QFunction& q, int n) {
  if (n < 0) throw std::invalid_argument("r_n_step: n must be nonnegative");
  check_dims(m, q);
  Eigen::MatrixXd p_mu = p_policy_matrix(m, mu);
  Eigen::MatrixXd p_pi = p_policy_matrix(m, pi);
  Eigen::VectorXd r = q_to_vec(m.reward);
  Eigen::VectorXd qv = q_to_vec(q);
  Eigen::VectorXd acc = r;
  Eigen::VectorXd w = p_mu * r + p_pi * qv - p_mu * qv;
  double gamma_t = m.gamma;
  for (int t = 1; t <= n; ++t) {
    acc += gamma_t * w;
    w = p_mu * w;
    gamma_t *= m.gamma;
  }
  Eigen::VectorXd bootstrap = p_pi * qv;
  for (int t = 0; t < n; ++t) bootstrap = p_mu * bootstrap;
  acc += gamma_t * bootstrap;  // gamma_t = gamma^{n+1} after the loop
  return vec_to_q(acc, m.n_states, m.n_actions);
}

/// lambda-mixture of the corrected n-step returns in resolvent form:
///   R q = q + (I - lambda gamma P^mu)^{-1} (T^pi q - q).
inline QFunction r_lambda(const Mdp& m, const Policy& pi, const Policy& mu,
                          const QFunction& q, double lambda) {
  if (!(lambda >= 0.0) || lambda > 1.0)
    throw std::invalid_argument("r_lambda: lambda must lie in [0,1]");
  if (lambda * m.gamma >= 1.0)
    throw std::invalid_argument("r_lambda: lambda * gamma must be below 1");
  check_dims(m, q);
  const int n = m.n_states * m.n_actions;
  Eigen::MatrixXd A =
      Eigen::MatrixXd::Identity(n, n) - lambda * m.gamma * p_policy_matrix(m, mu);
  Eigen::VectorXd y = solve_refined(A, q_to_vec(bellman_pi(m, pi, q) - q));
  return q + vec_to_q(y, m.n_states, m.n_actions);
}

/// Control counterpart: R q = q + (I - lambda gamma P^mu)^{-1} (T q - q) with
/// the optimality backup in place of the policy backup.
inline QFunction r_lambda_star(const Mdp& m, const Policy& mu, const QFunction& q,
                               double lambda) {
  if (!(lambda >= 0.0) || lambda > 1.0)
    throw std::invalid_argument("r_lambda_star: lambda must lie in [0,1]");
  if (lambda * m.gamma >= 1.0)
    throw std::invalid_argument("r_lambda_star: lambda * gamma must be below 1");
  check_dims(m, q);
  const int n = m.n_states * m.n_actions;
  Eigen::MatrixXd A =
      Eigen::MatrixXd::Identity(n, n) - lambda * m.gamma * p_policy_matrix(m, mu);
  Eigen::VectorXd y = solve_refined(A, q_to_vec(bellman_opt(m, q) - q));
  return q + vec_to_q(y, m.n_states, m.n_actions);
}

/// Closed-form stable point of the uncorrected general update:
///   Q = (I - lambda gamma (P^mu - P^pi) - gamma P^pi)^{-1} r,
/// equivalently the fixed point of (1-lambda) T^pi + lambda T^mu. Differs
/// from Q^pi whenever lambda > 0 and pi != mu, which is the bias the
/// correction term removes.
inline QFunction general_q_fixed_point(const Mdp& m, const Policy& pi, const Policy& mu,
                                       double lambda) {
  if (!(lambda >= 0.0) || lambda > 1.0)
    throw std::invalid_argument("general_q_fixed_point: lambda must lie in [0,1]");
  if (m.gamma >= 1.0)
    throw std::invalid_argument("general_q_fixed_point: gamma must be below 1");
  const int n = m.n_states * m.n_actions;
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) -
                      lambda * m.gamma * (p_policy_matrix(m, mu) - p_policy_matrix(m, pi)) -
                      m.gamma * p_policy_matrix(m, pi);
  Eigen::VectorXd y = solve_refined(A, q_to_vec(m.reward));
  return vec_to_q(y, m.n_states, m.n_actions);
}

/// Evaluation contraction coefficient gamma (1 - lambda + lambda epsilon) / (1 - lambda gamma),
/// where epsilon is the worst-state L1 distance between target and behavior.
inline double eta_eval_bound(double gamma, double lambda, double epsilon) {
  if (!(gamma >= 0.0) || gamma >= 1.0)
    throw std::invalid_argument("eta_eval_bound: gamma must lie in [0,1)");
  if (!(lambda >= 0.0) || lambda > 1.0)
    throw std::invalid_argument("eta_eval_bound: lambda must lie in [0,1]");
  if (!(epsilon >= 0.0) || epsilon > 2.0)
    throw std::invalid_argument("eta_eval_bound: epsilon must lie in [0,2]");
  if (lambda * gamma >= 1.0)
    throw std::invalid_argument("eta_eval_bound: lambda * gamma must be below 1");
  return gamma * (1.0 - lambda + lambda * epsilon) / (1.0 - lambda * gamma);
}

/// Control contraction coefficient (gamma + lambda gamma) / (1 - lambda gamma).
inline double eta_control_bound(double gamma, double lambda) {
  if (!(gamma >= 0.0) || gamma >= 1.0)
    throw std::invalid_argument("eta_control_bound: gamma must lie in [0,1)");
  if (!(lambda >= 0.0) || lambda > 1.0)
    throw std::invalid_argument("eta_control_bound: lambda must lie in [0,1]");
  if (lambda * gamma >= 1.0)
    throw std::invalid_argument("eta_control_bound: lambda * gamma must be below 1");
  return (gamma + lambda * gamma) / (1.0 - lambda * gamma);
}

/// Largest lambda with a guaranteed evaluation contraction at off-policy-ness
/// epsilon: min(1, (1-gamma)/(gamma epsilon)); 1 when epsilon = 0.
inline double lambda_max_eval(double gamma, double epsilon) {
  if (!(gamma >= 0.0) || gamma >= 1.0)
    throw std::invalid_argument("lambda_max_eval: gamma must lie in [0,1)");
  if (!(epsilon >= 0.0) || epsilon > 2.0)
    throw std::invalid_argument("lambda_max_eval: epsilon must lie in [0,2]");
  if (epsilon == 0.0 || gamma == 0.0) return 1.0;
  return std::min(1.0, (1.0 - gamma) / (gamma * epsilon));
}

/// Largest lambda with a guaranteed control contraction: min(1, (1-gamma)/(2 gamma)).
/// Coincides with the evaluation threshold at the worst-case distance 2.
inline double lambda_max_control(double gamma) {
  if (!(gamma >= 0.0) || gamma >= 1.0)
    throw std::invalid_argument("lambda_max_control: gamma must lie in [0,1)");
  if (gamma == 0.0) return 1.0;
  return std::min(1.0, (1.0 - gamma) / (2.0 * gamma));
}

/// Outcome of one empirical certification run. eta_empirical is the worst
/// observed sup-norm ratio over random Q-pairs; the iteration fields describe
/// repeated application of the operator from Q = 0.
struct OperatorReport {
  double gamma = 0.0;
  double lambda = 0.0;
  double epsilon = 0.0;  // nominal off-policy-ness recorded with the row
  double eta_bound = 0.0;
  double eta_empirical = 0.0;
  int iterations_to_tol = 0;
  bool converged = false;
  double final_error = 0.0;
};

inline constexpr const char* kOperatorReportCsvHeader =
    "gamma,lambda,epsilon,eta_bound,eta_empirical,iterations,converged,final_error";

inline void write_operator_report_row(std::ostream& out, const OperatorReport& r) {
  CsvWriter w(out);
  w.field(r.gamma)
      .field(r.lambda)
      .field(r.epsilon)
      .field(r.eta_bound)
      .field(r.eta_empirical)
      .field(r.iterations_to_tol)
      .field(r.converged)
      .field(r.final_error);
  w.end_row();
}

/// Measures the operator's worst sup-norm ratio over n_pairs random Q-pairs
/// drawn from the value-bound box [-r_max/(1-gamma), r_max/(1-gamma)], then
/// iterates it from Q = 0 until successive iterates agree to 1e-8. With pi
/// given the operator is the evaluation form; without it, the control form.
/// Non-contraction is a legitimate outcome (converged = false), not an error.
/// epsilon_nominal, when given, feeds the reported bound; otherwise the
/// measured policy distance is used (evaluation) or the worst case 2 (control).
inline OperatorReport certify_contraction(const Mdp& m, const std::optional<Policy>& pi,
                                          const Policy& mu, double lambda, int n_pairs,
                                          std::uint64_t seed,
                                          std::optional<double> epsilon_nominal = {}) {
  if (n_pairs < 1) throw std::invalid_argument("certify_contraction: n_pairs must be positive");
  check_dims(m, mu);
  const bool control = !pi.has_value();
  OperatorReport report;
  report.gamma = m.gamma;
  report.lambda = lambda;
  if (control) {
    report.epsilon = epsilon_nominal.value_or(2.0);
    report.eta_bound = eta_control_bound(m.gamma, lambda);
  } else {
    check_dims(m, *pi);
    report.epsilon = epsilon_nominal.value_or(policy_distance(*pi, mu));
    report.eta_bound = eta_eval_bound(m.gamma, lambda, report.epsilon);
  }
  auto apply = [&](const QFunction& q) {
    return control ? r_lambda_star(m, mu, q, lambda) : r_lambda(m, *pi, mu, q, lambda);
  };

  const double box = m.r_max / (1.0 - m.gamma);
  std::mt19937_64 g(splitmix64(seed));
  auto random_q = [&]() {
    QFunction q(m.n_states, m.n_actions);
    for (int x = 0; x < m.n_states; ++x)
      for (int a = 0; a < m.n_actions; ++a) q(x, a) = uniform(g, -box, box);
    return q;
  };
  double worst = 0.0;
  for (int i = 0; i < n_pairs; ++i) {
    QFunction q1 = random_q();
    QFunction q2 = random_q();
    double denom = sup_diff(q1, q2);
    if (denom < 1e-9) continue;
    worst = std::max(worst, sup_diff(apply(q1), apply(q2)) / denom);
  }
  report.eta_empirical = worst;

  const double tol = 1e-8;
  const double blowup = 1e6 * std::max(1.0, box);
  QFunction q = QFunction::Zero(m.n_states, m.n_actions);
  int iters = 0;
  double err = std::numeric_limits<double>::infinity();
  for (; iters < 200000; ++iters) {
    QFunction next = apply(q);
    err = sup_diff(next, q);
    q = next;
    if (err <= tol) {
      ++iters;
      break;
    }
    if (!q.allFinite() || sup_norm(q) > blowup) {
      ++iters;
      break;
    }
  }
  report.iterations_to_tol = iters;
  report.final_error = err;
  report.converged = std::isfinite(err) && err <= tol;
  return report;
}

}  // namespace qlambda
