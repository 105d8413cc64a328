#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qlambda/csv.hpp"
#include "qlambda/mdp.hpp"
#include "qlambda/rng.hpp"
#include "qlambda/traces.hpp"

namespace qlambda {

/// The update-rule family. All variants share the backward-view trace loop
/// and differ only in their one-step error, their trace weighting, and an
/// optional per-visit correction term.
enum class AlgorithmKind {
  QPi,            // expected target bootstrap, plain lambda gamma traces
  QStar,          // greedy target, plain traces
  Sarsa,          // on-policy sampled bootstrap
  ExpectedSarsa,  // on-policy expected bootstrap with per-visit correction
  GeneralQ,       // expected target at both ends, uncorrected (biased off-policy)
  Pdis,           // per-decision importance sampling: ratio in delta and traces
  TreeBackup,     // target-probability-weighted traces
  WatkinsQ,       // greedy target, traces cut at non-greedy actions
  PengWilliamsQ,  // greedy bootstrap at both ends with per-visit correction
};

inline const char* kind_name(AlgorithmKind k) {
  switch (k) {
    case AlgorithmKind::QPi: return "qpi";
    case AlgorithmKind::QStar: return "qstar";
    case AlgorithmKind::Sarsa: return "sarsa";
    case AlgorithmKind::ExpectedSarsa: return "expected-sarsa";
    case AlgorithmKind::GeneralQ: return "generalq";
    case AlgorithmKind::Pdis: return "pdis";
    case AlgorithmKind::TreeBackup: return "treebackup";
    case AlgorithmKind::WatkinsQ: return "watkins";
    case AlgorithmKind::PengWilliamsQ: return "pengwilliams";
  }
  return "unknown";
}

inline AlgorithmKind kind_from_string(const std::string& s) {
  for (AlgorithmKind k :
       {AlgorithmKind::QPi, AlgorithmKind::QStar, AlgorithmKind::Sarsa,
        AlgorithmKind::ExpectedSarsa, AlgorithmKind::GeneralQ, AlgorithmKind::Pdis,
        AlgorithmKind::TreeBackup, AlgorithmKind::WatkinsQ, AlgorithmKind::PengWilliamsQ})
    if (s == kind_name(k)) return k;
  throw std::invalid_argument(
      "unknown algorithm '" + s +
      "'; expected one of qpi, qstar, sarsa, expected-sarsa, generalq, pdis, "
      "treebackup, watkins, pengwilliams");
}

/// True for the control variants that derive their target greedily from the
/// current Q instead of taking a fixed target policy.
inline bool is_control_kind(AlgorithmKind k) {
  return k == AlgorithmKind::QStar || k == AlgorithmKind::WatkinsQ ||
         k == AlgorithmKind::PengWilliamsQ;
}

inline bool is_on_policy_kind(AlgorithmKind k) {
  return k == AlgorithmKind::Sarsa || k == AlgorithmKind::ExpectedSarsa;
}

/// True when the variant's one-step error reads the sampled next action.
inline bool needs_next_action(AlgorithmKind k) {
  return k == AlgorithmKind::Sarsa || k == AlgorithmKind::Pdis;
}

inline double max_q(const QFunction& q, int x) {
  double best = q(x, 0);
  for (int a = 1; a < q.cols(); ++a) best = std::max(best, q(x, a));
  return best;
}

/// One-step error of each variant for the transition (x, a, r, x_next) with
/// sampled next action a_next where the variant reads it.
inline double td_error(AlgorithmKind kind, const QFunction& q, int x, int a, double r,
                       int x_next, int a_next, const Policy& pi, const Policy& mu,
                       double gamma) {
  switch (kind) {
    case AlgorithmKind::QPi:
    case AlgorithmKind::TreeBackup:
      return r + gamma * expected_q(pi, q, x_next) - q(x, a);
    case AlgorithmKind::QStar:
    case AlgorithmKind::WatkinsQ:
      return r + gamma * max_q(q, x_next) - q(x, a);
    case AlgorithmKind::PengWilliamsQ:
      return r + gamma * max_q(q, x_next) - max_q(q, x);
    case AlgorithmKind::Sarsa:
      if (a_next < 0) throw std::invalid_argument("td_error: sarsa needs the next action");
      return r + gamma * q(x_next, a_next) - q(x, a);
    case AlgorithmKind::ExpectedSarsa:
      return r + gamma * expected_q(mu, q, x_next) - expected_q(mu, q, x);
    case AlgorithmKind::GeneralQ:
      return r + gamma * expected_q(pi, q, x_next) - expected_q(pi, q, x);
    case AlgorithmKind::Pdis: {
      if (a_next < 0) throw std::invalid_argument("td_error: pdis needs the next action");
      double denom = mu.probs(x_next, a_next);
      if (denom <= 0.0)
        throw std::invalid_argument("td_error: pdis ratio undefined, behavior probability 0");
      return r + gamma * (pi.probs(x_next, a_next) / denom) * q(x_next, a_next) - q(x, a);
    }
  }
  throw std::invalid_argument("td_error: unknown kind");
}

/// Multiplicative trace decay contributed by observing (x_i, a_i), plus a cut
/// flag. The cut zeroes every existing trace before the visit increment.
struct TraceFactor {
  double factor;
  bool cut;
};

inline TraceFactor trace_decay_factor(AlgorithmKind kind, double lambda, double gamma,
                                      int x_i, int a_i, const QFunction& q,
                                      const Policy& pi, const Policy& mu) {
  const double base = lambda * gamma;
  switch (kind) {
    case AlgorithmKind::TreeBackup:
      return {base * pi.probs(x_i, a_i), false};
    case AlgorithmKind::Pdis: {
      double denom = mu.probs(x_i, a_i);
      if (denom <= 0.0)
        throw std::invalid_argument(
            "trace_decay_factor: pdis ratio undefined, behavior probability 0");
      return {base * pi.probs(x_i, a_i) / denom, false};
    }
    case AlgorithmKind::WatkinsQ:
      // Non-greedy means strictly below the row maximum, so exact ties stay
      // greedy and an all-equal row never cuts.
      return {base, q(x_i, a_i) < max_q(q, x_i)};
    default:
      return {base, false};
  }
}

/// Per-visit correction added once at each visited pair on top of the
/// trace-weighted error sum; zero for the variants whose error already
/// bootstraps from Q(x,a) at the visited pair.
inline double visit_correction(AlgorithmKind kind, const QFunction& q, int x, int a,
                               const Policy& pi, const Policy& mu) {
  switch (kind) {
    case AlgorithmKind::ExpectedSarsa:
      return expected_q(mu, q, x) - q(x, a);
    case AlgorithmKind::GeneralQ:
      return expected_q(pi, q, x) - q(x, a);
    case AlgorithmKind::PengWilliamsQ:
      return max_q(q, x) - q(x, a);
    default:
      return 0.0;
  }
}

enum class UpdateMode {
  WithinEpisodeOnline,   // errors read the live Q, updates land immediately
  FrozenWithinEpisode,   // errors read the episode-start Q, updates land at the end
};

/// One backward-view sweep over a sampled episode, updating q in place.
/// terminal_action is the behavior draw at the final state, read only by the
/// variants that bootstrap from a sampled action. per_step_greedy makes the
/// greedy-target control variant bootstrap from the live row maximum instead
/// of the episode-start greedy policy pi. Returns false when a non-finite
/// value appeared, leaving divergence handling to the caller.
inline bool episode_update(QFunction& q, const Mdp& m, const Trajectory& traj,
                           int terminal_action, AlgorithmKind kind, const Policy& pi,
                           const Policy& mu, double lambda, double alpha, UpdateMode mode,
                           bool per_step_greedy, TraceVector& e) {
  check_dims(m, q);
  const double gamma = m.gamma;
  const bool frozen = mode == UpdateMode::FrozenWithinEpisode;
  const QFunction snapshot = frozen ? q : QFunction();
  const QFunction& qr = frozen ? snapshot : q;
  std::unordered_map<std::int64_t, double> pending;  // frozen-mode increments
  e.reset();
  const int T = traj.length();
  for (int t = 0; t < T; ++t) {
    const TimeStep& s = traj.steps[static_cast<std::size_t>(t)];
    const int x_next = t + 1 < T ? traj.steps[static_cast<std::size_t>(t + 1)].state
                                 : traj.terminal_state;
    const int a_next = t + 1 < T ? traj.steps[static_cast<std::size_t>(t + 1)].action
                                 : terminal_action;
    TraceFactor f = trace_decay_factor(kind, lambda, gamma, s.state, s.action, qr, pi, mu);
    if (f.cut)
      e.cut();
    else
      e.decay(f.factor);
    e.add(static_cast<std::int64_t>(s.state) * m.n_actions + s.action, 1.0);
    double delta;
    if (kind == AlgorithmKind::QStar && !per_step_greedy)
      delta = td_error(AlgorithmKind::QPi, qr, s.state, s.action, s.reward, x_next, a_next,
                       pi, mu, gamma);
    else
      delta = td_error(kind, qr, s.state, s.action, s.reward, x_next, a_next, pi, mu, gamma);
    double correction = visit_correction(kind, qr, s.state, s.action, pi, mu);
    if (frozen) {
      e.for_each([&](std::int64_t key, double ev) { pending[key] += alpha * delta * ev; });
      if (correction != 0.0)
        pending[static_cast<std::int64_t>(s.state) * m.n_actions + s.action] +=
            alpha * correction;
    } else {
      e.for_each([&](std::int64_t key, double ev) {
        q(static_cast<int>(key / m.n_actions), static_cast<int>(key % m.n_actions)) +=
            alpha * delta * ev;
      });
      if (correction != 0.0) q(s.state, s.action) += alpha * correction;
    }
  }
  if (frozen)
    for (const auto& [key, dv] : pending)
      q(static_cast<int>(key / m.n_actions), static_cast<int>(key % m.n_actions)) += dv;
  return q.allFinite();
}

/// Offline every-visit update computed by direct double summation against the
/// episode-start Q: each visit (x_s, a_s) receives the decayed sum of later
/// errors plus its correction term. Independent oracle for the backward view.
inline void forward_view_episode(QFunction& q, const Mdp& m, const Trajectory& traj,
                                 int terminal_action, AlgorithmKind kind, const Policy& pi,
                                 const Policy& mu, double lambda, double alpha,
                                 bool per_step_greedy = false) {
  check_dims(m, q);
  const double gamma = m.gamma;
  const QFunction q0 = q;
  const int T = traj.length();
  std::vector<double> delta(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const TimeStep& s = traj.steps[static_cast<std::size_t>(t)];
    const int x_next = t + 1 < T ? traj.steps[static_cast<std::size_t>(t + 1)].state
                                 : traj.terminal_state;
    const int a_next = t + 1 < T ? traj.steps[static_cast<std::size_t>(t + 1)].action
                                 : terminal_action;
    if (kind == AlgorithmKind::QStar && !per_step_greedy)
      delta[static_cast<std::size_t>(t)] = td_error(AlgorithmKind::QPi, q0, s.state, s.action,
                                                    s.reward, x_next, a_next, pi, mu, gamma);
    else
      delta[static_cast<std::size_t>(t)] =
          td_error(kind, q0, s.state, s.action, s.reward, x_next, a_next, pi, mu, gamma);
  }
  for (int s = 0; s < T; ++s) {
    const TimeStep& visit = traj.steps[static_cast<std::size_t>(s)];
    double total = delta[static_cast<std::size_t>(s)];
    double w = 1.0;
    for (int t = s + 1; t < T; ++t) {
      const TimeStep& step = traj.steps[static_cast<std::size_t>(t)];
      TraceFactor f =
          trace_decay_factor(kind, lambda, gamma, step.state, step.action, q0, pi, mu);
      if (f.cut) break;
      w *= f.factor;
      if (w == 0.0) break;
      total += w * delta[static_cast<std::size_t>(t)];
    }
    total += visit_correction(kind, q0, visit.state, visit.action, pi, mu);
    q(visit.state, visit.action) += alpha * total;
  }
}

/// Step-size schedule alpha_k = a0 / (1 + k / kappa), or constant a0. The
/// decaying form satisfies the usual divergent-sum, convergent-square-sum
/// requirement for convergence experiments.
struct StepSizeSchedule {
  double a0 = 0.5;
  double kappa = 1000.0;
  bool constant = false;

  double at(std::int64_t k) const {
    if (constant) return a0;
    return a0 / (1.0 + static_cast<double>(k) / kappa);
  }
  void validate() const {
    if (!(a0 > 0.0)) throw std::invalid_argument("StepSizeSchedule: a0 must be positive");
    if (!constant && !(kappa > 0.0))
      throw std::invalid_argument("StepSizeSchedule: kappa must be positive");
  }
};

/// How a learner obtains its target or behavior policy: a fixed table, the
/// greedy policy of the current Q, or an epsilon-greedy policy of the current
/// Q. The Q-derived forms are re-materialized at episode boundaries.
struct PolicySpec {
  enum class Mode { Fixed, GreedyOfQ, EpsGreedyOfQ };
  Mode mode = Mode::Fixed;
  Policy fixed;
  double epsilon = 0.0;

  static PolicySpec make_fixed(Policy p) {
    PolicySpec s;
    s.mode = Mode::Fixed;
    s.fixed = std::move(p);
    return s;
  }
  static PolicySpec make_greedy() {
    PolicySpec s;
    s.mode = Mode::GreedyOfQ;
    return s;
  }
  static PolicySpec make_eps_greedy(double eps) {
    PolicySpec s;
    s.mode = Mode::EpsGreedyOfQ;
    s.epsilon = eps;
    return s;
  }
  Policy materialize(const QFunction& q) const {
    switch (mode) {
      case Mode::Fixed: return fixed;
      case Mode::GreedyOfQ: return greedy_policy(q);
      case Mode::EpsGreedyOfQ: return epsilon_greedy(q, epsilon);
    }
    throw std::invalid_argument("PolicySpec: unknown mode");
  }
  bool same_as(const PolicySpec& other) const {
    if (mode != other.mode) return false;
    if (mode == Mode::EpsGreedyOfQ) return epsilon == other.epsilon;
    if (mode == Mode::Fixed)
      return fixed.probs.rows() == other.fixed.probs.rows() &&
             fixed.probs.cols() == other.fixed.probs.cols() &&
             fixed.probs == other.fixed.probs;
    return true;
  }
};

struct LearnerConfig {
  double lambda = 0.0;
  StepSizeSchedule alpha;
  std::int64_t episodes = 1000;
  int max_steps = 1000;
  UpdateMode mode = UpdateMode::WithinEpisodeOnline;
  bool per_step_greedy = false;
  std::uint64_t seed = 0;
  std::optional<QFunction> reference_q;  // enables the per-episode error curve
  double divergence_factor = 100.0;
  int start_state = -1;  // -1: uniform over non-absorbing states
};

struct LearnRun {
  QFunction final_q;
  std::vector<double> error_curve;   // per-episode sup distance to reference_q
  std::vector<double> q_norm_curve;  // per-episode sup norm of Q
  bool diverged = false;
  std::int64_t episodes_run = 0;
};

/// Runs the backward-view learner for a number of episodes. Q-derived
/// policies are re-materialized at every episode start; the behavior policy
/// samples a complete trajectory which is then processed in one sweep.
/// Divergence (non-finite values or sup norm beyond
/// divergence_factor * r_max / (1 - gamma)) stops the run early and is
/// recorded as data.
inline LearnRun train(const Mdp& m, AlgorithmKind kind, const PolicySpec& pi_spec,
                      const PolicySpec& mu_spec, const LearnerConfig& cfg) {
  m.validate();
  cfg.alpha.validate();
  if (!(cfg.lambda >= 0.0) || cfg.lambda > 1.0)
    throw std::invalid_argument("train: lambda must lie in [0,1]");
  if (cfg.episodes < 0) throw std::invalid_argument("train: episodes must be nonnegative");
  if (is_control_kind(kind) && pi_spec.mode != PolicySpec::Mode::GreedyOfQ)
    throw std::invalid_argument(
        "train: greedy-target control variants derive the target from Q; "
        "pass a greedy-of-Q target spec");
  if (is_on_policy_kind(kind) && !pi_spec.same_as(mu_spec))
    throw std::invalid_argument("train: on-policy variants need identical target and behavior");
  if (!is_control_kind(kind) && !is_on_policy_kind(kind) &&
      pi_spec.mode != PolicySpec::Mode::Fixed)
    throw std::invalid_argument("train: this variant evaluates a fixed target policy");
  if (cfg.reference_q) check_dims(m, *cfg.reference_q);

  std::vector<int> starts;
  if (cfg.start_state >= 0) {
    if (cfg.start_state >= m.n_states)
      throw std::invalid_argument("train: start state out of range");
    starts.push_back(cfg.start_state);
  } else {
    for (int x = 0; x < m.n_states; ++x)
      if (!m.is_absorbing(x)) starts.push_back(x);
    if (starts.empty()) throw std::invalid_argument("train: every state is absorbing");
  }

  const double value_cap = cfg.divergence_factor * m.r_max / (1.0 - m.gamma);
  std::mt19937_64 g(splitmix64(cfg.seed));
  LearnRun run;
  run.final_q = QFunction::Zero(m.n_states, m.n_actions);
  TraceVector e;
  for (std::int64_t k = 0; k < cfg.episodes; ++k) {
    Policy pi_k = pi_spec.materialize(run.final_q);
    Policy mu_k = mu_spec.materialize(run.final_q);
    int start = starts[uniform_index(g, starts.size())];
    Trajectory traj = sample_episode(m, mu_k, start, g, cfg.max_steps);
    int terminal_action = sample_action(g, mu_k, traj.terminal_state);
    bool finite = episode_update(run.final_q, m, traj, terminal_action, kind, pi_k, mu_k,
                                 cfg.lambda, cfg.alpha.at(k), cfg.mode, cfg.per_step_greedy, e);
    run.episodes_run = k + 1;
    double norm = finite ? sup_norm(run.final_q) : std::numeric_limits<double>::infinity();
    run.q_norm_curve.push_back(norm);
    if (cfg.reference_q)
      run.error_curve.push_back(finite ? sup_diff(run.final_q, *cfg.reference_q)
                                       : std::numeric_limits<double>::infinity());
    if (!finite || norm > value_cap) {
      run.diverged = true;
      break;
    }
  }
  return run;
}

/// Writes the per-episode curves with a leading metadata comment line.
/// Columns: episode index, error against the reference (empty when no
/// reference was configured), sup norm of Q, and the divergence flag.
inline void write_learn_run_csv(std::ostream& out, const LearnRun& run, AlgorithmKind kind,
                                double lambda, double gamma, double epsilon,
                                std::uint64_t seed, const StepSizeSchedule& alpha) {
  out << "# kind=" << kind_name(kind) << " lambda=" << format_double(lambda)
      << " gamma=" << format_double(gamma) << " epsilon=" << format_double(epsilon)
      << " seed=" << format_u64(seed) << " alpha_a0=" << format_double(alpha.a0)
      << " alpha_kappa=" << format_double(alpha.kappa)
      << " alpha_constant=" << (alpha.constant ? 1 : 0) << '\n';
  out << "episode,error,q_norm,diverged\n";
  const bool has_error = !run.error_curve.empty();
  for (std::int64_t k = 0; k < run.episodes_run; ++k) {
    CsvWriter w(out);
    bool diverged_row = run.diverged && k + 1 == run.episodes_run;
    w.field(static_cast<std::uint64_t>(k));
    if (has_error)
      w.field(run.error_curve[static_cast<std::size_t>(k)]);
    else
      w.field(std::string());
    w.field(run.q_norm_curve[static_cast<std::size_t>(k)]);
    w.field(diverged_row);
    w.end_row();
  }
}

}  // namespace qlambda
