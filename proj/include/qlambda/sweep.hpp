#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "qlambda/bicycle.hpp"
#include "qlambda/csv.hpp"
#include "qlambda/mdp.hpp"
#include "qlambda/online_td.hpp"
#include "qlambda/operators.hpp"
#include "qlambda/rng.hpp"

namespace qlambda {

enum class SweepEnvironment { Tabular, Bicycle };

inline const char* environment_name(SweepEnvironment e) {
  return e == SweepEnvironment::Tabular ? "tabular" : "bicycle";
}

inline SweepEnvironment environment_from_string(const std::string& s) {
  if (s == "tabular") return SweepEnvironment::Tabular;
  if (s == "bicycle") return SweepEnvironment::Bicycle;
  throw std::invalid_argument("unknown environment '" + s + "'; expected tabular or bicycle");
}

/// A lambda-epsilon grid experiment. Evaluation variants read the fixed
/// target policy and sweep epsilon as the uniform-mixture weight budget (so
/// the worst-state L1 distance stays below epsilon); control and on-policy
/// variants sweep epsilon as the exploration probability of an epsilon-greedy
/// behavior. Bicycle sweeps reuse the grid learner with per-cell overrides.
struct SweepConfig {
  std::vector<double> lambda_grid;
  std::vector<double> epsilon_grid;
  int trials_per_cell = 5;
  std::int64_t episodes_per_trial = 2000;
  SweepEnvironment environment = SweepEnvironment::Tabular;
  AlgorithmKind algorithm = AlgorithmKind::QPi;
  double divergence_threshold_factor = 100.0;
  std::uint64_t base_seed = 0;
  int threads = 1;

  Mdp mdp;        // tabular sweeps
  Policy target;  // evaluation target; ignored by control and on-policy kinds
  StepSizeSchedule alpha;
  int max_steps = 200;

  BicycleParams bicycle_params;      // bicycle sweeps
  BicycleTrainConfig bicycle_train;  // lambda, epsilon, episodes, seed set per cell
  int bicycle_eval_episodes = 20;

  bool epsilon_is_mixture() const {
    return environment == SweepEnvironment::Tabular && !is_control_kind(algorithm) &&
           !is_on_policy_kind(algorithm);
  }

  void validate() const {
    if (lambda_grid.empty() || epsilon_grid.empty())
      throw std::invalid_argument("SweepConfig: grids must be non-empty");
    if (!std::is_sorted(lambda_grid.begin(), lambda_grid.end()) ||
        !std::is_sorted(epsilon_grid.begin(), epsilon_grid.end()))
      throw std::invalid_argument("SweepConfig: grids must be sorted ascending");
    for (double l : lambda_grid)
      if (!(l >= 0.0) || l > 1.0)
        throw std::invalid_argument("SweepConfig: lambda values must lie in [0,1]");
    const double eps_cap = epsilon_is_mixture() ? 2.0 : 1.0;
    for (double e : epsilon_grid)
      if (!(e >= 0.0) || e > eps_cap)
        throw std::invalid_argument(
            epsilon_is_mixture()
                ? "SweepConfig: mixture epsilon cannot exceed 2 (the L1 diameter)"
                : "SweepConfig: exploration epsilon must lie in [0,1]");
    if (trials_per_cell < 1)
      throw std::invalid_argument("SweepConfig: trials_per_cell must be at least 1");
    if (episodes_per_trial < 1)
      throw std::invalid_argument("SweepConfig: episodes_per_trial must be at least 1");
    if (threads < 1) throw std::invalid_argument("SweepConfig: threads must be at least 1");
    if (!(divergence_threshold_factor > 0.0))
      throw std::invalid_argument("SweepConfig: divergence_threshold_factor must be positive");
    if (environment == SweepEnvironment::Tabular) {
      mdp.validate();
      alpha.validate();
      if (epsilon_is_mixture()) {
        check_dims(mdp, target);
        target.validate();
      }
      if (max_steps < 1) throw std::invalid_argument("SweepConfig: max_steps must be at least 1");
    } else {
      if (bicycle_eval_episodes < 1)
        throw std::invalid_argument("SweepConfig: bicycle_eval_episodes must be at least 1");
    }
  }

  double gamma() const {
    return environment == SweepEnvironment::Tabular ? mdp.gamma : bicycle_train.gamma;
  }
};

/// One trained cell. final_metric is the sup distance to the exact reference
/// Q on tabular sweeps and the greedy goal rate on bicycle sweeps; diverged
/// cells record an infinite metric. wall_time_s is the only field outside the
/// determinism contract.
struct SweepRecord {
  double lambda = 0.0;
  double epsilon = 0.0;
  int trial = 0;
  std::uint64_t seed = 0;
  bool diverged = false;
  double final_metric = 0.0;
  std::int64_t episodes_run = 0;
  double wall_time_s = 0.0;
};

/// Per-epsilon maximum lambda whose trials all stayed finite, null when every
/// lambda diverged, plus the theoretical evaluation threshold on the same
/// epsilon grid for overlay.
struct Frontier {
  std::vector<double> epsilons;
  std::vector<std::optional<double>> max_safe_lambda;
  std::vector<double> theory_lambda_max;
};

/// Cell seeds hash the lambda and epsilon values themselves (not their grid
/// positions), so refining a grid never reshuffles the seeds of existing
/// cells and any (lambda, epsilon, trial) cell is reproducible in isolation.
inline std::uint64_t sweep_cell_seed(std::uint64_t base_seed, double lambda, double epsilon,
                                     int trial) {
  return mix_seed(
      {base_seed, double_bits(lambda), double_bits(epsilon), static_cast<std::uint64_t>(trial)});
}

inline QFunction sweep_reference_q(const SweepConfig& cfg) {
  if (cfg.epsilon_is_mixture()) return exact_q_pi(cfg.mdp, cfg.target);
  return exact_q_star(cfg.mdp);
}

inline SweepRecord run_sweep_cell(const SweepConfig& cfg, double lambda, double epsilon,
                                  int trial, const QFunction* reference) {
  SweepRecord rec;
  rec.lambda = lambda;
  rec.epsilon = epsilon;
  rec.trial = trial;
  rec.seed = sweep_cell_seed(cfg.base_seed, lambda, epsilon, trial);
  const auto t0 = std::chrono::steady_clock::now();
  if (cfg.environment == SweepEnvironment::Tabular) {
    PolicySpec pi_spec;
    PolicySpec mu_spec;
    if (is_control_kind(cfg.algorithm)) {
      pi_spec = PolicySpec::make_greedy();
      mu_spec = PolicySpec::make_eps_greedy(epsilon);
    } else if (is_on_policy_kind(cfg.algorithm)) {
      pi_spec = PolicySpec::make_eps_greedy(epsilon);
      mu_spec = pi_spec;
    } else {
      pi_spec = PolicySpec::make_fixed(cfg.target);
      mu_spec = PolicySpec::make_fixed(mixture_with_uniform(cfg.target, epsilon / 2.0));
    }
    LearnerConfig lc;
    lc.lambda = lambda;
    lc.alpha = cfg.alpha;
    lc.episodes = cfg.episodes_per_trial;
    lc.max_steps = cfg.max_steps;
    lc.mode = UpdateMode::WithinEpisodeOnline;
    lc.per_step_greedy = true;
    lc.seed = rec.seed;
    lc.divergence_factor = cfg.divergence_threshold_factor;
    LearnRun run = train(cfg.mdp, cfg.algorithm, pi_spec, mu_spec, lc);
    rec.diverged = run.diverged;
    rec.episodes_run = run.episodes_run;
    rec.final_metric = run.diverged ? std::numeric_limits<double>::infinity()
                                    : sup_diff(run.final_q, *reference);
  } else {
    BicycleTrainConfig bc = cfg.bicycle_train;
    bc.lambda = lambda;
    bc.epsilon = epsilon;
    bc.episodes = cfg.episodes_per_trial;
    bc.seed = rec.seed;
    BicycleTrainResult r = train_bicycle(cfg.bicycle_params, bc);
    rec.diverged = r.diverged;
    rec.episodes_run = r.episodes_run;
    if (r.diverged) {
      rec.final_metric = std::numeric_limits<double>::infinity();
    } else {
      std::mt19937_64 g(splitmix64(mix_seed({rec.seed, 1})));
      rec.final_metric = goal_rate(r.q, cfg.bicycle_params, cfg.bicycle_eval_episodes,
                                   cfg.bicycle_train.max_steps, g);
    }
  }
  rec.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

/// Trains every (lambda, epsilon, trial) cell and returns the records in
/// canonical order (lambda-major, then epsilon, then trial). Each worker
/// writes into its cell's preallocated slot, so apart from wall_time_s the
/// result is a pure function of the config no matter how many threads run or
/// how the scheduler interleaves them.
inline std::vector<SweepRecord> run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  std::optional<QFunction> reference;
  if (cfg.environment == SweepEnvironment::Tabular) reference = sweep_reference_q(cfg);
  const std::size_t nl = cfg.lambda_grid.size();
  const std::size_t ne = cfg.epsilon_grid.size();
  const std::size_t nt = static_cast<std::size_t>(cfg.trials_per_cell);
  const std::size_t n_cells = nl * ne * nt;
  std::vector<SweepRecord> records(n_cells);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next.fetch_add(1); i < n_cells; i = next.fetch_add(1)) {
      const std::size_t li = i / (ne * nt);
      const std::size_t ei = (i / nt) % ne;
      records[i] = run_sweep_cell(cfg, cfg.lambda_grid[li], cfg.epsilon_grid[ei],
                                  static_cast<int>(i % nt), reference ? &*reference : nullptr);
    }
  };
  const std::size_t n_threads = std::min(static_cast<std::size_t>(cfg.threads), n_cells);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return records;
}

/// Reduces records to the per-epsilon maximum lambda with zero diverged
/// trials. Passing the epsilon grid explicitly keeps epsilons with no records
/// in the output as null entries; by default the epsilons found in the
/// records are used.
inline Frontier extract_frontier(const std::vector<SweepRecord>& records, double gamma,
                                 std::vector<double> epsilons = {}) {
  if (epsilons.empty()) {
    epsilons.reserve(records.size());
    for (const SweepRecord& r : records) epsilons.push_back(r.epsilon);
    std::sort(epsilons.begin(), epsilons.end());
    epsilons.erase(std::unique(epsilons.begin(), epsilons.end()), epsilons.end());
  }
  Frontier f;
  f.epsilons = std::move(epsilons);
  for (double eps : f.epsilons) {
    std::vector<double> lambdas;
    std::vector<bool> any_diverged;
    for (const SweepRecord& r : records) {
      if (r.epsilon != eps) continue;
      auto it = std::find(lambdas.begin(), lambdas.end(), r.lambda);
      std::size_t idx = static_cast<std::size_t>(it - lambdas.begin());
      if (it == lambdas.end()) {
        lambdas.push_back(r.lambda);
        any_diverged.push_back(false);
      }
      if (r.diverged) any_diverged[idx] = true;
    }
    std::optional<double> best;
    for (std::size_t i = 0; i < lambdas.size(); ++i)
      if (!any_diverged[i] && (!best || lambdas[i] > *best)) best = lambdas[i];
    f.max_safe_lambda.push_back(best);
    f.theory_lambda_max.push_back(lambda_max_eval(gamma, eps));
  }
  return f;
}

/// Indices where the safe frontier increases with epsilon (a null entry
/// counts as no safe lambda at all). Expected empty on evaluation sweeps;
/// callers report violations rather than silently accepting them.
inline std::vector<std::size_t> frontier_violations(const Frontier& f) {
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i < f.max_safe_lambda.size(); ++i) {
    const std::optional<double>& prev = f.max_safe_lambda[i - 1];
    const std::optional<double>& cur = f.max_safe_lambda[i];
    if (cur && (!prev || *cur > *prev)) out.push_back(i);
  }
  return out;
}

struct TradeoffResult {
  std::vector<SweepRecord> records;
  Frontier frontier;
};

/// The evaluation tradeoff experiment: sweeps the expected-target variant
/// with behavior (1 - eps/2) pi + (eps/2) uniform against the exact Q of pi,
/// then reduces to the safe frontier with the theoretical threshold overlay.
inline TradeoffResult tabular_tradeoff_experiment(const Mdp& m, const Policy& pi,
                                                  std::vector<double> lambda_grid,
                                                  std::vector<double> epsilon_grid,
                                                  SweepConfig cfg) {
  cfg.environment = SweepEnvironment::Tabular;
  cfg.algorithm = AlgorithmKind::QPi;
  cfg.mdp = m;
  cfg.target = pi;
  cfg.lambda_grid = std::move(lambda_grid);
  cfg.epsilon_grid = std::move(epsilon_grid);
  TradeoffResult out;
  out.records = run_sweep(cfg);
  out.frontier = extract_frontier(out.records, m.gamma, cfg.epsilon_grid);
  return out;
}

inline constexpr const char* kSweepCsvHeader =
    "algorithm,environment,gamma,lambda,epsilon,trial,seed,episodes_run,diverged,"
    "final_metric,wall_time_s";

inline void write_sweep_csv(std::ostream& out, const SweepConfig& cfg,
                            const std::vector<SweepRecord>& records) {
  out << kSweepCsvHeader << '\n';
  for (const SweepRecord& r : records) {
    CsvWriter w(out);
    w.field(std::string(kind_name(cfg.algorithm)))
        .field(std::string(environment_name(cfg.environment)))
        .field(cfg.gamma())
        .field(r.lambda)
        .field(r.epsilon)
        .field(r.trial)
        .field(r.seed)
        .field(static_cast<std::uint64_t>(r.episodes_run))
        .field(r.diverged)
        .field(r.final_metric)
        .field(r.wall_time_s);
    w.end_row();
  }
}

inline constexpr const char* kFrontierCsvHeader = "epsilon,max_safe_lambda,theory_lambda_max";

/// Null frontier entries become empty fields.
inline void write_frontier_csv(std::ostream& out, const Frontier& f) {
  out << kFrontierCsvHeader << '\n';
  for (std::size_t i = 0; i < f.epsilons.size(); ++i) {
    CsvWriter w(out);
    w.field(f.epsilons[i]);
    if (f.max_safe_lambda[i])
      w.field(*f.max_safe_lambda[i]);
    else
      w.field(std::string());
    w.field(f.theory_lambda_max[i]);
    w.end_row();
  }
}

}  // namespace qlambda
