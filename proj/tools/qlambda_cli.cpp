// Command-line driver: operator certification, single training runs on
// tabular MDPs, lambda-epsilon sweeps with frontier extraction, and bicycle
// training. Every file-producing invocation writes a manifest next to its
// outputs; repeated runs with the same flags reproduce the outputs byte for
// byte (wall-clock fields excepted).
//
// Exit codes: 0 success, including runs that diverge (divergence is recorded
// data); 2 usage, config, or input errors; 3 output I/O failures.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
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
#include "qlambda/serialization.hpp"
#include "qlambda/sweep.hpp"
#include "qlambda/version.hpp"

namespace {

using namespace qlambda;

struct OutputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> g_argv;

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw OutputError("cannot open output file " + path);
  return out;
}

void finish_output(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out.good()) throw OutputError("write failed for " + path);
}

void write_manifest(const std::string& path, const std::string& command,
                    const nlohmann::json& config, std::uint64_t seed,
                    const std::vector<std::string>& outputs, double wall_time_s) {
  nlohmann::json j;
  j["command"] = command;
  j["argv"] = g_argv;
  j["config"] = config;
  j["seed"] = seed;
  j["version"] = kVersion;
  j["outputs"] = outputs;
  j["wall_time_s"] = wall_time_s;
  std::ofstream out = open_output(path);
  out << j.dump(2) << '\n';
  finish_output(out, path);
}

/// chain | random:states,actions,branching,sparsity,seed | path to JSON.
Mdp parse_mdp_spec(const std::string& spec, std::optional<double> gamma) {
  Mdp m;
  if (spec == "chain") {
    m.n_states = 2;
    m.n_actions = 2;
    m.gamma = gamma.value_or(0.5);
    m.r_max = 1.0;
    m.transition.assign(2, Eigen::MatrixXd::Zero(2, 2));
    m.transition[0].col(0).setOnes();
    m.transition[1].col(1).setOnes();
    m.reward = Eigen::MatrixXd::Zero(2, 2);
    m.reward.col(1).setOnes();
    m.absorbing.assign(2, 0);
  } else if (spec.rfind("random:", 0) == 0) {
    int ns = 0;
    int na = 0;
    int branching = 0;
    double sparsity = 0.0;
    unsigned long long seed = 0;
    if (std::sscanf(spec.c_str(), "random:%d,%d,%d,%lf,%llu", &ns, &na, &branching, &sparsity,
                    &seed) != 5)
      throw std::invalid_argument(
          "bad MDP spec '" + spec +
          "'; expected random:states,actions,branching,sparsity,seed");
    m = random_mdp(ns, na, branching, sparsity, seed);
    if (gamma) m.gamma = *gamma;
  } else {
    m = load_mdp(spec);
    if (gamma) m.gamma = *gamma;
  }
  m.validate();
  return m;
}

Policy parse_target_policy(const std::string& spec, const Mdp& m) {
  if (spec == "uniform") {
    Policy pi;
    pi.probs =
        Eigen::MatrixXd::Constant(m.n_states, m.n_actions, 1.0 / m.n_actions);
    return pi;
  }
  if (spec == "greedy") return greedy_policy(exact_q_star(m));
  throw std::invalid_argument("unknown target policy '" + spec +
                              "'; expected greedy or uniform");
}

struct MdpOptions {
  std::string spec = "chain";
  double gamma = 0.0;
  CLI::Option* gamma_opt = nullptr;

  void attach(CLI::App* cmd) {
    cmd->add_option("--mdp", spec,
                    "chain, random:states,actions,branching,sparsity,seed, or a JSON file");
    gamma_opt =
        cmd->add_option("--gamma", gamma, "discount override")->check(CLI::Range(0.0, 0.999999));
  }
  Mdp build() const {
    const bool given = gamma_opt != nullptr && gamma_opt->count() > 0;
    return parse_mdp_spec(spec, given ? std::optional<double>(gamma) : std::nullopt);
  }
};

struct StepSizeOptions {
  double a0 = 0.5;
  double kappa = 1000.0;
  bool constant = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--alpha", a0, "initial step size")->check(CLI::PositiveNumber);
    cmd->add_option("--alpha-kappa", kappa, "decay scale: alpha_k = alpha / (1 + k / kappa)")
        ->check(CLI::PositiveNumber);
    cmd->add_flag("--alpha-constant", constant, "keep the step size constant");
  }
  StepSizeSchedule schedule() const {
    StepSizeSchedule s;
    s.a0 = a0;
    s.kappa = kappa;
    s.constant = constant;
    return s;
  }
};

// ---------------------------------------------------------------------------
// operator-check

struct OperatorCheckOptions {
  MdpOptions mdp;
  double lambda = 0.5;
  double epsilon = 0.0;
  int trials = 200;
  std::uint64_t seed = 0;
  std::string target = "greedy";
  std::string out;
};

void run_operator_check(const OperatorCheckOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  Mdp m = opt.mdp.build();
  Policy pi = parse_target_policy(opt.target, m);
  Policy mu = mixture_with_uniform(pi, opt.epsilon / 2.0);

  OperatorReport eval =
      certify_contraction(m, pi, mu, opt.lambda, opt.trials, opt.seed, opt.epsilon);
  OperatorReport control = certify_contraction(m, std::nullopt, mu, opt.lambda,
                                               opt.trials, opt.seed);

  const QFunction q_pi = exact_q_pi(m, pi);
  const QFunction q_star = exact_q_star(m);
  const double residual_eval = sup_diff(r_lambda(m, pi, mu, q_pi, opt.lambda), q_pi);
  const double residual_control =
      sup_diff(r_lambda_star(m, mu, q_star, opt.lambda), q_star);
  const double general_q_gap =
      sup_diff(general_q_fixed_point(m, pi, mu, opt.lambda), q_pi);

  std::ostringstream body;
  body << "# rows=evaluation,control policy_distance="
       << format_double(policy_distance(pi, mu))
       << " residual_eval=" << format_double(residual_eval)
       << " residual_control=" << format_double(residual_control)
       << " general_q_gap=" << format_double(general_q_gap) << '\n';
  body << kOperatorReportCsvHeader << '\n';
  write_operator_report_row(body, eval);
  write_operator_report_row(body, control);

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (opt.out.empty()) {
    std::cout << body.str();
    return;
  }
  std::ofstream file = open_output(opt.out);
  file << body.str();
  finish_output(file, opt.out);
  nlohmann::json config = {{"mdp", opt.mdp.spec},        {"gamma", m.gamma},
                           {"lambda", opt.lambda},       {"epsilon", opt.epsilon},
                           {"trials", opt.trials},       {"target", opt.target},
                           {"seed", opt.seed}};
  write_manifest(opt.out + ".manifest.json", "operator-check", config, opt.seed,
                 {opt.out}, wall);
}

// ---------------------------------------------------------------------------
// evaluate / control

struct TrainOptions {
  MdpOptions mdp;
  StepSizeOptions alpha;
  std::string algo;
  std::string target = "greedy";
  CLI::Option* target_opt = nullptr;
  double lambda = 0.0;
  double epsilon = 0.0;
  std::int64_t episodes = 2000;
  int max_steps = 200;
  std::uint64_t seed = 0;
  bool frozen = false;
  bool episode_greedy = false;
  std::string out;
};

void attach_train_options(CLI::App* cmd, TrainOptions& opt, bool control) {
  opt.algo = control ? "qstar" : "qpi";
  opt.lambda = control ? 0.3 : 0.5;
  opt.epsilon = control ? 0.1 : 0.0;
  opt.mdp.attach(cmd);
  opt.alpha.attach(cmd);
  cmd->add_option("--algo", opt.algo, "update rule");
  cmd->add_option("--lambda", opt.lambda, "trace parameter")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--epsilon", opt.epsilon,
                  control ? "exploration probability of the behavior"
                          : "uniform-mixture weight budget of the behavior (L1 distance bound)");
  cmd->add_option("--episodes", opt.episodes, "training episodes")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--max-steps", opt.max_steps, "step cap per episode")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", opt.seed, "RNG seed");
  cmd->add_flag("--frozen", opt.frozen,
                "compute within-episode errors against the episode-start Q");
  if (!control) {
    opt.target_opt = cmd->add_option("--target", opt.target, "target policy: greedy or uniform");
  } else {
    cmd->add_flag("--episode-greedy", opt.episode_greedy,
                  "bootstrap the greedy-target variant from the episode-start greedy policy");
  }
  cmd->add_option("--out", opt.out, "output CSV path (default: standard output)");
}

void run_train(const TrainOptions& opt, bool control) {
  const auto t0 = std::chrono::steady_clock::now();
  const AlgorithmKind kind = kind_from_string(opt.algo);
  if (control && !is_control_kind(kind))
    throw std::invalid_argument("control: '" + opt.algo +
                                "' evaluates a target policy; use the evaluate command");
  if (!control && is_control_kind(kind))
    throw std::invalid_argument("evaluate: '" + opt.algo +
                                "' is a control variant; use the control command");
  if (is_on_policy_kind(kind) && opt.target_opt != nullptr && opt.target_opt->count() > 0)
    throw std::invalid_argument("evaluate: '" + opt.algo +
                                "' is on-policy; it cannot take a distinct target policy");

  Mdp m = opt.mdp.build();
  PolicySpec pi_spec;
  PolicySpec mu_spec;
  QFunction reference;
  if (control) {
    pi_spec = PolicySpec::make_greedy();
    mu_spec = PolicySpec::make_eps_greedy(opt.epsilon);
    reference = exact_q_star(m);
  } else if (is_on_policy_kind(kind)) {
    pi_spec = PolicySpec::make_eps_greedy(opt.epsilon);
    mu_spec = pi_spec;
    reference = exact_q_star(m);
  } else {
    Policy pi = parse_target_policy(opt.target, m);
    pi_spec = PolicySpec::make_fixed(pi);
    mu_spec = PolicySpec::make_fixed(mixture_with_uniform(pi, opt.epsilon / 2.0));
    reference = exact_q_pi(m, pi);
  }

  LearnerConfig cfg;
  cfg.lambda = opt.lambda;
  cfg.alpha = opt.alpha.schedule();
  cfg.episodes = opt.episodes;
  cfg.max_steps = opt.max_steps;
  cfg.mode = opt.frozen ? UpdateMode::FrozenWithinEpisode : UpdateMode::WithinEpisodeOnline;
  cfg.per_step_greedy = !opt.episode_greedy;
  cfg.seed = opt.seed;
  cfg.reference_q = reference;
  LearnRun run = train(m, kind, pi_spec, mu_spec, cfg);

  std::ostringstream body;
  write_learn_run_csv(body, run, kind, opt.lambda, m.gamma, opt.epsilon, opt.seed,
                      cfg.alpha);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (run.diverged)
    std::cerr << "note: run diverged after " << run.episodes_run << " episodes\n";
  if (opt.out.empty()) {
    std::cout << body.str();
    return;
  }
  std::ofstream file = open_output(opt.out);
  file << body.str();
  finish_output(file, opt.out);
  nlohmann::json config = {{"algo", opt.algo},
                           {"mdp", opt.mdp.spec},
                           {"gamma", m.gamma},
                           {"lambda", opt.lambda},
                           {"epsilon", opt.epsilon},
                           {"episodes", opt.episodes},
                           {"max_steps", opt.max_steps},
                           {"alpha", {{"a0", opt.alpha.a0},
                                      {"kappa", opt.alpha.kappa},
                                      {"constant", opt.alpha.constant}}},
                           {"mode", opt.frozen ? "frozen" : "online"},
                           {"seed", opt.seed}};
  if (!control) config["target"] = opt.target;
  write_manifest(opt.out + ".manifest.json", control ? "control" : "evaluate", config,
                 opt.seed, {opt.out}, wall);
}

// ---------------------------------------------------------------------------
// sweep

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  std::string bad;
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) {
      if (!bad.empty()) bad += ", ";
      bad += it.key();
    }
  }
  if (!bad.empty())
    throw std::invalid_argument("sweep config: unknown key(s) in " + where + ": " + bad);
}

SweepConfig parse_sweep_config(const nlohmann::json& j) {
  if (!j.is_object())
    throw std::invalid_argument("sweep config: top level must be a JSON object");
  check_keys(j,
             {"environment", "algorithm", "lambda_grid", "epsilon_grid", "trials_per_cell",
              "episodes_per_trial", "base_seed", "threads", "divergence_threshold_factor",
              "mdp", "gamma", "target", "alpha", "max_steps", "bicycle"},
             "the top level");
  SweepConfig cfg;
  try {
    if (j.contains("environment"))
      cfg.environment = environment_from_string(j.at("environment").get<std::string>());
    if (j.contains("algorithm"))
      cfg.algorithm = kind_from_string(j.at("algorithm").get<std::string>());
    cfg.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
    cfg.epsilon_grid = j.at("epsilon_grid").get<std::vector<double>>();
    if (j.contains("trials_per_cell")) cfg.trials_per_cell = j.at("trials_per_cell").get<int>();
    if (j.contains("episodes_per_trial"))
      cfg.episodes_per_trial = j.at("episodes_per_trial").get<std::int64_t>();
    if (j.contains("base_seed")) cfg.base_seed = j.at("base_seed").get<std::uint64_t>();
    if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
    if (j.contains("divergence_threshold_factor"))
      cfg.divergence_threshold_factor = j.at("divergence_threshold_factor").get<double>();

    if (cfg.environment == SweepEnvironment::Tabular) {
      if (!j.contains("mdp"))
        throw std::invalid_argument("sweep config: tabular sweeps need the key: mdp");
      std::optional<double> gamma;
      if (j.contains("gamma")) gamma = j.at("gamma").get<double>();
      if (j.at("mdp").is_string())
        cfg.mdp = parse_mdp_spec(j.at("mdp").get<std::string>(), gamma);
      else {
        cfg.mdp = mdp_from_json(j.at("mdp"));
        if (gamma) cfg.mdp.gamma = *gamma;
        cfg.mdp.validate();
      }
      cfg.target = parse_target_policy(
          j.contains("target") ? j.at("target").get<std::string>() : "greedy", cfg.mdp);
      if (j.contains("alpha")) {
        const nlohmann::json& a = j.at("alpha");
        check_keys(a, {"a0", "kappa", "constant"}, "alpha");
        if (a.contains("a0")) cfg.alpha.a0 = a.at("a0").get<double>();
        if (a.contains("kappa")) cfg.alpha.kappa = a.at("kappa").get<double>();
        if (a.contains("constant")) cfg.alpha.constant = a.at("constant").get<bool>();
      }
      if (j.contains("max_steps")) cfg.max_steps = j.at("max_steps").get<int>();
    } else {
      if (j.contains("mdp") || j.contains("gamma") || j.contains("target") ||
          j.contains("alpha") || j.contains("max_steps"))
        throw std::invalid_argument(
            "sweep config: keys mdp, gamma, target, alpha, max_steps are tabular-only");
      if (j.contains("bicycle")) {
        const nlohmann::json& b = j.at("bicycle");
        check_keys(b,
                   {"resolution", "max_steps", "alpha", "gamma", "goal_distance",
                    "eval_episodes"},
                   "bicycle");
        if (b.contains("resolution"))
          cfg.bicycle_train.resolution = b.at("resolution").get<int>();
        if (b.contains("max_steps")) cfg.bicycle_train.max_steps = b.at("max_steps").get<int>();
        if (b.contains("alpha")) cfg.bicycle_train.alpha = b.at("alpha").get<double>();
        if (b.contains("gamma")) cfg.bicycle_train.gamma = b.at("gamma").get<double>();
        if (b.contains("goal_distance"))
          cfg.bicycle_params.goal_distance = b.at("goal_distance").get<double>();
        if (b.contains("eval_episodes"))
          cfg.bicycle_eval_episodes = b.at("eval_episodes").get<int>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("sweep config: ") + e.what());
  }
  return cfg;
}

struct SweepOptions {
  std::string config_path;
  std::string out_dir = ".";
  int threads = 0;
};

void run_sweep_command(const SweepOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  std::ifstream in(opt.config_path);
  if (!in) throw std::invalid_argument("cannot open sweep config " + opt.config_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("sweep config: parse error in " + opt.config_path + ": " +
                                e.what());
  }
  SweepConfig cfg = parse_sweep_config(j);
  if (opt.threads > 0) cfg.threads = opt.threads;
  cfg.validate();

  std::vector<SweepRecord> records = run_sweep(cfg);
  Frontier frontier = extract_frontier(records, cfg.gamma(), cfg.epsilon_grid);
  for (std::size_t i : frontier_violations(frontier))
    std::cerr << "warning: safe frontier increases at epsilon "
              << format_double(frontier.epsilons[i]) << '\n';

  const std::string records_path = opt.out_dir + "/sweep_records.csv";
  const std::string frontier_path = opt.out_dir + "/frontier.csv";
  std::ofstream rec_file = open_output(records_path);
  write_sweep_csv(rec_file, cfg, records);
  finish_output(rec_file, records_path);
  std::ofstream fr_file = open_output(frontier_path);
  write_frontier_csv(fr_file, frontier);
  finish_output(fr_file, frontier_path);

  int diverged_cells = 0;
  for (const SweepRecord& r : records) diverged_cells += r.diverged ? 1 : 0;
  std::cout << "cells=" << records.size() << " diverged=" << diverged_cells << '\n';

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(opt.out_dir + "/manifest.json", "sweep", j, cfg.base_seed,
                 {records_path, frontier_path}, wall);
}

// ---------------------------------------------------------------------------
// bicycle

struct BicycleOptions {
  double lambda = 0.3;
  double epsilon = 0.03;
  double alpha = 0.1;
  double gamma = 0.99;
  std::int64_t episodes = 30000;
  int max_steps = 5000;
  int grid_res = 10;
  std::uint64_t seed = 0;
  double goal_distance = 1000.0;
  int eval_episodes = 20;
  std::int64_t eval_every = 0;
  std::string out;
  std::string save_q;
};

void run_bicycle_command(const BicycleOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  BicycleParams params;
  params.goal_distance = opt.goal_distance;
  BicycleTrainConfig cfg;
  cfg.lambda = opt.lambda;
  cfg.epsilon = opt.epsilon;
  cfg.alpha = opt.alpha;
  cfg.gamma = opt.gamma;
  cfg.episodes = opt.episodes;
  cfg.max_steps = opt.max_steps;
  cfg.resolution = opt.grid_res;
  cfg.seed = opt.seed;
  if (opt.eval_episodes < 1)
    throw std::invalid_argument("bicycle: --eval-episodes must be at least 1");

  const std::int64_t eval_every =
      opt.eval_every > 0 ? opt.eval_every : std::max<std::int64_t>(1, opt.episodes / 5);
  auto measure = [&](std::int64_t episode, const UniformGridQ& grid) {
    std::mt19937_64 g(splitmix64(
        mix_seed({opt.seed, 2, static_cast<std::uint64_t>(episode)})));
    return goal_rate(grid, params, opt.eval_episodes, opt.max_steps, g);
  };

  std::ostringstream body;
  body << "# lambda=" << format_double(opt.lambda) << " epsilon=" << format_double(opt.epsilon)
       << " alpha=" << format_double(opt.alpha) << " gamma=" << format_double(opt.gamma)
       << " resolution=" << opt.grid_res << " seed=" << format_u64(opt.seed) << '\n';
  body << "episode,goal_rate\n";
  {
    CsvWriter w(body);
    w.field(std::uint64_t{0}).field(measure(0, make_bicycle_grid(params, opt.grid_res)));
    w.end_row();
  }
  BicycleTrainResult result = train_bicycle(
      params, cfg,
      [&](std::int64_t episode, const UniformGridQ& grid) {
        CsvWriter w(body);
        w.field(static_cast<std::uint64_t>(episode)).field(measure(episode, grid));
        w.end_row();
      },
      eval_every);
  if (result.diverged)
    std::cerr << "note: training diverged after " << result.episodes_run << " episodes\n";

  if (!opt.save_q.empty()) {
    try {
      save_grid(result.q, opt.save_q);
    } catch (const std::runtime_error& e) {
      throw OutputError(e.what());
    }
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (opt.out.empty()) {
    std::cout << body.str();
    return;
  }
  std::ofstream file = open_output(opt.out);
  file << body.str();
  finish_output(file, opt.out);
  nlohmann::json config = {{"lambda", opt.lambda},
                           {"epsilon", opt.epsilon},
                           {"alpha", opt.alpha},
                           {"gamma", opt.gamma},
                           {"episodes", opt.episodes},
                           {"max_steps", opt.max_steps},
                           {"grid_res", opt.grid_res},
                           {"goal_distance", opt.goal_distance},
                           {"eval_episodes", opt.eval_episodes},
                           {"eval_every", eval_every},
                           {"seed", opt.seed},
                           {"diverged", result.diverged},
                           {"episodes_run", result.episodes_run},
                           {"goal_episodes", result.goal_episodes}};
  std::vector<std::string> outputs = {opt.out};
  if (!opt.save_q.empty()) outputs.push_back(opt.save_q);
  write_manifest(opt.out + ".manifest.json", "bicycle", config, opt.seed, outputs, wall);
}

}  // namespace

int main(int argc, char** argv) {
  g_argv.assign(argv, argv + argc);
  CLI::App app{"Off-policy corrected return operators: certification, training, and sweeps"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  OperatorCheckOptions oc;
  CLI::App* check = app.add_subcommand(
      "operator-check", "certify contraction ratios and fixed-point residuals");
  oc.mdp.attach(check);
  check->add_option("--lambda", oc.lambda, "trace parameter")->check(CLI::Range(0.0, 1.0));
  check->add_option("--epsilon", oc.epsilon, "uniform-mixture weight budget of the behavior")
      ->check(CLI::Range(0.0, 2.0));
  check->add_option("--trials", oc.trials, "random Q-pairs for the ratio measurement")
      ->check(CLI::PositiveNumber);
  check->add_option("--seed", oc.seed, "RNG seed");
  check->add_option("--target", oc.target, "target policy: greedy or uniform");
  check->add_option("--out", oc.out, "output CSV path (default: standard output)");
  check->callback([&oc] { run_operator_check(oc); });

  TrainOptions ev;
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "train a policy-evaluation or on-policy variant");
  attach_train_options(evaluate, ev, false);
  evaluate->callback([&ev] { run_train(ev, false); });

  TrainOptions ctl;
  CLI::App* control = app.add_subcommand("control", "train a greedy-target control variant");
  attach_train_options(control, ctl, true);
  control->callback([&ctl] { run_train(ctl, true); });

  SweepOptions sw;
  CLI::App* sweep =
      app.add_subcommand("sweep", "run a lambda-epsilon grid and extract the safe frontier");
  sweep->add_option("--config", sw.config_path, "sweep config JSON")->required();
  sweep->add_option("--out-dir", sw.out_dir, "directory for records, frontier, manifest");
  sweep->add_option("--threads", sw.threads, "worker threads (overrides the config)")
      ->check(CLI::PositiveNumber);
  sweep->callback([&sw] { run_sweep_command(sw); });

  BicycleOptions bike;
  CLI::App* bicycle = app.add_subcommand(
      "bicycle", "train the bicycle grid learner with periodic goal-rate evaluation");
  bicycle->add_option("--lambda", bike.lambda, "trace parameter")->check(CLI::Range(0.0, 1.0));
  bicycle->add_option("--epsilon", bike.epsilon, "exploration probability")
      ->check(CLI::Range(0.0, 1.0));
  bicycle->add_option("--alpha", bike.alpha, "step size")->check(CLI::PositiveNumber);
  bicycle->add_option("--gamma", bike.gamma, "discount")->check(CLI::Range(0.0, 0.999999));
  bicycle->add_option("--episodes", bike.episodes, "training episodes")
      ->check(CLI::NonNegativeNumber);
  bicycle->add_option("--max-steps", bike.max_steps, "step cap per episode")
      ->check(CLI::PositiveNumber);
  bicycle->add_option("--grid-res", bike.grid_res, "grid nodes per state dimension")
      ->check(CLI::Range(2, 64));
  bicycle->add_option("--seed", bike.seed, "RNG seed");
  bicycle->add_option("--goal-distance", bike.goal_distance, "start-to-goal distance, m")
      ->check(CLI::PositiveNumber);
  bicycle->add_option("--eval-episodes", bike.eval_episodes,
                      "greedy episodes per goal-rate evaluation");
  bicycle->add_option("--eval-every", bike.eval_every,
                      "episodes between evaluations (default: episodes / 5)");
  bicycle->add_option("--out", bike.out, "output CSV path (default: standard output)");
  bicycle->add_option("--save-q", bike.save_q, "write the trained grid as JSON");
  bicycle->callback([&bike] { run_bicycle_command(bike); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const OutputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
