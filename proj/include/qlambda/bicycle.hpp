#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "qlambda/csv.hpp"
#include "qlambda/grid_q.hpp"
#include "qlambda/rng.hpp"
#include "qlambda/traces.hpp"

namespace qlambda {

inline constexpr double kPi = 3.14159265358979323846;

/// Physical and task constants of the Randlov-Alstrom bicycle, one documented
/// table. Every value is an override point; the defaults follow the reference
/// formulation (masses in kg, lengths in m, angles in rad, time in s).
struct BicycleParams {
  double dt = 0.01;                 // Euler integration step
  double v = 10.0 / 3.6;            // forward speed, 10 km/h
  double gravity = 9.82;
  double d_cm = 0.3;                // vertical rider-to-frame center-of-mass offset
  double c_horiz = 0.66;            // horizontal front-contact-to-CM distance
  double h_cm = 0.94;               // center-of-mass height
  double m_frame = 15.0;
  double m_tyre = 1.7;
  double m_rider = 60.0;
  double wheel_radius = 0.34;
  double wheelbase = 1.11;
  double noise_half_width = 0.02;   // uniform noise on rider displacement, m
  double fall_angle = kPi / 15.0;   // tilt beyond this ends the episode
  double max_handlebar = 1.3963;    // handlebar angle clamp, about 80 degrees
  double goal_radius = 10.0;
  double goal_distance = 1000.0;
  double psi_reward_coeff = 0.01;   // shaping weight on heading improvement
  double start_jitter = 0.002;      // uniform half-width on the start angles
  bool random_heading = true;

  double total_mass() const { return m_frame + m_rider; }
  double sigma_dot() const { return v / wheel_radius; }
  double inertia_frame() const {
    return (13.0 / 3.0) * m_frame * h_cm * h_cm + m_rider * (h_cm + d_cm) * (h_cm + d_cm);
  }
  double inertia_tyre_c() const { return m_tyre * wheel_radius * wheel_radius; }
  double inertia_tyre_v() const { return 1.5 * m_tyre * wheel_radius * wheel_radius; }
  double inertia_tyre_l() const { return 0.5 * m_tyre * wheel_radius * wheel_radius; }
};

struct BicycleState {
  double omega = 0.0;      // tilt angle
  double omega_dot = 0.0;  // tilt angular velocity
  double theta = 0.0;      // handlebar angle
  double theta_dot = 0.0;  // handlebar angular velocity
  double psi = 0.0;        // heading angle to the goal
  double dist_goal = 0.0;  // distance to the goal
};

/// Handlebar torque in {-2, 0, +2} N*m crossed with rider lean displacement
/// in {-0.02, 0, +0.02} m; nine actions, torque-major indexing.
struct BicycleAction {
  double torque = 0.0;
  double displacement = 0.0;
};

inline constexpr int kBicycleActions = 9;

inline BicycleAction bicycle_action(int index) {
  if (index < 0 || index >= kBicycleActions)
    throw std::invalid_argument("bicycle_action: index out of range");
  BicycleAction a;
  a.torque = static_cast<double>(index / 3 - 1) * 2.0;
  a.displacement = static_cast<double>(index % 3 - 1) * 0.02;
  return a;
}

inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

inline bool bicycle_terminal(const BicycleState& s, const BicycleParams& p) {
  return std::abs(s.omega) > p.fall_angle || s.dist_goal <= p.goal_radius;
}

struct BicycleStepResult {
  BicycleState state;
  double reward = 0.0;
  bool terminal = false;
};

/// One Euler step of the Randlov-Alstrom dynamics. Accelerations and the
/// wheel-contact kinematics all read the pre-step state; the rider
/// displacement receives one uniform noise draw per step. The goal-relative
/// pose (psi, dist_goal) is re-derived each step from a canonical frame with
/// the front contact at the origin and the heading along +x, so positions
/// never accumulate drift.
inline BicycleStepResult bicycle_step(const BicycleState& s, const BicycleAction& action,
                                      const BicycleParams& p, std::mt19937_64& g) {
  if (bicycle_terminal(s, p))
    throw std::invalid_argument("bicycle_step: episode already ended");

  const double noise = uniform(g, -p.noise_half_width, p.noise_half_width);
  const double d_total = action.displacement + noise;
  const double phi = s.omega + std::atan(d_total / p.h_cm);

  const double l = p.wheelbase;
  double inv_rf = 0.0, inv_rb = 0.0, inv_rcm = 0.0;
  if (s.theta != 0.0) {
    inv_rf = std::abs(std::sin(s.theta)) / l;
    inv_rb = std::abs(std::tan(s.theta)) / l;
    const double lt = l / std::tan(s.theta);
    inv_rcm = 1.0 / std::sqrt((l - p.c_horiz) * (l - p.c_horiz) + lt * lt);
  }
  const double theta_sign = s.theta > 0.0 ? 1.0 : s.theta < 0.0 ? -1.0 : 0.0;

  const double sd = p.sigma_dot();
  const double omega_ddot =
      (p.total_mass() * p.h_cm * p.gravity * std::sin(phi) -
       std::cos(phi) * (p.inertia_tyre_c() * sd * s.theta_dot +
                        theta_sign * p.v * p.v *
                            (p.m_tyre * p.wheel_radius * (inv_rf + inv_rb) +
                             p.total_mass() * p.h_cm * inv_rcm))) /
      p.inertia_frame();
  const double theta_ddot = (action.torque - p.inertia_tyre_v() * sd * s.omega_dot) /
                            p.inertia_tyre_l();

  BicycleState n = s;
  n.omega += p.dt * s.omega_dot;
  n.omega_dot += p.dt * omega_ddot;
  n.theta += p.dt * s.theta_dot;
  n.theta_dot += p.dt * theta_ddot;
  if (n.theta > p.max_handlebar) n.theta = p.max_handlebar;
  if (n.theta < -p.max_handlebar) n.theta = -p.max_handlebar;

  // Canonical frame: back contact at (-l, 0), front at (0, 0), heading +x,
  // goal at dist_goal * (cos psi, sin psi). Each contact advances v*dt along
  // the chord of its turning circle (half the subtended arc off the tangent).
  const double arc = p.v * p.dt;
  const double beta_f = theta_sign * std::asin(std::min(1.0, arc * inv_rf / 2.0));
  const double beta_b = theta_sign * std::asin(std::min(1.0, arc * inv_rb / 2.0));
  const double fx = arc * std::cos(s.theta + beta_f);
  const double fy = arc * std::sin(s.theta + beta_f);
  const double bx = -l + arc * std::cos(beta_b);
  const double by = arc * std::sin(beta_b);
  const double heading = std::atan2(fy - by, fx - bx);
  const double gx = s.dist_goal * std::cos(s.psi);
  const double gy = s.dist_goal * std::sin(s.psi);
  n.dist_goal = std::sqrt((gx - fx) * (gx - fx) + (gy - fy) * (gy - fy));
  n.psi = wrap_angle(std::atan2(gy - fy, gx - fx) - heading);

  BicycleStepResult out;
  out.state = n;
  if (std::abs(n.omega) > p.fall_angle) {
    out.reward = -1.0;
    out.terminal = true;
  } else if (n.dist_goal <= p.goal_radius) {
    out.reward = 1.0;
    out.terminal = true;
  } else {
    out.reward = p.psi_reward_coeff * (std::abs(s.psi) - std::abs(n.psi));
    out.terminal = false;
  }
  return out;
}

/// Upright start with small uniform jitter on the four angle variables, the
/// goal at the configured distance, and (by default) a uniformly random
/// initial bearing. Draw order: omega, omega_dot, theta, theta_dot, then the
/// bearing; disabled components draw nothing.
inline BicycleState bicycle_reset(const BicycleParams& p, std::mt19937_64& g) {
  BicycleState s;
  if (p.start_jitter > 0.0) {
    s.omega = uniform(g, -p.start_jitter, p.start_jitter);
    s.omega_dot = uniform(g, -p.start_jitter, p.start_jitter);
    s.theta = uniform(g, -p.start_jitter, p.start_jitter);
    s.theta_dot = uniform(g, -p.start_jitter, p.start_jitter);
  }
  s.psi = p.random_heading ? uniform(g, -kPi, kPi) : 0.0;
  s.dist_goal = p.goal_distance;
  return s;
}

inline std::vector<double> bicycle_features(const BicycleState& s) {
  return {s.omega, s.omega_dot, s.theta, s.theta_dot, s.psi, s.dist_goal};
}

/// Interpolation grid over the six state variables. Tilt spans the live
/// range, the remaining bounds are working ranges wide enough that clipping
/// is rare before termination.
inline UniformGridQ make_bicycle_grid(const BicycleParams& p, int resolution = 10) {
  return make_grid(
      {-p.fall_angle, -2.0, -p.max_handlebar, -4.0, -kPi, 0.0},
      {p.fall_angle, 2.0, p.max_handlebar, 4.0, kPi, p.goal_distance + 20.0},
      std::vector<int>(6, resolution), kBicycleActions);
}

inline int greedy_bicycle_action(const UniformGridQ& grid, const InterpWeights& w) {
  int best = 0;
  double best_value = q_value(grid, w, 0);
  for (int a = 1; a < grid.n_actions; ++a) {
    double qa = q_value(grid, w, a);
    if (qa > best_value) {
      best_value = qa;
      best = a;
    }
  }
  return best;
}

struct BicycleLogRow {
  std::int64_t t = 0;
  BicycleState state;
  int action = 0;
  double reward = 0.0;
};

inline constexpr const char* kBicycleLogCsvHeader =
    "t,omega,omega_dot,theta,theta_dot,psi,dist,action,reward";

inline void write_bicycle_log_csv(std::ostream& out, const std::vector<BicycleLogRow>& rows) {
  out << kBicycleLogCsvHeader << '\n';
  for (const BicycleLogRow& r : rows) {
    CsvWriter w(out);
    w.field(static_cast<std::uint64_t>(r.t))
        .field(r.state.omega)
        .field(r.state.omega_dot)
        .field(r.state.theta)
        .field(r.state.theta_dot)
        .field(r.state.psi)
        .field(r.state.dist_goal)
        .field(r.action)
        .field(r.reward);
    w.end_row();
  }
}

/// Runs one greedy episode (no exploration; physics noise stays on) and
/// reports whether it reached the goal. Appends per-step rows when log is
/// given.
inline bool greedy_bicycle_episode(const UniformGridQ& grid, const BicycleParams& p,
                                   std::mt19937_64& g, int max_steps,
                                   std::vector<BicycleLogRow>* log = nullptr) {
  BicycleState s = bicycle_reset(p, g);
  for (int t = 0; t < max_steps; ++t) {
    InterpWeights w = stencil(grid, bicycle_features(s));
    int a = greedy_bicycle_action(grid, w);
    BicycleStepResult r = bicycle_step(s, bicycle_action(a), p, g);
    if (log) log->push_back({t, s, a, r.reward});
    if (r.terminal) return r.reward > 0.0;
    s = r.state;
  }
  return false;
}

/// Fraction of greedy episodes that reach the goal within the step cap.
inline double goal_rate(const UniformGridQ& grid, const BicycleParams& p, int n_episodes,
                        int max_steps, std::mt19937_64& g) {
  if (n_episodes <= 0) throw std::invalid_argument("goal_rate: needs at least one episode");
  int goals = 0;
  for (int k = 0; k < n_episodes; ++k)
    if (greedy_bicycle_episode(grid, p, g, max_steps)) ++goals;
  return static_cast<double>(goals) / static_cast<double>(n_episodes);
}

struct BicycleTrainConfig {
  double lambda = 0.3;
  double epsilon = 0.03;  // per-step exploration probability
  double alpha = 0.1;
  double gamma = 0.99;
  std::int64_t episodes = 30000;
  int max_steps = 5000;
  int resolution = 10;
  std::uint64_t seed = 0;
  double divergence_threshold = 10000.0;
};

struct BicycleTrainResult {
  UniformGridQ q;
  bool diverged = false;
  std::int64_t episodes_run = 0;
  std::int64_t goal_episodes = 0;
};

/// Greedy-target grid learner on the bicycle: epsilon-greedy behavior,
/// per-step greedy bootstrap from the interpolated row maximum, accumulating
/// stencil-weighted traces, constant step size, within-episode online
/// updates. Divergence (non-finite or huge values) stops training and is
/// reported as data. With progress_every > 0 the progress callback sees the
/// current grid after every progress_every-th episode and after the last;
/// it must not touch the training generator or determinism is lost.
inline BicycleTrainResult train_bicycle(
    const BicycleParams& p, const BicycleTrainConfig& cfg,
    const std::function<void(std::int64_t, const UniformGridQ&)>& progress = {},
    std::int64_t progress_every = 0) {
  if (!(cfg.lambda >= 0.0) || cfg.lambda > 1.0)
    throw std::invalid_argument("train_bicycle: lambda must lie in [0,1]");
  if (!(cfg.epsilon >= 0.0) || cfg.epsilon > 1.0)
    throw std::invalid_argument("train_bicycle: epsilon must lie in [0,1]");
  if (!(cfg.alpha > 0.0)) throw std::invalid_argument("train_bicycle: alpha must be positive");
  if (!(cfg.gamma >= 0.0) || cfg.gamma >= 1.0)
    throw std::invalid_argument("train_bicycle: gamma must lie in [0,1)");

  BicycleTrainResult out;
  out.q = make_bicycle_grid(p, cfg.resolution);
  TraceVector e;
  std::mt19937_64 g(splitmix64(cfg.seed));
  bool bad_delta = false;
  for (std::int64_t k = 0; k < cfg.episodes; ++k) {
    BicycleState s = bicycle_reset(p, g);
    e.reset();
    for (int t = 0; t < cfg.max_steps; ++t) {
      InterpWeights w = stencil(out.q, bicycle_features(s));
      int a;
      if (uniform01(g) < cfg.epsilon)
        a = static_cast<int>(uniform_index(g, kBicycleActions));
      else
        a = greedy_bicycle_action(out.q, w);
      trace_step(e, w, a, cfg.lambda, cfg.gamma, kBicycleActions);
      BicycleStepResult r = bicycle_step(s, bicycle_action(a), p, g);
      double delta;
      if (r.terminal) {
        delta = r.reward - q_value(out.q, w, a);
      } else {
        InterpWeights wn = stencil(out.q, bicycle_features(r.state));
        delta = r.reward + cfg.gamma * grid_max_q(out.q, wn) - q_value(out.q, w, a);
      }
      if (!std::isfinite(delta) || std::abs(delta) > cfg.divergence_threshold) {
        bad_delta = true;
        break;
      }
      apply_td_update(out.q, e, delta, cfg.alpha);
      if (r.terminal) {
        if (r.reward > 0.0) ++out.goal_episodes;
        break;
      }
      s = r.state;
    }
    out.episodes_run = k + 1;
    const bool scan = bad_delta || k % 10 == 0 || k + 1 == cfg.episodes;
    if (scan && (bad_delta || !out.q.node_values.allFinite() ||
                 out.q.node_values.cwiseAbs().maxCoeff() > cfg.divergence_threshold)) {
      out.diverged = true;
      break;
    }
    if (progress && progress_every > 0 &&
        ((k + 1) % progress_every == 0 || k + 1 == cfg.episodes))
      progress(k + 1, out.q);
  }
  return out;
}

}  // namespace qlambda
