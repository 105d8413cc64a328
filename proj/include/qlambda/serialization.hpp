#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "qlambda/grid_q.hpp"
#include "qlambda/mdp.hpp"

namespace qlambda {

inline nlohmann::json mdp_to_json(const Mdp& m) {
  nlohmann::json j;
  j["n_states"] = m.n_states;
  j["n_actions"] = m.n_actions;
  j["gamma"] = m.gamma;
  j["r_max"] = m.r_max;
  nlohmann::json transition = nlohmann::json::array();
  for (int x = 0; x < m.n_states; ++x) {
    nlohmann::json per_action = nlohmann::json::array();
    for (int a = 0; a < m.n_actions; ++a) {
      nlohmann::json row = nlohmann::json::array();
      for (int y = 0; y < m.n_states; ++y)
        row.push_back(m.transition[static_cast<std::size_t>(a)](x, y));
      per_action.push_back(std::move(row));
    }
    transition.push_back(std::move(per_action));
  }
  j["transition"] = std::move(transition);
  nlohmann::json reward = nlohmann::json::array();
  for (int x = 0; x < m.n_states; ++x) {
    nlohmann::json row = nlohmann::json::array();
    for (int a = 0; a < m.n_actions; ++a) row.push_back(m.reward(x, a));
    reward.push_back(std::move(row));
  }
  j["reward"] = std::move(reward);
  nlohmann::json absorbing = nlohmann::json::array();
  for (int x = 0; x < m.n_states; ++x)
    if (m.is_absorbing(x)) absorbing.push_back(x);
  j["absorbing"] = std::move(absorbing);
  return j;
}

inline Mdp mdp_from_json(const nlohmann::json& j) {
  Mdp m;
  try {
    m.n_states = j.at("n_states").get<int>();
    m.n_actions = j.at("n_actions").get<int>();
    m.gamma = j.at("gamma").get<double>();
    m.r_max = j.at("r_max").get<double>();
    if (m.n_states <= 0 || m.n_actions <= 0)
      throw std::invalid_argument("n_states and n_actions must be positive");
    m.transition.assign(static_cast<std::size_t>(m.n_actions),
                        Eigen::MatrixXd::Zero(m.n_states, m.n_states));
    m.reward = Eigen::MatrixXd::Zero(m.n_states, m.n_actions);
    m.absorbing.assign(static_cast<std::size_t>(m.n_states), 0);
    const nlohmann::json& transition = j.at("transition");
    for (int x = 0; x < m.n_states; ++x)
      for (int a = 0; a < m.n_actions; ++a)
        for (int y = 0; y < m.n_states; ++y)
          m.transition[static_cast<std::size_t>(a)](x, y) =
              transition.at(static_cast<std::size_t>(x))
                  .at(static_cast<std::size_t>(a))
                  .at(static_cast<std::size_t>(y))
                  .get<double>();
    const nlohmann::json& reward = j.at("reward");
    for (int x = 0; x < m.n_states; ++x)
      for (int a = 0; a < m.n_actions; ++a)
        m.reward(x, a) = reward.at(static_cast<std::size_t>(x))
                             .at(static_cast<std::size_t>(a))
                             .get<double>();
    for (const auto& entry : j.value("absorbing", nlohmann::json::array())) {
      int x = entry.get<int>();
      if (x < 0 || x >= m.n_states) throw std::invalid_argument("absorbing state out of range");
      m.absorbing[static_cast<std::size_t>(x)] = 1;
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("mdp_from_json: ") + e.what());
  }
  m.validate();
  return m;
}

inline void save_mdp(const Mdp& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_mdp: cannot open " + path);
  out << mdp_to_json(m).dump(2) << '\n';
  if (!out.good()) throw std::runtime_error("save_mdp: write failed for " + path);
}

inline Mdp load_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_mdp: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("load_mdp: parse error in " + path + ": " + e.what());
  }
  return mdp_from_json(j);
}

inline nlohmann::json grid_to_json(const UniformGridQ& g) {
  nlohmann::json j;
  j["low"] = g.low;
  j["high"] = g.high;
  j["resolution"] = g.resolution;
  j["n_actions"] = g.n_actions;
  nlohmann::json values = nlohmann::json::array();
  for (std::int64_t n = 0; n < g.node_values.rows(); ++n) {
    nlohmann::json row = nlohmann::json::array();
    for (int a = 0; a < g.n_actions; ++a) row.push_back(g.node_values(n, a));
    values.push_back(std::move(row));
  }
  j["node_values"] = std::move(values);
  return j;
}

inline UniformGridQ grid_from_json(const nlohmann::json& j) {
  UniformGridQ g;
  try {
    g.low = j.at("low").get<std::vector<double>>();
    g.high = j.at("high").get<std::vector<double>>();
    g.resolution = j.at("resolution").get<std::vector<int>>();
    g.n_actions = j.at("n_actions").get<int>();
    if (g.n_actions <= 0) throw std::invalid_argument("n_actions must be positive");
    for (int r : g.resolution)
      if (r < 2) throw std::invalid_argument("resolution must be at least 2");
    g.node_values = Eigen::MatrixXd::Zero(g.n_nodes(), g.n_actions);
    const nlohmann::json& values = j.at("node_values");
    for (std::int64_t n = 0; n < g.node_values.rows(); ++n)
      for (int a = 0; a < g.n_actions; ++a)
        g.node_values(n, a) = values.at(static_cast<std::size_t>(n))
                                  .at(static_cast<std::size_t>(a))
                                  .get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("grid_from_json: ") + e.what());
  }
  g.validate();
  return g;
}

inline void save_grid(const UniformGridQ& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_grid: cannot open " + path);
  out << grid_to_json(g).dump(2) << '\n';
  if (!out.good()) throw std::runtime_error("save_grid: write failed for " + path);
}

inline UniformGridQ load_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_grid: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("load_grid: parse error in " + path + ": " + e.what());
  }
  return grid_from_json(j);
}

}  // namespace qlambda
