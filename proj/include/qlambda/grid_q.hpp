#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qlambda/traces.hpp"

namespace qlambda {

/// Q-function over a uniform rectangular grid with multilinear interpolation
/// between nodes. Node values are stored node-major, one column per action;
/// node linear indices run row-major over the dimensions.
struct UniformGridQ {
  std::vector<double> low;
  std::vector<double> high;
  std::vector<int> resolution;
  int n_actions = 0;
  Eigen::MatrixXd node_values;

  int dims() const { return static_cast<int>(resolution.size()); }

  std::int64_t n_nodes() const {
    std::int64_t n = 1;
    for (int r : resolution) n *= r;
    return n;
  }

  void validate() const {
    const std::size_t d = resolution.size();
    if (d == 0) throw std::invalid_argument("UniformGridQ: needs at least one dimension");
    if (low.size() != d || high.size() != d)
      throw std::invalid_argument("UniformGridQ: bounds and resolution sizes disagree");
    for (std::size_t i = 0; i < d; ++i) {
      if (resolution[i] < 2)
        throw std::invalid_argument("UniformGridQ: resolution must be at least 2 per dimension");
      if (!(low[i] < high[i]))
        throw std::invalid_argument("UniformGridQ: bounds must satisfy low < high");
    }
    if (n_actions <= 0) throw std::invalid_argument("UniformGridQ: needs at least one action");
    if (node_values.rows() != n_nodes() || node_values.cols() != n_actions)
      throw std::invalid_argument("UniformGridQ: node value table has the wrong shape");
    if (!node_values.allFinite())
      throw std::invalid_argument("UniformGridQ: node values must be finite");
  }

  /// Coordinates of the node at a linear index.
  std::vector<double> node_point(std::int64_t index) const {
    const int d = dims();
    std::vector<double> x(static_cast<std::size_t>(d));
    for (int i = d - 1; i >= 0; --i) {
      std::int64_t r = resolution[static_cast<std::size_t>(i)];
      std::int64_t c = index % r;
      index /= r;
      double h = (high[static_cast<std::size_t>(i)] - low[static_cast<std::size_t>(i)]) /
                 static_cast<double>(r - 1);
      x[static_cast<std::size_t>(i)] = low[static_cast<std::size_t>(i)] + static_cast<double>(c) * h;
    }
    return x;
  }
};

inline UniformGridQ make_grid(std::vector<double> low, std::vector<double> high,
                              std::vector<int> resolution, int n_actions) {
  UniformGridQ g;
  g.low = std::move(low);
  g.high = std::move(high);
  g.resolution = std::move(resolution);
  g.n_actions = n_actions;
  std::int64_t nodes = 1;
  for (int r : g.resolution) nodes *= std::max(r, 1);
  g.node_values = Eigen::MatrixXd::Zero(nodes, std::max(n_actions, 1));
  g.validate();
  return g;
}

/// Enclosing corner nodes of a query point with their multilinear weights.
/// Corners whose weight is exactly zero are dropped, so an on-node query
/// yields a single entry of weight 1.
struct InterpWeights {
  std::vector<std::int64_t> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

inline InterpWeights stencil(const UniformGridQ& grid, const std::vector<double>& x) {
  const int d = grid.dims();
  if (static_cast<int>(x.size()) != d)
    throw std::invalid_argument("stencil: query dimension mismatch");

  std::vector<std::int64_t> cell(static_cast<std::size_t>(d));
  std::vector<double> frac(static_cast<std::size_t>(d));
  std::vector<std::int64_t> stride(static_cast<std::size_t>(d));
  std::int64_t s = 1;
  for (int i = d - 1; i >= 0; --i) {
    stride[static_cast<std::size_t>(i)] = s;
    s *= grid.resolution[static_cast<std::size_t>(i)];
  }
  for (int i = 0; i < d; ++i) {
    const std::size_t ui = static_cast<std::size_t>(i);
    double v = x[ui];
    if (std::isnan(v)) throw std::invalid_argument("stencil: NaN coordinate");
    v = std::min(std::max(v, grid.low[ui]), grid.high[ui]);
    const int r = grid.resolution[ui];
    const double h = (grid.high[ui] - grid.low[ui]) / static_cast<double>(r - 1);
    double t = (v - grid.low[ui]) / h;
    std::int64_t c = static_cast<std::int64_t>(std::floor(t));
    c = std::min(std::max(c, std::int64_t{0}), static_cast<std::int64_t>(r - 2));
    cell[ui] = c;
    frac[ui] = std::min(std::max(t - static_cast<double>(c), 0.0), 1.0);
  }

  InterpWeights out;
  const std::uint32_t corners = 1u << d;
  out.nodes.reserve(corners);
  out.weights.reserve(corners);
  for (std::uint32_t mask = 0; mask < corners; ++mask) {
    double w = 1.0;
    std::int64_t node = 0;
    for (int i = 0; i < d; ++i) {
      const std::size_t ui = static_cast<std::size_t>(i);
      const bool hi_corner = (mask >> i) & 1u;
      w *= hi_corner ? frac[ui] : 1.0 - frac[ui];
      node += (cell[ui] + (hi_corner ? 1 : 0)) * stride[ui];
    }
    if (w == 0.0) continue;
    out.nodes.push_back(node);
    out.weights.push_back(w);
  }
  return out;
}

inline double q_value(const UniformGridQ& grid, const InterpWeights& w, int a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i)
    acc += w.weights[i] * grid.node_values(w.nodes[i], a);
  return acc;
}

inline double q_value(const UniformGridQ& grid, const std::vector<double>& x, int a) {
  return q_value(grid, stencil(grid, x), a);
}

/// Largest interpolated action value at a precomputed stencil; scans actions
/// in index order like the tabular row maximum.
inline double grid_max_q(const UniformGridQ& grid, const InterpWeights& w) {
  double best = q_value(grid, w, 0);
  for (int a = 1; a < grid.n_actions; ++a) best = std::max(best, q_value(grid, w, a));
  return best;
}

/// Decays every node-action trace by lambda*gamma, then credits the stencil
/// nodes of the visited state with their interpolation weights at the taken
/// action. Node-action keys are node_index * n_actions + action, matching the
/// tabular state-action keying.
inline void trace_step(TraceVector& trace, const InterpWeights& w, int a_t, double lambda,
                       double gamma, int n_actions) {
  trace.decay(lambda * gamma);
  for (std::size_t i = 0; i < w.size(); ++i)
    trace.add(w.nodes[i] * n_actions + a_t, w.weights[i]);
}

/// Adds alpha * delta * e to every traced node-action value.
inline void apply_td_update(UniformGridQ& grid, TraceVector& trace, double delta, double alpha) {
  trace.for_each([&](std::int64_t key, double ev) {
    grid.node_values(key / grid.n_actions, static_cast<int>(key % grid.n_actions)) +=
        alpha * delta * ev;
  });
}

}  // namespace qlambda
