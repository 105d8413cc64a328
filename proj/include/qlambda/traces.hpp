#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>

namespace qlambda {

/// Sparse accumulating eligibility trace over integer keys (state-action or
/// node-action pairs). Decay is applied lazily through a global multiplier,
/// so each step costs O(active set) regardless of table size. Entries whose
/// true value falls below the prune threshold are dropped during sweeps.
class TraceVector {
 public:
  explicit TraceVector(double prune_threshold = 1e-12) : prune_(prune_threshold) {
    if (!(prune_threshold >= 0.0))
      throw std::invalid_argument("TraceVector: prune threshold must be nonnegative");
  }

  void reset() {
    stored_.clear();
    mult_ = 1.0;
  }

  /// Zeroes every trace immediately (the control-variant cut).
  void cut() { reset(); }

  /// Scales every trace by factor. A zero factor is a cut.
  void decay(double factor) {
    if (!(factor >= 0.0))
      throw std::invalid_argument("TraceVector: decay factor must be nonnegative");
    if (factor == 0.0) {
      cut();
      return;
    }
    mult_ *= factor;
    if (mult_ < 1e-150 || mult_ > 1e150) renormalize();
  }

  /// Adds amount to the trace at key (the visit increment, or an
  /// interpolation weight for grid nodes).
  void add(std::int64_t key, double amount = 1.0) {
    stored_[key] += amount / mult_;
  }

  double value(std::int64_t key) const {
    auto it = stored_.find(key);
    return it == stored_.end() ? 0.0 : mult_ * it->second;
  }

  double max_value() const {
    double worst = 0.0;
    for (const auto& [key, v] : stored_) worst = std::max(worst, mult_ * std::abs(v));
    return worst;
  }

  std::size_t active_size() const { return stored_.size(); }

  /// Calls f(key, trace_value) for every entry at or above the prune
  /// threshold and erases the rest.
  template <class F>
  void for_each(F&& f) {
    for (auto it = stored_.begin(); it != stored_.end();) {
      double v = mult_ * it->second;
      if (std::abs(v) < prune_) {
        it = stored_.erase(it);
      } else {
        f(it->first, v);
        ++it;
      }
    }
  }

 private:
  void renormalize() {
    for (auto& [key, v] : stored_) v *= mult_;
    mult_ = 1.0;
  }

  std::unordered_map<std::int64_t, double> stored_;
  double mult_ = 1.0;
  double prune_;
};

}  // namespace qlambda
