#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <vector>

namespace qlambda {

/// Mixes an arbitrary number of 64-bit words into a single seed using the
/// splitmix64 finalizer. Used to derive independent per-cell seeds from a
/// base seed plus identifying coordinates, so results do not depend on the
/// order in which work items are scheduled.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x8a5cd789635d2dffULL;
  for (std::uint64_t w : words) h = splitmix64(h ^ w);
  return h;
}

/// Bit pattern of a double, for hashing real-valued grid coordinates into
/// seeds. Equal values give equal seeds regardless of how they were computed.
inline std::uint64_t double_bits(double v) {
  static_assert(sizeof(double) == sizeof(std::uint64_t));
  std::uint64_t b;
  std::memcpy(&b, &v, sizeof(b));
  return b;
}

/// Uniform double in [0, 1), using the top 53 bits of the engine output.
/// Hand-rolled instead of std::uniform_real_distribution so that the exact
/// stream is stable across standard library implementations.
inline double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

/// Uniform double in [lo, hi).
inline double uniform(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

/// Uniform integer in [0, n).
inline std::size_t uniform_index(std::mt19937_64& g, std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
  // Rejection-free for our purposes: n is tiny relative to 2^64, the modulo
  // bias is negligible, but we keep the draw reproducible and cheap.
  return static_cast<std::size_t>(g() % n);
}

/// Samples an index from an unnormalized nonnegative weight vector by a
/// single CDF walk. Ties in the walk resolve toward lower indices.
inline std::size_t sample_categorical(std::mt19937_64& g,
                                      const std::vector<double>& w) {
  double total = 0.0;
  for (double x : w) {
    if (x < 0.0 || !std::isfinite(x))
      throw std::invalid_argument("sample_categorical: weights must be finite and nonnegative");
    total += x;
  }
  if (total <= 0.0)
    throw std::invalid_argument("sample_categorical: total weight must be positive");
  double u = uniform01(g) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    acc += w[i];
    if (u < acc) return i;
  }
  return w.size() - 1;
}

/// Flat Dirichlet draw: k exponentials normalized to sum to one. Produces a
/// strictly positive probability vector.
inline std::vector<double> sample_simplex(std::mt19937_64& g, std::size_t k) {
  if (k == 0) throw std::invalid_argument("sample_simplex: k must be positive");
  std::vector<double> v(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double u = uniform01(g);
    v[i] = -std::log1p(-u);
    // log1p(-u) is finite for u in [0,1); guard the measure-zero corner.
    if (v[i] <= 0.0) v[i] = 1e-300;
    total += v[i];
  }
  for (double& x : v) x /= total;
  return v;
}

/// Samples `count` distinct indices from [0, n) by partial Fisher-Yates.
inline std::vector<std::size_t> sample_distinct(std::mt19937_64& g,
                                                std::size_t n,
                                                std::size_t count) {
  if (count > n)
    throw std::invalid_argument("sample_distinct: count exceeds population");
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t j = i + uniform_index(g, n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace qlambda
