#pragma once

// Seeded randomness with fully specified algorithms, so results do not depend
// on the standard library's distribution implementations.

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <numeric>
#include <random>
#include <span>
#include <vector>

namespace hmme {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Mixes (master seed, stream tag, index) into an independent child seed.
/// Child seeds for index i never depend on how many other indices exist.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(master ^ splitmix64(tag)) + index);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1].
  double uniform_open_zero() { return 1.0 - uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    // Lemire-free rejection keeps the draw unbiased and easy to audit.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal() {
    const double u1 = uniform_open_zero();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double exponential() { return -std::log(uniform_open_zero()); }

  /// Index drawn from an unnormalized non-negative weight vector.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double target = uniform() * total;
    for (std::size_t k = 0; k < weights.size(); ++k) {
      target -= weights[k];
      if (target < 0.0) return k;
    }
    // Rounding left a sliver; return the last positive-weight entry.
    for (std::size_t k = weights.size(); k-- > 0;) {
      if (weights[k] > 0.0) return k;
    }
    return weights.size() - 1;
  }

  /// Symmetric Dirichlet(1) draw, i.e. uniform on the simplex.
  std::vector<double> flat_dirichlet(std::size_t dim) {
    std::vector<double> out(dim);
    double total = 0.0;
    for (double& v : out) {
      v = exponential();
      total += v;
    }
    for (double& v : out) v /= total;
    return out;
  }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// `count` distinct indices from [0, population), sorted ascending.
  std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t count) {
    std::vector<std::size_t> pool(population);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(below(population - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    std::sort(pool.begin(), pool.end());
    return pool;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace hmme
