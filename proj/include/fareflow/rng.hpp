#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace fareflow {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic RNG. mt19937_64 is fully specified by the standard; the std
// distributions are not, so every mapping from raw bits to a value lives
// here and nowhere else.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Pinned mapping; modulo bias is irrelevant at our n.
  std::uint64_t uniform_index(std::uint64_t n) {
    return n == 0 ? 0 : next_u64() % n;
  }

  // Box-Muller, no spare caching so the stream position is obvious.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Knuth multiplication method; split large means so the product of
  // uniforms never underflows.
  std::uint64_t poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    if (lambda > 30.0) {
      std::uint64_t half = poisson(lambda / 2.0);
      return half + poisson(lambda - lambda / 2.0);
    }
    const double limit = std::exp(-lambda);
    std::uint64_t k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

  // Parameterized by mean (not log-mean): E[X] = mean.
  double lognormal_mean(double mean, double sigma_log) {
    const double mu = std::log(mean) - 0.5 * sigma_log * sigma_log;
    return std::exp(mu + sigma_log * normal());
  }

  // Marsaglia-Tsang; rejection keeps determinism since it consumes one
  // stream in a fixed order.
  double gamma_shape(double shape) {
    if (shape < 1.0) {
      const double u = uniform();
      return gamma_shape(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double beta(double a, double b) {
    const double x = gamma_shape(a);
    const double y = gamma_shape(b);
    return x / (x + y);
  }

  // Independent substream derived from the *original* seed, stable no matter
  // how many draws happened on this instance.
  Rng fork(std::uint64_t stream_id) const {
    return Rng(splitmix64(splitmix64(seed_) ^ splitmix64(stream_id)));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace fareflow
