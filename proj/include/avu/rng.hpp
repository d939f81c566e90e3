#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "avu/tensor.hpp"

namespace avu {

// Seeded generator shared by initialisers, the synthetic generator and the
// task sampler. Every consumer takes one by reference so runs are replayable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  int range(int lo, int hi_inclusive) {
    return std::uniform_int_distribution<int>(lo, hi_inclusive)(engine_);
  }
  bool bernoulli(double p) { return uniform() < p; }
  std::uint64_t next() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

Tensor randn(Rng& rng, Shape shape, double stddev = 1.0, bool requires_grad = false);
Tensor rand_uniform(Rng& rng, Shape shape, double lo, double hi,
                    bool requires_grad = false);

}  // namespace avu
