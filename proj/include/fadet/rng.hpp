#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "fadet/tensor.hpp"

namespace fadet {

/// Deterministic RNG used everywhere seeding matters. Thin wrapper over
/// mt19937_64 so call sites never instantiate unseeded engines.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double gaussian(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  int64_t uniform_int(int64_t lo, int64_t hi_inclusive) {
    return std::uniform_int_distribution<int64_t>(lo, hi_inclusive)(engine_);
  }

  Tensor gaussian_tensor(Shape shape, double stddev, bool requires_grad = true);
  Tensor uniform_tensor(Shape shape, double lo, double hi,
                        bool requires_grad = true);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// splitmix64: stateless mix for deriving independent per-item seeds from a
/// (seed, index) pair without correlated streams.
uint64_t mix_seed(uint64_t seed, uint64_t index);

/// Fisher-Yates with an explicit engine; results do not depend on the
/// standard library's shuffle implementation.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, std::mt19937_64& engine) {
  for (size_t i = items.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(engine() % i);
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace fadet
