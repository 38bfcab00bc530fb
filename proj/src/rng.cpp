#include "fadet/rng.hpp"

namespace fadet {

Tensor Rng::gaussian_tensor(Shape shape, double stddev, bool requires_grad) {
  auto n = shape_numel(shape);
  std::vector<double> values(n);
  for (auto& v : values) v = gaussian(0.0, stddev);
  return Tensor::from_data(std::move(shape), std::move(values), requires_grad);
}

Tensor Rng::uniform_tensor(Shape shape, double lo, double hi,
                           bool requires_grad) {
  auto n = shape_numel(shape);
  std::vector<double> values(n);
  for (auto& v : values) v = uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(values), requires_grad);
}

uint64_t mix_seed(uint64_t seed, uint64_t index) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace fadet
