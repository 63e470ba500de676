#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "vidseq/tensor.hpp"

namespace vidseq {

using Rng = std::mt19937_64;

/// Parameter tensor with entries drawn from U(-bound, bound).
inline Tensor uniform_tensor(Shape shape, double bound, Rng& rng, bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> data(shape_size(shape));
  for (auto& v : data) v = dist(rng);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

}  // namespace vidseq
