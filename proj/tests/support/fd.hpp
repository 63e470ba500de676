#pragma once

#include <functional>
#include <random>
#include <vector>

#include "support/oracles.hpp"
#include "vidseq/graph.hpp"
#include "vidseq/ops.hpp"

namespace vidseq::testing {

/// Worst relative error between backprop and central differences over every
/// entry of every input. `loss` rebuilds the scalar from the inputs' current values.
inline double fd_check(std::vector<Tensor> inputs, const std::function<Tensor(Graph&)>& loss, double step = 1e-5,
                       double floor = 1e-7) {
  for (auto& t : inputs) t.zero_grad();
  {
    Graph g;
    g.backward(loss(g));
  }
  double worst = 0.0;
  for (auto& t : inputs) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto values = t.mutable_data();
    const auto f = [&](const std::vector<double>& x) {
      std::copy(x.begin(), x.end(), values.begin());
      Graph g;
      return loss(g).item();
    };
    const std::vector<double> original(values.begin(), values.end());
    const auto numeric = numeric_gradient(f, original, step);
    std::copy(original.begin(), original.end(), values.begin());
    worst = std::max(worst, max_relative_error(analytic, numeric, floor));
  }
  return worst;
}

/// sum(out * r) for a fixed random r, so every output entry matters.
inline Tensor random_projection(Graph& g, const Tensor& out, std::uint64_t seed = 5) {
  std::mt19937_64 rng(seed);
  return ops::sum(g, ops::mul(g, out, Tensor(out.shape(), random_normal(rng, out.size()))));
}

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, bool requires_grad = true, double sigma = 1.0) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), random_normal(rng, n, sigma), requires_grad);
}

}  // namespace vidseq::testing
