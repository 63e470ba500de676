#pragma once

#include <span>
#include <vector>

#include "vidseq/graph.hpp"
#include "vidseq/tensor.hpp"

// Differentiable primitives. Each op records a node on the graph when any
// input requires grad, and throws NumericError rather than return a
// non-finite value. Sequence tensors are laid out batch x channels x time.
namespace vidseq::ops {

enum class Activation { sigmoid, tanh, relu };
enum class Mode { train, eval };

/// Per-channel running statistics owned by one batch-norm layer.
struct BatchNormState {
  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}

  std::vector<double> running_mean;
  std::vector<double> running_var;
  bool populated = false;

  static constexpr double kMomentum = 0.9;
  static constexpr double kEpsilon = 1e-5;
};

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);
/// x[batch x in] * weight[out x in]^T + bias[out]; bias may be undefined.
Tensor linear(Graph& g, const Tensor& x, const Tensor& weight, const Tensor& bias = {});
/// linear applied at every time step: x[batch x in x time] -> [batch x out x time].
Tensor linear_time(Graph& g, const Tensor& x, const Tensor& weight, const Tensor& bias = {});
/// "Same" cross-correlation along time with zero padding; width must be odd.
Tensor conv1d_same(Graph& g, const Tensor& x, const Tensor& kernels, const Tensor& bias);

/// Batch norm over (batch, valid time) per channel. Padded outputs are zero.
Tensor batchnorm_time(Graph& g, const Tensor& x, const TimeMask& mask, const Tensor& gamma,
                      const Tensor& beta, Mode mode, BatchNormState& state);

Tensor activation(Graph& g, const Tensor& x, Activation kind);
inline Tensor sigmoid(Graph& g, const Tensor& x) { return activation(g, x, Activation::sigmoid); }
inline Tensor tanh(Graph& g, const Tensor& x) { return activation(g, x, Activation::tanh); }
inline Tensor relu(Graph& g, const Tensor& x) { return activation(g, x, Activation::relu); }

Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor sub(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);

/// scores[batch x time] -> weights, exactly zero at padded positions.
Tensor softmax_masked(Graph& g, const Tensor& scores, const TimeMask& mask);

/// Concatenate along axis 1 (features of [batch x C] or channels of [batch x C x time]).
Tensor concat_channels(Graph& g, std::span<const Tensor> xs);
/// Mean over valid frames; the result does not depend on frame order.
Tensor masked_mean_time(Graph& g, const Tensor& x, const TimeMask& mask);
/// Zero every padded position.
Tensor apply_mask(Graph& g, const Tensor& x, const TimeMask& mask);
/// sum over valid t of weights[b, t] * h[b, :, t].
Tensor weighted_sum_time(Graph& g, const Tensor& h, const Tensor& weights, const TimeMask& mask);

Tensor time_step(Graph& g, const Tensor& x, std::size_t t);
Tensor stack_time(Graph& g, std::span<const Tensor> steps);
/// Reverse each item's valid prefix along time; padded positions stay put.
Tensor reverse_valid(Graph& g, const Tensor& x, const TimeMask& mask);

Tensor reshape(Graph& g, const Tensor& x, Shape shape);
Tensor sum(Graph& g, const Tensor& x);
Tensor mean(Graph& g, const Tensor& x);

/// Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7].
Tensor binary_cross_entropy(Graph& g, const Tensor& probabilities, const Tensor& targets);

}  // namespace vidseq::ops
