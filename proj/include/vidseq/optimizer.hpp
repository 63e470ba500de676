#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "vidseq/graph.hpp"
#include "vidseq/tensor.hpp"

namespace vidseq::harness {

/// Per-class binary cross-entropy, averaged over batch and classes.
Tensor bce_loss(Graph& g, const Tensor& probabilities, const Tensor& targets);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm clip applied before the update.
  std::optional<double> clip_norm;
};

struct OptimizerState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;

  static OptimizerState for_parameters(const std::vector<NamedTensor>& params);
};

struct StepInfo {
  double grad_norm = 0.0;  // before clipping
  bool clipped = false;
};

/// One bias-corrected Adam update from the gradients stored on params.
/// Throws TrainingError naming the first block with a non-finite gradient;
/// in that case nothing is updated.
StepInfo adam_step(std::vector<NamedTensor>& params, OptimizerState& state, const AdamConfig& config);

}  // namespace vidseq::harness
