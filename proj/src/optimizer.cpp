#include "vidseq/optimizer.hpp"

#include <cmath>

#include "vidseq/errors.hpp"
#include "vidseq/ops.hpp"

namespace vidseq::harness {

Tensor bce_loss(Graph& g, const Tensor& probabilities, const Tensor& targets) {
  return ops::binary_cross_entropy(g, probabilities, targets);
}

OptimizerState OptimizerState::for_parameters(const std::vector<NamedTensor>& params) {
  OptimizerState s;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.tensor.size(), 0.0);
    s.second_moment.emplace_back(p.tensor.size(), 0.0);
  }
  return s;
}

StepInfo adam_step(std::vector<NamedTensor>& params, OptimizerState& state, const AdamConfig& config) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw DimensionError("optimizer state tracks " + std::to_string(state.first_moment.size()) +
                         " blocks, model has " + std::to_string(params.size()));
  }
  double norm_sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto grad = params[i].tensor.grad();
    if (state.first_moment[i].size() != grad.size() || state.second_moment[i].size() != grad.size()) {
      throw DimensionError("optimizer state for '" + params[i].name + "' does not match its shape");
    }
    for (double g : grad) {
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter block '" + params[i].name + "'");
      norm_sq += g * g;
    }
  }
  StepInfo info;
  info.grad_norm = std::sqrt(norm_sq);
  double scale = 1.0;
  if (config.clip_norm && info.grad_norm > *config.clip_norm) {
    scale = *config.clip_norm / info.grad_norm;
    info.clipped = true;
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].tensor.mutable_data();
    const auto grad = params[i].tensor.grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = info.clipped ? grad[j] * scale : grad[j];
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g;
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      values[j] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
  return info;
}

}  // namespace vidseq::harness
