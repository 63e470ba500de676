#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vidseq/graph.hpp"
#include "vidseq/random.hpp"
#include "vidseq/tensor.hpp"

namespace vidseq::recurrent {

enum class CellKind { lstm, gru };

/// One gate's weights. The gate matrix hidden x (input + hidden) is kept as
/// its input block and hidden block so input projections can be hoisted
/// out of the time loop.
struct Gate {
  Tensor input_weight;   // hidden x input
  Tensor hidden_weight;  // hidden x hidden
  Tensor bias;           // hidden
};

/// Gate order: lstm = input, forget, output, candidate; gru = update, reset, candidate.
struct CellParams {
  CellKind kind = CellKind::lstm;
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  std::vector<Gate> gates;

  /// U(-1/sqrt(input+hidden), +) weights; LSTM forget bias 1, other biases 0.
  static CellParams init(CellKind kind, std::size_t input_size, std::size_t hidden_size, Rng& rng);
  static CellParams zeros(CellKind kind, std::size_t input_size, std::size_t hidden_size);

  /// (name suffix, tensor) in declaration order.
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
};

/// Additive attention: e_t = score . tanh(proj_weight h_t + proj_bias).
struct AttentionParams {
  Tensor proj_weight;   // attn x channels
  Tensor proj_bias;     // attn
  Tensor score_vector;  // attn

  static AttentionParams init(std::size_t channels, std::size_t attn_size, Rng& rng);
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
};

struct LstmState {
  Tensor h;
  Tensor c;
};

LstmState lstm_step(Graph& g, const CellParams& p, const Tensor& x_t, const Tensor& h_prev,
                    const Tensor& c_prev);
Tensor gru_step(Graph& g, const CellParams& p, const Tensor& x_t, const Tensor& h_prev);

/// Unidirectional pass over x[batch x input x time] from zero state.
/// Returns batch x hidden x time with padded positions zeroed.
Tensor run_direction(Graph& g, const CellParams& p, const Tensor& x, const TimeMask& mask);

/// Forward pass plus a backward pass over each item's reversed valid prefix,
/// concatenated per step: batch x (2 hidden) x time.
Tensor run_bidirectional(Graph& g, const CellParams& fwd, const CellParams& bwd, const Tensor& x,
                         const TimeMask& mask);

Tensor attention_pool(Graph& g, const AttentionParams& p, const Tensor& h, const TimeMask& mask);

}  // namespace vidseq::recurrent
