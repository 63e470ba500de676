#include "vidseq/recurrent.hpp"

#include <cmath>

#include "vidseq/errors.hpp"
#include "vidseq/ops.hpp"

namespace vidseq::recurrent {

namespace {

std::size_t gate_count(CellKind kind) { return kind == CellKind::lstm ? 4 : 3; }

const char* gate_name(CellKind kind, std::size_t i) {
  static const char* lstm[] = {"input", "forget", "output", "candidate"};
  static const char* gru[] = {"update", "reset", "candidate"};
  return kind == CellKind::lstm ? lstm[i] : gru[i];
}

void check_cell(const CellParams& p, CellKind kind, const char* op) {
  if (p.kind != kind) throw ConfigError(std::string(op) + ": cell kind mismatch");
  if (p.gates.size() != gate_count(kind)) throw ConfigError(std::string(op) + ": wrong gate count");
}

void check_step_inputs(const CellParams& p, const Tensor& x_t, const Tensor& h_prev, const char* op) {
  if (x_t.rank() != 2 || x_t.dim(1) != p.input_size) {
    throw DimensionError(std::string(op) + ": input " + shape_string(x_t.shape()) +
                         " does not match input_size " + std::to_string(p.input_size));
  }
  if (h_prev.shape() != Shape{x_t.dim(0), p.hidden_size}) {
    throw DimensionError(std::string(op) + ": state " + shape_string(h_prev.shape()) +
                         " does not match batch " + std::to_string(x_t.dim(0)) + " x hidden " +
                         std::to_string(p.hidden_size));
  }
}

// input_terms[k] = W_x[k] x_t + b[k] for each gate.
LstmState lstm_cell(Graph& g, const CellParams& p, const std::vector<Tensor>& input_terms,
                    const Tensor& h_prev, const Tensor& c_prev) {
  std::vector<Tensor> pre;
  for (std::size_t k = 0; k < 4; ++k) {
    pre.push_back(ops::add(g, input_terms[k], ops::linear(g, h_prev, p.gates[k].hidden_weight)));
  }
  const Tensor i = ops::sigmoid(g, pre[0]);
  const Tensor f = ops::sigmoid(g, pre[1]);
  const Tensor o = ops::sigmoid(g, pre[2]);
  const Tensor cand = ops::tanh(g, pre[3]);
  Tensor c = ops::add(g, ops::mul(g, f, c_prev), ops::mul(g, i, cand));
  Tensor h = ops::mul(g, o, ops::tanh(g, c));
  return {std::move(h), std::move(c)};
}

Tensor gru_cell(Graph& g, const CellParams& p, const std::vector<Tensor>& input_terms,
                const Tensor& h_prev) {
  const Tensor z = ops::sigmoid(
      g, ops::add(g, input_terms[0], ops::linear(g, h_prev, p.gates[0].hidden_weight)));
  const Tensor r = ops::sigmoid(
      g, ops::add(g, input_terms[1], ops::linear(g, h_prev, p.gates[1].hidden_weight)));
  const Tensor cand = ops::tanh(
      g, ops::add(g, input_terms[2],
                  ops::linear(g, ops::mul(g, r, h_prev), p.gates[2].hidden_weight)));
  const Tensor ones = Tensor::filled(z.shape(), 1.0);
  return ops::add(g, ops::mul(g, ops::sub(g, ones, z), h_prev), ops::mul(g, z, cand));
}

}  // namespace

CellParams CellParams::init(CellKind kind, std::size_t input_size, std::size_t hidden_size,
                            Rng& rng) {
  CellParams p;
  p.kind = kind;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  const double bound = 1.0 / std::sqrt(static_cast<double>(input_size + hidden_size));
  for (std::size_t k = 0; k < gate_count(kind); ++k) {
    Gate gate;
    gate.input_weight = uniform_tensor({hidden_size, input_size}, bound, rng);
    gate.hidden_weight = uniform_tensor({hidden_size, hidden_size}, bound, rng);
    const double bias = (kind == CellKind::lstm && k == 1) ? 1.0 : 0.0;
    gate.bias = Tensor::filled({hidden_size}, bias, true);
    p.gates.push_back(std::move(gate));
  }
  return p;
}

CellParams CellParams::zeros(CellKind kind, std::size_t input_size, std::size_t hidden_size) {
  CellParams p;
  p.kind = kind;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  for (std::size_t k = 0; k < gate_count(kind); ++k) {
    p.gates.push_back({Tensor({hidden_size, input_size}, true), Tensor({hidden_size, hidden_size}, true),
                       Tensor({hidden_size}, true)});
  }
  return p;
}

std::vector<std::pair<std::string, Tensor>> CellParams::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t k = 0; k < gates.size(); ++k) {
    const std::string prefix = gate_name(kind, k);
    out.emplace_back(prefix + ".w_input", gates[k].input_weight);
    out.emplace_back(prefix + ".w_hidden", gates[k].hidden_weight);
    out.emplace_back(prefix + ".bias", gates[k].bias);
  }
  return out;
}

AttentionParams AttentionParams::init(std::size_t channels, std::size_t attn_size, Rng& rng) {
  AttentionParams p;
  p.proj_weight = uniform_tensor({attn_size, channels}, 1.0 / std::sqrt(static_cast<double>(channels)), rng);
  p.proj_bias = Tensor({attn_size}, true);
  p.score_vector = uniform_tensor({attn_size}, 1.0 / std::sqrt(static_cast<double>(attn_size)), rng);
  return p;
}

std::vector<std::pair<std::string, Tensor>> AttentionParams::named_tensors() const {
  return {{"proj_weight", proj_weight}, {"proj_bias", proj_bias}, {"score_vector", score_vector}};
}

LstmState lstm_step(Graph& g, const CellParams& p, const Tensor& x_t, const Tensor& h_prev,
                    const Tensor& c_prev) {
  check_cell(p, CellKind::lstm, "lstm_step");
  check_step_inputs(p, x_t, h_prev, "lstm_step");
  if (c_prev.shape() != h_prev.shape()) {
    throw DimensionError("lstm_step: cell state " + shape_string(c_prev.shape()) +
                         " does not match hidden state " + shape_string(h_prev.shape()));
  }
  std::vector<Tensor> terms;
  for (const auto& gate : p.gates) terms.push_back(ops::linear(g, x_t, gate.input_weight, gate.bias));
  return lstm_cell(g, p, terms, h_prev, c_prev);
}

Tensor gru_step(Graph& g, const CellParams& p, const Tensor& x_t, const Tensor& h_prev) {
  check_cell(p, CellKind::gru, "gru_step");
  check_step_inputs(p, x_t, h_prev, "gru_step");
  std::vector<Tensor> terms;
  for (const auto& gate : p.gates) terms.push_back(ops::linear(g, x_t, gate.input_weight, gate.bias));
  return gru_cell(g, p, terms, h_prev);
}

Tensor run_direction(Graph& g, const CellParams& p, const Tensor& x, const TimeMask& mask) {
  if (x.rank() != 3 || x.dim(1) != p.input_size) {
    throw DimensionError("run_direction: input " + shape_string(x.shape()) +
                         " does not match input_size " + std::to_string(p.input_size));
  }
  if (x.dim(0) != mask.batch() || x.dim(2) != mask.max_time()) {
    throw DimensionError("run_direction: input " + shape_string(x.shape()) + " does not match mask");
  }
  check_cell(p, p.kind, "run_direction");
  const std::size_t B = x.dim(0), T = x.dim(2);

  std::vector<Tensor> projected;
  for (const auto& gate : p.gates) projected.push_back(ops::linear_time(g, x, gate.input_weight, gate.bias));

  Tensor h({B, p.hidden_size});
  Tensor c({B, p.hidden_size});
  std::vector<Tensor> outputs;
  outputs.reserve(T);
  std::vector<Tensor> terms(p.gates.size());
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < p.gates.size(); ++k) terms[k] = ops::time_step(g, projected[k], t);
    if (p.kind == CellKind::lstm) {
      auto state = lstm_cell(g, p, terms, h, c);
      h = std::move(state.h);
      c = std::move(state.c);
    } else {
      h = gru_cell(g, p, terms, h);
    }
    outputs.push_back(h);
  }
  return ops::apply_mask(g, ops::stack_time(g, outputs), mask);
}

Tensor run_bidirectional(Graph& g, const CellParams& fwd, const CellParams& bwd, const Tensor& x,
                         const TimeMask& mask) {
  if (fwd.hidden_size != bwd.hidden_size || fwd.input_size != bwd.input_size) {
    throw ConfigError("run_bidirectional: forward and backward cells differ in size");
  }
  const Tensor forward = run_direction(g, fwd, x, mask);
  const Tensor reversed = ops::reverse_valid(g, x, mask);
  const Tensor backward = ops::reverse_valid(g, run_direction(g, bwd, reversed, mask), mask);
  const Tensor halves[] = {forward, backward};
  return ops::concat_channels(g, halves);
}

Tensor attention_pool(Graph& g, const AttentionParams& p, const Tensor& h, const TimeMask& mask) {
  if (h.rank() != 3 || h.dim(1) != p.proj_weight.dim(1)) {
    throw DimensionError("attention_pool: input " + shape_string(h.shape()) +
                         " does not match projection " + shape_string(p.proj_weight.shape()));
  }
  if (p.score_vector.size() != p.proj_weight.dim(0)) {
    throw DimensionError("attention_pool: score vector length differs from projection rows");
  }
  const std::size_t B = h.dim(0), T = h.dim(2);
  const Tensor hidden = ops::tanh(g, ops::linear_time(g, h, p.proj_weight, p.proj_bias));
  const Tensor score_row = ops::reshape(g, p.score_vector, {1, p.score_vector.size()});
  const Tensor scores = ops::reshape(g, ops::linear_time(g, hidden, score_row), {B, T});
  const Tensor weights = ops::softmax_masked(g, scores, mask);
  return ops::weighted_sum_time(g, h, weights, mask);
}

}  // namespace vidseq::recurrent
