#include "vidseq/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "vidseq/errors.hpp"
#include "vidseq/kernels.hpp"

namespace vidseq::ops {

namespace {

Tensor emit(Graph& g, const char* op, Shape shape, std::vector<double> data,
            std::vector<Tensor> inputs, Graph::BackwardFn backward) {
  for (double v : data) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
  }
  const bool needs_grad =
      std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  Tensor out(std::move(shape), std::move(data), needs_grad);
  if (needs_grad) g.record(std::move(inputs), out, std::move(backward));
  return out;
}

void expect_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (!t.defined() || t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                         ", got " + (t.defined() ? shape_string(t.shape()) : "<undefined>"));
  }
}

void expect_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

void expect_mask(const Tensor& x, const TimeMask& mask, std::size_t time_axis, const char* op) {
  if (x.dim(0) != mask.batch() || x.dim(time_axis) != mask.max_time()) {
    throw DimensionError(std::string(op) + ": tensor " + shape_string(x.shape()) +
                         " does not match mask of batch " + std::to_string(mask.batch()) +
                         " and time " + std::to_string(mask.max_time()));
  }
}

void add_into(TensorImpl* dst, std::span<const double> src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst->grad[i] += src[i];
}

kernels::Conv1dShape conv_shape(const Tensor& x, std::size_t out_channels, std::size_t width) {
  return {x.dim(0), x.dim(1), out_channels, x.dim(2), width};
}

}  // namespace

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
  expect_rank(a, 2, "matmul", "a");
  expect_rank(b, 2, "matmul", "b");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions of " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " disagree");
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  kernels::gemm({m, n, k, false, false}, a.data(), b.data(), out, false);
  auto* ai = a.impl();
  auto* bi = b.impl();
  return emit(g, "matmul", {m, n}, std::move(out), {a, b}, [=](const TensorImpl& o) {
    if (ai->requires_grad) kernels::gemm({m, k, n, false, true}, o.grad, bi->data, ai->grad, true);
    if (bi->requires_grad) kernels::gemm({k, n, m, true, false}, ai->data, o.grad, bi->grad, true);
  });
}

Tensor linear(Graph& g, const Tensor& x, const Tensor& weight, const Tensor& bias) {
  expect_rank(x, 2, "linear", "input");
  expect_rank(weight, 2, "linear", "weight");
  if (x.dim(1) != weight.dim(1)) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + " does not match weight " +
                         shape_string(weight.shape()));
  }
  const std::size_t batch = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  if (bias.defined() && bias.shape() != Shape{out_dim}) {
    throw DimensionError("linear: bias " + shape_string(bias.shape()) + " does not match weight " +
                         shape_string(weight.shape()));
  }
  std::vector<double> out(batch * out_dim);
  kernels::gemm({batch, out_dim, in, false, true}, x.data(), weight.data(), out, false);
  if (bias.defined()) {
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t o = 0; o < out_dim; ++o) out[b * out_dim + o] += bias[o];
  }
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  auto* xi = x.impl();
  auto* wi = weight.impl();
  auto* bi = bias.defined() ? bias.impl() : nullptr;
  return emit(g, "linear", {batch, out_dim}, std::move(out), std::move(inputs),
              [=](const TensorImpl& o) {
                if (xi->requires_grad)
                  kernels::gemm({batch, in, out_dim, false, false}, o.grad, wi->data, xi->grad, true);
                if (wi->requires_grad)
                  kernels::gemm({out_dim, in, batch, true, false}, o.grad, xi->data, wi->grad, true);
                if (bi && bi->requires_grad) {
                  for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t j = 0; j < out_dim; ++j) bi->grad[j] += o.grad[b * out_dim + j];
                }
              });
}

namespace {

Tensor conv_impl(Graph& g, const char* op, const Tensor& x, const Tensor& w, std::size_t width,
                 const Tensor& bias) {
  const std::size_t out_channels = w.dim(0);
  if (bias.defined() && bias.shape() != Shape{out_channels}) {
    throw DimensionError(std::string(op) + ": bias " + shape_string(bias.shape()) +
                         " does not match " + std::to_string(out_channels) + " output channels");
  }
  const auto s = conv_shape(x, out_channels, width);
  std::vector<double> out(s.batch * s.out_channels * s.time);
  kernels::conv1d_forward(s, x.data(), w.data(),
                          bias.defined() ? bias.data() : std::span<const double>{}, out);
  std::vector<Tensor> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  auto* xi = x.impl();
  auto* wi = w.impl();
  auto* bi = bias.defined() ? bias.impl() : nullptr;
  return emit(g, op, {s.batch, s.out_channels, s.time}, std::move(out), std::move(inputs),
              [=](const TensorImpl& o) {
                if (xi->requires_grad) kernels::conv1d_backward_input(s, o.grad, wi->data, xi->grad);
                const bool want_b = bi && bi->requires_grad;
                if (wi->requires_grad) {
                  kernels::conv1d_backward_weight(
                      s, o.grad, xi->data, wi->grad,
                      want_b ? std::span<double>(bi->grad) : std::span<double>{});
                } else if (want_b) {
                  for (std::size_t b = 0; b < s.batch; ++b)
                    for (std::size_t c = 0; c < s.out_channels; ++c)
                      for (std::size_t t = 0; t < s.time; ++t)
                        bi->grad[c] += o.grad[(b * s.out_channels + c) * s.time + t];
                }
              });
}

}  // namespace

Tensor linear_time(Graph& g, const Tensor& x, const Tensor& weight, const Tensor& bias) {
  expect_rank(x, 3, "linear_time", "input");
  expect_rank(weight, 2, "linear_time", "weight");
  if (x.dim(1) != weight.dim(1)) {
    throw DimensionError("linear_time: input " + shape_string(x.shape()) +
                         " does not match weight " + shape_string(weight.shape()));
  }
  return conv_impl(g, "linear_time", x, weight, 1, bias);
}

Tensor conv1d_same(Graph& g, const Tensor& x, const Tensor& kernels, const Tensor& bias) {
  expect_rank(x, 3, "conv1d_same", "input");
  expect_rank(kernels, 3, "conv1d_same", "kernels");
  if (kernels.dim(2) % 2 == 0) {
    throw ConfigError("conv1d_same: kernel width must be odd, got " + std::to_string(kernels.dim(2)));
  }
  if (x.dim(1) != kernels.dim(1)) {
    throw DimensionError("conv1d_same: input " + shape_string(x.shape()) +
                         " does not match kernels " + shape_string(kernels.shape()));
  }
  return conv_impl(g, "conv1d_same", x, kernels, kernels.dim(2), bias);
}

Tensor batchnorm_time(Graph& g, const Tensor& x, const TimeMask& mask, const Tensor& gamma,
                      const Tensor& beta, Mode mode, BatchNormState& state) {
  expect_rank(x, 3, "batchnorm_time", "input");
  expect_mask(x, mask, 2, "batchnorm_time");
  const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2);
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C} || state.running_mean.size() != C ||
      state.running_var.size() != C) {
    throw DimensionError("batchnorm_time: parameters do not match " + std::to_string(C) +
                         " channels");
  }
  if (mode == Mode::eval && !state.populated) {
    throw StateError("batchnorm_time: eval mode before running statistics were populated");
  }

  std::size_t count = 0;
  for (auto len : mask.lengths()) count += len;
  const auto n = static_cast<double>(count);

  auto xhat = std::make_shared<std::vector<double>>(x.size(), 0.0);
  auto inv_std = std::make_shared<std::vector<double>>(C);
  std::vector<double> out(x.size(), 0.0);
  const auto xs = x.data();

  for (std::size_t c = 0; c < C; ++c) {
    double mu = 0.0, var = 0.0;
    if (mode == Mode::train) {
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < mask.length(b); ++t) mu += xs[(b * C + c) * T + t];
      mu /= n;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < mask.length(b); ++t) {
          const double d = xs[(b * C + c) * T + t] - mu;
          var += d * d;
        }
      var /= n;
      const double unbiased = count > 1 ? var * n / (n - 1.0) : var;
      state.running_mean[c] =
          BatchNormState::kMomentum * state.running_mean[c] + (1.0 - BatchNormState::kMomentum) * mu;
      state.running_var[c] = BatchNormState::kMomentum * state.running_var[c] +
                             (1.0 - BatchNormState::kMomentum) * unbiased;
    } else {
      mu = state.running_mean[c];
      var = state.running_var[c];
    }
    const double inv = 1.0 / std::sqrt(var + BatchNormState::kEpsilon);
    (*inv_std)[c] = inv;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < mask.length(b); ++t) {
        const std::size_t i = (b * C + c) * T + t;
        (*xhat)[i] = (xs[i] - mu) * inv;
        out[i] = gamma[c] * (*xhat)[i] + beta[c];
      }
  }
  if (mode == Mode::train) state.populated = true;

  auto* xi = x.impl();
  auto* gi = gamma.impl();
  auto* bi = beta.impl();
  const auto lengths = mask.lengths();
  return emit(g, "batchnorm_time", x.shape(), std::move(out), {x, gamma, beta},
              [=](const TensorImpl& o) {
                for (std::size_t c = 0; c < C; ++c) {
                  double sum_dy = 0.0, sum_dy_xhat = 0.0;
                  for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t t = 0; t < lengths[b]; ++t) {
                      const std::size_t i = (b * C + c) * T + t;
                      sum_dy += o.grad[i];
                      sum_dy_xhat += o.grad[i] * (*xhat)[i];
                    }
                  if (gi->requires_grad) gi->grad[c] += sum_dy_xhat;
                  if (bi->requires_grad) bi->grad[c] += sum_dy;
                  if (!xi->requires_grad) continue;
                  const double gmul = gi->data[c] * (*inv_std)[c];
                  for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t t = 0; t < lengths[b]; ++t) {
                      const std::size_t i = (b * C + c) * T + t;
                      if (mode == Mode::train) {
                        xi->grad[i] +=
                            gmul * (o.grad[i] - sum_dy / n - (*xhat)[i] * sum_dy_xhat / n);
                      } else {
                        xi->grad[i] += gmul * o.grad[i];
                      }
                    }
                }
              });
}

Tensor activation(Graph& g, const Tensor& x, Activation kind) {
  std::vector<double> out(x.size());
  const auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xs[i];
    switch (kind) {
      case Activation::sigmoid:
        if (v >= 0) {
          out[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
          const double e = std::exp(v);
          out[i] = e / (1.0 + e);
        }
        break;
      case Activation::tanh:
        out[i] = std::tanh(v);
        break;
      case Activation::relu:
        out[i] = v > 0 ? v : 0.0;
        break;
    }
  }
  auto* xi = x.impl();
  return emit(g, "activation", x.shape(), std::move(out), {x}, [=](const TensorImpl& o) {
    for (std::size_t i = 0; i < o.data.size(); ++i) {
      const double y = o.data[i];
      double d = 0.0;
      switch (kind) {
        case Activation::sigmoid: d = y * (1.0 - y); break;
        case Activation::tanh: d = 1.0 - y * y; break;
        case Activation::relu: d = xi->data[i] > 0 ? 1.0 : 0.0; break;
      }
      xi->grad[i] += d * o.grad[i];
    }
  });
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  expect_same(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  auto* ai = a.impl();
  auto* bi = b.impl();
  return emit(g, "add", a.shape(), std::move(out), {a, b}, [=](const TensorImpl& o) {
    if (ai->requires_grad) add_into(ai, o.grad);
    if (bi->requires_grad) add_into(bi, o.grad);
  });
}

Tensor sub(Graph& g, const Tensor& a, const Tensor& b) {
  expect_same(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  auto* ai = a.impl();
  auto* bi = b.impl();
  return emit(g, "sub", a.shape(), std::move(out), {a, b}, [=](const TensorImpl& o) {
    if (ai->requires_grad) add_into(ai, o.grad);
    if (bi->requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) bi->grad[i] -= o.grad[i];
  });
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  expect_same(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  auto* ai = a.impl();
  auto* bi = b.impl();
  return emit(g, "mul", a.shape(), std::move(out), {a, b}, [=](const TensorImpl& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      if (ai->requires_grad) ai->grad[i] += o.grad[i] * bi->data[i];
      if (bi->requires_grad) bi->grad[i] += o.grad[i] * ai->data[i];
    }
  });
}

Tensor softmax_masked(Graph& g, const Tensor& scores, const TimeMask& mask) {
  expect_rank(scores, 2, "softmax_masked", "scores");
  expect_mask(scores, mask, 1, "softmax_masked");
  const std::size_t B = scores.dim(0), T = scores.dim(1);
  std::vector<double> out(B * T, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t len = mask.length(b);
    double hi = scores[b * T];
    for (std::size_t t = 1; t < len; ++t) hi = std::max(hi, scores[b * T + t]);
    double total = 0.0;
    for (std::size_t t = 0; t < len; ++t) {
      out[b * T + t] = std::exp(scores[b * T + t] - hi);
      total += out[b * T + t];
    }
    for (std::size_t t = 0; t < len; ++t) out[b * T + t] /= total;
  }
  auto* si = scores.impl();
  const auto lengths = mask.lengths();
  return emit(g, "softmax_masked", scores.shape(), std::move(out), {scores},
              [=](const TensorImpl& o) {
                for (std::size_t b = 0; b < B; ++b) {
                  double dot = 0.0;
                  for (std::size_t t = 0; t < lengths[b]; ++t)
                    dot += o.data[b * T + t] * o.grad[b * T + t];
                  for (std::size_t t = 0; t < lengths[b]; ++t)
                    si->grad[b * T + t] += o.data[b * T + t] * (o.grad[b * T + t] - dot);
                }
              });
}

Tensor concat_channels(Graph& g, std::span<const Tensor> xs) {
  if (xs.empty()) throw DimensionError("concat_channels: empty input list");
  const Tensor& first = xs.front();
  if (first.rank() < 2) {
    throw DimensionError("concat_channels: inputs need rank >= 2, got " +
                         shape_string(first.shape()));
  }
  const std::size_t outer = first.dim(0);
  const std::size_t inner = first.rank() == 3 ? first.dim(2) : 1;
  std::size_t channels = 0;
  for (const auto& x : xs) {
    if (x.rank() != first.rank() || x.dim(0) != outer ||
        (x.rank() == 3 && x.dim(2) != inner)) {
      throw DimensionError("concat_channels: " + shape_string(x.shape()) + " incompatible with " +
                           shape_string(first.shape()));
    }
    channels += x.dim(1);
  }
  Shape shape = first.shape();
  shape[1] = channels;
  std::vector<double> out(outer * channels * inner);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& x : xs) {
    offsets.push_back(offset);
    const std::size_t block = x.dim(1) * inner;
    for (std::size_t b = 0; b < outer; ++b) {
      std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(b * block), block,
                  out.begin() + static_cast<std::ptrdiff_t>(b * channels * inner + offset * inner));
    }
    offset += x.dim(1);
  }
  std::vector<Tensor> inputs(xs.begin(), xs.end());
  std::vector<TensorImpl*> impls;
  for (const auto& x : xs) impls.push_back(x.impl());
  return emit(g, "concat_channels", std::move(shape), std::move(out), std::move(inputs),
              [=](const TensorImpl& o) {
                for (std::size_t k = 0; k < impls.size(); ++k) {
                  auto* xi = impls[k];
                  if (!xi->requires_grad) continue;
                  const std::size_t block = xi->shape[1] * inner;
                  for (std::size_t b = 0; b < outer; ++b)
                    for (std::size_t j = 0; j < block; ++j)
                      xi->grad[b * block + j] += o.grad[b * channels * inner + offsets[k] * inner + j];
                }
              });
}

Tensor masked_mean_time(Graph& g, const Tensor& x, const TimeMask& mask) {
  expect_rank(x, 3, "masked_mean_time", "input");
  expect_mask(x, mask, 2, "masked_mean_time");
  const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2);
  std::vector<double> out(B * C);
  std::vector<double> frames;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      // Incremental mean over the sorted values: independent of frame order
      // and exact for constant sequences.
      const auto first = x.data().begin() + static_cast<std::ptrdiff_t>((b * C + c) * T);
      frames.assign(first, first + static_cast<std::ptrdiff_t>(mask.length(b)));
      std::sort(frames.begin(), frames.end());
      double m = 0.0;
      for (std::size_t n = 0; n < frames.size(); ++n) m += (frames[n] - m) / static_cast<double>(n + 1);
      out[b * C + c] = m;
    }
  auto* xi = x.impl();
  const auto lengths = mask.lengths();
  return emit(g, "masked_mean_time", {B, C}, std::move(out), {x}, [=](const TensorImpl& o) {
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c) {
        const double share = o.grad[b * C + c] / static_cast<double>(lengths[b]);
        for (std::size_t t = 0; t < lengths[b]; ++t) xi->grad[(b * C + c) * T + t] += share;
      }
  });
}

Tensor apply_mask(Graph& g, const Tensor& x, const TimeMask& mask) {
  expect_rank(x, 3, "apply_mask", "input");
  expect_mask(x, mask, 2, "apply_mask");
  const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2);
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < mask.length(b); ++t) out[(b * C + c) * T + t] = x[(b * C + c) * T + t];
  auto* xi = x.impl();
  const auto lengths = mask.lengths();
  return emit(g, "apply_mask", x.shape(), std::move(out), {x}, [=](const TensorImpl& o) {
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < lengths[b]; ++t)
          xi->grad[(b * C + c) * T + t] += o.grad[(b * C + c) * T + t];
  });
}

Tensor weighted_sum_time(Graph& g, const Tensor& h, const Tensor& weights, const TimeMask& mask) {
  expect_rank(h, 3, "weighted_sum_time", "input");
  expect_rank(weights, 2, "weighted_sum_time", "weights");
  expect_mask(h, mask, 2, "weighted_sum_time");
  expect_mask(weights, mask, 1, "weighted_sum_time");
  const std::size_t B = h.dim(0), C = h.dim(1), T = h.dim(2);
  std::vector<double> out(B * C);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      double total = 0.0;
      for (std::size_t t = 0; t < mask.length(b); ++t)
        total += weights[b * T + t] * h[(b * C + c) * T + t];
      out[b * C + c] = total;
    }
  auto* hi = h.impl();
  auto* wi = weights.impl();
  const auto lengths = mask.lengths();
  return emit(g, "weighted_sum_time", {B, C}, std::move(out), {h, weights},
              [=](const TensorImpl& o) {
                for (std::size_t b = 0; b < B; ++b)
                  for (std::size_t c = 0; c < C; ++c) {
                    const double go = o.grad[b * C + c];
                    for (std::size_t t = 0; t < lengths[b]; ++t) {
                      const std::size_t i = (b * C + c) * T + t;
                      if (hi->requires_grad) hi->grad[i] += wi->data[b * T + t] * go;
                      if (wi->requires_grad) wi->grad[b * T + t] += hi->data[i] * go;
                    }
                  }
              });
}

Tensor time_step(Graph& g, const Tensor& x, std::size_t t) {
  expect_rank(x, 3, "time_step", "input");
  const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2);
  if (t >= T) throw DimensionError("time_step: index " + std::to_string(t) + " out of " + std::to_string(T));
  std::vector<double> out(B * C);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) out[b * C + c] = x[(b * C + c) * T + t];
  auto* xi = x.impl();
  return emit(g, "time_step", {B, C}, std::move(out), {x}, [=](const TensorImpl& o) {
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c) xi->grad[(b * C + c) * T + t] += o.grad[b * C + c];
  });
}

Tensor stack_time(Graph& g, std::span<const Tensor> steps) {
  if (steps.empty()) throw DimensionError("stack_time: no steps");
  const Shape step_shape = steps.front().shape();
  if (step_shape.size() != 2) {
    throw DimensionError("stack_time: steps must be rank 2, got " + shape_string(step_shape));
  }
  const std::size_t B = step_shape[0], C = step_shape[1], T = steps.size();
  std::vector<double> out(B * C * T);
  for (std::size_t t = 0; t < T; ++t) {
    if (steps[t].shape() != step_shape) {
      throw DimensionError("stack_time: step " + std::to_string(t) + " has shape " +
                           shape_string(steps[t].shape()));
    }
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c) out[(b * C + c) * T + t] = steps[t][b * C + c];
  }
  std::vector<Tensor> inputs(steps.begin(), steps.end());
  std::vector<TensorImpl*> impls;
  for (const auto& s : steps) impls.push_back(s.impl());
  return emit(g, "stack_time", {B, C, T}, std::move(out), std::move(inputs),
              [=](const TensorImpl& o) {
                for (std::size_t t = 0; t < T; ++t) {
                  if (!impls[t]->requires_grad) continue;
                  for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t c = 0; c < C; ++c)
                      impls[t]->grad[b * C + c] += o.grad[(b * C + c) * T + t];
                }
              });
}

Tensor reverse_valid(Graph& g, const Tensor& x, const TimeMask& mask) {
  expect_rank(x, 3, "reverse_valid", "input");
  expect_mask(x, mask, 2, "reverse_valid");
  const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2);
  const auto lengths = mask.lengths();
  auto source = [=](std::size_t b, std::size_t t) { return t < lengths[b] ? lengths[b] - 1 - t : t; };
  std::vector<double> out(x.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t) out[(b * C + c) * T + t] = x[(b * C + c) * T + source(b, t)];
  auto* xi = x.impl();
  return emit(g, "reverse_valid", x.shape(), std::move(out), {x}, [=](const TensorImpl& o) {
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T; ++t)
          xi->grad[(b * C + c) * T + source(b, t)] += o.grad[(b * C + c) * T + t];
  });
}

Tensor reshape(Graph& g, const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                         shape_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto* xi = x.impl();
  return emit(g, "reshape", std::move(shape), std::move(out), {x},
              [=](const TensorImpl& o) { add_into(xi, o.grad); });
}

Tensor sum(Graph& g, const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  auto* xi = x.impl();
  return emit(g, "sum", {}, {total}, {x}, [=](const TensorImpl& o) {
    for (auto& gv : xi->grad) gv += o.grad[0];
  });
}

Tensor mean(Graph& g, const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const auto n = static_cast<double>(x.size());
  auto* xi = x.impl();
  return emit(g, "mean", {}, {total / n}, {x}, [=](const TensorImpl& o) {
    for (auto& gv : xi->grad) gv += o.grad[0] / n;
  });
}

Tensor binary_cross_entropy(Graph& g, const Tensor& probabilities, const Tensor& targets) {
  expect_same(probabilities, targets, "binary_cross_entropy");
  constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
  const auto n = static_cast<double>(probabilities.size());
  double total = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double y = targets[i];
    if (y != 0.0 && y != 1.0) {
      throw PreconditionError("binary_cross_entropy: target " + std::to_string(y) +
                              " at index " + std::to_string(i) + " is not 0 or 1");
    }
    const double p = std::clamp(probabilities[i], lo, hi);
    total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  auto* pi = probabilities.impl();
  auto* ti = targets.impl();
  return emit(g, "binary_cross_entropy", {}, {total / n}, {probabilities, targets},
              [=](const TensorImpl& o) {
                if (!pi->requires_grad) return;
                for (std::size_t i = 0; i < pi->data.size(); ++i) {
                  const double p = pi->data[i];
                  if (p < lo || p > hi) continue;
                  const double y = ti->data[i];
                  pi->grad[i] += o.grad[0] * (-y / p + (1.0 - y) / (1.0 - p)) / n;
                }
              });
}

}  // namespace vidseq::ops
