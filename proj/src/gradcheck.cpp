#include "vidseq/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "vidseq/ops.hpp"

namespace vidseq::gradcheck {

bool Report::passed() const {
  return std::all_of(blocks.begin(), blocks.end(), [](const BlockReport& b) { return b.passed; });
}

double Report::worst() const {
  double w = 0.0;
  for (const auto& b : blocks) w = std::max(w, b.worst_rel_error);
  return w;
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kScaleFloor});
  return std::abs(analytic - numeric) / scale;
}

Report check_gradients(std::vector<NamedTensor>& params, const LossFn& loss, std::size_t sample_count,
                       double tolerance, std::uint64_t seed, double step) {
  for (auto& p : params) p.tensor.zero_grad();
  {
    Graph g;
    g.backward(loss(g));
  }
  Report report;
  report.tolerance = tolerance;
  std::mt19937_64 rng(seed);
  for (auto& p : params) {
    BlockReport block;
    block.name = p.name;
    const std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    double norm = 0.0;
    for (double v : analytic) norm += v * v;
    block.grad_norm = std::sqrt(norm);

    std::vector<std::size_t> indices(p.tensor.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    std::shuffle(indices.begin(), indices.end(), rng);
    indices.resize(std::min(sample_count, indices.size()));

    auto values = p.tensor.mutable_data();
    for (auto i : indices) {
      const double original = values[i];
      values[i] = original + step;
      double plus = 0.0, minus = 0.0;
      {
        Graph g;
        plus = loss(g).item();
      }
      values[i] = original - step;
      {
        Graph g;
        minus = loss(g).item();
      }
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * step);
      const double err = relative_error(analytic[i], numeric);
      if (err >= tolerance) {
        // A ReLU or clamp boundary inside [x - step, x + step] shows up as
        // one-sided slopes that disagree; such entries have no usable
        // central difference.
        Graph g;
        const double center = loss(g).item();
        const double right = (plus - center) / step;
        const double left = (center - minus) / step;
        if (relative_error(right, left) > kKinkThreshold) {
          ++block.skipped;
          continue;
        }
      }
      block.worst_rel_error = std::max(block.worst_rel_error, err);
      ++block.checked;
    }
    block.passed = block.worst_rel_error < tolerance;
    report.blocks.push_back(std::move(block));
  }
  return report;
}

Report grad_check(const models::ModelSpec& spec, std::size_t sample_count, double tolerance,
                  std::uint64_t seed) {
  models::Model model(spec);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t B = 2, T = 5;
  const TimeMask mask(T, {5, 3});

  auto random_tensor = [&](Shape shape) {
    std::vector<double> data(shape_size(shape));
    for (auto& v : data) v = normal(rng);
    return Tensor(std::move(shape), std::move(data));
  };
  const Tensor visual = random_tensor({B, spec.visual_dim, T});
  const Tensor audio = random_tensor({B, spec.audio_dim, T});
  std::vector<double> target_values(B * spec.vocab_size);
  for (auto& v : target_values) v = std::bernoulli_distribution(0.4)(rng) ? 1.0 : 0.0;
  const Tensor targets({B, spec.vocab_size}, std::move(target_values));

  if (spec.kind == models::ModelKind::vlad_mlp) {
    const std::size_t D = spec.feature_dim();
    std::vector<double> frames;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < mask.length(b); ++t) {
        for (std::size_t c = 0; c < spec.visual_dim; ++c) frames.push_back(visual[(b * spec.visual_dim + c) * T + t]);
        for (std::size_t c = 0; c < spec.audio_dim; ++c) frames.push_back(audio[(b * spec.audio_dim + c) * T + t]);
      }
    const std::size_t n = frames.size() / D;
    model.set_codebook(vlad::kmeans_fit({frames, n, D}, spec.vlad_clusters, 50, seed).codebook);
  }

  LossFn loss = [&](Graph& g) {
    const auto out = model.forward(g, visual, audio, mask, ops::Mode::train);
    return ops::binary_cross_entropy(g, out.probabilities, targets);
  };
  return check_gradients(model.parameters(), loss, sample_count, tolerance, seed);
}

std::string format_report(const Report& report) {
  std::string out;
  char buf[256];
  for (const auto& b : report.blocks) {
    std::snprintf(buf, sizeof buf, "%-40s checked=%-4zu kinks=%-2zu worst_rel_err=%.3e %s\n", b.name.c_str(), b.checked, b.skipped,
                  b.worst_rel_error, b.passed ? "ok" : "FAIL");
    out += buf;
  }
  return out;
}

}  // namespace vidseq::gradcheck
