#pragma once

// Independent reference computations used only by tests.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "vidseq/metrics.hpp"
#include "vidseq/tensor.hpp"

namespace vidseq::testing {

/// GAP computed the slow way: every pooled pair gets its rank by counting the
/// pairs that beat it, and the precision at each rank is recounted from scratch.
inline metrics::GapResult gap_oracle(const metrics::PredictionSet& preds, std::size_t k) {
  struct Pair {
    double score;
    std::size_t video;
    std::uint32_t cls;
    bool hit;
  };
  std::vector<Pair> pairs;
  std::size_t positives = 0;
  for (std::size_t v = 0; v < preds.videos.size(); ++v) {
    const auto& video = preds.videos[v];
    positives += video.labels.size();
    // top-k of this video by the same rule, chosen by repeated maximum search
    std::vector<bool> taken(video.entries.size(), false);
    for (std::size_t n = 0; n < k && n < video.entries.size(); ++n) {
      std::size_t best = video.entries.size();
      for (std::size_t i = 0; i < video.entries.size(); ++i) {
        if (taken[i]) continue;
        if (best == video.entries.size()) {
          best = i;
          continue;
        }
        const auto& a = video.entries[i];
        const auto& b = video.entries[best];
        if (a.score > b.score || (a.score == b.score && a.class_index < b.class_index)) best = i;
      }
      taken[best] = true;
      const auto& e = video.entries[best];
      bool hit = false;
      for (auto l : video.labels) hit = hit || l == e.class_index;
      pairs.push_back({e.score, v, e.class_index, hit});
    }
  }
  auto beats = [](const Pair& a, const Pair& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.video != b.video) return a.video < b.video;
    return a.cls < b.cls;
  };
  std::vector<const Pair*> ranked(pairs.size(), nullptr);
  for (const auto& p : pairs) {
    std::size_t rank = 0;
    for (const auto& q : pairs)
      if (&q != &p && beats(q, p)) ++rank;
    ranked[rank] = &p;
  }
  metrics::GapResult r;
  r.pooled_pairs = pairs.size();
  r.total_positives = positives;
  if (positives == 0) return r;
  double sum = 0.0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (!ranked[i]->hit) continue;
    std::size_t hits_so_far = 0;
    for (std::size_t j = 0; j <= i; ++j) hits_so_far += ranked[j]->hit ? 1 : 0;
    sum += static_cast<double>(hits_so_far) / static_cast<double>(i + 1);
  }
  r.gap = sum / static_cast<double>(positives);
  return r;
}

/// Random small prediction set: scores drawn from a coarse grid so ties occur.
inline metrics::PredictionSet random_prediction_set(std::mt19937_64& rng, std::size_t max_videos,
                                                    std::size_t max_classes) {
  std::uniform_int_distribution<std::size_t> nv(1, max_videos), nc(1, max_classes);
  metrics::PredictionSet set;
  const std::size_t videos = nv(rng);
  const std::size_t classes = nc(rng);
  std::uniform_int_distribution<int> grid(0, 20);
  std::bernoulli_distribution label(0.3);
  for (std::size_t v = 0; v < videos; ++v) {
    metrics::VideoPrediction p;
    p.video_id = "v" + std::to_string(v);
    for (std::uint32_t c = 0; c < classes; ++c) {
      p.entries.push_back({c, grid(rng) / 20.0});
      if (label(rng)) p.labels.push_back(c);
    }
    metrics::sort_entries(p.entries);
    set.videos.push_back(std::move(p));
  }
  return set;
}

/// Central-difference gradient of a scalar function of a flat vector.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double step = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double plus = f(x);
    x[i] = orig - step;
    const double minus = f(x);
    x[i] = orig;
    g[i] = (plus - minus) / (2.0 * step);
  }
  return g;
}

inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-7) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

inline std::vector<double> random_normal(std::mt19937_64& rng, std::size_t n, double sigma = 1.0) {
  std::normal_distribution<double> d(0.0, sigma);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace vidseq::testing
