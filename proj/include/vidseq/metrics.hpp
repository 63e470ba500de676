#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vidseq/tensor.hpp"

namespace vidseq::metrics {

inline constexpr std::size_t kDefaultTopK = 20;

struct ScoredClass {
  std::uint32_t class_index = 0;
  double score = 0.0;

  bool operator==(const ScoredClass&) const = default;
};

struct VideoPrediction {
  std::string video_id;
  /// Sorted by score descending, ties by ascending class index.
  std::vector<ScoredClass> entries;
  /// Ground-truth positive classes; empty when only predictions are known.
  std::vector<std::uint32_t> labels;

  bool operator==(const VideoPrediction&) const = default;
};

struct PredictionSet {
  std::vector<VideoPrediction> videos;

  bool operator==(const PredictionSet&) const = default;
};

struct GapResult {
  double gap = 0.0;
  std::size_t pooled_pairs = 0;
  std::size_t total_positives = 0;
};

/// Global average precision over the pooled top-k pairs of every video.
/// Ties in the pooled ranking break by video order, then class index. The
/// denominator is the total number of ground-truth positives.
GapResult gap_at_k(const PredictionSet& preds, std::size_t k = kDefaultTopK);

/// probabilities[batch x vocab] -> the k best classes per video.
PredictionSet topk_predictions(const Tensor& probabilities, std::size_t k,
                               const std::vector<std::string>& video_ids);

/// Sort entries by score descending, ties by class ascending.
void sort_entries(std::vector<ScoredClass>& entries);

/// Text interchange format: `video_id class:score ...` per line with scores
/// printed to 6 decimals. Scores are rounded to the printed precision and
/// re-sorted before writing so a file survives read -> write unchanged.
void write_predictions(const std::string& path, const PredictionSet& preds);
std::string format_predictions(const PredictionSet& preds);
PredictionSet read_predictions(const std::string& path);
PredictionSet parse_predictions(const std::string& text);

/// Round to the precision used by the prediction file.
double quantize_score(double score);

}  // namespace vidseq::metrics
