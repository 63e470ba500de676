#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "vidseq/models.hpp"
#include "vidseq/optimizer.hpp"

namespace vidseq::harness {

inline constexpr int kConfigVersion = 1;

struct TrainConfig {
  models::ModelSpec model;
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  std::size_t epochs = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Unset with clip_auto: 5.0 for recurrent stacks of depth >= 4, else off.
  std::optional<double> clip_norm;
  bool clip_auto = true;
  std::uint64_t seed = 0;
  std::size_t eval_batch_size = 32;
  std::size_t kmeans_max_iter = 25;
  std::size_t kmeans_sample_limit = 100000;

  std::string data_path;
  std::string val_path;  // empty: validate on the training data
  std::string out_dir;

  void validate() const;
  std::optional<double> effective_clip_norm() const;
  AdamConfig adam() const;
};

/// Versioned `key = value` text; '#' starts a comment. The first setting
/// must be `version = 1`.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::string& path);
std::string format_train_config(const TrainConfig& config);

}  // namespace vidseq::harness
