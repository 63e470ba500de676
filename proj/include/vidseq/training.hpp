#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vidseq/config.hpp"
#include "vidseq/dataio.hpp"
#include "vidseq/metrics.hpp"
#include "vidseq/models.hpp"

namespace vidseq::harness {

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_gap = 0.0;
  double max_grad_norm = 0.0;
  std::size_t clipped_steps = 0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  double best_gap = -1.0;
  std::string checkpoint_path;
  std::string log_path;
};

struct TrainHooks {
  /// Called after every epoch; returning false ends training early.
  std::function<bool(const EpochStats&)> on_epoch;
};

/// Metric log line: `epoch<TAB>train_loss<TAB>val_gap`.
std::string format_log_line(const EpochStats& stats);

/// Fits the VLAD codebook for vlad_mlp models on a seeded frame subsample.
void prepare_model(models::Model& model, const dataio::Dataset& train, const TrainConfig& config);

/// Trains `model` in place. When out_dir is set, writes `checkpoint.bin`
/// (best validation GAP so far) and `metrics.tsv` there.
TrainResult train_model(models::Model& model, const TrainConfig& config, const dataio::Dataset& train,
                        const dataio::Dataset& val, const TrainHooks& hooks = {});

/// Reads data_path/val_path from the config, builds the model, trains.
TrainResult train(const TrainConfig& config, const TrainHooks& hooks = {});

/// Eval-mode probabilities for every record, in dataset order.
/// top_k == 0 keeps the full vocabulary.
metrics::PredictionSet predict_dataset(models::Model& model, const dataio::Dataset& data,
                                       std::size_t batch_size, std::size_t top_k);

void predict(const std::string& checkpoint_path, const std::string& data_path, const std::string& out_path,
             std::size_t top_k = metrics::kDefaultTopK, bool full_scores = false, std::size_t batch_size = 32);

/// Per-video, per-class weighted mean of the inputs' scores (a class absent
/// from one input counts as 0 there). Empty weights mean uniform. Video
/// order follows the first input. top_k == 0 keeps every class.
metrics::PredictionSet ensemble_average(const std::vector<metrics::PredictionSet>& inputs,
                                        std::vector<double> weights = {},
                                        std::size_t top_k = metrics::kDefaultTopK);

void ensemble_files(const std::vector<std::string>& input_paths, const std::vector<double>& weights,
                    const std::string& out_path, std::size_t top_k = metrics::kDefaultTopK);

/// Attaches ground truth from the dataset to each predicted video.
metrics::PredictionSet attach_labels(metrics::PredictionSet preds, const dataio::Dataset& data);

metrics::GapResult evaluate(const std::string& predictions_path, const std::string& data_path,
                            std::size_t k = metrics::kDefaultTopK);

}  // namespace vidseq::harness
