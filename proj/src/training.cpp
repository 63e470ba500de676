#include "vidseq/training.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "vidseq/checkpoint.hpp"
#include "vidseq/errors.hpp"
#include "vidseq/optimizer.hpp"

namespace vidseq::harness {

namespace {

void check_compatible(const models::ModelSpec& spec, const dataio::DatasetHeader& header, const char* what) {
  if (header.vocab_size != spec.vocab_size || header.visual_dim != spec.visual_dim ||
      header.audio_dim != spec.audio_dim) {
    throw ConfigError(std::string(what) + " dims (vocab " + std::to_string(header.vocab_size) + ", visual " +
                      std::to_string(header.visual_dim) + ", audio " + std::to_string(header.audio_dim) +
                      ") do not match the model (vocab " + std::to_string(spec.vocab_size) + ", visual " +
                      std::to_string(spec.visual_dim) + ", audio " + std::to_string(spec.audio_dim) + ")");
  }
}

template <class Fn>
void for_each_batch(const dataio::Dataset& data, const std::vector<std::size_t>& order, std::size_t batch_size,
                    Fn&& fn) {
  std::vector<const dataio::VideoRecord*> chunk;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    chunk.clear();
    const std::size_t end = std::min(order.size(), start + batch_size);
    for (std::size_t i = start; i < end; ++i) chunk.push_back(&data.records[order[i]]);
    fn(dataio::pad_batch(data.header, chunk));
  }
}

std::string describe_difference(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::vector<std::string> only_a, only_b;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(only_a));
  std::set_difference(b.begin(), b.end(), a.begin(), a.end(), std::back_inserter(only_b));
  auto list = [](const std::vector<std::string>& ids) {
    std::string s;
    for (std::size_t i = 0; i < ids.size() && i < 5; ++i) s += (i ? "," : "") + ids[i];
    if (ids.size() > 5) s += ",...";
    return s.empty() ? std::string("-") : s;
  };
  return "only in first: " + list(only_a) + "; only in other: " + list(only_b);
}

}  // namespace

std::string format_log_line(const EpochStats& s) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu\t%.8f\t%.8f\n", s.epoch, s.train_loss, s.val_gap);
  return buf;
}

void prepare_model(models::Model& model, const dataio::Dataset& train, const TrainConfig& config) {
  if (model.spec().kind != models::ModelKind::vlad_mlp) return;
  const std::size_t D = train.header.feature_dim();
  std::vector<std::pair<std::size_t, std::size_t>> frames;  // (record, frame)
  for (std::size_t r = 0; r < train.records.size(); ++r)
    for (std::size_t t = 0; t < train.records[r].num_frames; ++t) frames.emplace_back(r, t);
  std::mt19937_64 rng(config.seed ^ 0x5bd1e995ULL);
  if (frames.size() > config.kmeans_sample_limit) {
    std::shuffle(frames.begin(), frames.end(), rng);
    frames.resize(config.kmeans_sample_limit);
  }
  std::vector<double> samples;
  samples.reserve(frames.size() * D);
  for (auto [r, t] : frames) {
    const float* f = train.records[r].features.data() + t * D;
    samples.insert(samples.end(), f, f + D);
  }
  auto fit = vlad::kmeans_fit({samples, frames.size(), D}, model.spec().vlad_clusters, config.kmeans_max_iter,
                              config.seed);
  model.set_codebook(std::move(fit.codebook));
}

TrainResult train_model(models::Model& model, const TrainConfig& config, const dataio::Dataset& train,
                        const dataio::Dataset& val, const TrainHooks& hooks) {
  config.validate();
  check_compatible(model.spec(), train.header, "training data");
  check_compatible(model.spec(), val.header, "validation data");
  if (train.records.empty()) throw ConfigError("training data holds no videos");
  if (model.spec().kind == models::ModelKind::vlad_mlp && !model.codebook()) prepare_model(model, train, config);

  TrainResult result;
  std::ofstream log;
  if (!config.out_dir.empty()) {
    std::filesystem::create_directories(config.out_dir);
    result.checkpoint_path = (std::filesystem::path(config.out_dir) / "checkpoint.bin").string();
    result.log_path = (std::filesystem::path(config.out_dir) / "metrics.tsv").string();
    log.open(result.log_path, std::ios::trunc);
    if (!log) throw IoError("cannot open " + result.log_path);
  }

  const AdamConfig adam = config.adam();
  OptimizerState state = OptimizerState::for_parameters(model.parameters());
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train.records.size());

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats stats;
    stats.epoch = epoch;
    double loss_sum = 0.0;
    for_each_batch(train, order, config.batch_size, [&](const dataio::Batch& batch) {
      model.zero_grad();
      Graph g;
      const auto out = model.forward(g, batch.visual, batch.audio, batch.mask, ops::Mode::train);
      const Tensor loss = bce_loss(g, out.probabilities, batch.labels);
      g.backward(loss);
      const auto info = adam_step(model.parameters(), state, adam);
      stats.max_grad_norm = std::max(stats.max_grad_norm, info.grad_norm);
      stats.clipped_steps += info.clipped ? 1 : 0;
      loss_sum += loss.item() * static_cast<double>(batch.mask.batch());
    });
    model.zero_grad();
    stats.train_loss = loss_sum / static_cast<double>(train.records.size());

    auto preds = attach_labels(predict_dataset(model, val, config.eval_batch_size,
                                               std::min<std::size_t>(metrics::kDefaultTopK, model.spec().vocab_size)),
                               val);
    stats.val_gap = metrics::gap_at_k(preds).gap;
    result.history.push_back(stats);

    if (log.is_open()) {
      log << format_log_line(stats);
      log.flush();
    }
    if (stats.val_gap > result.best_gap) {
      result.best_gap = stats.val_gap;
      result.best_epoch = epoch;
      if (!result.checkpoint_path.empty()) models::save_checkpoint(result.checkpoint_path, model);
    }
    if (hooks.on_epoch && !hooks.on_epoch(stats)) break;
  }
  return result;
}

TrainResult train(const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (config.data_path.empty()) throw ConfigError("no training data path configured");
  const auto train_data = dataio::read_records(config.data_path);
  check_compatible(config.model, train_data.header, "training data");
  models::Model model(config.model);
  if (config.val_path.empty() || config.val_path == config.data_path) {
    return train_model(model, config, train_data, train_data, hooks);
  }
  const auto val_data = dataio::read_records(config.val_path);
  return train_model(model, config, train_data, val_data, hooks);
}

metrics::PredictionSet predict_dataset(models::Model& model, const dataio::Dataset& data, std::size_t batch_size,
                                       std::size_t top_k) {
  check_compatible(model.spec(), data.header, "prediction data");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  const std::size_t vocab = model.spec().vocab_size;
  const std::size_t k = top_k == 0 ? vocab : std::min(top_k, vocab);
  std::vector<std::size_t> order(data.records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  metrics::PredictionSet out;
  for_each_batch(data, order, batch_size, [&](const dataio::Batch& batch) {
    Graph g;
    const auto probs = model.forward(g, batch.visual, batch.audio, batch.mask, ops::Mode::eval).probabilities;
    auto part = metrics::topk_predictions(probs, k, batch.ids);
    for (auto& v : part.videos) out.videos.push_back(std::move(v));
  });
  return out;
}

void predict(const std::string& checkpoint_path, const std::string& data_path, const std::string& out_path,
             std::size_t top_k, bool full_scores, std::size_t batch_size) {
  auto model = models::load_checkpoint(checkpoint_path);
  const auto data = dataio::read_records(data_path);
  if (data.header.vocab_size != model.spec().vocab_size) {
    throw ConfigError("data vocabulary " + std::to_string(data.header.vocab_size) + " differs from checkpoint " +
                      std::to_string(model.spec().vocab_size));
  }
  metrics::write_predictions(out_path, predict_dataset(model, data, batch_size, full_scores ? 0 : top_k));
}

metrics::PredictionSet ensemble_average(const std::vector<metrics::PredictionSet>& inputs, std::vector<double> weights,
                                        std::size_t top_k) {
  if (inputs.empty()) throw InputError("ensemble needs at least one prediction file");
  if (weights.empty()) weights.assign(inputs.size(), 1.0);
  if (weights.size() != inputs.size()) {
    throw ConfigError("ensemble got " + std::to_string(weights.size()) + " weights for " +
                      std::to_string(inputs.size()) + " inputs");
  }
  double total_weight = 0.0;
  for (double w : weights) {
    if (!(w >= 0) || !std::isfinite(w)) throw ConfigError("ensemble weights must be finite and nonnegative");
    total_weight += w;
  }
  if (!(total_weight > 0)) throw ConfigError("ensemble weights sum to zero");

  std::vector<std::map<std::string, const metrics::VideoPrediction*>> index(inputs.size());
  std::vector<std::set<std::string>> ids(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (const auto& v : inputs[i].videos) {
      if (!index[i].emplace(v.video_id, &v).second) throw InputError("duplicate video id '" + v.video_id + "'");
      ids[i].insert(v.video_id);
    }
    if (ids[i] != ids[0]) {
      throw InputError("ensemble input " + std::to_string(i) + " covers a different video set (" +
                       describe_difference(ids[0], ids[i]) + ")");
    }
  }

  metrics::PredictionSet out;
  for (const auto& first : inputs[0].videos) {
    std::map<std::uint32_t, double> scores;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      for (const auto& e : index[i].at(first.video_id)->entries) scores[e.class_index] += 0.0;
    }
    for (auto& [cls, score] : scores) {
      double acc = 0.0;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto& entries = index[i].at(first.video_id)->entries;
        const auto it = std::find_if(entries.begin(), entries.end(),
                                     [cls = cls](const metrics::ScoredClass& e) { return e.class_index == cls; });
        if (it != entries.end()) acc += weights[i] * it->score;
      }
      score = acc / total_weight;
    }
    metrics::VideoPrediction video;
    video.video_id = first.video_id;
    video.labels = first.labels;
    for (const auto& [cls, score] : scores) video.entries.push_back({cls, score});
    metrics::sort_entries(video.entries);
    if (top_k > 0 && video.entries.size() > top_k) video.entries.resize(top_k);
    out.videos.push_back(std::move(video));
  }
  return out;
}

void ensemble_files(const std::vector<std::string>& input_paths, const std::vector<double>& weights,
                    const std::string& out_path, std::size_t top_k) {
  std::vector<metrics::PredictionSet> inputs;
  for (const auto& p : input_paths) inputs.push_back(metrics::read_predictions(p));
  metrics::write_predictions(out_path, ensemble_average(inputs, weights, top_k));
}

metrics::PredictionSet attach_labels(metrics::PredictionSet preds, const dataio::Dataset& data) {
  std::map<std::string, const dataio::VideoRecord*> by_id;
  for (const auto& r : data.records) by_id.emplace(r.id, &r);
  for (auto& v : preds.videos) {
    const auto it = by_id.find(v.video_id);
    if (it == by_id.end()) throw InputError("predicted video '" + v.video_id + "' is not in the dataset");
    v.labels = it->second->labels;
  }
  return preds;
}

metrics::GapResult evaluate(const std::string& predictions_path, const std::string& data_path, std::size_t k) {
  const auto data = dataio::read_records(data_path);
  return metrics::gap_at_k(attach_labels(metrics::read_predictions(predictions_path), data), k);
}

}  // namespace vidseq::harness
