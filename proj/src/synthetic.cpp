#include "vidseq/synthetic.hpp"

#include <algorithm>

#include "vidseq/errors.hpp"

namespace vidseq::synthetic {

std::size_t sample_label_count(std::mt19937_64& rng, std::size_t vocab_size) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const std::size_t n = u < 0.4 ? 1 : (u < 0.8 ? 2 : 3);
  return std::min(n, vocab_size);
}

SyntheticGenerator::SyntheticGenerator(SyntheticOptions options)
    : options_(std::move(options)), rng_(options_.seed) {
  if (options_.vocab_size < 2) {
    throw ConfigError("generate_synthetic: vocab_size must be at least 2, got " +
                      std::to_string(options_.vocab_size));
  }
  if (options_.min_frames < 1 || options_.min_frames > options_.max_frames) {
    throw ConfigError("generate_synthetic: frame range [" + std::to_string(options_.min_frames) + ", " +
                      std::to_string(options_.max_frames) + "] is empty");
  }
  if (options_.noise_sigma < 0) throw ConfigError("generate_synthetic: noise_sigma must be nonnegative");
  const std::size_t D = std::size_t{options_.visual_dim} + options_.audio_dim;
  std::normal_distribution<double> normal(0.0, 1.0);
  prototypes_.resize(options_.vocab_size);
  for (auto& p : prototypes_) {
    p.resize(D);
    for (auto& v : p) v = normal(rng_);
  }
}

dataio::DatasetHeader SyntheticGenerator::header() const {
  dataio::DatasetHeader h;
  h.vocab_size = options_.vocab_size;
  h.visual_dim = options_.visual_dim;
  h.audio_dim = options_.audio_dim;
  h.max_frames = options_.max_frames;
  h.video_count = options_.video_count;
  return h;
}

std::vector<double> SyntheticGenerator::drift_at(std::size_t t, std::size_t num_frames) const {
  const double phase =
      num_frames > 1 ? static_cast<double>(t) / static_cast<double>(num_frames - 1) - 0.5 : 0.0;
  std::vector<double> out(last_drift_.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = last_drift_[j] * phase;
  return out;
}

dataio::VideoRecord SyntheticGenerator::next() {
  if (done()) throw StateError("synthetic generator exhausted");
  const std::size_t D = std::size_t{options_.visual_dim} + options_.audio_dim;
  dataio::VideoRecord rec;
  rec.id = options_.id_prefix + std::to_string(produced_);

  const std::size_t n_labels = sample_label_count(rng_, options_.vocab_size);
  while (rec.labels.size() < n_labels) {
    const auto c = static_cast<std::uint32_t>(
        std::uniform_int_distribution<std::uint32_t>(0, options_.vocab_size - 1)(rng_));
    if (std::find(rec.labels.begin(), rec.labels.end(), c) == rec.labels.end()) rec.labels.push_back(c);
  }
  std::sort(rec.labels.begin(), rec.labels.end());

  rec.num_frames = std::uniform_int_distribution<std::uint32_t>(options_.min_frames, options_.max_frames)(rng_);

  std::vector<double> base(D, 0.0);
  for (auto c : rec.labels)
    for (std::size_t j = 0; j < D; ++j) base[j] += prototypes_[c][j];
  for (auto& v : base) v /= static_cast<double>(rec.labels.size());

  std::normal_distribution<double> normal(0.0, 1.0);
  last_drift_.resize(D);
  for (auto& v : last_drift_) v = options_.drift_scale * normal(rng_);

  rec.features.resize(rec.num_frames * D);
  for (std::size_t t = 0; t < rec.num_frames; ++t) {
    const auto drift = drift_at(t, rec.num_frames);
    for (std::size_t j = 0; j < D; ++j) {
      const double noise = options_.noise_sigma > 0 ? options_.noise_sigma * normal(rng_) : 0.0;
      rec.features[t * D + j] = static_cast<float>(base[j] + drift[j] + noise);
    }
  }
  ++produced_;
  return rec;
}

std::vector<dataio::VideoRecord> generate_records(const SyntheticOptions& options) {
  SyntheticGenerator gen(options);
  std::vector<dataio::VideoRecord> out;
  while (!gen.done()) out.push_back(gen.next());
  return out;
}

std::uint64_t generate_synthetic(const SyntheticOptions& options, const std::string& path) {
  SyntheticGenerator gen(options);
  dataio::RecordWriter writer(path, gen.header());
  while (!gen.done()) writer.append(gen.next());
  return writer.finish();
}

}  // namespace vidseq::synthetic
