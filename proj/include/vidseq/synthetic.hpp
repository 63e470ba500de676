#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "vidseq/dataio.hpp"

namespace vidseq::synthetic {

/// Seeded stand-in for pre-extracted frame features. Each class owns a fixed
/// random (visual, audio) prototype; a video's frames are the mean of its
/// label prototypes plus Gaussian noise and a slow per-video linear drift.
struct SyntheticOptions {
  std::uint32_t vocab_size = 25;
  std::uint64_t video_count = 2000;
  std::uint64_t seed = 0;
  double noise_sigma = 1.0;
  std::uint32_t visual_dim = 1024;
  std::uint32_t audio_dim = 128;
  std::uint32_t min_frames = 30;
  std::uint32_t max_frames = 300;
  double drift_scale = 0.1;
  std::string id_prefix = "vid";
};

/// P(1 label) = 0.4, P(2) = 0.4, P(3) = 0.2, capped by the vocabulary.
std::size_t sample_label_count(std::mt19937_64& rng, std::size_t vocab_size);

class SyntheticGenerator {
 public:
  explicit SyntheticGenerator(SyntheticOptions options);

  dataio::DatasetHeader header() const;
  bool done() const noexcept { return produced_ >= options_.video_count; }
  dataio::VideoRecord next();

  /// prototype for class c: visual_dim + audio_dim values
  const std::vector<double>& prototype(std::size_t c) const { return prototypes_.at(c); }
  /// Drift of the most recently generated video at frame t (one value per dim).
  std::vector<double> drift_at(std::size_t t, std::size_t num_frames) const;

 private:
  SyntheticOptions options_;
  std::mt19937_64 rng_;
  std::vector<std::vector<double>> prototypes_;
  std::vector<double> last_drift_;
  std::uint64_t produced_ = 0;
};

std::vector<dataio::VideoRecord> generate_records(const SyntheticOptions& options);
/// Streams the dataset to path; returns the byte count.
std::uint64_t generate_synthetic(const SyntheticOptions& options, const std::string& path);

}  // namespace vidseq::synthetic
