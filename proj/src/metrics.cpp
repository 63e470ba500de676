#include "vidseq/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "vidseq/errors.hpp"

namespace vidseq::metrics {

void sort_entries(std::vector<ScoredClass>& entries) {
  std::stable_sort(entries.begin(), entries.end(), [](const ScoredClass& a, const ScoredClass& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.class_index < b.class_index;
  });
}

GapResult gap_at_k(const PredictionSet& preds, std::size_t k) {
  if (k < 1) throw ConfigError("gap_at_k: k must be at least 1");

  struct Pair {
    double score;
    std::size_t video;
    std::uint32_t cls;
    bool hit;
  };
  std::vector<Pair> pooled;
  GapResult result;
  for (std::size_t v = 0; v < preds.videos.size(); ++v) {
    const auto& video = preds.videos[v];
    result.total_positives += video.labels.size();
    auto entries = video.entries;
    sort_entries(entries);
    if (entries.size() > k) entries.resize(k);
    for (const auto& e : entries) {
      const bool hit = std::find(video.labels.begin(), video.labels.end(), e.class_index) != video.labels.end();
      pooled.push_back({e.score, v, e.class_index, hit});
    }
  }
  std::sort(pooled.begin(), pooled.end(), [](const Pair& a, const Pair& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.video, a.cls) < std::tie(b.video, b.cls);
  });
  result.pooled_pairs = pooled.size();
  if (result.total_positives == 0) return result;

  std::size_t hits = 0;
  double ap = 0.0;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    if (!pooled[i].hit) continue;
    ++hits;
    ap += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  result.gap = ap / static_cast<double>(result.total_positives);
  return result;
}

PredictionSet topk_predictions(const Tensor& probabilities, std::size_t k,
                               const std::vector<std::string>& video_ids) {
  if (probabilities.rank() != 2) {
    throw DimensionError("topk_predictions: expected batch x vocab, got " +
                         shape_string(probabilities.shape()));
  }
  const std::size_t batch = probabilities.dim(0), vocab = probabilities.dim(1);
  if (video_ids.size() != batch) {
    throw DimensionError("topk_predictions: " + std::to_string(video_ids.size()) + " ids for batch of " +
                         std::to_string(batch));
  }
  if (k > vocab) throw ConfigError("topk_predictions: k exceeds vocabulary size");
  PredictionSet out;
  for (std::size_t b = 0; b < batch; ++b) {
    VideoPrediction video;
    video.video_id = video_ids[b];
    for (std::size_t c = 0; c < vocab; ++c) {
      video.entries.push_back({static_cast<std::uint32_t>(c), probabilities[b * vocab + c]});
    }
    sort_entries(video.entries);
    video.entries.resize(k);
    out.videos.push_back(std::move(video));
  }
  return out;
}

double quantize_score(double score) { return std::round(score * 1e6) / 1e6; }

std::string format_predictions(const PredictionSet& preds) {
  std::string out;
  char buf[64];
  for (const auto& video : preds.videos) {
    if (video.video_id.empty() || video.video_id.find_first_of(" \t\r\n") != std::string::npos) {
      throw ValidationError("video id '" + video.video_id + "' is empty or contains whitespace");
    }
    auto entries = video.entries;
    for (auto& e : entries) {
      if (!std::isfinite(e.score)) throw ValidationError("non-finite score for video " + video.video_id);
      e.score = quantize_score(e.score);
    }
    sort_entries(entries);
    out += video.video_id;
    for (const auto& e : entries) {
      std::snprintf(buf, sizeof buf, " %u:%.6f", e.class_index, e.score);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void write_predictions(const std::string& path, const PredictionSet& preds) {
  const std::string text = format_predictions(preds);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

PredictionSet parse_predictions(const std::string& text) {
  PredictionSet preds;
  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> ids;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    VideoPrediction video;
    fields >> video.video_id;
    if (!ids.insert(video.video_id).second) {
      throw FormatError("line " + std::to_string(line_no) + ": duplicate video id '" + video.video_id + "'");
    }
    std::string token;
    std::set<std::uint32_t> seen;
    while (fields >> token) {
      const auto colon = token.find(':');
      if (colon == std::string::npos) {
        throw FormatError("line " + std::to_string(line_no) + ": expected class:score, got '" + token + "'");
      }
      ScoredClass e;
      const char* begin = token.data();
      auto [p1, ec1] = std::from_chars(begin, begin + colon, e.class_index);
      auto [p2, ec2] = std::from_chars(begin + colon + 1, begin + token.size(), e.score);
      if (ec1 != std::errc() || p1 != begin + colon || ec2 != std::errc() ||
          p2 != begin + token.size() || !std::isfinite(e.score)) {
        throw FormatError("line " + std::to_string(line_no) + ": malformed pair '" + token + "'");
      }
      if (!seen.insert(e.class_index).second) {
        throw FormatError("line " + std::to_string(line_no) + ": duplicate class " +
                          std::to_string(e.class_index));
      }
      video.entries.push_back(e);
    }
    preds.videos.push_back(std::move(video));
  }
  return preds;
}

PredictionSet read_predictions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_predictions(ss.str());
}

}  // namespace vidseq::metrics
