#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vidseq/tensor.hpp"

namespace vidseq::dataio {

inline constexpr std::uint32_t kRecordVersion = 1;

struct DatasetHeader {
  std::uint32_t version = kRecordVersion;
  std::uint32_t vocab_size = 25;
  std::uint32_t visual_dim = 1024;
  std::uint32_t audio_dim = 128;
  std::uint32_t max_frames = 300;
  std::uint64_t video_count = 0;

  std::size_t feature_dim() const { return std::size_t{visual_dim} + audio_dim; }
  bool operator==(const DatasetHeader&) const = default;
};

/// One video: frames are stored frame-major, visual features before audio.
struct VideoRecord {
  std::string id;
  std::size_t num_frames = 0;
  std::vector<float> features;  // num_frames x (visual_dim + audio_dim)
  std::vector<std::uint32_t> labels;  // strictly increasing

  bool operator==(const VideoRecord&) const = default;
};

/// Throws ValidationError when the record breaks the header's bounds.
void validate_record(const DatasetHeader& header, const VideoRecord& record);

/// Streams records into a temporary file and renames it into place on
/// finish(); a writer destroyed before finish() leaves no file behind.
class RecordWriter {
 public:
  RecordWriter(std::string path, DatasetHeader header);
  ~RecordWriter();
  RecordWriter(const RecordWriter&) = delete;
  RecordWriter& operator=(const RecordWriter&) = delete;

  void append(const VideoRecord& record);
  /// Returns the total byte count. Fails if fewer records than announced.
  std::uint64_t finish();

 private:
  std::string path_;
  std::string tmp_path_;
  DatasetHeader header_;
  std::ofstream out_;
  std::uint64_t written_ = 0;
  std::uint64_t bytes_ = 0;
  bool finished_ = false;
};

/// Writes header (video_count taken from records) and every record.
std::uint64_t write_records(const std::string& path, DatasetHeader header,
                            std::span<const VideoRecord> records);

class RecordReader {
 public:
  explicit RecordReader(const std::string& path);

  const DatasetHeader& header() const noexcept { return header_; }
  /// Next record, or nullopt after the last announced record.
  std::optional<VideoRecord> next();

 private:
  std::ifstream in_;
  DatasetHeader header_;
  std::uint64_t read_ = 0;
  std::uint64_t offset_ = 0;
};

struct Dataset {
  DatasetHeader header;
  std::vector<VideoRecord> records;
};

Dataset read_records(const std::string& path);

/// Zero-padded batch tensors for a list of records.
struct Batch {
  Tensor visual;  // batch x visual_dim x T
  Tensor audio;   // batch x audio_dim x T
  TimeMask mask;
  Tensor labels;  // batch x vocab, multi-hot
  std::vector<std::string> ids;
};

Batch pad_batch(const DatasetHeader& header, std::span<const VideoRecord* const> records);
Batch pad_batch(const DatasetHeader& header, std::span<const VideoRecord> records);

}  // namespace vidseq::dataio
