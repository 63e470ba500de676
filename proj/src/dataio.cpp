#include "vidseq/dataio.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>

#include "vidseq/binary_io.hpp"
#include "vidseq/errors.hpp"

namespace vidseq::dataio {

namespace {

constexpr char kMagic[4] = {'F', 'L', 'V', 'R'};

void write_header(binary::Writer& w, const DatasetHeader& h) {
  w.bytes(kMagic, 4);
  w.put<std::uint32_t>(h.version);
  w.put<std::uint32_t>(h.vocab_size);
  w.put<std::uint32_t>(h.visual_dim);
  w.put<std::uint32_t>(h.audio_dim);
  w.put<std::uint32_t>(h.max_frames);
  w.put<std::uint64_t>(h.video_count);
}

void validate_header(const DatasetHeader& h) {
  if (h.version != kRecordVersion) throw ValidationError("unsupported record version " + std::to_string(h.version));
  if (h.vocab_size == 0) throw ValidationError("vocab_size must be positive");
  if (h.visual_dim == 0 && h.audio_dim == 0) throw ValidationError("feature dimension must be positive");
  if (h.max_frames == 0 || h.max_frames > UINT16_MAX) {
    throw ValidationError("max_frames must be in [1, 65535], got " + std::to_string(h.max_frames));
  }
}

}  // namespace

void validate_record(const DatasetHeader& header, const VideoRecord& r) {
  const std::string who = "record '" + r.id + "': ";
  if (r.id.empty() || r.id.find_first_of(" \t\r\n") != std::string::npos) {
    throw ValidationError(who + "id must be non-empty and free of whitespace");
  }
  if (r.id.size() > UINT16_MAX) throw ValidationError(who + "id longer than 65535 bytes");
  if (r.num_frames < 1 || r.num_frames > header.max_frames) {
    throw ValidationError(who + "frame count " + std::to_string(r.num_frames) + " outside [1, " +
                          std::to_string(header.max_frames) + "]");
  }
  if (r.features.size() != r.num_frames * header.feature_dim()) {
    throw ValidationError(who + "holds " + std::to_string(r.features.size()) + " feature values, expected " +
                          std::to_string(r.num_frames * header.feature_dim()));
  }
  if (r.labels.size() > UINT16_MAX) throw ValidationError(who + "too many labels");
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    if (r.labels[i] >= header.vocab_size) {
      throw ValidationError(who + "label " + std::to_string(r.labels[i]) + " outside vocabulary of " +
                            std::to_string(header.vocab_size));
    }
    if (i > 0 && r.labels[i] <= r.labels[i - 1]) throw ValidationError(who + "labels not strictly increasing");
  }
}

RecordWriter::RecordWriter(std::string path, DatasetHeader header)
    : path_(std::move(path)), tmp_path_(path_ + ".tmp"), header_(header) {
  validate_header(header_);
  out_.open(tmp_path_, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot open " + tmp_path_ + " for writing");
  binary::Writer w(out_);
  write_header(w, header_);
  bytes_ = w.written();
}

RecordWriter::~RecordWriter() {
  if (!finished_) {
    out_.close();
    std::error_code ec;
    std::filesystem::remove(tmp_path_, ec);
  }
}

void RecordWriter::append(const VideoRecord& r) {
  if (finished_) throw StateError("append after finish");
  if (written_ >= header_.video_count) {
    throw ValidationError("more records than the announced " + std::to_string(header_.video_count));
  }
  validate_record(header_, r);
  binary::Writer w(out_);
  w.put_string16(r.id);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(r.num_frames));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(r.labels.size()));
  w.put_array<std::uint32_t>(r.labels);
  w.put_array<float>(r.features);
  bytes_ += w.written();
  ++written_;
}

std::uint64_t RecordWriter::finish() {
  if (finished_) throw StateError("finish called twice");
  if (written_ != header_.video_count) {
    throw ValidationError("wrote " + std::to_string(written_) + " records, header announces " +
                          std::to_string(header_.video_count));
  }
  out_.flush();
  if (!out_) throw IoError("flush failed for " + tmp_path_);
  out_.close();
  std::filesystem::rename(tmp_path_, path_);
  finished_ = true;
  return bytes_;
}

std::uint64_t write_records(const std::string& path, DatasetHeader header,
                            std::span<const VideoRecord> records) {
  header.video_count = records.size();
  validate_header(header);
  for (const auto& r : records) validate_record(header, r);
  RecordWriter writer(path, header);
  for (const auto& r : records) writer.append(r);
  return writer.finish();
}

RecordReader::RecordReader(const std::string& path) : in_(path, std::ios::binary) {
  if (!in_) throw IoError("cannot open " + path);
  binary::Reader r(in_);
  char magic[4] = {};
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError(path + ": bad magic, not a frame record file");
  header_.version = r.get<std::uint32_t>();
  if (header_.version != kRecordVersion) {
    throw FormatError(path + ": unsupported record version " + std::to_string(header_.version));
  }
  header_.vocab_size = r.get<std::uint32_t>();
  header_.visual_dim = r.get<std::uint32_t>();
  header_.audio_dim = r.get<std::uint32_t>();
  header_.max_frames = r.get<std::uint32_t>();
  header_.video_count = r.get<std::uint64_t>();
  try {
    validate_header(header_);
  } catch (const ValidationError& e) {
    throw FormatError(path + ": " + e.what());
  }
  offset_ = r.offset();
}

std::optional<VideoRecord> RecordReader::next() {
  if (read_ >= header_.video_count) return std::nullopt;
  binary::Reader r(in_);
  VideoRecord rec;
  try {
    rec.id = r.get_string16();
    rec.num_frames = r.get<std::uint16_t>();
    rec.labels.resize(r.get<std::uint16_t>());
    r.get_array<std::uint32_t>(rec.labels);
    rec.features.resize(rec.num_frames * header_.feature_dim());
    r.get_array<float>(rec.features);
  } catch (const CorruptionError&) {
    throw CorruptionError("record " + std::to_string(read_) + " starting at byte offset " + std::to_string(offset_) +
                          " is truncated after " + std::to_string(r.offset()) + " bytes");
  }
  try {
    validate_record(header_, rec);
  } catch (const ValidationError& e) {
    throw CorruptionError(std::string("record at byte offset ") + std::to_string(offset_) + ": " + e.what());
  }
  offset_ += r.offset();
  ++read_;
  return rec;
}

Dataset read_records(const std::string& path) {
  RecordReader reader(path);
  Dataset ds;
  ds.header = reader.header();
  while (auto rec = reader.next()) ds.records.push_back(std::move(*rec));
  return ds;
}

Batch pad_batch(const DatasetHeader& header, std::span<const VideoRecord* const> records) {
  if (records.empty()) throw PreconditionError("pad_batch: empty batch");
  const std::size_t B = records.size(), V = header.visual_dim, A = header.audio_dim,
                    D = header.feature_dim(), vocab = header.vocab_size;
  std::size_t T = 0;
  std::vector<std::size_t> lengths;
  for (const auto* r : records) {
    validate_record(header, *r);
    lengths.push_back(r->num_frames);
    T = std::max(T, r->num_frames);
  }
  Batch batch;
  std::vector<double> visual(B * V * T, 0.0), audio(B * A * T, 0.0), labels(B * vocab, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    const auto& r = *records[b];
    for (std::size_t t = 0; t < r.num_frames; ++t) {
      const float* frame = r.features.data() + t * D;
      for (std::size_t c = 0; c < V; ++c) visual[(b * V + c) * T + t] = frame[c];
      for (std::size_t c = 0; c < A; ++c) audio[(b * A + c) * T + t] = frame[V + c];
    }
    for (auto l : r.labels) labels[b * vocab + l] = 1.0;
    batch.ids.push_back(r.id);
  }
  // Zero-width modalities still need a positive tensor dimension.
  if (V > 0) batch.visual = Tensor({B, V, T}, std::move(visual));
  if (A > 0) batch.audio = Tensor({B, A, T}, std::move(audio));
  batch.mask = TimeMask(T, std::move(lengths));
  batch.labels = Tensor({B, vocab}, std::move(labels));
  return batch;
}

Batch pad_batch(const DatasetHeader& header, std::span<const VideoRecord> records) {
  std::vector<const VideoRecord*> ptrs;
  for (const auto& r : records) ptrs.push_back(&r);
  return pad_batch(header, ptrs);
}

}  // namespace vidseq::dataio
