#include "vidseq/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "vidseq/binary_io.hpp"
#include "vidseq/errors.hpp"

namespace vidseq::models {

namespace {

constexpr char kMagic[4] = {'F', 'L', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_spec(binary::Writer& w, const ModelSpec& s) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.kind));
  for (auto v : {s.vocab_size, s.visual_dim, s.audio_dim, s.hidden_size, s.depth, s.trb_count,
                 s.trb_filters, s.fc_hidden, s.attention_size, s.vlad_clusters}) {
    w.put<std::uint32_t>(v);
  }
  w.put<std::uint8_t>(s.fast_forward ? 1 : 0);
  w.put<std::uint64_t>(s.seed);
}

ModelSpec read_spec(binary::Reader& r) {
  ModelSpec s;
  const auto kind = r.get<std::uint32_t>();
  if (kind > static_cast<std::uint32_t>(ModelKind::temporal_resnet)) {
    throw FormatError("checkpoint names unknown model kind " + std::to_string(kind));
  }
  s.kind = static_cast<ModelKind>(kind);
  for (auto* field : {&s.vocab_size, &s.visual_dim, &s.audio_dim, &s.hidden_size, &s.depth, &s.trb_count,
                      &s.trb_filters, &s.fc_hidden, &s.attention_size, &s.vlad_clusters}) {
    *field = r.get<std::uint32_t>();
  }
  s.fast_forward = r.get<std::uint8_t>() != 0;
  s.seed = r.get<std::uint64_t>();
  return s;
}

void read_values(binary::Reader& r, std::span<double> dst, const std::string& what) {
  r.get_array<double>(dst);
  for (double v : dst) {
    if (!std::isfinite(v)) throw FormatError("checkpoint value of " + what + " is not finite");
  }
}

}  // namespace

void write_checkpoint(std::ostream& out, const Model& model) {
  binary::Writer w(out);
  w.bytes(kMagic, 4);
  w.put<std::uint32_t>(kVersion);
  write_spec(w, model.spec());

  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& p : model.parameters()) {
    w.put_string16(p.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.tensor.rank()));
    for (auto d : p.tensor.shape()) w.put<std::uint64_t>(d);
    w.put_array<double>(p.tensor.data());
  }

  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.batch_norms().size()));
  for (const auto& bn : model.batch_norms()) {
    w.put_string16(bn.name);
    w.put<std::uint64_t>(bn.state.running_mean.size());
    w.put<std::uint8_t>(bn.state.populated ? 1 : 0);
    w.put_array<double>(bn.state.running_mean);
    w.put_array<double>(bn.state.running_var);
  }

  const auto& cb = model.codebook();
  w.put<std::uint8_t>(cb ? 1 : 0);
  if (cb) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cb->k));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cb->d));
    w.put_array<double>(cb->centers);
  }
}

Model read_checkpoint(std::istream& in) {
  binary::Reader r(in);
  char magic[4] = {};
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a checkpoint file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const ModelSpec spec = read_spec(r);
  Model model(spec);

  const auto count = r.get<std::uint32_t>();
  if (count != model.parameters().size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " parameters, spec builds " +
                      std::to_string(model.parameters().size()));
  }
  for (auto& p : model.parameters()) {
    const std::string name = r.get_string16();
    if (name != p.name) throw FormatError("checkpoint parameter '" + name + "' where '" + p.name + "' expected");
    Shape shape(r.get<std::uint32_t>());
    for (auto& d : shape) d = r.get<std::uint64_t>();
    if (shape != p.tensor.shape()) {
      throw FormatError("parameter '" + name + "' has shape " + shape_string(shape) + ", expected " +
                        shape_string(p.tensor.shape()));
    }
    read_values(r, p.tensor.mutable_data(), name);
  }

  const auto norms = r.get<std::uint32_t>();
  if (norms != model.batch_norms().size()) throw FormatError("checkpoint batch-norm count mismatch");
  for (auto& bn : model.batch_norms()) {
    const std::string name = r.get_string16();
    if (name != bn.name) throw FormatError("checkpoint batch norm '" + name + "' where '" + bn.name + "' expected");
    const auto channels = r.get<std::uint64_t>();
    if (channels != bn.state.running_mean.size()) throw FormatError("batch norm '" + name + "' channel mismatch");
    bn.state.populated = r.get<std::uint8_t>() != 0;
    read_values(r, bn.state.running_mean, name);
    read_values(r, bn.state.running_var, name);
  }

  if (r.get<std::uint8_t>() != 0) {
    vlad::Codebook cb;
    cb.k = r.get<std::uint32_t>();
    cb.d = r.get<std::uint32_t>();
    cb.centers.resize(cb.k * cb.d);
    read_values(r, cb.centers, "codebook");
    model.set_codebook(std::move(cb));
  }
  return model;
}

void save_checkpoint(const std::string& path, const Model& model) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    write_checkpoint(out, model);
    out.flush();
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace vidseq::models
