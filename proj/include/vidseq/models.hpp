#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vidseq/graph.hpp"
#include "vidseq/ops.hpp"
#include "vidseq/random.hpp"
#include "vidseq/recurrent.hpp"
#include "vidseq/tensor.hpp"
#include "vidseq/vlad.hpp"

namespace vidseq::models {

enum class ModelKind {
  video_level,
  vlad_mlp,
  two_stream_lstm,
  two_stream_gru,
  ff_lstm,
  ff_gru,
  temporal_resnet,
};

inline constexpr ModelKind kAllKinds[] = {
    ModelKind::video_level, ModelKind::vlad_mlp, ModelKind::two_stream_lstm,
    ModelKind::two_stream_gru, ModelKind::ff_lstm, ModelKind::ff_gru, ModelKind::temporal_resnet,
};

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

/// Declarative architecture description. Fields a kind does not use are
/// ignored. The classifier head is FC(fc_hidden) -> ReLU -> FC(vocab_size).
struct ModelSpec {
  ModelKind kind = ModelKind::video_level;
  std::uint32_t vocab_size = 25;
  std::uint32_t visual_dim = 1024;
  std::uint32_t audio_dim = 128;
  std::uint32_t hidden_size = 64;
  std::uint32_t depth = 1;
  std::uint32_t trb_count = 9;
  std::uint32_t trb_filters = 1024;
  std::uint32_t fc_hidden = 512;
  std::uint32_t attention_size = 64;
  std::uint32_t vlad_clusters = 256;
  // ff_* only: false stacks plain bidirectional layers with no fast-forward path.
  bool fast_forward = true;
  std::uint64_t seed = 0;

  std::size_t feature_dim() const { return std::size_t{visual_dim} + audio_dim; }
  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

/// Small dimensions used by gradient checks and unit tests.
ModelSpec toy_spec(ModelKind kind);

struct ModelOutput {
  Tensor probabilities;  // batch x vocab, each value in (0, 1)
};

struct MlpHead {
  Tensor w1, b1, w2, b2;

  static MlpHead init(std::size_t input_dim, std::size_t hidden, std::size_t vocab, Rng& rng);
};

/// FC -> ReLU -> FC -> sigmoid.
ModelOutput mlp_classify(Graph& g, const Tensor& features, const MlpHead& head);

struct NamedBatchNorm {
  std::string name;
  ops::BatchNormState state;
};

/// One of the seven classifiers. Parameters are created from spec.seed in a
/// fixed declaration order. Tensors are shared handles, so Model is move-only.
class Model {
 public:
  explicit Model(const ModelSpec& spec);
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelSpec& spec() const noexcept { return spec_; }

  /// visual: batch x visual_dim x T, audio: batch x audio_dim x T.
  ModelOutput forward(Graph& g, const Tensor& visual, const Tensor& audio, const TimeMask& mask,
                      ops::Mode mode);

  std::vector<NamedTensor>& parameters() noexcept { return params_; }
  const std::vector<NamedTensor>& parameters() const noexcept { return params_; }
  std::vector<NamedBatchNorm>& batch_norms() noexcept { return norms_; }
  const std::vector<NamedBatchNorm>& batch_norms() const noexcept { return norms_; }

  const std::optional<vlad::Codebook>& codebook() const noexcept { return codebook_; }
  void set_codebook(vlad::Codebook codebook);

  void zero_grad();
  std::size_t parameter_count() const;

 private:
  struct BiRnn {
    recurrent::CellParams fwd;
    recurrent::CellParams bwd;
  };
  struct FastForwardLayer {
    BiRnn rnn;
    Tensor embed_weight;  // 2 hidden x (prev width + 2 hidden)
    Tensor embed_bias;
  };
  struct ResBlock {
    Tensor conv1, gamma1, beta1;
    Tensor conv2, gamma2, beta2;
    std::size_t norm1 = 0, norm2 = 0;
  };

  Tensor add_param(const std::string& name, Tensor t);
  BiRnn make_birnn(const std::string& prefix, recurrent::CellKind kind, std::size_t input, Rng& rng);
  recurrent::AttentionParams make_attention(const std::string& prefix, std::size_t channels, Rng& rng);
  void make_head(std::size_t input_dim, Rng& rng);
  Tensor run_birnn(Graph& g, const BiRnn& rnn, const Tensor& x, const TimeMask& mask) const;
  Tensor features(Graph& g, const Tensor& visual, const Tensor& audio) const;
  Tensor encode_vlad(const Tensor& x, const TimeMask& mask) const;

  ModelSpec spec_;
  std::vector<NamedTensor> params_;
  std::vector<NamedBatchNorm> norms_;
  std::optional<vlad::Codebook> codebook_;

  MlpHead head_;
  std::vector<BiRnn> streams_;
  std::vector<recurrent::AttentionParams> attentions_;
  std::vector<FastForwardLayer> layers_;
  Tensor proj_weight_, proj_bias_;
  std::vector<ResBlock> blocks_;
};

}  // namespace vidseq::models
