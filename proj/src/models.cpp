#include "vidseq/models.hpp"

#include <cmath>

#include "vidseq/errors.hpp"

namespace vidseq::models {

namespace {

struct KindName {
  ModelKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {ModelKind::video_level, "video_level"},         {ModelKind::vlad_mlp, "vlad_mlp"},
    {ModelKind::two_stream_lstm, "two_stream_lstm"}, {ModelKind::two_stream_gru, "two_stream_gru"},
    {ModelKind::ff_lstm, "ff_lstm"},                 {ModelKind::ff_gru, "ff_gru"},
    {ModelKind::temporal_resnet, "temporal_resnet"},
};

double fan_in_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

recurrent::CellKind cell_kind(ModelKind kind) {
  return (kind == ModelKind::two_stream_gru || kind == ModelKind::ff_gru) ? recurrent::CellKind::gru
                                                                          : recurrent::CellKind::lstm;
}

}  // namespace

std::string to_string(ModelKind kind) {
  for (const auto& kn : kKindNames)
    if (kn.kind == kind) return kn.name;
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  for (const auto& kn : kKindNames)
    if (name == kn.name) return kn.kind;
  throw ConfigError("unknown model kind '" + name + "'");
}

void ModelSpec::validate() const {
  if (vocab_size < 1) throw ConfigError("vocab_size must be at least 1");
  if (visual_dim < 1 || audio_dim < 1) throw ConfigError("visual_dim and audio_dim must be positive");
  if (fc_hidden < 1) throw ConfigError("fc_hidden must be positive");
  switch (kind) {
    case ModelKind::video_level:
      break;
    case ModelKind::vlad_mlp:
      if (vlad_clusters < 1) throw ConfigError("vlad_clusters must be positive");
      break;
    case ModelKind::ff_lstm:
    case ModelKind::ff_gru:
      if (depth < 1) throw ConfigError("fast-forward depth must be at least 1");
      [[fallthrough]];
    case ModelKind::two_stream_lstm:
    case ModelKind::two_stream_gru:
      if (hidden_size < 1 || attention_size < 1) throw ConfigError("hidden_size and attention_size must be positive");
      break;
    case ModelKind::temporal_resnet:
      if (trb_filters < 1) throw ConfigError("trb_filters must be positive");
      if (trb_count < 1) throw ConfigError("trb_count must be at least 1");
      if (hidden_size < 1 || attention_size < 1) throw ConfigError("hidden_size and attention_size must be positive");
      break;
  }
}

ModelSpec toy_spec(ModelKind kind) {
  ModelSpec s;
  s.kind = kind;
  s.vocab_size = 5;
  s.visual_dim = 6;
  s.audio_dim = 3;
  s.hidden_size = 4;
  s.depth = 3;
  s.trb_count = 2;
  s.trb_filters = 8;
  s.fc_hidden = 8;
  s.attention_size = 4;
  s.vlad_clusters = 3;
  s.seed = 7;
  return s;
}

MlpHead MlpHead::init(std::size_t input_dim, std::size_t hidden, std::size_t vocab, Rng& rng) {
  MlpHead h;
  h.w1 = uniform_tensor({hidden, input_dim}, fan_in_bound(input_dim), rng);
  h.b1 = Tensor({hidden}, true);
  h.w2 = uniform_tensor({vocab, hidden}, fan_in_bound(hidden), rng);
  h.b2 = Tensor({vocab}, true);
  return h;
}

ModelOutput mlp_classify(Graph& g, const Tensor& features, const MlpHead& head) {
  if (features.rank() != 2 || features.dim(1) != head.w1.dim(1)) {
    throw DimensionError("mlp_classify: features " + shape_string(features.shape()) +
                         " do not match first layer " + shape_string(head.w1.shape()));
  }
  const Tensor hidden = ops::relu(g, ops::linear(g, features, head.w1, head.b1));
  return {ops::sigmoid(g, ops::linear(g, hidden, head.w2, head.b2))};
}

Tensor Model::add_param(const std::string& name, Tensor t) {
  params_.push_back({name, t});
  return t;
}

Model::BiRnn Model::make_birnn(const std::string& prefix, recurrent::CellKind kind, std::size_t input,
                               Rng& rng) {
  BiRnn rnn{recurrent::CellParams::init(kind, input, spec_.hidden_size, rng),
            recurrent::CellParams::init(kind, input, spec_.hidden_size, rng)};
  for (auto& [n, t] : rnn.fwd.named_tensors()) add_param(prefix + ".fwd." + n, t);
  for (auto& [n, t] : rnn.bwd.named_tensors()) add_param(prefix + ".bwd." + n, t);
  return rnn;
}

recurrent::AttentionParams Model::make_attention(const std::string& prefix, std::size_t channels, Rng& rng) {
  auto att = recurrent::AttentionParams::init(channels, spec_.attention_size, rng);
  for (auto& [n, t] : att.named_tensors()) add_param(prefix + ".attention." + n, t);
  return att;
}

void Model::make_head(std::size_t input_dim, Rng& rng) {
  head_ = MlpHead::init(input_dim, spec_.fc_hidden, spec_.vocab_size, rng);
  add_param("head.fc1.weight", head_.w1);
  add_param("head.fc1.bias", head_.b1);
  add_param("head.fc2.weight", head_.w2);
  add_param("head.fc2.bias", head_.b2);
}

Model::Model(const ModelSpec& spec) : spec_(spec) {
  spec_.validate();
  Rng rng(spec_.seed);
  const std::size_t D = spec_.feature_dim();
  const std::size_t H2 = 2 * std::size_t{spec_.hidden_size};
  const auto ck = cell_kind(spec_.kind);

  switch (spec_.kind) {
    case ModelKind::video_level:
      make_head(D, rng);
      break;
    case ModelKind::vlad_mlp:
      make_head(std::size_t{spec_.vlad_clusters} * D, rng);
      break;
    case ModelKind::two_stream_lstm:
    case ModelKind::two_stream_gru:
      streams_.push_back(make_birnn("visual", ck, spec_.visual_dim, rng));
      attentions_.push_back(make_attention("visual", H2, rng));
      streams_.push_back(make_birnn("audio", ck, spec_.audio_dim, rng));
      attentions_.push_back(make_attention("audio", H2, rng));
      make_head(2 * H2, rng);
      break;
    case ModelKind::ff_lstm:
    case ModelKind::ff_gru:
      for (std::size_t i = 0; i < spec_.depth; ++i) {
        const std::string prefix = "layer" + std::to_string(i + 1);
        const std::size_t input = i == 0 ? D : H2;
        FastForwardLayer layer;
        layer.rnn = make_birnn(prefix, ck, input, rng);
        if (spec_.fast_forward) {
          const std::size_t embed_in = input + H2;
          layer.embed_weight = add_param(prefix + ".ff.weight", uniform_tensor({H2, embed_in}, fan_in_bound(embed_in), rng));
          layer.embed_bias = add_param(prefix + ".ff.bias", Tensor({H2}, true));
        }
        layers_.push_back(std::move(layer));
      }
      attentions_.push_back(make_attention("top", H2, rng));
      make_head(H2, rng);
      break;
    case ModelKind::temporal_resnet: {
      const std::size_t F = spec_.trb_filters;
      proj_weight_ = add_param("proj.weight", uniform_tensor({F, D, 1}, fan_in_bound(D), rng));
      proj_bias_ = add_param("proj.bias", Tensor({F}, true));
      for (std::size_t i = 0; i < spec_.trb_count; ++i) {
        const std::string prefix = "trb" + std::to_string(i + 1);
        ResBlock block;
        block.conv1 = add_param(prefix + ".conv1", uniform_tensor({F, F, 3}, fan_in_bound(3 * F), rng));
        block.gamma1 = add_param(prefix + ".bn1.gamma", Tensor::filled({F}, 1.0, true));
        block.beta1 = add_param(prefix + ".bn1.beta", Tensor({F}, true));
        block.conv2 = add_param(prefix + ".conv2", uniform_tensor({F, F, 3}, fan_in_bound(3 * F), rng));
        block.gamma2 = add_param(prefix + ".bn2.gamma", Tensor::filled({F}, 1.0, true));
        block.beta2 = add_param(prefix + ".bn2.beta", Tensor({F}, true));
        block.norm1 = norms_.size();
        norms_.push_back({prefix + ".bn1", ops::BatchNormState(F)});
        block.norm2 = norms_.size();
        norms_.push_back({prefix + ".bn2", ops::BatchNormState(F)});
        blocks_.push_back(std::move(block));
      }
      streams_.push_back(make_birnn("rnn", recurrent::CellKind::lstm, F, rng));
      attentions_.push_back(make_attention("rnn", H2, rng));
      make_head(H2, rng);
      break;
    }
  }
}

void Model::set_codebook(vlad::Codebook codebook) {
  if (codebook.d != spec_.feature_dim() || codebook.k != spec_.vlad_clusters) {
    throw DimensionError("codebook " + std::to_string(codebook.k) + "x" + std::to_string(codebook.d) +
                         " does not match spec " + std::to_string(spec_.vlad_clusters) + "x" +
                         std::to_string(spec_.feature_dim()));
  }
  codebook_ = std::move(codebook);
}

void Model::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

Tensor Model::run_birnn(Graph& g, const BiRnn& rnn, const Tensor& x, const TimeMask& mask) const {
  return recurrent::run_bidirectional(g, rnn.fwd, rnn.bwd, x, mask);
}

Tensor Model::features(Graph& g, const Tensor& visual, const Tensor& audio) const {
  const Tensor parts[] = {visual, audio};
  return ops::concat_channels(g, parts);
}

Tensor Model::encode_vlad(const Tensor& x, const TimeMask& mask) const {
  if (!codebook_) throw StateError("vlad_mlp forward needs a fitted codebook");
  const std::size_t B = x.dim(0), D = x.dim(1), T = x.dim(2);
  const std::size_t width = codebook_->k * codebook_->d;
  std::vector<double> out(B * width);
  const auto xs = x.data();
#pragma omp parallel for schedule(static)
  for (std::int64_t bb = 0; bb < static_cast<std::int64_t>(B); ++bb) {
    const auto b = static_cast<std::size_t>(bb);
    const std::size_t len = mask.length(b);
    std::vector<double> frames(len * D);
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t c = 0; c < D; ++c) frames[t * D + c] = xs[(b * D + c) * T + t];
    const auto enc = vlad::vlad_encode(*codebook_, {frames, len, D});
    std::copy(enc.begin(), enc.end(), out.begin() + static_cast<std::ptrdiff_t>(b * width));
  }
  return Tensor({B, width}, std::move(out));
}

ModelOutput Model::forward(Graph& g, const Tensor& visual, const Tensor& audio, const TimeMask& mask,
                           ops::Mode mode) {
  if (!visual.defined() || !audio.defined() || visual.rank() != 3 || audio.rank() != 3) {
    throw DimensionError("forward: visual and audio must be batch x channels x time tensors");
  }
  if (visual.dim(1) != spec_.visual_dim || audio.dim(1) != spec_.audio_dim) {
    throw DimensionError("forward: modality dims " + std::to_string(visual.dim(1)) + "/" +
                         std::to_string(audio.dim(1)) + " do not match spec " +
                         std::to_string(spec_.visual_dim) + "/" + std::to_string(spec_.audio_dim));
  }
  if (visual.dim(0) != audio.dim(0) || visual.dim(2) != audio.dim(2) || visual.dim(0) != mask.batch() ||
      visual.dim(2) != mask.max_time()) {
    throw DimensionError("forward: visual " + shape_string(visual.shape()) + ", audio " +
                         shape_string(audio.shape()) + " and mask disagree");
  }

  switch (spec_.kind) {
    case ModelKind::video_level:
      return mlp_classify(g, ops::masked_mean_time(g, features(g, visual, audio), mask), head_);

    case ModelKind::vlad_mlp:
      return mlp_classify(g, encode_vlad(features(g, visual, audio), mask), head_);

    case ModelKind::two_stream_lstm:
    case ModelKind::two_stream_gru: {
      const Tensor pooled[] = {
          recurrent::attention_pool(g, attentions_[0], run_birnn(g, streams_[0], visual, mask), mask),
          recurrent::attention_pool(g, attentions_[1], run_birnn(g, streams_[1], audio, mask), mask),
      };
      return mlp_classify(g, ops::concat_channels(g, pooled), head_);
    }

    case ModelKind::ff_lstm:
    case ModelKind::ff_gru: {
      Tensor fast = features(g, visual, audio);
      Tensor layer_in = fast;
      for (const auto& layer : layers_) {
        const Tensor h = run_birnn(g, layer.rnn, layer_in, mask);
        if (spec_.fast_forward) {
          const Tensor both[] = {fast, h};
          fast = ops::apply_mask(
              g,
              ops::relu(g, ops::linear_time(g, ops::concat_channels(g, both), layer.embed_weight,
                                            layer.embed_bias)),
              mask);
          layer_in = fast;
        } else {
          layer_in = h;
        }
      }
      return mlp_classify(g, recurrent::attention_pool(g, attentions_[0], layer_in, mask), head_);
    }

    case ModelKind::temporal_resnet: {
      Tensor x = ops::apply_mask(g, features(g, visual, audio), mask);
      x = ops::apply_mask(g, ops::conv1d_same(g, x, proj_weight_, proj_bias_), mask);
      for (const auto& block : blocks_) {
        auto& bn1 = norms_[block.norm1].state;
        auto& bn2 = norms_[block.norm2].state;
        Tensor y = ops::conv1d_same(g, x, block.conv1, {});
        y = ops::relu(g, ops::batchnorm_time(g, y, mask, block.gamma1, block.beta1, mode, bn1));
        y = ops::conv1d_same(g, y, block.conv2, {});
        y = ops::batchnorm_time(g, y, mask, block.gamma2, block.beta2, mode, bn2);
        x = ops::apply_mask(g, ops::relu(g, ops::add(g, y, x)), mask);
      }
      return mlp_classify(
          g, recurrent::attention_pool(g, attentions_[0], run_birnn(g, streams_[0], x, mask), mask),
          head_);
    }
  }
  throw ConfigError("forward: unhandled model kind");
}

}  // namespace vidseq::models
