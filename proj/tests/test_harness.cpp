#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "support/oracles.hpp"
#include "vidseq/checkpoint.hpp"
#include "vidseq/config.hpp"
#include "vidseq/errors.hpp"
#include "vidseq/optimizer.hpp"
#include "vidseq/synthetic.hpp"
#include "vidseq/training.hpp"

using namespace vidseq;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("vidseq_harness_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const char* name) const { return (path / name).string(); }
};

synthetic::SyntheticOptions tiny_options(std::uint64_t videos = 24) {
  synthetic::SyntheticOptions o;
  o.vocab_size = 6;
  o.video_count = videos;
  o.visual_dim = 6;
  o.audio_dim = 3;
  o.min_frames = 2;
  o.max_frames = 7;
  o.seed = 21;
  return o;
}

dataio::Dataset tiny_dataset(std::uint64_t videos = 24) {
  synthetic::SyntheticGenerator gen(tiny_options(videos));
  dataio::Dataset d;
  d.header = gen.header();
  while (!gen.done()) d.records.push_back(gen.next());
  return d;
}

harness::TrainConfig tiny_config(models::ModelKind kind, std::size_t epochs = 2) {
  harness::TrainConfig c;
  c.model = models::toy_spec(kind);
  c.model.vocab_size = 6;
  c.batch_size = 5;
  c.epochs = epochs;
  c.learning_rate = 1e-2;
  c.seed = 4;
  return c;
}

metrics::VideoPrediction video(std::string id, std::vector<metrics::ScoredClass> entries,
                               std::vector<std::uint32_t> labels = {}) {
  metrics::sort_entries(entries);
  return {std::move(id), std::move(entries), std::move(labels)};
}

}  // namespace

TEST_CASE("bce loss and its gradient") {
  Graph g;
  const Tensor targets({2, 2}, {1, 0, 0, 1});
  CHECK(harness::bce_loss(g, Tensor::filled({2, 2}, 0.5), targets).item() == doctest::Approx(std::log(2.0)));
  CHECK(harness::bce_loss(g, targets, targets).item() < 1e-6);
  CHECK_THROWS_AS(harness::bce_loss(g, Tensor({2, 3}), targets), DimensionError);
}

TEST_CASE("adam examples") {
  std::vector<NamedTensor> params{{"w", Tensor({2}, {1.0, -2.0}, true)}};
  auto state = harness::OptimizerState::for_parameters(params);
  harness::AdamConfig cfg;
  harness::adam_step(params, state, cfg);
  CHECK(params[0].tensor[0] == 1.0);
  CHECK(params[0].tensor[1] == -2.0);
  CHECK(state.step == 1);

  std::vector<NamedTensor> scalar{{"s", Tensor({1}, std::vector<double>{3.0}, true)}};
  auto st = harness::OptimizerState::for_parameters(scalar);
  scalar[0].tensor.mutable_grad()[0] = 1.0;
  harness::adam_step(scalar, st, cfg);
  // m_hat = 1, v_hat = 1: step = lr * 1 / (1 + eps)
  CHECK(scalar[0].tensor[0] == doctest::Approx(3.0 - 1e-3 / (1.0 + 1e-8)).epsilon(1e-15));
}

TEST_CASE("gradient clipping equals pre-scaled gradients") {
  std::vector<NamedTensor> a{{"a", Tensor({2}, {0.5, 0.5}, true)}};
  std::vector<NamedTensor> b{{"a", Tensor({2}, {0.5, 0.5}, true)}};
  auto sa = harness::OptimizerState::for_parameters(a);
  auto sb = harness::OptimizerState::for_parameters(b);
  harness::AdamConfig clipped;
  clipped.clip_norm = 1.0;
  for (int step = 0; step < 3; ++step) {
    a[0].tensor.mutable_grad()[0] = 6.0;
    a[0].tensor.mutable_grad()[1] = 8.0;  // norm 10
    b[0].tensor.mutable_grad()[0] = 0.6;
    b[0].tensor.mutable_grad()[1] = 0.8;
    const auto info = harness::adam_step(a, sa, clipped);
    CHECK(info.clipped);
    CHECK(info.grad_norm == 10.0);
    harness::adam_step(b, sb, harness::AdamConfig{});
    CHECK(a[0].tensor[0] == doctest::Approx(b[0].tensor[0]).epsilon(1e-15));
    CHECK(a[0].tensor[1] == doctest::Approx(b[0].tensor[1]).epsilon(1e-15));
  }
}

TEST_CASE("non-finite gradients stop the update") {
  std::vector<NamedTensor> p{{"ok", Tensor({1}, std::vector<double>{1.0}, true)},
                             {"bad.block", Tensor({1}, std::vector<double>{2.0}, true)}};
  auto st = harness::OptimizerState::for_parameters(p);
  p[0].tensor.mutable_grad()[0] = 1.0;
  p[1].tensor.mutable_grad()[0] = std::nan("");
  try {
    harness::adam_step(p, st, harness::AdamConfig{});
    FAIL("expected a training error");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("bad.block") != std::string::npos);
  }
  CHECK(p[0].tensor[0] == 1.0);
  CHECK(st.step == 0);
}

TEST_CASE("train config text") {
  const auto c = harness::parse_train_config(
      "# comment\nversion = 1\nmodel.kind = ff_gru\nmodel.depth = 5\nlearning_rate = 0.01\nclip_norm = none\n"
      "model.fast_forward = false\n");
  CHECK(c.model.kind == models::ModelKind::ff_gru);
  CHECK(c.model.depth == 5);
  CHECK(c.learning_rate == 0.01);
  CHECK_FALSE(c.effective_clip_norm().has_value());
  CHECK_FALSE(c.model.fast_forward);
  const auto again = harness::parse_train_config(harness::format_train_config(c));
  CHECK(harness::format_train_config(again) == harness::format_train_config(c));

  auto deep = harness::parse_train_config("version = 1\nmodel.kind = ff_lstm\nmodel.depth = 7\n");
  CHECK(deep.effective_clip_norm() == 5.0);
  deep.model.depth = 3;
  CHECK_FALSE(deep.effective_clip_norm().has_value());

  CHECK_THROWS_AS(harness::parse_train_config("model.kind = ff_gru\n"), ConfigError);
  CHECK_THROWS_AS(harness::parse_train_config("version = 2\n"), ConfigError);
  CHECK_THROWS_AS(harness::parse_train_config("version = 1\nlearnin_rate = 1\n"), ConfigError);
  CHECK_THROWS_AS(harness::parse_train_config("version = 1\nlearning_rate = 0\n"), ConfigError);
  CHECK_THROWS_AS(harness::parse_train_config("version = 1\nbatch_size = 0\n"), ConfigError);
  CHECK_THROWS_AS(harness::parse_train_config("version = 1\nepochs = 0\n"), ConfigError);
}

TEST_CASE("training rejects mismatched data before any step") {
  const auto data = tiny_dataset();
  auto cfg = tiny_config(models::ModelKind::video_level);
  cfg.model.vocab_size = 7;
  models::Model model(cfg.model);
  const auto before = model.parameters()[0].tensor.clone();
  CHECK_THROWS_AS(harness::train_model(model, cfg, data, data), ConfigError);
  CHECK(std::equal(before.data().begin(), before.data().end(), model.parameters()[0].tensor.data().begin()));
}

TEST_CASE("training is deterministic and keeps the best checkpoint") {
  TempDir a("det_a"), b("det_b");
  const auto data = tiny_dataset();
  for (auto kind : {models::ModelKind::two_stream_gru, models::ModelKind::vlad_mlp}) {
    auto cfg = tiny_config(kind, 3);
    cfg.out_dir = a.path.string();
    models::Model m1(cfg.model);
    const auto r1 = harness::train_model(m1, cfg, data, data);
    cfg.out_dir = b.path.string();
    models::Model m2(cfg.model);
    const auto r2 = harness::train_model(m2, cfg, data, data);
    CHECK(testing::slurp(r1.log_path) == testing::slurp(r2.log_path));
    CHECK(testing::slurp(r1.checkpoint_path) == testing::slurp(r2.checkpoint_path));
    CHECK(r1.history.size() == 3);

    std::ifstream log(r1.log_path);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(log, line)) {
      ++lines;
      CHECK(std::count(line.begin(), line.end(), '\t') == 2);
    }
    CHECK(lines == 3);

    auto best = models::load_checkpoint(r1.checkpoint_path);
    const auto preds = harness::attach_labels(harness::predict_dataset(best, data, 8, 6), data);
    CHECK(metrics::gap_at_k(preds).gap == doctest::Approx(r1.best_gap).epsilon(1e-12));
  }
}

TEST_CASE("checkpoint round trip predicts identically") {
  const auto data = tiny_dataset();
  for (auto kind : models::kAllKinds) {
    CAPTURE(models::to_string(kind));
    auto cfg = tiny_config(kind, 1);
    models::Model model(cfg.model);
    harness::train_model(model, cfg, data, data);
    std::stringstream ss;
    models::write_checkpoint(ss, model);
    auto loaded = models::read_checkpoint(ss);
    CHECK(loaded.spec() == model.spec());
    const auto a = harness::predict_dataset(model, data, 8, 0);
    const auto b = harness::predict_dataset(loaded, data, 8, 0);
    CHECK(a == b);
  }
  std::stringstream bad("FLCX");
  CHECK_THROWS_AS(models::read_checkpoint(bad), FormatError);
}

TEST_CASE("prediction contracts") {
  TempDir dir("predict");
  const auto data = tiny_dataset(30);
  dataio::write_records(dir.file("d.rec"), data.header, data.records);
  auto cfg = tiny_config(models::ModelKind::temporal_resnet, 2);
  cfg.out_dir = dir.path.string();
  models::Model model(cfg.model);
  const auto result = harness::train_model(model, cfg, data, data);

  harness::predict(result.checkpoint_path, dir.file("d.rec"), dir.file("p1.txt"), 20);
  harness::predict(result.checkpoint_path, dir.file("d.rec"), dir.file("p2.txt"), 20);
  CHECK(testing::slurp(dir.file("p1.txt")) == testing::slurp(dir.file("p2.txt")));
  const auto preds = metrics::read_predictions(dir.file("p1.txt"));
  CHECK(preds.videos.size() == 30);
  for (const auto& v : preds.videos) {
    CHECK(v.entries.size() <= 20);
    for (std::size_t i = 1; i < v.entries.size(); ++i) CHECK(v.entries[i - 1].score >= v.entries[i].score);
  }

  auto best = models::load_checkpoint(result.checkpoint_path);
  const auto one = harness::predict_dataset(best, data, 1, 0);
  const auto eight = harness::predict_dataset(best, data, 8, 0);
  double worst = 0.0;
  for (std::size_t v = 0; v < one.videos.size(); ++v)
    for (std::size_t i = 0; i < one.videos[v].entries.size(); ++i) {
      CHECK(one.videos[v].entries[i].class_index == eight.videos[v].entries[i].class_index);
      worst = std::max(worst, std::abs(one.videos[v].entries[i].score - eight.videos[v].entries[i].score));
    }
  CHECK(worst < 1e-9);

  auto other = tiny_options(4);
  other.vocab_size = 8;
  synthetic::generate_synthetic(other, dir.file("other.rec"));
  CHECK_THROWS_AS(harness::predict(result.checkpoint_path, dir.file("other.rec"), dir.file("p3.txt")), ConfigError);
}

TEST_CASE("ensemble averaging") {
  const metrics::PredictionSet a{{video("v1", {{0, 0.9}, {1, 0.1}}, {0}), video("v2", {{0, 0.8}, {1, 0.2}}, {1})}};
  const metrics::PredictionSet b{{video("v1", {{0, 0.2}, {1, 0.3}}, {0}), video("v2", {{0, 0.1}, {1, 0.9}}, {1})}};
  const auto mixed = harness::ensemble_average({a, b});
  const double ga = testing::gap_oracle(a, 20).gap, gb = testing::gap_oracle(b, 20).gap;
  CHECK(testing::gap_oracle(mixed, 20).gap >= std::max(ga, gb));
  CHECK(testing::gap_oracle(mixed, 20).gap == 1.0);

  CHECK(harness::ensemble_average({a}) == a);
  CHECK(harness::ensemble_average({a, a}) == a);
  CHECK(harness::ensemble_average({a, b}, {1.0, 0.0}) == a);
  CHECK(harness::ensemble_average({a, b}, {0.0, 2.0}) == b);

  const metrics::PredictionSet c{{video("v1", {{0, 0.5}}), video("v3", {{0, 0.5}})}};
  try {
    harness::ensemble_average({a, c});
    FAIL("expected an input error");
  } catch (const InputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("v2") != std::string::npos);
    CHECK(msg.find("v3") != std::string::npos);
  }
  CHECK_THROWS_AS(harness::ensemble_average({a, b}, {1.0}), ConfigError);
  CHECK_THROWS_AS(harness::ensemble_average({a, b}, {0.0, 0.0}), ConfigError);
  CHECK_THROWS_AS(harness::ensemble_average({a, b}, {-1.0, 2.0}), ConfigError);
  CHECK_THROWS_AS(harness::ensemble_average({}), InputError);

  // re-truncation to the top 20 of a full-vocabulary average
  metrics::VideoPrediction wide{"w", {}, {}};
  for (std::uint32_t c2 = 0; c2 < 30; ++c2) wide.entries.push_back({c2, 0.01 * c2});
  metrics::sort_entries(wide.entries);
  const auto cut = harness::ensemble_average({metrics::PredictionSet{{wide}}});
  CHECK(cut.videos[0].entries.size() == 20);
  CHECK(cut.videos[0].entries[0].class_index == 29);
}

TEST_CASE("evaluate joins predictions to ground truth") {
  TempDir dir("evaluate");
  auto opts = tiny_options(2000);
  opts.vocab_size = 25;
  opts.visual_dim = 1;
  opts.audio_dim = 1;
  opts.min_frames = 1;
  opts.max_frames = 1;
  synthetic::generate_synthetic(opts, dir.file("d.rec"));
  const auto data = dataio::read_records(dir.file("d.rec"));

  metrics::PredictionSet perfect, random;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t positives = 0;
  for (const auto& r : data.records) {
    metrics::VideoPrediction p{r.id, {}, {}};
    for (auto l : r.labels) p.entries.push_back({l, 0.9});
    perfect.videos.push_back(p);
    metrics::VideoPrediction q{r.id, {}, {}};
    for (std::uint32_t c = 0; c < 25; ++c) q.entries.push_back({c, u(rng)});
    metrics::sort_entries(q.entries);
    random.videos.push_back(q);
    positives += r.labels.size();
  }
  metrics::write_predictions(dir.file("perfect.txt"), perfect);
  metrics::write_predictions(dir.file("random.txt"), random);
  CHECK(harness::evaluate(dir.file("perfect.txt"), dir.file("d.rec")).gap == 1.0);
  const auto r = harness::evaluate(dir.file("random.txt"), dir.file("d.rec"));
  const double rate = static_cast<double>(positives) / (25.0 * 2000.0);
  CHECK(r.gap < 0.5);
  CHECK(std::abs(r.gap - rate) < 0.03);

  auto small = metrics::read_predictions(dir.file("random.txt"));
  small.videos.resize(4);
  const auto joined = harness::attach_labels(small, data);
  CHECK(metrics::gap_at_k(joined).gap == testing::gap_oracle(joined, 20).gap);

  metrics::write_predictions(dir.file("stranger.txt"), metrics::PredictionSet{{video("nope", {{0, 0.5}})}});
  CHECK_THROWS_AS(harness::evaluate(dir.file("stranger.txt"), dir.file("d.rec")), InputError);
}
