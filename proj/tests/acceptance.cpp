// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "support/oracles.hpp"
#include "vidseq/checkpoint.hpp"
#include "vidseq/dataio.hpp"
#include "vidseq/errors.hpp"
#include "vidseq/gradcheck.hpp"
#include "vidseq/metrics.hpp"
#include "vidseq/models.hpp"
#include "vidseq/synthetic.hpp"
#include "vidseq/training.hpp"
#include "vidseq/vlad.hpp"

namespace fs = std::filesystem;
using namespace vidseq;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("vidseq_acceptance_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// 64 videos, vocab 10, small feature dims so every kind trains at desk speed.
synthetic::SyntheticOptions overfit_options() {
  synthetic::SyntheticOptions o;
  o.vocab_size = 10;
  o.video_count = 64;
  o.seed = 11;
  o.noise_sigma = 1.0;
  o.visual_dim = 16;
  o.audio_dim = 4;
  o.min_frames = 8;
  o.max_frames = 24;
  return o;
}

models::ModelSpec overfit_spec(models::ModelKind kind) {
  auto spec = models::toy_spec(kind);
  spec.vocab_size = 10;
  spec.visual_dim = 16;
  spec.audio_dim = 4;
  spec.hidden_size = 8;
  spec.fc_hidden = 32;
  spec.attention_size = 8;
  spec.trb_filters = 8;
  spec.vlad_clusters = 8;
  return spec;
}

harness::TrainConfig overfit_config(const models::ModelSpec& spec, std::size_t epochs) {
  harness::TrainConfig c;
  c.model = spec;
  c.learning_rate = 3e-3;
  c.batch_size = 16;
  c.epochs = epochs;
  c.seed = 5;
  return c;
}

Outcome gradient_suite() {
  const auto start = Clock::now();
  std::ostringstream detail;
  bool ok = true;
  double worst = 0.0;
  std::size_t checked = 0, kinks = 0;
  for (auto kind : models::kAllKinds) {
    // every entry of every block
    const auto report = gradcheck::grad_check(models::toy_spec(kind), 1u << 20, 1e-4, 1);
    worst = std::max(worst, report.worst());
    for (const auto& b : report.blocks) {
      checked += b.checked;
      kinks += b.skipped;
    }
    if (!report.passed()) {
      ok = false;
      detail << models::to_string(kind) << " failed; ";
    }
  }
  const double elapsed = seconds_since(start);
  ok = ok && elapsed < 300.0;
  detail << checked << " entries, worst rel err " << worst << ", " << kinks << " skipped on ReLU kinks, " << elapsed
         << " s";
  return {ok, detail.str()};
}

Outcome metric_oracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(2024);
  std::size_t mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto set = testing::random_prediction_set(rng, 5, 10);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
    const auto a = metrics::gap_at_k(set, k);
    const auto b = testing::gap_oracle(set, k);
    if (a.gap != b.gap || a.pooled_pairs != b.pooled_pairs || a.total_positives != b.total_positives) ++mismatches;
  }
  const double elapsed = seconds_since(start);
  std::ostringstream d;
  d << mismatches << " mismatches in 1000 instances, " << elapsed << " s";
  return {mismatches == 0 && elapsed < 10.0, d.str()};
}

Outcome overfitting() {
  const auto data = [] {
    dataio::Dataset d;
    synthetic::SyntheticGenerator gen(overfit_options());
    d.header = gen.header();
    while (!gen.done()) d.records.push_back(gen.next());
    return d;
  }();
  bool ok = true;
  std::ostringstream d;
  for (auto kind : models::kAllKinds) {
    const auto start = Clock::now();
    const auto spec = overfit_spec(kind);
    models::Model model(spec);
    harness::TrainHooks hooks;
    hooks.on_epoch = [](const harness::EpochStats& s) { return s.val_gap < 0.95; };
    const auto result = harness::train_model(model, overfit_config(spec, 300), data, data, hooks);
    const double elapsed = seconds_since(start);
    const bool pass = result.best_gap >= 0.95 && elapsed < 600.0;
    ok = ok && pass;
    d << models::to_string(kind) << " gap " << result.best_gap << " @" << result.history.size() << " ep "
      << static_cast<int>(elapsed) << "s" << (pass ? "" : " (FAIL)") << "; ";
  }
  return {ok, d.str()};
}

Outcome deep_stack() {
  dataio::Dataset data;
  synthetic::SyntheticGenerator gen(overfit_options());
  data.header = gen.header();
  while (!gen.done()) data.records.push_back(gen.next());

  auto spec = overfit_spec(models::ModelKind::ff_lstm);
  spec.depth = 7;
  models::Model ff(spec);
  const auto result = harness::train_model(ff, overfit_config(spec, 100), data, data);
  bool finite = true;
  for (const auto& s : result.history) finite = finite && std::isfinite(s.max_grad_norm) && std::isfinite(s.train_loss);
  const double first = result.history.front().train_loss;
  const double last = result.history.back().train_loss;

  auto naive_spec = spec;
  naive_spec.fast_forward = false;
  models::Model naive(naive_spec);
  const auto naive_result = harness::train_model(naive, overfit_config(naive_spec, 5), data, data);

  std::ostringstream d;
  d << "fast-forward loss " << first << " -> " << last << " (ratio " << last / first << "), grads "
    << (finite ? "finite" : "NON-FINITE") << "; naive stack ran " << naive_result.history.size()
    << " epochs, loss " << naive_result.history.front().train_loss << " -> "
    << naive_result.history.back().train_loss;
  return {finite && result.history.size() == 100 && last <= 0.5 * first, d.str()};
}

Outcome padding_inertness() {
  double worst = 0.0;
  for (auto kind : models::kAllKinds) {
    const auto spec = models::toy_spec(kind);
    models::Model model(spec);
    std::mt19937_64 rng(17);
    const std::size_t B = 3, T = 5, T2 = 9;
    const std::vector<std::size_t> lengths{5, 3, 1};
    auto make = [&](std::size_t channels, std::size_t time, bool garbage) {
      std::vector<double> v(B * channels * time, 0.0);
      std::normal_distribution<double> n(0.0, 1.0);
      std::mt19937_64 local(channels * 1000 + 3);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < channels; ++c)
          for (std::size_t t = 0; t < T2; ++t) {
            const double x = n(local);
            if (t >= time) continue;
            if (t < lengths[b]) v[(b * channels + c) * time + t] = x;
            else if (garbage) v[(b * channels + c) * time + t] = 50.0 * x;
          }
      return Tensor({B, channels, time}, std::move(v));
    };
    const Tensor vis = make(spec.visual_dim, T, false), aud = make(spec.audio_dim, T, false);
    const Tensor vis2 = make(spec.visual_dim, T2, true), aud2 = make(spec.audio_dim, T2, true);
    const TimeMask mask(T, lengths), mask2(T2, lengths);
    if (kind == models::ModelKind::vlad_mlp) {
      const auto samples = testing::random_normal(rng, 40 * spec.feature_dim());
      model.set_codebook(vlad::kmeans_fit({samples, 40, spec.feature_dim()}, spec.vlad_clusters, 20, 1).codebook);
    }
    for (auto mode : {ops::Mode::train, ops::Mode::eval}) {
      Graph g1, g2;
      const auto p1 = model.forward(g1, vis, aud, mask, mode).probabilities;
      const auto p2 = model.forward(g2, vis2, aud2, mask2, mode).probabilities;
      for (std::size_t i = 0; i < p1.size(); ++i) worst = std::max(worst, std::abs(p1[i] - p2[i]));
    }
  }
  std::ostringstream d;
  d << "max |dp| " << worst << " over 7 kinds, train and eval mode";
  return {worst < 1e-12, d.str()};
}

Outcome vlad_contracts() {
  std::mt19937_64 rng(99);
  double worst_norm = 0.0;
  std::size_t increases = 0, zero_cases = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t d = std::uniform_int_distribution<std::size_t>(2, 8)(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(2, 6)(rng);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(k + 10, 200)(rng);
    auto samples = testing::random_normal(rng, n * d);
    const auto fit = vlad::kmeans_fit({samples, n, d}, k, 50, rng());
    for (std::size_t i = 1; i < fit.objective_trace.size(); ++i)
      if (fit.objective_trace[i] > fit.objective_trace[i - 1]) ++increases;

    const std::size_t frames = std::uniform_int_distribution<std::size_t>(1, 30)(rng);
    auto x = testing::random_normal(rng, frames * d, 2.0);
    if (inst % 10 == 0) {
      // frames sitting exactly on one center: every residual is zero
      for (std::size_t f = 0; f < frames; ++f)
        std::copy_n(fit.codebook.centers.begin(), d, x.begin() + static_cast<std::ptrdiff_t>(f * d));
    }
    const auto enc = vlad::vlad_encode(fit.codebook, {x, frames, d});
    double sq = 0.0;
    for (double v : enc) sq += v * v;
    if (sq == 0.0) {
      ++zero_cases;
      continue;
    }
    worst_norm = std::max(worst_norm, std::abs(std::sqrt(sq) - 1.0));
  }
  std::ostringstream d;
  d << "max |norm-1| " << worst_norm << ", " << zero_cases << " all-zero encodings, " << increases
    << " objective increases";
  return {worst_norm < 1e-12 && increases == 0, d.str()};
}

Outcome io_round_trips() {
  const auto dir = scratch_dir("io");
  std::vector<std::string> failures;
  auto same = [&](const std::string& what, const fs::path& a, const fs::path& b) {
    if (testing::slurp(a.string()) != testing::slurp(b.string()) || fs::file_size(a) == 0) failures.push_back(what);
  };

  auto opts = overfit_options();
  opts.video_count = 12;
  synthetic::generate_synthetic(opts, (dir / "a.rec").string());
  const auto ds = dataio::read_records((dir / "a.rec").string());
  dataio::write_records((dir / "b.rec").string(), ds.header, ds.records);
  same("records", dir / "a.rec", dir / "b.rec");

  for (auto kind : models::kAllKinds) {
    const auto spec = overfit_spec(kind);
    models::Model model(spec);
    auto cfg = overfit_config(spec, 1);
    harness::train_model(model, cfg, ds, ds);  // populates BN stats and the codebook
    const auto name = models::to_string(kind);
    models::save_checkpoint((dir / (name + "_a.ckpt")).string(), model);
    auto loaded = models::load_checkpoint((dir / (name + "_a.ckpt")).string());
    models::save_checkpoint((dir / (name + "_b.ckpt")).string(), loaded);
    same("checkpoint " + name, dir / (name + "_a.ckpt"), dir / (name + "_b.ckpt"));

    if (model.codebook()) {
      vlad::save_codebook((dir / "a.cb").string(), *model.codebook());
      vlad::save_codebook((dir / "b.cb").string(), vlad::load_codebook((dir / "a.cb").string()));
      same("codebook", dir / "a.cb", dir / "b.cb");
    }

    metrics::write_predictions((dir / "a.pred").string(), harness::predict_dataset(model, ds, 4, 0));
    metrics::write_predictions((dir / "b.pred").string(), metrics::read_predictions((dir / "a.pred").string()));
    same("predictions " + name, dir / "a.pred", dir / "b.pred");
  }
  std::string d = failures.empty() ? "records, checkpoints (7 kinds), codebook, predictions byte-identical"
                                   : "mismatch:";
  for (const auto& f : failures) d += " " + f;
  return {failures.empty(), d};
}

Outcome ensemble_sanity() {
  const auto dir = scratch_dir("ensemble");
  auto opts = overfit_options();
  opts.video_count = 24;
  dataio::Dataset ds;
  synthetic::SyntheticGenerator gen(opts);
  ds.header = gen.header();
  while (!gen.done()) ds.records.push_back(gen.next());

  const auto spec_a = overfit_spec(models::ModelKind::video_level);
  const auto spec_b = overfit_spec(models::ModelKind::two_stream_gru);
  models::Model a(spec_a), b(spec_b);
  harness::train_model(a, overfit_config(spec_a, 3), ds, ds);
  harness::train_model(b, overfit_config(spec_b, 3), ds, ds);
  const auto pa = dir / "a.pred", pb = dir / "b.pred";
  metrics::write_predictions(pa.string(), harness::predict_dataset(a, ds, 8, 0));
  metrics::write_predictions(pb.string(), harness::predict_dataset(b, ds, 8, 0));

  harness::ensemble_files({pa.string(), pa.string()}, {}, (dir / "self.pred").string(), 0);
  harness::ensemble_files({pa.string(), pb.string()}, {1.0, 0.0}, (dir / "first.pred").string(), 0);
  harness::ensemble_files({pa.string()}, {}, (dir / "one.pred").string(), 0);

  auto gap_of = [&](const fs::path& p) {
    return metrics::gap_at_k(harness::attach_labels(metrics::read_predictions(p.string()), ds)).gap;
  };
  const double g_a = gap_of(pa), g_self = gap_of(dir / "self.pred");
  const bool self_ok = g_a == g_self;
  const bool first_ok = testing::slurp(pa.string()) == testing::slurp((dir / "first.pred").string());
  const bool one_ok = testing::slurp(pa.string()) == testing::slurp((dir / "one.pred").string());
  std::ostringstream d;
  d << "self-average GAP " << g_self << " vs " << g_a << (self_ok ? " (equal)" : " (DIFFERS)")
    << "; weights (1,0) " << (first_ok ? "reproduce" : "DO NOT reproduce") << " first input; single-file "
    << (one_ok ? "identical" : "DIFFERS");
  return {self_ok && first_ok && one_ok, d.str()};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + VIDSEQ_CLI_PATH + "\" " + args + " > /dev/null";
  return std::system(cmd.c_str());
}

Outcome determinism() {
  std::vector<std::string> preds, logs;
  for (int run = 0; run < 2; ++run) {
    const auto dir = scratch_dir("determinism_" + std::to_string(run));
    const auto p = [&](const char* name) { return (dir / name).string(); };
    {
      std::ofstream cfg(p("train.cfg"));
      cfg << "version = 1\nmodel.kind = ff_lstm\nmodel.vocab_size = 10\nmodel.visual_dim = 16\n"
             "model.audio_dim = 4\nmodel.hidden_size = 8\nmodel.depth = 2\nmodel.fc_hidden = 32\n"
             "model.attention_size = 8\nmodel.seed = 3\nlearning_rate = 0.003\nepochs = 10\nseed = 9\n";
    }
    int rc = run_cli("gen-data --vocab 10 --videos 48 --seed 4 --noise 1.0 --visual-dim 16 --audio-dim 4 "
                     "--min-frames 8 --max-frames 24 --out " + p("data.rec"));
    rc |= run_cli("train --config " + p("train.cfg") + " --data " + p("data.rec") + " --out " + p("run"));
    rc |= run_cli("predict --checkpoint " + p("run/checkpoint.bin") + " --data " + p("data.rec") + " --out " +
                  p("pred.txt"));
    rc |= run_cli("eval --predictions " + p("pred.txt") + " --data " + p("data.rec"));
    if (rc != 0) return {false, "a CLI step failed in run " + std::to_string(run)};
    preds.push_back(testing::slurp(p("pred.txt")));
    logs.push_back(testing::slurp(p("run/metrics.tsv")));
  }
  const bool same_pred = preds[0] == preds[1] && !preds[0].empty();
  const bool same_log = logs[0] == logs[1] && !logs[0].empty();
  std::ostringstream d;
  d << "predictions " << (same_pred ? "identical" : "DIFFER") << ", metric logs "
    << (same_log ? "identical" : "DIFFER") << " (" << std::count(logs[0].begin(), logs[0].end(), '\n')
    << " epochs)";
  return {same_pred && same_log, d.str()};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> check;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "gradient suite", gradient_suite},
      {2, "metric oracle", metric_oracle},
      {3, "overfitting capacity", overfitting},
      {4, "deep-stack stability", deep_stack},
      {5, "padding inertness", padding_inertness},
      {6, "vlad contracts", vlad_contracts},
      {7, "i/o round-trips", io_round_trips},
      {8, "ensemble sanity", ensemble_sanity},
      {9, "determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("[%s] %d %s: %s\n", o.passed ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
    failed += o.passed ? 0 : 1;
  }
  const auto root = fs::temp_directory_path() / ("vidseq_acceptance_" + std::to_string(::getpid()));
  std::error_code ec;
  fs::remove_all(root, ec);
  return failed == 0 ? 0 : 1;
}
