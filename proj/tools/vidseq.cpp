#include <cstdio>
#include <fstream>
#include <iterator>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vidseq/config.hpp"
#include "vidseq/errors.hpp"
#include "vidseq/gradcheck.hpp"
#include "vidseq/models.hpp"
#include "vidseq/synthetic.hpp"
#include "vidseq/training.hpp"

namespace {

using namespace vidseq;

// `@list.txt` expands to the paths listed one per line in that file.
std::vector<std::string> expand_inputs(const std::vector<std::string>& raw) {
  std::vector<std::string> paths;
  for (const auto& item : raw) {
    if (item.empty() || item[0] != '@') {
      paths.push_back(item);
      continue;
    }
    std::ifstream in(item.substr(1));
    if (!in) throw IoError("cannot open input list " + item.substr(1));
    for (std::string line; std::getline(in, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty() && line[0] != '#') paths.push_back(line);
    }
  }
  return paths;
}

int run(int argc, char** argv) {
  CLI::App app{"Frame-level video classification toolkit"};
  app.require_subcommand(1);

  synthetic::SyntheticOptions gen;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a seeded synthetic record file");
  gen_cmd->add_option("--vocab", gen.vocab_size, "Number of classes")->capture_default_str();
  gen_cmd->add_option("--videos", gen.video_count, "Number of videos")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
  gen_cmd->add_option("--noise", gen.noise_sigma, "Frame noise standard deviation")->capture_default_str();
  gen_cmd->add_option("--visual-dim", gen.visual_dim)->capture_default_str();
  gen_cmd->add_option("--audio-dim", gen.audio_dim)->capture_default_str();
  gen_cmd->add_option("--min-frames", gen.min_frames)->capture_default_str();
  gen_cmd->add_option("--max-frames", gen.max_frames)->capture_default_str();
  gen_cmd->add_option("--out", gen_out)->required();

  std::string config_path, train_data, train_val, train_out;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a config file");
  train_cmd->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--data", train_data, "Training records (overrides the config)");
  train_cmd->add_option("--val", train_val, "Validation records (overrides the config)");
  train_cmd->add_option("--out", train_out, "Output directory (overrides the config)");

  std::string ckpt, pred_data, pred_out;
  bool full_scores = false;
  std::size_t pred_k = metrics::kDefaultTopK, pred_batch = 32;
  auto* pred_cmd = app.add_subcommand("predict", "Score a record file with a checkpoint");
  pred_cmd->add_option("--checkpoint", ckpt)->required();
  pred_cmd->add_option("--data", pred_data)->required();
  pred_cmd->add_option("--out", pred_out)->required();
  pred_cmd->add_flag("--full-scores", full_scores, "Keep every class score (for ensembling)");
  pred_cmd->add_option("--top-k", pred_k)->capture_default_str();
  pred_cmd->add_option("--batch-size", pred_batch)->capture_default_str();

  std::string eval_preds, eval_data;
  std::size_t eval_k = metrics::kDefaultTopK;
  auto* eval_cmd = app.add_subcommand("eval", "GAP@k of a prediction file");
  eval_cmd->add_option("--predictions", eval_preds)->required();
  eval_cmd->add_option("--data", eval_data)->required();
  eval_cmd->add_option("--k", eval_k)->capture_default_str();

  std::vector<std::string> ens_inputs;
  std::vector<double> ens_weights;
  std::string ens_out;
  bool ens_full = false;
  auto* ens_cmd = app.add_subcommand("ensemble", "Weighted average of prediction files");
  ens_cmd->add_option("--inputs", ens_inputs, "Prediction files, or @file listing them")->required();
  ens_cmd->add_option("--weights", ens_weights, "One weight per input (default uniform)");
  ens_cmd->add_option("--out", ens_out)->required();
  ens_cmd->add_flag("--full-scores", ens_full, "Do not truncate to the top 20");

  std::string gc_model = "all";
  double gc_tol = 1e-4;
  std::size_t gc_samples = 16;
  std::uint64_t gc_seed = 0;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check at toy dimensions");
  gc_cmd->add_option("--model", gc_model, "Model kind or 'all'")->capture_default_str();
  gc_cmd->add_option("--tolerance", gc_tol)->capture_default_str();
  gc_cmd->add_option("--samples", gc_samples, "Entries checked per parameter block")->capture_default_str();
  gc_cmd->add_option("--seed", gc_seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: usage: %s\n", e.what());
    return 2;
  }

  if (*gen_cmd) {
    const auto bytes = synthetic::generate_synthetic(gen, gen_out);
    std::printf("wrote %llu videos (%llu bytes) to %s\n", static_cast<unsigned long long>(gen.video_count),
                static_cast<unsigned long long>(bytes), gen_out.c_str());
  } else if (*train_cmd) {
    auto config = harness::load_train_config(config_path);
    if (!train_data.empty()) config.data_path = train_data;
    if (!train_val.empty()) config.val_path = train_val;
    if (!train_out.empty()) config.out_dir = train_out;
    if (config.out_dir.empty()) throw ConfigError("no output directory (use --out or set `out`)");
    harness::TrainHooks hooks;
    hooks.on_epoch = [](const harness::EpochStats& s) {
      std::fputs(harness::format_log_line(s).c_str(), stdout);
      std::fflush(stdout);
      return true;
    };
    const auto result = harness::train(config, hooks);
    std::printf("best epoch %zu val_gap %.6f checkpoint %s\n", result.best_epoch, result.best_gap,
                result.checkpoint_path.c_str());
  } else if (*pred_cmd) {
    harness::predict(ckpt, pred_data, pred_out, pred_k, full_scores, pred_batch);
  } else if (*eval_cmd) {
    const auto r = harness::evaluate(eval_preds, eval_data, eval_k);
    std::printf("gap %.8f pairs %zu positives %zu\n", r.gap, r.pooled_pairs, r.total_positives);
  } else if (*ens_cmd) {
    harness::ensemble_files(expand_inputs(ens_inputs), ens_weights, ens_out, ens_full ? 0 : metrics::kDefaultTopK);
  } else if (*gc_cmd) {
    std::vector<models::ModelKind> kinds;
    if (gc_model == "all") {
      kinds.assign(std::begin(models::kAllKinds), std::end(models::kAllKinds));
    } else {
      kinds.push_back(models::parse_model_kind(gc_model));
    }
    bool ok = true;
    for (auto kind : kinds) {
      const auto report = gradcheck::grad_check(models::toy_spec(kind), gc_samples, gc_tol, gc_seed);
      std::printf("%s %s worst_rel_err=%.3e\n", models::to_string(kind).c_str(), report.passed() ? "PASS" : "FAIL",
                  report.worst());
      std::fputs(gradcheck::format_report(report).c_str(), stdout);
      ok = ok && report.passed();
    }
    if (!ok) {
      std::fprintf(stderr, "error: gradcheck: relative error above %g\n", gc_tol);
      return 1;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const vidseq::Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", e.kind().c_str(), e.what());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
  }
  return 1;
}
