#include "vidseq/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "vidseq/errors.hpp"

namespace vidseq::harness {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [p, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + value + "'");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (eval_batch_size < 1) throw ConfigError("eval_batch_size must be at least 1");
  if (clip_norm && !(*clip_norm > 0)) throw ConfigError("clip_norm must be positive");
}

std::optional<double> TrainConfig::effective_clip_norm() const {
  if (!clip_auto) return clip_norm;
  const bool deep_stack = (model.kind == models::ModelKind::ff_lstm || model.kind == models::ModelKind::ff_gru) &&
                          model.depth >= 4;
  return deep_stack ? std::optional<double>(5.0) : std::nullopt;
}

AdamConfig TrainConfig::adam() const {
  return {learning_rate, beta1, beta2, epsilon, effective_clip_norm()};
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig c;
  auto& m = c.model;
  auto u32 = [](std::uint32_t& field) {
    return [&field](const std::string& k, const std::string& v) { field = parse_number<std::uint32_t>(k, v); };
  };
  auto size = [](std::size_t& field) {
    return [&field](const std::string& k, const std::string& v) { field = parse_number<std::size_t>(k, v); };
  };
  auto real = [](double& field) {
    return [&field](const std::string& k, const std::string& v) { field = parse_number<double>(k, v); };
  };
  auto str = [](std::string& field) { return [&field](const std::string&, const std::string& v) { field = v; }; };

  const std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters = {
      {"model.kind", [&](const std::string&, const std::string& v) { m.kind = models::parse_model_kind(v); }},
      {"model.vocab_size", u32(m.vocab_size)},
      {"model.visual_dim", u32(m.visual_dim)},
      {"model.audio_dim", u32(m.audio_dim)},
      {"model.hidden_size", u32(m.hidden_size)},
      {"model.depth", u32(m.depth)},
      {"model.trb_count", u32(m.trb_count)},
      {"model.trb_filters", u32(m.trb_filters)},
      {"model.fc_hidden", u32(m.fc_hidden)},
      {"model.attention_size", u32(m.attention_size)},
      {"model.vlad_clusters", u32(m.vlad_clusters)},
      {"model.fast_forward", [&](const std::string& k, const std::string& v) { m.fast_forward = parse_bool(k, v); }},
      {"model.seed", [&](const std::string& k, const std::string& v) { m.seed = parse_number<std::uint64_t>(k, v); }},
      {"learning_rate", real(c.learning_rate)},
      {"batch_size", size(c.batch_size)},
      {"epochs", size(c.epochs)},
      {"adam.beta1", real(c.beta1)},
      {"adam.beta2", real(c.beta2)},
      {"adam.epsilon", real(c.epsilon)},
      {"clip_norm",
       [&](const std::string& k, const std::string& v) {
         if (v == "auto") {
           c.clip_auto = true;
           c.clip_norm.reset();
         } else if (v == "none") {
           c.clip_auto = false;
           c.clip_norm.reset();
         } else {
           c.clip_auto = false;
           c.clip_norm = parse_number<double>(k, v);
         }
       }},
      {"seed", [&](const std::string& k, const std::string& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
      {"eval_batch_size", size(c.eval_batch_size)},
      {"kmeans.max_iter", size(c.kmeans_max_iter)},
      {"kmeans.sample_limit", size(c.kmeans_sample_limit)},
      {"data", str(c.data_path)},
      {"val_data", str(c.val_path)},
      {"out", str(c.out_dir)},
  };

  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  bool saw_version = false;
  while (std::getline(lines, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!saw_version) {
      if (key != "version") throw ConfigError("config must start with 'version = " + std::to_string(kConfigVersion) + "'");
      if (parse_number<int>(key, value) != kConfigVersion) {
        throw ConfigError("unsupported config version " + value);
      }
      saw_version = true;
      continue;
    }
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    it->second(key, value);
  }
  if (!saw_version) throw ConfigError("config is missing 'version = " + std::to_string(kConfigVersion) + "'");
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

std::string format_train_config(const TrainConfig& c) {
  const auto& m = c.model;
  std::ostringstream out;
  out << "version = " << kConfigVersion << "\n"
      << "model.kind = " << models::to_string(m.kind) << "\n"
      << "model.vocab_size = " << m.vocab_size << "\n"
      << "model.visual_dim = " << m.visual_dim << "\n"
      << "model.audio_dim = " << m.audio_dim << "\n"
      << "model.hidden_size = " << m.hidden_size << "\n"
      << "model.depth = " << m.depth << "\n"
      << "model.trb_count = " << m.trb_count << "\n"
      << "model.trb_filters = " << m.trb_filters << "\n"
      << "model.fc_hidden = " << m.fc_hidden << "\n"
      << "model.attention_size = " << m.attention_size << "\n"
      << "model.vlad_clusters = " << m.vlad_clusters << "\n"
      << "model.fast_forward = " << (m.fast_forward ? "true" : "false") << "\n"
      << "model.seed = " << m.seed << "\n"
      << "learning_rate = " << format_double(c.learning_rate) << "\n"
      << "batch_size = " << c.batch_size << "\n"
      << "epochs = " << c.epochs << "\n"
      << "adam.beta1 = " << format_double(c.beta1) << "\n"
      << "adam.beta2 = " << format_double(c.beta2) << "\n"
      << "adam.epsilon = " << format_double(c.epsilon) << "\n"
      << "clip_norm = " << (c.clip_auto ? "auto" : (c.clip_norm ? format_double(*c.clip_norm) : "none")) << "\n"
      << "seed = " << c.seed << "\n"
      << "eval_batch_size = " << c.eval_batch_size << "\n"
      << "kmeans.max_iter = " << c.kmeans_max_iter << "\n"
      << "kmeans.sample_limit = " << c.kmeans_sample_limit << "\n";
  if (!c.data_path.empty()) out << "data = " << c.data_path << "\n";
  if (!c.val_path.empty()) out << "val_data = " << c.val_path << "\n";
  if (!c.out_dir.empty()) out << "out = " << c.out_dir << "\n";
  return out.str();
}

}  // namespace vidseq::harness
