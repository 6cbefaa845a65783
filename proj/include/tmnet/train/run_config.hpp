#pragma once

// Flat `key = value` run configuration. Blank lines and `#` comments are
// ignored; unknown keys are errors. `preset = paper-full` (if present) is
// applied first and the remaining keys override it.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tmnet/errors.hpp"
#include "tmnet/nn/model.hpp"

namespace tmnet::train {

enum class DatasetKind { Synth, Cifar10, Mnist };
enum class LrSchedule { Constant, StepDecay };

struct RunConfig {
  std::uint64_t seed = 0;

  DatasetKind dataset = DatasetKind::Synth;
  std::filesystem::path data_path;
  std::size_t synth_n = 2000;
  std::size_t synth_test_n = 500;
  std::size_t synth_classes = 4;
  std::size_t synth_size = 16;

  std::string model_preset;  // empty: use `model` as given
  nn::ModelConfig model = default_model();

  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  LrSchedule schedule = LrSchedule::Constant;
  std::size_t step_epochs = 30;
  double step_factor = 0.1;

  bool normalize = false;
  bool augment = false;
  std::size_t eval_batch_size = 256;
  bool log_wall_time = false;
  std::filesystem::path out_dir = "out";

  /// Three-stage Euler network sized for 16x16 synthetic images.
  static nn::ModelConfig default_model() {
    nn::ModelConfig m;
    m.stem_channels = 8;
    m.stages = {{8, 4, 1}, {16, 4, 2}, {32, 4, 2}};
    m.classes = 4;
    return m;
  }

  double lr_at_epoch(std::size_t epoch) const {  // epoch counts from 1
    if (schedule == LrSchedule::Constant) return lr;
    double f = 1.0;
    for (std::size_t k = 0; k < (epoch - 1) / step_epochs; ++k) f *= step_factor;
    return lr * f;
  }
};

inline std::string_view dataset_name(DatasetKind d) {
  switch (d) {
    case DatasetKind::Synth: return "synth";
    case DatasetKind::Cifar10: return "cifar10";
    case DatasetKind::Mnist: return "mnist";
  }
  return "?";
}

/// Full-scale CIFAR-10 settings: 120 epochs at batch 256.
inline RunConfig paper_full_preset() {
  RunConfig c;
  c.dataset = DatasetKind::Cifar10;
  c.data_path = "data/cifar-10-batches-bin";
  c.model_preset = "tmresnet22-cifar";
  c.model = nn::model_preset(c.model_preset);
  c.epochs = 120;
  c.batch_size = 256;
  c.lr = 0.1;
  c.schedule = LrSchedule::StepDecay;
  c.step_epochs = 40;
  c.step_factor = 0.1;
  c.normalize = true;
  c.augment = true;
  return c;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& v, const std::string& key) {
  double out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || end != v.data() + v.size())
    throw ConfigError(key, "expected a number, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}

}  // namespace detail

inline void validate(const RunConfig& c) {
  if (c.epochs < 1) throw ConfigError("epochs", "must be >= 1");
  if (c.batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (c.eval_batch_size < 1) throw ConfigError("eval_batch_size", "must be >= 1");
  if (!(c.lr > 0)) throw ConfigError("lr", "must be > 0");
  if (!(c.momentum >= 0 && c.momentum < 1)) throw ConfigError("momentum", "must be in [0, 1)");
  if (!(c.weight_decay >= 0)) throw ConfigError("weight_decay", "must be >= 0");
  if (c.schedule == LrSchedule::StepDecay) {
    if (c.step_epochs < 1) throw ConfigError("lr_step_epochs", "must be >= 1");
    if (!(c.step_factor > 0)) throw ConfigError("lr_step_factor", "must be > 0");
  }
  if (c.dataset == DatasetKind::Synth) {
    if (c.synth_classes < 2) throw ConfigError("synth.classes", "must be >= 2");
    if (c.synth_n < 1 || c.synth_test_n < 1) throw ConfigError("synth.n", "sample counts must be >= 1");
    if (c.synth_size < 4) throw ConfigError("synth.size", "must be >= 4");
  } else if (c.data_path.empty()) {
    throw ConfigError("data_path", "required for dataset " + std::string(dataset_name(c.dataset)));
  }
  if (c.normalize && c.dataset != DatasetKind::Cifar10)
    throw ConfigError("normalize", "the per-channel constants are defined for cifar10 only");
  nn::validate(c.model);
  const std::size_t classes = c.dataset == DatasetKind::Synth ? c.synth_classes : 10;
  if (c.model.classes != classes)
    throw ConfigError("model.classes", "model has " + std::to_string(c.model.classes) + " classes, dataset has " +
                                           std::to_string(classes));
  const std::size_t channels = c.dataset == DatasetKind::Mnist ? 1 : 3;
  if (c.model.in_channels != channels)
    throw ConfigError("model.in_channels", "model expects " + std::to_string(c.model.in_channels) +
                                               " input channels, dataset has " + std::to_string(channels));
}

/// Parses and validates a run configuration.
inline RunConfig parse_run_config(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::set<std::string> seen;
  std::istringstream is{std::string(text)};
  std::string line;
  for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
    const auto hash = line.find('#');
    const std::string body = detail::trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno), "expected key = value");
    std::string key = detail::trim(std::string_view(body).substr(0, eq));
    std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(key, "given more than once");
    entries.emplace_back(std::move(key), std::move(value));
  }

  RunConfig c;
  for (const auto& [k, v] : entries)
    if (k == "preset") {
      if (v != "paper-full") throw ConfigError(k, "unknown run preset '" + v + "' (valid: paper-full)");
      c = paper_full_preset();
    }

  // Model keys are applied after `model` so they refine a named preset.
  bool model_seed_given = false;
  std::vector<std::pair<std::string, std::string>> model_keys;
  for (const auto& [k, v] : entries) {
    if (k == "preset") continue;
    if (k.starts_with("model.")) {
      model_keys.emplace_back(k, v);
      model_seed_given = model_seed_given || k == "model.seed";
    } else if (k == "seed") {
      c.seed = nn::parse_count(v, k);
    } else if (k == "dataset") {
      if (v == "synth") c.dataset = DatasetKind::Synth;
      else if (v == "cifar10") c.dataset = DatasetKind::Cifar10;
      else if (v == "mnist") c.dataset = DatasetKind::Mnist;
      else throw ConfigError(k, "unknown dataset '" + v + "' (valid: synth, cifar10, mnist)");
    } else if (k == "data_path") {
      c.data_path = v;
    } else if (k == "synth.n") {
      c.synth_n = nn::parse_count(v, k);
    } else if (k == "synth.test_n") {
      c.synth_test_n = nn::parse_count(v, k);
    } else if (k == "synth.classes") {
      c.synth_classes = nn::parse_count(v, k);
    } else if (k == "synth.size") {
      c.synth_size = nn::parse_count(v, k);
    } else if (k == "model") {
      c.model_preset = v == "custom" ? "" : v;
      if (!c.model_preset.empty()) c.model = nn::model_preset(v);
    } else if (k == "epochs") {
      c.epochs = nn::parse_count(v, k);
    } else if (k == "batch_size") {
      c.batch_size = nn::parse_count(v, k);
    } else if (k == "eval_batch_size") {
      c.eval_batch_size = nn::parse_count(v, k);
    } else if (k == "lr") {
      c.lr = detail::parse_double(v, k);
    } else if (k == "momentum") {
      c.momentum = detail::parse_double(v, k);
    } else if (k == "weight_decay") {
      c.weight_decay = detail::parse_double(v, k);
    } else if (k == "lr_schedule") {
      if (v == "constant") c.schedule = LrSchedule::Constant;
      else if (v == "step") c.schedule = LrSchedule::StepDecay;
      else throw ConfigError(k, "unknown schedule '" + v + "' (valid: constant, step)");
    } else if (k == "lr_step_epochs") {
      c.step_epochs = nn::parse_count(v, k);
    } else if (k == "lr_step_factor") {
      c.step_factor = detail::parse_double(v, k);
    } else if (k == "normalize") {
      c.normalize = detail::parse_bool(v, k);
    } else if (k == "augment") {
      c.augment = detail::parse_bool(v, k);
    } else if (k == "log_wall_time") {
      c.log_wall_time = detail::parse_bool(v, k);
    } else if (k == "out_dir") {
      c.out_dir = v;
    } else {
      throw ConfigError(k, "unknown key");
    }
  }
  // A preset's class count follows the dataset unless given explicitly.
  if (!c.model_preset.empty() && c.dataset == DatasetKind::Synth) c.model.classes = c.synth_classes;
  for (const auto& [k, v] : model_keys) nn::set_model_key(c.model, std::string_view(k).substr(6), v, "model.");
  if (!model_seed_given) c.model.seed = c.seed;
  validate(c);
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace tmnet::train
