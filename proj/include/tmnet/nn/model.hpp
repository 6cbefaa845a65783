#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tmnet/errors.hpp"
#include "tmnet/nn/blocks.hpp"
#include "tmnet/nn/layers.hpp"

namespace tmnet::nn {

struct StageConfig {
  std::size_t channels = 0;
  std::size_t blocks = 0;
  std::size_t stride = 1;

  friend bool operator==(const StageConfig&, const StageConfig&) = default;
};

struct ModelConfig {
  Scheme scheme = Scheme::Euler;
  std::size_t in_channels = 3;
  std::size_t stem_channels = 64;
  std::vector<StageConfig> stages;
  std::size_t classes = 10;
  std::uint64_t seed = 0;

  /// Same network shape and wiring; the seed is ignored.
  bool same_architecture(const ModelConfig& o) const {
    return scheme == o.scheme && in_channels == o.in_channels && stem_channels == o.stem_channels &&
           stages == o.stages && classes == o.classes;
  }
};

/// Stage list as "64x2s1,128x2s2": channels x blocks s stride.
inline std::string format_stages(const std::vector<StageConfig>& stages) {
  std::string out;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(stages[i].channels) + 'x' + std::to_string(stages[i].blocks) + 's' +
           std::to_string(stages[i].stride);
  }
  return out;
}

inline std::vector<StageConfig> parse_stages(std::string_view text, const std::string& field = "stages") {
  std::vector<StageConfig> out;
  std::stringstream ss{std::string(text)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    StageConfig st;
    char x = 0, s = 0;
    std::istringstream is(item);
    if (!(is >> st.channels >> x >> st.blocks >> s >> st.stride) || x != 'x' || s != 's' || !(is >> std::ws).eof())
      throw ConfigError(field, "expected CHANNELSxBLOCKSsSTRIDE, got '" + item + "'");
    out.push_back(st);
  }
  if (out.empty() || text.back() == ',') throw ConfigError(field, "expected a comma-separated stage list");
  return out;
}

inline std::uint64_t parse_count(std::string_view text, const std::string& field) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || end != text.data() + text.size())
    throw ConfigError(field, "expected a non-negative integer, got '" + std::string(text) + "'");
  return v;
}

/// Applies one model setting. Keys: scheme, in_channels, stem, stages, classes, seed.
inline void set_model_key(ModelConfig& c, std::string_view key, std::string_view value,
                          const std::string& prefix = "") {
  const std::string field = prefix + std::string(key);
  if (key == "scheme") {
    const auto s = parse_scheme(value);
    if (!s) throw ConfigError(field, "unknown scheme '" + std::string(value) + "' (euler, ie, rk2, rk3, rk4, tm)");
    c.scheme = *s;
  } else if (key == "in_channels") {
    c.in_channels = parse_count(value, field);
  } else if (key == "stem") {
    c.stem_channels = parse_count(value, field);
  } else if (key == "stages") {
    c.stages = parse_stages(value, field);
  } else if (key == "classes") {
    c.classes = parse_count(value, field);
  } else if (key == "seed") {
    c.seed = parse_count(value, field);
  } else {
    throw ConfigError(field, "unknown key");
  }
}

/// One `key = value` line per field, in a fixed order.
inline std::string to_text(const ModelConfig& c) {
  std::ostringstream os;
  os << "scheme = " << scheme_name(c.scheme) << "\nin_channels = " << c.in_channels
     << "\nstem = " << c.stem_channels << "\nstages = " << format_stages(c.stages) << "\nclasses = " << c.classes
     << "\nseed = " << c.seed << "\n";
  return os.str();
}

inline void validate(const ModelConfig& c) {
  if (c.in_channels < 1) throw ConfigError("in_channels", "must be >= 1");
  if (c.stem_channels < 1) throw ConfigError("stem", "must be >= 1");
  if (c.classes < 2) throw ConfigError("classes", "must be >= 2, got " + std::to_string(c.classes));
  if (c.stages.empty()) throw ConfigError("stages", "at least one stage is required");
  std::size_t prev = c.stem_channels;
  for (std::size_t i = 0; i < c.stages.size(); ++i) {
    const auto& s = c.stages[i];
    const std::string path = "stages[" + std::to_string(i) + "]";
    if (s.blocks < 1) throw ConfigError(path + ".blocks", "must be >= 1");
    if (s.stride != 1 && s.stride != 2) throw ConfigError(path + ".stride", "must be 1 or 2");
    if (s.channels < prev)
      throw ConfigError(path + ".channels", "channel sequence must be non-decreasing (" + std::to_string(prev) +
                                                " -> " + std::to_string(s.channels) + ")");
    prev = s.channels;
  }
}

inline ModelConfig model_config_from_text(std::string_view text) {
  ModelConfig c;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("model", "malformed line '" + line + "'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    set_model_key(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  validate(c);
  return c;
}

/// Weighted conv/linear layers on the main path: stem, two per block, classifier.
inline std::size_t conventional_depth(const ModelConfig& c) {
  std::size_t blocks = 0;
  for (const auto& s : c.stages) blocks += s.blocks;
  return 2 * blocks + 2;
}

namespace detail {
inline std::vector<StageConfig> cifar_plan(std::initializer_list<std::size_t> blocks) {
  const std::size_t channels[] = {64, 128, 256, 512};
  std::vector<StageConfig> out;
  std::size_t i = 0;
  for (std::size_t b : blocks) {
    out.push_back({channels[i], b, i == 0 ? std::size_t{1} : std::size_t{2}});
    ++i;
  }
  return out;
}
}  // namespace detail

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{
      "preactresnet18-cifar", "preactresnet34-cifar", "tmresnet22-cifar", "tmresnet36-cifar",
      "rkresnet-ie-18",       "rkresnet-rk2-18",      "rkresnet-rk3-18",  "rkresnet-rk4-18"};
  return names;
}

/// Named CIFAR-scale architectures. TM presets use stage plans whose first
/// stage is deep enough for a Boot TM-block.
inline ModelConfig model_preset(std::string_view name, std::size_t classes = 10, std::uint64_t seed = 0) {
  ModelConfig c;
  c.classes = classes;
  c.seed = seed;
  if (name == "preactresnet18-cifar") {
    c.stages = detail::cifar_plan({2, 2, 2, 2});
  } else if (name == "preactresnet34-cifar") {
    c.stages = detail::cifar_plan({3, 4, 6, 3});
  } else if (name == "tmresnet22-cifar") {
    c.scheme = Scheme::TM;
    c.stages = detail::cifar_plan({4, 2, 2, 2});
  } else if (name == "tmresnet36-cifar") {
    c.scheme = Scheme::TM;
    c.stages = detail::cifar_plan({5, 3, 6, 3});
  } else if (name.starts_with("rkresnet-") && name.ends_with("-18")) {
    const auto s = parse_scheme(name.substr(9, name.size() - 12));
    if (!s || *s == Scheme::Euler || *s == Scheme::TM) throw ConfigError("model", "unknown preset '" + std::string(name) + "'");
    c.scheme = *s;
    c.stages = detail::cifar_plan({2, 2, 2, 2});
  } else {
    std::string valid;
    for (const auto& n : preset_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("model", "unknown preset '" + std::string(name) + "' (valid: " + valid + ")");
  }
  return c;
}

struct ParamCount {
  std::size_t stem = 0;
  std::vector<std::size_t> stages;
  std::size_t head = 0;
  std::size_t total = 0;
};

template <class T>
class Model {
 public:
  Model() = default;

  explicit Model(ModelConfig config) : config_(std::move(config)) {
    validate(config_);
    std::mt19937_64 rng(config_.seed);
    stem_ = ConvLayer<T>("stem.conv", config_.in_channels, config_.stem_channels, 3, 1, rng);
    std::size_t in = config_.stem_channels;
    for (std::size_t si = 0; si < config_.stages.size(); ++si) {
      const auto& sc = config_.stages[si];
      std::vector<Block<T>> blocks;
      blocks.reserve(sc.blocks);
      for (std::size_t bi = 0; bi < sc.blocks; ++bi) {
        const std::string path = "stage" + std::to_string(si + 1) + ".block" + std::to_string(bi);
        blocks.emplace_back(path, bi == 0 ? in : sc.channels, sc.channels, bi == 0 ? sc.stride : 1, rng);
      }
      stages_.push_back(std::move(blocks));
      in = sc.channels;
    }
    head_bn_ = BatchNormLayer<T>("head.bn", in);
    fc_ = LinearLayer<T>("fc", in, config_.classes, rng);
  }

  const ModelConfig& config() const { return config_; }
  std::vector<std::vector<Block<T>>>& stages() { return stages_; }

  /// Logits, N x classes.
  Var<T> forward(Tape<T>& tape, const Tensor<T>& batch, Mode mode) {
    if (batch.rank() != 4 || batch.dim(1) != config_.in_channels)
      throw ShapeMismatch("model expects N x " + std::to_string(config_.in_channels) + " x H x W input, got " +
                          ad::shape_string(batch.shape()));
    auto x = stem_(tape, tape.constant(batch));
    for (auto& blocks : stages_) x = stage_forward(tape, config_.scheme, std::span<Block<T>>(blocks), x, mode);
    x = ad::relu(head_bn_(tape, x, mode));
    return fc_(tape, ad::global_avg_pool(x));
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    stem_.collect(out);
    for (auto& blocks : stages_)
      for (auto& b : blocks) b.collect(out);
    head_bn_.collect(out);
    fc_.collect(out);
    return out;
  }

  std::vector<Buffer<T>> buffers() {
    std::vector<Buffer<T>> out;
    for (auto& blocks : stages_)
      for (auto& b : blocks) b.collect_buffers(out);
    head_bn_.collect_buffers(out);
    return out;
  }

  ParamCount param_count() {
    auto count = [](auto& layer) {
      std::vector<Parameter<T>*> ps;
      layer.collect(ps);
      std::size_t n = 0;
      for (auto* p : ps) n += p->value.numel();
      return n;
    };
    ParamCount pc;
    pc.stem = count(stem_);
    for (auto& blocks : stages_) {
      std::size_t n = 0;
      for (auto& b : blocks) n += count(b);
      pc.stages.push_back(n);
    }
    pc.head = count(head_bn_) + count(fc_);
    pc.total = pc.stem + pc.head;
    for (std::size_t n : pc.stages) pc.total += n;
    return pc;
  }

  /// Makes every residual branch output zero, so each block reduces to its skip path.
  void zero_residual_branches() {
    for (auto& blocks : stages_)
      for (auto& b : blocks) b.residual.zero_final_conv();
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

 private:
  ModelConfig config_;
  ConvLayer<T> stem_;
  std::vector<std::vector<Block<T>>> stages_;
  BatchNormLayer<T> head_bn_;
  LinearLayer<T> fc_;
};

template <class T = float>
Model<T> build_model(const ModelConfig& config) {
  return Model<T>(config);
}

/// Row-wise argmax; ties go to the lowest class index.
template <class T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (logits[i * k + j] > logits[i * k + best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

template <class T>
std::vector<int> predict(Model<T>& model, const Tensor<T>& batch) {
  Tape<T> tape;
  return argmax_rows(model.forward(tape, batch, Mode::Eval).value());
}

}  // namespace tmnet::nn
