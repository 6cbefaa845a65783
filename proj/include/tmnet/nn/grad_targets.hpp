#pragma once

// Named gradient-check scenarios in double precision: single layers, full
// residual blocks of each wiring, and whole preset networks.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tmnet/autodiff/grad_check.hpp"
#include "tmnet/errors.hpp"
#include "tmnet/nn/blocks.hpp"
#include "tmnet/nn/model.hpp"

namespace tmnet::nn {

inline const std::vector<std::string>& grad_check_targets() {
  static const std::vector<std::string> names{"conv", "bn", "linear", "euler-block", "rk-block", "tm-block"};
  return names;
}

namespace detail {

inline Tensor<double> normal_tensor(Shape s, std::mt19937_64& rng, double mean = 0.0, double sd = 1.0) {
  std::normal_distribution<double> d(mean, sd);
  Tensor<double> t(std::move(s));
  for (auto& v : t.data()) v = d(rng);
  return t;
}

// Moves BN affine parameters off (1, 0) so their gradients are exercised.
inline void jitter_bn(std::vector<Parameter<double>*> params, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  for (auto* p : params)
    if (p->name.ends_with(".gamma") || p->name.ends_with(".beta"))
      for (auto& v : p->value.data()) v += d(rng);
}

}  // namespace detail

/// Runs the named check. `target` is one of grad_check_targets() or a model
/// preset name; for presets only `preset_coords` coordinates per tensor are
/// sampled.
inline ad::GradCheckReport run_grad_check_target(std::string_view target, std::uint64_t seed = 0,
                                                 std::size_t preset_coords = 2) {
  std::mt19937_64 rng(seed);
  ad::GradCheckOptions opt;
  opt.seed = seed + 1;
  const std::size_t c = 3;
  Parameter<double> x("input", detail::normal_tensor({3, c, 5, 5}, rng));
  const auto probe = detail::normal_tensor({3, c, 5, 5}, rng);
  auto weighted_sum = [&](Var<double> y) {
    auto& tape = *y.tape;
    return ad::sum(ad::mul(y, tape.constant(probe)));
  };

  if (target == "conv") {
    ConvLayer<double> conv("conv", c, c, 3, 1, rng);
    return ad::grad_check([&](Tape<double>& t) { return weighted_sum(conv(t, t.param(x))); }, {&conv.weight, &x},
                          opt);
  }
  if (target == "bn") {
    BatchNormLayer<double> bn("bn", c);
    std::vector<Parameter<double>*> ps{&x};
    bn.collect(ps);
    detail::jitter_bn(ps, rng);
    return ad::grad_check([&](Tape<double>& t) { return weighted_sum(bn(t, t.param(x), Mode::Train)); }, ps, opt);
  }
  if (target == "linear") {
    LinearLayer<double> fc("fc", c * 25, 4, rng);
    for (auto& v : fc.bias.value.data()) v = std::normal_distribution<double>(0.0, 0.1)(rng);
    const std::vector<int> labels{0, 3, 1};
    return ad::grad_check(
        [&](Tape<double>& t) { return ad::softmax_cross_entropy(fc(t, t.param(x)), labels); },
        {&fc.weight, &fc.bias, &x}, opt);
  }
  if (target == "euler-block" || target == "rk-block" || target == "tm-block") {
    const std::size_t n = target == "tm-block" ? 4 : 1;
    std::vector<Block<double>> blocks;
    for (std::size_t i = 0; i < n; ++i) blocks.emplace_back("block" + std::to_string(i), c, c, 1, rng);
    std::vector<Parameter<double>*> ps{&x};
    for (auto& b : blocks) b.collect(ps);
    detail::jitter_bn(ps, rng);
    return ad::grad_check(
        [&](Tape<double>& t) {
          auto in = t.param(x);
          if (target == "euler-block") return weighted_sum(euler_block_forward(t, blocks[0], in, Mode::Train));
          if (target == "rk-block")
            return weighted_sum(rk_block_forward(t, Scheme::RK4, blocks[0].residual, in, Mode::Train));
          return weighted_sum(tm_stage_forward(t, std::span<Block<double>>(blocks), in, Mode::Train));
        },
        ps, opt);
  }

  // Whole preset network on a small batch.
  ModelConfig config = model_preset(target, 10, seed);
  Model<double> model(config);
  const auto batch = detail::normal_tensor({4, config.in_channels, 8, 8}, rng);
  const std::vector<int> labels{1, 7, 3, 0};
  opt.max_coords = preset_coords;
  return ad::grad_check(
      [&](Tape<double>& t) { return ad::softmax_cross_entropy(model.forward(t, batch, Mode::Train), labels); },
      model.parameters(), opt);
}

}  // namespace tmnet::nn
