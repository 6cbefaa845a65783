#pragma once

// Trainable layers used by the residual networks. Each layer owns its
// Parameters; forward passes record onto a caller-supplied tape.

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tmnet/autodiff/ops.hpp"
#include "tmnet/autodiff/tape.hpp"

namespace tmnet::nn {

using ad::Mode;
using ad::Parameter;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

/// Named non-trainable tensor (batch-norm running statistics).
template <class T>
struct Buffer {
  std::string name;
  Tensor<T>* tensor;
};

/// Kaiming fan-in normal: N(0, 2 / fan_in).
template <class T>
Tensor<T> kaiming_normal(const Shape& shape, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(d(rng));
  return t;
}

template <class T>
struct BatchNormLayer {
  Parameter<T> gamma;
  Parameter<T> beta;
  ad::BatchNormStats<T> stats;

  BatchNormLayer() = default;
  BatchNormLayer(const std::string& path, std::size_t channels)
      : gamma(path + ".gamma", Tensor<T>({channels}, T{1})),
        beta(path + ".beta", Tensor<T>({channels}, T{0})),
        stats(channels),
        path_(path) {}

  Var<T> operator()(Tape<T>& tape, Var<T> x, Mode mode) {
    return ad::batch_norm(x, tape.param(gamma), tape.param(beta), stats, mode);
  }

  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
  void collect_buffers(std::vector<Buffer<T>>& out) {
    out.push_back({path_ + ".running_mean", &stats.mean});
    out.push_back({path_ + ".running_var", &stats.var});
  }

 private:
  std::string path_;
};

/// Bias-free convolution with a square kernel.
template <class T>
struct ConvLayer {
  Parameter<T> weight;
  std::size_t stride = 1;
  std::size_t padding = 0;

  ConvLayer() = default;
  ConvLayer(const std::string& path, std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride_,
            std::mt19937_64& rng)
      : weight(path + ".weight", kaiming_normal<T>({out, in, kernel, kernel}, in * kernel * kernel, rng)),
        stride(stride_),
        padding(kernel / 2) {}

  Var<T> operator()(Tape<T>& tape, Var<T> x) { return ad::conv2d(x, tape.param(weight), stride, padding); }

  void collect(std::vector<Parameter<T>*>& out) { out.push_back(&weight); }
};

/// Pre-activation residual branch: BN, ReLU, conv3x3(stride), BN, ReLU, conv3x3.
template <class T>
struct ResidualFunction {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t stride = 1;
  BatchNormLayer<T> bn1;
  ConvLayer<T> conv1;
  BatchNormLayer<T> bn2;
  ConvLayer<T> conv2;

  ResidualFunction() = default;
  ResidualFunction(const std::string& path, std::size_t in, std::size_t out, std::size_t stride_,
                   std::mt19937_64& rng)
      : in_channels(in),
        out_channels(out),
        stride(stride_),
        bn1(path + ".bn1", in),
        conv1(path + ".conv1", in, out, 3, stride_, rng),
        bn2(path + ".bn2", out),
        conv2(path + ".conv2", out, out, 3, 1, rng) {}

  bool shape_preserving() const { return in_channels == out_channels && stride == 1; }

  Var<T> operator()(Tape<T>& tape, Var<T> x, Mode mode) {
    auto h = conv1(tape, ad::relu(bn1(tape, x, mode)));
    return conv2(tape, ad::relu(bn2(tape, h, mode)));
  }

  /// Sets the last convolution to zero so the branch outputs exact zeros.
  void zero_final_conv() { conv2.weight.value.fill(T{0}); }

  void collect(std::vector<Parameter<T>*>& out) {
    bn1.collect(out);
    conv1.collect(out);
    bn2.collect(out);
    conv2.collect(out);
  }
  void collect_buffers(std::vector<Buffer<T>>& out) {
    bn1.collect_buffers(out);
    bn2.collect_buffers(out);
  }
};

/// Skip path for a shape-changing block: BN(conv1x1 with stride).
template <class T>
struct Projection {
  ConvLayer<T> conv;
  BatchNormLayer<T> bn;

  Projection() = default;
  Projection(const std::string& path, std::size_t in, std::size_t out, std::size_t stride, std::mt19937_64& rng)
      : conv(path + ".conv", in, out, 1, stride, rng), bn(path + ".bn", out) {}

  Var<T> operator()(Tape<T>& tape, Var<T> x, Mode mode) { return bn(tape, conv(tape, x), mode); }

  void collect(std::vector<Parameter<T>*>& out) {
    conv.collect(out);
    bn.collect(out);
  }
  void collect_buffers(std::vector<Buffer<T>>& out) { bn.collect_buffers(out); }
};

template <class T>
struct LinearLayer {
  Parameter<T> weight;
  Parameter<T> bias;

  LinearLayer() = default;
  LinearLayer(const std::string& path, std::size_t in, std::size_t out, std::mt19937_64& rng)
      : weight(path + ".weight", kaiming_normal<T>({out, in}, in, rng)), bias(path + ".bias", Tensor<T>({out})) {}

  Var<T> operator()(Tape<T>& tape, Var<T> x) { return ad::linear(x, tape.param(weight), tape.param(bias)); }

  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

}  // namespace tmnet::nn
