#pragma once

// Differentiable operations for pre-activation residual CNNs. Each op computes
// its forward value eagerly and records a closure that maps the output
// gradient to input gradients.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tmnet/autodiff/tape.hpp"
#include "tmnet/autodiff/tensor.hpp"
#include "tmnet/errors.hpp"

namespace tmnet::ad {

enum class Mode { Train, Eval };

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeMismatch(what);
}

template <class T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  require(a.shape() == b.shape(),
          std::string(op) + ": shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
}

template <class T>
void add_scaled(Tensor<T>* dst, const Tensor<T>& src, T scale) {
  if (!dst) return;
  for (std::size_t i = 0; i < src.numel(); ++i) (*dst)[i] += scale * src[i];
}

}  // namespace detail

// --- elementwise ---------------------------------------------------------------

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "add");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    detail::add_scaled(t.grad_if_needed(a.id), g, T{1});
    detail::add_scaled(t.grad_if_needed(b.id), g, T{1});
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "sub");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    detail::add_scaled(t.grad_if_needed(a.id), g, T{1});
    detail::add_scaled(t.grad_if_needed(b.id), g, T{-1});
  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "mul");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (auto* ga = t.grad_if_needed(a.id)) {
      const auto& bv = t.value(b.id);
      for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * bv[i];
    }
    if (auto* gb = t.grad_if_needed(b.id)) {
      const auto& av = t.value(a.id);
      for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

template <class T>
Var<T> scale(Var<T> a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v *= s;
  return a.tape->push(std::move(out), {a}, [a, s](Tape<T>& t, std::size_t self) {
    detail::add_scaled(t.grad_if_needed(a.id), t.grad(self), s);
  });
}

/// sum_i coeff_i * x_i, accumulated left to right. The first term's coefficient
/// is applied as written, so combine({{1, x}, {c, zero}}) returns x bitwise.
template <class T>
Var<T> combine(std::vector<std::pair<T, Var<T>>> terms) {
  if (terms.empty()) throw InvalidArgument("combine needs at least one term");
  const auto& first = terms.front().second;
  for (const auto& [c, v] : terms) detail::require_same_shape(first, v, "combine");
  Tensor<T> out(first.shape());
  for (const auto& [c, v] : terms) {
    const auto& x = v.value();
    if (c == T{1}) {
      for (std::size_t i = 0; i < out.numel(); ++i) out[i] += x[i];
    } else {
      for (std::size_t i = 0; i < out.numel(); ++i) out[i] += c * x[i];
    }
  }
  Tape<T>* tape = first.tape;
  std::vector<Var<T>> inputs;
  inputs.reserve(terms.size());
  for (const auto& term : terms) inputs.push_back(term.second);
  return tape->push(std::move(out), std::span<const Var<T>>(inputs), [terms = std::move(terms)](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (const auto& [c, v] : terms) detail::add_scaled(t.grad_if_needed(v.id), g, c);
  });
}

/// Linear-multistep state update
///   cur + (cur - prev)/2 + (prev2 - prev)/2 + tau * f
/// which equals 3/2 cur - prev + 1/2 prev2 + tau f and is exactly `cur` when
/// the three states coincide and f is zero.
template <class T>
Var<T> tm_update(Var<T> cur, Var<T> prev, Var<T> prev2, Var<T> f, T tau) {
  detail::require_same_shape(cur, prev, "tm_update");
  detail::require_same_shape(cur, prev2, "tm_update");
  detail::require_same_shape(cur, f, "tm_update");
  const auto& c = cur.value();
  const auto& p = prev.value();
  const auto& q = prev2.value();
  const auto& fv = f.value();
  Tensor<T> out(c.shape());
  const T half = T{0.5};
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = c[i] + half * (c[i] - p[i]) + half * (q[i] - p[i]) + tau * fv[i];
  return cur.tape->push(std::move(out), {cur, prev, prev2, f},
                        [cur, prev, prev2, f, tau](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad(self);
                          detail::add_scaled(t.grad_if_needed(cur.id), g, T{1.5});
                          detail::add_scaled(t.grad_if_needed(prev.id), g, T{-1});
                          detail::add_scaled(t.grad_if_needed(prev2.id), g, T{0.5});
                          detail::add_scaled(t.grad_if_needed(f.id), g, tau);
                        });
}

template <class T>
Var<T> relu(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  return a.tape->push(std::move(out), {a}, [a](Tape<T>& t, std::size_t self) {
    auto* ga = t.grad_if_needed(a.id);
    if (!ga) return;
    const auto& g = t.grad(self);
    const auto& x = t.value(a.id);
    // relu'(0) = 0
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (x[i] > T{0}) (*ga)[i] += g[i];
  });
}

/// Sum of all elements as a one-element tensor.
template <class T>
Var<T> sum(Var<T> a) {
  T acc{0};
  for (T v : a.value().data()) acc += v;
  return a.tape->push(Tensor<T>({1}, std::vector<T>{acc}), {a}, [a](Tape<T>& t, std::size_t self) {
    auto* ga = t.grad_if_needed(a.id);
    if (!ga) return;
    const T g = t.grad(self)[0];
    for (auto& v : ga->data()) v += g;
  });
}

// --- convolution ---------------------------------------------------------------

namespace detail {

struct ConvGeometry {
  std::size_t n, c, h, w;  // input
  std::size_t o, k;        // filters
  std::size_t stride, pad;
  std::size_t ho, wo;

  std::size_t patch() const { return c * k * k; }
  std::size_t plane() const { return ho * wo; }
};

// col is patch() x plane(), row r = (c * k + kh) * k + kw.
template <class T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t kh = 0; kh < g.k; ++kh)
      for (std::size_t kw = 0; kw < g.k; ++kw) {
        T* row = col + ((c * g.k + kh) * g.k + kw) * g.plane();
        const T* xc = x + c * g.h * g.w;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) - static_cast<std::ptrdiff_t>(g.pad);
          T* dst = row + oh * g.wo;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.wo, T{0});
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(ih) * g.w;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) - static_cast<std::ptrdiff_t>(g.pad);
            dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w)) ? T{0} : src[iw];
          }
        }
      }
}

// Fixed-order dot product with 8 interleaved partial sums (vectorizable).
template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  T lane[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t k = 0; k < 8; ++k) lane[k] += a[i + k] * b[i + k];
  T acc = ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
void col2im_add(const T* col, const ConvGeometry& g, T* dx) {
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t kh = 0; kh < g.k; ++kh)
      for (std::size_t kw = 0; kw < g.k; ++kw) {
        const T* row = col + ((c * g.k + kh) * g.k + kw) * g.plane();
        T* dxc = dx + c * g.h * g.w;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) - static_cast<std::ptrdiff_t>(g.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
          T* dst = dxc + static_cast<std::size_t>(ih) * g.w;
          const T* src = row + oh * g.wo;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) - static_cast<std::ptrdiff_t>(g.pad);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.w)) dst[iw] += src[ow];
          }
        }
      }
}

}  // namespace detail

/// 2-D cross-correlation without bias. input NCHW, weight O x C x K x K.
template <class T>
Var<T> conv2d(Var<T> input, Var<T> weight, std::size_t stride, std::size_t padding) {
  const auto& xs = input.shape();
  const auto& ws = weight.shape();
  const std::string shapes = shape_string(xs) + " and weight " + shape_string(ws);
  detail::require(xs.size() == 4 && ws.size() == 4, "conv2d expects rank-4 input and weight, got " + shapes);
  detail::require(xs[1] == ws[1], "conv2d channel mismatch: input " + shapes);
  detail::require(ws[2] == ws[3] && (ws[2] == 1 || ws[2] == 3), "conv2d kernel must be 1x1 or 3x3, got " + shapes);
  if (stride != 1 && stride != 2) throw InvalidArgument("conv2d stride must be 1 or 2");
  detail::require(xs[2] + 2 * padding >= ws[2] && xs[3] + 2 * padding >= ws[2],
                  "conv2d kernel larger than padded input: " + shapes);

  detail::ConvGeometry g{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], stride, padding, 0, 0};
  g.ho = (g.h + 2 * padding - g.k) / stride + 1;
  g.wo = (g.w + 2 * padding - g.k) / stride + 1;

  const auto& x = input.value();
  const auto& wv = weight.value();
  Tensor<T> out({g.n, g.o, g.ho, g.wo});
  std::vector<T> col(g.patch() * g.plane());
  for (std::size_t n = 0; n < g.n; ++n) {
    detail::im2col(x.data().data() + n * g.c * g.h * g.w, g, col.data());
    T* on = out.data().data() + n * g.o * g.plane();
    for (std::size_t o = 0; o < g.o; ++o) {
      T* orow = on + o * g.plane();
      const T* wrow = wv.data().data() + o * g.patch();
      for (std::size_t r = 0; r < g.patch(); ++r) {
        const T wr = wrow[r];
        if (wr == T{0}) continue;
        const T* crow = col.data() + r * g.plane();
        for (std::size_t p = 0; p < g.plane(); ++p) orow[p] += wr * crow[p];
      }
    }
  }

  return input.tape->push(std::move(out), {input, weight}, [input, weight, g](Tape<T>& t, std::size_t self) {
    const auto& gout = t.grad(self);
    const auto& x = t.value(input.id);
    const auto& wv = t.value(weight.id);
    Tensor<T>* gx = t.grad_if_needed(input.id);
    Tensor<T>* gw = t.grad_if_needed(weight.id);
    std::vector<T> col(g.patch() * g.plane());
    std::vector<T> dcol(gx ? col.size() : 0);
    for (std::size_t n = 0; n < g.n; ++n) {
      const T* gn = gout.data().data() + n * g.o * g.plane();
      if (gw) {
        detail::im2col(x.data().data() + n * g.c * g.h * g.w, g, col.data());
        for (std::size_t o = 0; o < g.o; ++o) {
          const T* grow = gn + o * g.plane();
          T* dwrow = gw->data().data() + o * g.patch();
          for (std::size_t r = 0; r < g.patch(); ++r) {
            dwrow[r] += detail::dot(grow, col.data() + r * g.plane(), g.plane());
          }
        }
      }
      if (gx) {
        std::fill(dcol.begin(), dcol.end(), T{0});
        for (std::size_t o = 0; o < g.o; ++o) {
          const T* grow = gn + o * g.plane();
          const T* wrow = wv.data().data() + o * g.patch();
          for (std::size_t r = 0; r < g.patch(); ++r) {
            const T wr = wrow[r];
            if (wr == T{0}) continue;
            T* drow = dcol.data() + r * g.plane();
            for (std::size_t p = 0; p < g.plane(); ++p) drow[p] += wr * grow[p];
          }
        }
        detail::col2im_add(dcol.data(), g, gx->data().data() + n * g.c * g.h * g.w);
      }
    }
  });
}

// --- batch normalization -------------------------------------------------------

/// Running statistics owned by a batch-norm layer.
template <class T>
struct BatchNormStats {
  Tensor<T> mean;
  Tensor<T> var;

  explicit BatchNormStats(std::size_t channels = 0) : mean({channels}, T{0}), var({channels}, T{1}) {}
};

/// Per-channel normalization over N x H x W. Train mode uses batch statistics
/// and updates `stats` by an exponential moving average (unbiased variance);
/// eval mode normalizes with `stats`.
template <class T>
Var<T> batch_norm(Var<T> input, Var<T> gamma, Var<T> beta, BatchNormStats<T>& stats, Mode mode,
                  T eps = T{1e-5}, T momentum = T{0.1}) {
  const auto& xs = input.shape();
  detail::require(xs.size() == 4, "batch_norm expects NCHW input, got " + shape_string(xs));
  const std::size_t n = xs[0], c = xs[1], hw = xs[2] * xs[3];
  if (n == 0) throw EmptyBatch("batch_norm on an empty batch");
  detail::require(gamma.shape() == Shape{c} && beta.shape() == Shape{c},
                  "batch_norm affine parameters must have length " + std::to_string(c));
  detail::require(stats.mean.shape() == Shape{c} && stats.var.shape() == Shape{c},
                  "batch_norm running statistics must have length " + std::to_string(c));

  const auto& x = input.value();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  const std::size_t count = n * hw;

  std::vector<T> inv_std(c);
  Tensor<T> xhat(xs);
  Tensor<T> out(xs);
  for (std::size_t ch = 0; ch < c; ++ch) {
    T mean, var;
    if (mode == Mode::Train) {
      double acc = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < hw; ++i) acc += x[(b * c + ch) * hw + i];
      mean = static_cast<T>(acc / static_cast<double>(count));
      double sq = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = static_cast<double>(x[(b * c + ch) * hw + i]) - static_cast<double>(mean);
          sq += d * d;
        }
      var = static_cast<T>(sq / static_cast<double>(count));
      const T unbiased = count > 1 ? static_cast<T>(sq / static_cast<double>(count - 1)) : var;
      stats.mean[ch] = (T{1} - momentum) * stats.mean[ch] + momentum * mean;
      stats.var[ch] = (T{1} - momentum) * stats.var[ch] + momentum * unbiased;
    } else {
      mean = stats.mean[ch];
      var = stats.var[ch];
    }
    inv_std[ch] = T{1} / std::sqrt(var + eps);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t idx = (b * c + ch) * hw + i;
        xhat[idx] = (x[idx] - mean) * inv_std[ch];
        out[idx] = gv[ch] * xhat[idx] + bv[ch];
      }
  }

  return input.tape->push(
      std::move(out), {input, gamma, beta},
      [input, gamma, beta, mode, n, c, hw, inv_std = std::move(inv_std), xhat = std::move(xhat)](
          Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& gv = t.value(gamma.id);
        Tensor<T>* gx = t.grad_if_needed(input.id);
        Tensor<T>* gg = t.grad_if_needed(gamma.id);
        Tensor<T>* gb = t.grad_if_needed(beta.id);
        const T count = static_cast<T>(n * hw);
        for (std::size_t ch = 0; ch < c; ++ch) {
          T sum_g{0}, sum_gx{0};
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t i = 0; i < hw; ++i) {
              const std::size_t idx = (b * c + ch) * hw + i;
              sum_g += g[idx];
              sum_gx += g[idx] * xhat[idx];
            }
          if (gg) (*gg)[ch] += sum_gx;
          if (gb) (*gb)[ch] += sum_g;
          if (!gx) continue;
          const T k = gv[ch] * inv_std[ch];
          if (mode == Mode::Train) {
            const T mean_g = sum_g / count;
            const T mean_gx = sum_gx / count;
            for (std::size_t b = 0; b < n; ++b)
              for (std::size_t i = 0; i < hw; ++i) {
                const std::size_t idx = (b * c + ch) * hw + i;
                (*gx)[idx] += k * (g[idx] - mean_g - xhat[idx] * mean_gx);
              }
          } else {
            for (std::size_t b = 0; b < n; ++b)
              for (std::size_t i = 0; i < hw; ++i) {
                const std::size_t idx = (b * c + ch) * hw + i;
                (*gx)[idx] += k * g[idx];
              }
          }
        }
      });
}

// --- heads ---------------------------------------------------------------------

/// NCHW -> NC mean over the spatial plane.
template <class T>
Var<T> global_avg_pool(Var<T> input) {
  const auto& xs = input.shape();
  detail::require(xs.size() == 4, "global_avg_pool expects NCHW input, got " + shape_string(xs));
  const std::size_t nc = xs[0] * xs[1], hw = xs[2] * xs[3];
  detail::require(hw > 0, "global_avg_pool on an empty plane");
  const auto& x = input.value();
  Tensor<T> out({xs[0], xs[1]});
  for (std::size_t i = 0; i < nc; ++i) {
    T acc{0};
    for (std::size_t p = 0; p < hw; ++p) acc += x[i * hw + p];
    out[i] = acc / static_cast<T>(hw);
  }
  return input.tape->push(std::move(out), {input}, [input, nc, hw](Tape<T>& t, std::size_t self) {
    auto* gx = t.grad_if_needed(input.id);
    if (!gx) return;
    const auto& g = t.grad(self);
    for (std::size_t i = 0; i < nc; ++i) {
      const T share = g[i] / static_cast<T>(hw);
      for (std::size_t p = 0; p < hw; ++p) (*gx)[i * hw + p] += share;
    }
  });
}

/// y = x W^T + b for x [N, F] (rank-4 input is flattened per sample), W [O, F], b [O].
template <class T>
Var<T> linear(Var<T> input, Var<T> weight, Var<T> bias) {
  const auto& xs = input.shape();
  const auto& ws = weight.shape();
  detail::require(!xs.empty() && ws.size() == 2, "linear expects [N, F] input and [O, F] weight");
  const std::size_t n = xs[0];
  const std::size_t f = n ? input.value().numel() / n : 0;
  detail::require(ws[1] == f, "linear feature mismatch: input " + shape_string(xs) + " vs weight " + shape_string(ws));
  detail::require(bias.shape() == Shape{ws[0]}, "linear bias must have length " + std::to_string(ws[0]));
  const std::size_t o = ws[0];
  const auto& x = input.value();
  const auto& w = weight.value();
  const auto& b = bias.value();
  Tensor<T> out({n, o});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < o; ++j) {
      T acc{0};
      for (std::size_t k = 0; k < f; ++k) acc += x[r * f + k] * w[j * f + k];
      out[r * o + j] = acc + b[j];
    }
  return input.tape->push(std::move(out), {input, weight, bias},
                          [input, weight, bias, n, f, o](Tape<T>& t, std::size_t self) {
                            const auto& g = t.grad(self);
                            const auto& x = t.value(input.id);
                            const auto& w = t.value(weight.id);
                            auto* gx = t.grad_if_needed(input.id);
                            auto* gw = t.grad_if_needed(weight.id);
                            auto* gb = t.grad_if_needed(bias.id);
                            for (std::size_t r = 0; r < n; ++r)
                              for (std::size_t j = 0; j < o; ++j) {
                                const T gj = g[r * o + j];
                                if (gb) (*gb)[j] += gj;
                                if (gw)
                                  for (std::size_t k = 0; k < f; ++k) (*gw)[j * f + k] += gj * x[r * f + k];
                                if (gx)
                                  for (std::size_t k = 0; k < f; ++k) (*gx)[r * f + k] += gj * w[j * f + k];
                              }
                          });
}

/// Mean over the batch of -log softmax(logits)[label], with max subtraction.
template <class T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const int> labels) {
  const auto& ls = logits.shape();
  detail::require(ls.size() == 2, "softmax_cross_entropy expects [N, K] logits, got " + shape_string(ls));
  const std::size_t n = ls[0], k = ls[1];
  if (n == 0) throw EmptyBatch("softmax_cross_entropy on an empty batch");
  detail::require(labels.size() == n, "softmax_cross_entropy: " + std::to_string(labels.size()) +
                                          " labels for " + std::to_string(n) + " rows");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= k)
      throw InvalidLabel("label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");

  const auto& z = logits.value();
  Tensor<T> probs({n, k});
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = z.data().data() + r * k;
    const T m = *std::max_element(row, row + k);
    T denom{0};
    for (std::size_t j = 0; j < k; ++j) {
      probs[r * k + j] = std::exp(row[j] - m);
      denom += probs[r * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) probs[r * k + j] /= denom;
    total += static_cast<double>(std::log(denom) - (row[labels[r]] - m));
  }
  std::vector<int> saved(labels.begin(), labels.end());
  Tensor<T> loss({1}, std::vector<T>{static_cast<T>(total / static_cast<double>(n))});
  return logits.tape->push(std::move(loss), {logits},
                           [logits, n, k, probs = std::move(probs), saved = std::move(saved)](Tape<T>& t,
                                                                                              std::size_t self) {
                             auto* gz = t.grad_if_needed(logits.id);
                             if (!gz) return;
                             const T g = t.grad(self)[0] / static_cast<T>(n);
                             for (std::size_t r = 0; r < n; ++r)
                               for (std::size_t j = 0; j < k; ++j) {
                                 const T onehot = static_cast<std::size_t>(saved[r]) == j ? T{1} : T{0};
                                 (*gz)[r * k + j] += g * (probs[r * k + j] - onehot);
                               }
                           });
}

}  // namespace tmnet::ad
