#pragma once

// Inter-block wiring. A residual block is one step of an ODE integrator with
// the residual branch F in place of the right-hand side: Euler stacking is
// x + F(x), the RK blocks evaluate one shared F at several stage inputs, and
// TM stacking mixes three past activations with one F evaluation.

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tmnet/errors.hpp"
#include "tmnet/nn/layers.hpp"

namespace tmnet::nn {

enum class Scheme { Euler, ImprovedEuler, RK2, RK3, RK4, TM };

inline constexpr Scheme kAllSchemes[] = {Scheme::Euler, Scheme::ImprovedEuler, Scheme::RK2,
                                         Scheme::RK3,   Scheme::RK4,           Scheme::TM};

inline std::string_view scheme_name(Scheme s) {
  switch (s) {
    case Scheme::Euler: return "euler";
    case Scheme::ImprovedEuler: return "ie";
    case Scheme::RK2: return "rk2";
    case Scheme::RK3: return "rk3";
    case Scheme::RK4: return "rk4";
    case Scheme::TM: return "tm";
  }
  return "?";
}

inline std::optional<Scheme> parse_scheme(std::string_view name) {
  for (Scheme s : kAllSchemes)
    if (scheme_name(s) == name) return s;
  return std::nullopt;
}

/// Coefficients of one block update
///   x_next = sum_j state[j] * x_{i-j} + tau * sum_s weights[s] * k_s,
///   k_s = F(x_i + tau * sum_{r<s} stage_inputs[s][r] * k_r).
struct SchemeTable {
  std::vector<double> state;
  std::vector<std::vector<double>> stage_inputs;
  std::vector<double> weights;

  std::size_t stages() const { return weights.size(); }
};

inline SchemeTable scheme_table(Scheme s) {
  switch (s) {
    case Scheme::Euler: return {{1.0}, {{}}, {1.0}};
    case Scheme::ImprovedEuler: return {{1.0}, {{}, {1.0}}, {0.5, 0.5}};
    case Scheme::RK2: return {{1.0}, {{}, {2.0 / 3.0}}, {0.25, 0.75}};
    case Scheme::RK3: return {{1.0}, {{}, {0.5}, {-1.0, 2.0}}, {1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0}};
    case Scheme::RK4:
      return {{1.0}, {{}, {0.5}, {0.0, 0.5}, {0.0, 0.0, 1.0}}, {1.0 / 6.0, 2.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0}};
    case Scheme::TM: return {{1.5, -1.0, 0.5}, {{}}, {1.0}};
  }
  throw InvalidArgument("unknown block scheme");
}

/// Residual branch plus, where the block changes shape, a projection shortcut.
template <class T>
struct Block {
  ResidualFunction<T> residual;
  std::optional<Projection<T>> projection;

  Block() = default;
  Block(const std::string& path, std::size_t in, std::size_t out, std::size_t stride, std::mt19937_64& rng)
      : residual(path, in, out, stride, rng) {
    if (!residual.shape_preserving()) projection.emplace(path + ".proj", in, out, stride, rng);
  }

  void collect(std::vector<Parameter<T>*>& out) {
    residual.collect(out);
    if (projection) projection->collect(out);
  }
  void collect_buffers(std::vector<Buffer<T>>& out) {
    residual.collect_buffers(out);
    if (projection) projection->collect_buffers(out);
  }
};

/// x + F(x), or proj(x) + F(x) when the block changes shape.
template <class T>
Var<T> euler_block_forward(Tape<T>& tape, Block<T>& block, Var<T> x, Mode mode) {
  auto fx = block.residual(tape, x, mode);
  auto skip = block.projection ? (*block.projection)(tape, x, mode) : x;
  return ad::add(skip, fx);
}

/// Runge-Kutta style block: every stage reuses the same F.
template <class T>
Var<T> rk_block_forward(Tape<T>& tape, Scheme scheme, ResidualFunction<T>& f, Var<T> x, Mode mode,
                        T tau = T{1}) {
  if (scheme == Scheme::TM) throw InvalidArgument("rk_block_forward: TM is a multistep scheme");
  if (!f.shape_preserving())
    throw ShapeMismatch("rk_block_forward: residual maps " + std::to_string(f.in_channels) + " channels to " +
                        std::to_string(f.out_channels) + " with stride " + std::to_string(f.stride));
  const SchemeTable table = scheme_table(scheme);
  std::vector<Var<T>> k;
  for (std::size_t s = 0; s < table.stages(); ++s) {
    std::vector<std::pair<T, Var<T>>> input{{T{1}, x}};
    for (std::size_t r = 0; r < table.stage_inputs[s].size(); ++r)
      if (table.stage_inputs[s][r] != 0.0) input.emplace_back(tau * static_cast<T>(table.stage_inputs[s][r]), k[r]);
    k.push_back(f(tape, input.size() == 1 ? x : ad::combine(std::move(input)), mode));
  }
  std::vector<std::pair<T, Var<T>>> out{{T{1}, x}};
  for (std::size_t s = 0; s < k.size(); ++s) out.emplace_back(tau * static_cast<T>(table.weights[s]), k[s]);
  return ad::combine(std::move(out));
}

/// Three most recent activations inside one stage, newest first.
template <class T>
struct TmActivationHistory {
  Var<T> cur;
  Var<T> prev;
  Var<T> prev2;

  void check() const {
    if (cur.shape() != prev.shape() || cur.shape() != prev2.shape())
      throw ShapeMismatch("TM history holds shapes " + ad::shape_string(cur.shape()) + ", " +
                          ad::shape_string(prev.shape()) + ", " + ad::shape_string(prev2.shape()));
  }
};

/// x_next = 1.5 x_i - x_{i-1} + 0.5 x_{i-2} + tau F(x_i); shifts `history`.
template <class T>
Var<T> tm_block_forward(Tape<T>& tape, ResidualFunction<T>& f, TmActivationHistory<T>& history, Mode mode,
                        T tau = T{1}) {
  history.check();
  auto fx = f(tape, history.cur, mode);
  auto next = ad::tm_update(history.cur, history.prev, history.prev2, fx, tau);
  history = {next, history.cur, history.prev};
  return next;
}

/// Boot TM-block (three Euler blocks, the first carrying any projection)
/// followed by TM blocks.
template <class T>
Var<T> tm_stage_forward(Tape<T>& tape, std::span<Block<T>> blocks, Var<T> x, Mode mode, T tau = T{1}) {
  if (blocks.size() < 4)
    throw InsufficientBlocks("a TM stage needs at least 4 blocks (3 boot + 1 TM), got " +
                             std::to_string(blocks.size()));
  for (std::size_t i = 1; i < blocks.size(); ++i)
    if (blocks[i].projection)
      throw ShapeMismatch("TM stage block " + std::to_string(i) + " changes shape; only the first block may");
  auto x1 = euler_block_forward(tape, blocks[0], x, mode);
  auto x2 = euler_block_forward(tape, blocks[1], x1, mode);
  auto x3 = euler_block_forward(tape, blocks[2], x2, mode);
  TmActivationHistory<T> history{x3, x2, x1};
  Var<T> out = x3;
  for (std::size_t i = 3; i < blocks.size(); ++i) out = tm_block_forward(tape, blocks[i].residual, history, mode, tau);
  return out;
}

/// One stage under `scheme`. Shape-changing blocks always use Euler wiring
/// with the projection shortcut; a TM stage with fewer than 4 blocks has no
/// room for the boot and is stacked as Euler.
template <class T>
Var<T> stage_forward(Tape<T>& tape, Scheme scheme, std::span<Block<T>> blocks, Var<T> x, Mode mode) {
  if (scheme == Scheme::TM && blocks.size() >= 4) return tm_stage_forward(tape, blocks, x, mode);
  for (auto& b : blocks) {
    if (scheme == Scheme::Euler || scheme == Scheme::TM || b.projection)
      x = euler_block_forward(tape, b, x, mode);
    else
      x = rk_block_forward(tape, scheme, b.residual, x, mode);
  }
  return x;
}

}  // namespace tmnet::nn
