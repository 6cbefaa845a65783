#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "tmnet/autodiff/tape.hpp"

namespace tmnet::ad {

struct GradCheckOptions {
  double step = 1e-5;              // central-difference half width
  std::size_t max_coords = 64;     // sampled coordinates per parameter tensor
  double abs_floor = 1e-6;         // denominator floor for the relative error
  std::uint64_t seed = 0x5eed;     // coordinate sampling
  // One-sided slopes that disagree by more than this (relative) mark a kink
  // inside the stencil, e.g. a relu input crossing zero; such coordinates are
  // counted in `kinks_skipped` instead of compared.
  double kink_tol = 1e-3;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
  std::size_t kinks_skipped = 0;

  bool passed(double tolerance) const { return coords_checked > 0 && max_rel_error < tolerance; }
};

/// Compares reverse-mode gradients of `loss_fn` against central differences.
/// `loss_fn` must build a scalar loss on the given tape from `params`; it is
/// re-run once per perturbed coordinate. Parameter grads are left holding the
/// analytic gradient.
inline GradCheckReport grad_check(const std::function<Var<double>(Tape<double>&)>& loss_fn,
                                  const std::vector<Parameter<double>*>& params,
                                  const GradCheckOptions& opt = {}) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<double> tape(true);
    tape.backward(loss_fn(tape));
  }
  auto eval = [&] {
    Tape<double> tape(true);
    return loss_fn(tape).value()[0];
  };

  const double base = eval();
  GradCheckReport report;
  std::mt19937_64 rng(opt.seed);
  for (auto* p : params) {
    std::vector<std::size_t> coords(p->value.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > opt.max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.max_coords);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double saved = p->value[i];
      p->value[i] = saved + opt.step;
      const double up = eval();
      p->value[i] = saved - opt.step;
      const double down = eval();
      p->value[i] = saved;
      const double fwd = (up - base) / opt.step, bwd = (base - down) / opt.step;
      if (std::abs(fwd - bwd) > opt.kink_tol * std::max({std::abs(fwd), std::abs(bwd), 1.0})) {
        ++report.kinks_skipped;
        continue;
      }
      const double numeric = (up - down) / (2 * opt.step);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), opt.abs_floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.coords_checked;
      if (report.worst_param.empty() || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p->name;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace tmnet::ad
