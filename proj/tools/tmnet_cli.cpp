// tmnet command-line harness.
//
// Exit codes: 0 success, 1 runtime or data error, 2 usage error.
// The output directory is taken from --out, then $TMNET_OUT_DIR, then the
// config's out_dir.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tmnet/data/checkpoint.hpp"
#include "tmnet/data/dataset.hpp"
#include "tmnet/errors.hpp"
#include "tmnet/nn/grad_targets.hpp"
#include "tmnet/nn/model.hpp"
#include "tmnet/ode/problem.hpp"
#include "tmnet/ode/solve.hpp"
#include "tmnet/train/run_config.hpp"
#include "tmnet/train/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;

/// Flag problem detected after CLI11 parsing but before any side effect.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
  std::string config;
};

const char* error_kind(const tmnet::Error& e) {
#define TMNET_KIND(T) \
  if (dynamic_cast<const tmnet::T*>(&e)) return #T;
  TMNET_KIND(ConfigError)
  TMNET_KIND(FileMissing)
  TMNET_KIND(TruncatedRecord)
  TMNET_KIND(LabelOutOfRange)
  TMNET_KIND(BadMagic)
  TMNET_KIND(DimensionMismatch)
  TMNET_KIND(IoError)
  TMNET_KIND(UnsupportedVersion)
  TMNET_KIND(CorruptBlob)
  TMNET_KIND(ShapeMismatch)
  TMNET_KIND(EmptyBatch)
  TMNET_KIND(InvalidLabel)
  TMNET_KIND(NonFiniteValue)
  TMNET_KIND(NonFiniteState)
  TMNET_KIND(InsufficientBlocks)
  TMNET_KIND(DegenerateFit)
  TMNET_KIND(InvalidArgument)
#undef TMNET_KIND
  return "Error";
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

fs::path output_dir(const Globals& g, const fs::path& fallback) {
  if (!g.out.empty()) return g.out;
  if (const char* env = std::getenv("TMNET_OUT_DIR"); env && *env) return env;
  return fallback;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

// --- bench-ode -----------------------------------------------------------------

struct BenchOptions {
  std::string methods = "all";
  std::string problem = "decay-sin";
  std::string taus = "0.1,0.05,0.025,0.0125";
  double horizon = 2.0;
  std::string csv;
};

const std::vector<std::string> kProblems{"decay-sin", "growth", "decay", "harmonic"};

tmnet::ode::OdeProblem make_problem(const std::string& id) {
  namespace pr = tmnet::ode::problems;
  if (id == "decay-sin") return pr::decay_sin();
  if (id == "growth") return pr::exponential(1.0);
  if (id == "decay") return pr::exponential(-2.0);
  if (id == "harmonic") return pr::harmonic();
  throw UsageError("unknown problem '" + id + "' (valid: " + join(kProblems) + ")");
}

int cmd_bench_ode(const Globals& g, const BenchOptions& o) {
  std::vector<tmnet::ode::IntegratorId> methods;
  if (o.methods == "all") {
    methods.assign(tmnet::ode::kAllIntegrators.begin(), tmnet::ode::kAllIntegrators.end());
  } else {
    for (const auto& name : split_list(o.methods)) {
      const auto id = tmnet::ode::parse_integrator(name);
      if (!id) {
        std::vector<std::string> valid{"all"};
        for (auto m : tmnet::ode::kAllIntegrators) valid.emplace_back(tmnet::ode::short_name(m));
        throw UsageError("unknown method '" + name + "' (valid: " + join(valid) + ")");
      }
      methods.push_back(*id);
    }
  }
  if (methods.empty()) throw UsageError("--methods is empty");
  const auto problem = make_problem(o.problem);
  std::vector<double> taus;
  for (const auto& t : split_list(o.taus)) {
    try {
      std::size_t used = 0;
      taus.push_back(std::stod(t, &used));
      if (used != t.size()) throw std::invalid_argument(t);
    } catch (const std::exception&) {
      throw UsageError("--taus: '" + t + "' is not a number");
    }
  }
  if (taus.size() < 4) throw UsageError("--taus needs at least 4 step sizes for order fitting");
  for (double t : taus) {
    if (!(t > 0)) throw UsageError("--taus must be positive");
    const double steps = o.horizon / t;
    if (std::abs(steps - std::round(steps)) > 1e-9 * steps)
      throw UsageError("--taus: step " + std::to_string(t) + " does not divide the horizon");
  }
  if (!(o.horizon > 0)) throw UsageError("--horizon must be positive");
  const fs::path csv = o.csv.empty() ? output_dir(g, "out") / "bench_ode.csv" : fs::path(o.csv);

  std::ostringstream rows;
  rows << "method,tau,error,fitted_order\n";
  std::vector<std::pair<std::string, double>> summary;
  char buf[128];
  for (auto m : methods) {
    const auto est = tmnet::ode::empirical_order(m, problem, taus, o.horizon);
    const std::string name(tmnet::ode::short_name(m));
    for (std::size_t i = 0; i < est.taus.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s,%.6g,%.6e,\n", name.c_str(), est.taus[i], est.errors[i]);
      rows << buf;
    }
    summary.emplace_back(name, est.slope);
  }
  for (const auto& [name, slope] : summary) {
    std::snprintf(buf, sizeof buf, "%s,,,%.6f\n", name.c_str(), slope);
    rows << buf;
  }
  if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
  std::ofstream out(csv);
  if (!out) throw tmnet::IoError("cannot write " + csv.string());
  out << rows.str();
  for (const auto& [name, slope] : summary) {
    std::snprintf(buf, sizeof buf, "%-6s fitted order %.4f (nominal %d)", name.c_str(), slope,
                  tmnet::ode::global_order(*tmnet::ode::parse_integrator(name)));
    std::cout << buf << "\n";
  }
  std::cout << "wrote " << csv.string() << "\n";
  return kOk;
}

// --- train ---------------------------------------------------------------------

tmnet::train::RunConfig load_config(const Globals& g) {
  auto c = g.config.empty() ? tmnet::train::parse_run_config("") : tmnet::train::load_run_config(g.config);
  if (g.seed_given) {
    c.seed = g.seed;
    c.model.seed = g.seed;
  }
  c.out_dir = output_dir(g, c.out_dir);
  return c;
}

int cmd_train(const Globals& g) {
  const auto c = load_config(g);
  auto model = tmnet::nn::build_model<float>(c.model);
  const auto pc = model.param_count();
  std::cout << "model " << (c.model_preset.empty() ? "custom" : c.model_preset) << " scheme "
            << tmnet::nn::scheme_name(c.model.scheme) << " params " << pc.total << "\n";
  const auto train_set = tmnet::train::load_split(c, tmnet::data::Split::Train);
  const auto test_set = tmnet::train::load_split(c, tmnet::data::Split::Test);
  std::cout << "dataset " << tmnet::train::dataset_name(c.dataset) << " train " << train_set.size() << " test "
            << test_set.size() << "\n";
  const auto r = tmnet::train::run_training(c, train_set, test_set, c.out_dir,
                                            [](const std::string& line) { std::cout << line << "\n"; });
  std::printf("best_test_accuracy=%.6f\n", r.best_test_accuracy);
  std::cout << "wrote " << (c.out_dir / "metrics.csv").string() << ", final.ckpt, best.ckpt\n";
  return kOk;
}

// --- eval ----------------------------------------------------------------------

struct EvalOptions {
  std::string checkpoint;
  std::string dataset;
  std::string data_path;
  std::string split = "test";
  std::optional<std::size_t> synth_n;
  std::optional<std::size_t> synth_classes;
  std::optional<std::size_t> synth_size;
  bool normalize = false;
  std::size_t batch = 256;
};

int cmd_eval(const Globals& g, const EvalOptions& o) {
  const auto split = tmnet::data::parse_split(o.split);
  if (!split) throw UsageError("--split must be train or test");
  if (!o.dataset.empty() && o.dataset != "synth" && o.dataset != "cifar10" && o.dataset != "mnist")
    throw UsageError("unknown dataset '" + o.dataset + "' (valid: synth, cifar10, mnist)");
  if (o.batch < 1) throw UsageError("--batch must be >= 1");

  // Dataset settings: config file, then flags.
  auto c = g.config.empty() ? tmnet::train::RunConfig{} : tmnet::train::load_run_config(g.config);
  if (g.seed_given) c.seed = g.seed;
  if (o.dataset == "synth") c.dataset = tmnet::train::DatasetKind::Synth;
  if (o.dataset == "cifar10") c.dataset = tmnet::train::DatasetKind::Cifar10;
  if (o.dataset == "mnist") c.dataset = tmnet::train::DatasetKind::Mnist;
  if (!o.data_path.empty()) c.data_path = o.data_path;
  if (o.synth_n) *split == tmnet::data::Split::Train ? c.synth_n = *o.synth_n : c.synth_test_n = *o.synth_n;
  if (o.synth_classes) c.synth_classes = *o.synth_classes;
  if (o.synth_size) c.synth_size = *o.synth_size;
  if (c.dataset != tmnet::train::DatasetKind::Synth && c.data_path.empty())
    throw UsageError("--data-path is required for dataset " + std::string(tmnet::train::dataset_name(c.dataset)));

  auto loaded = tmnet::data::load_checkpoint<float>(o.checkpoint);
  const auto records = tmnet::train::load_split(c, *split);
  const auto r = tmnet::train::evaluate(loaded.model, records, o.batch, o.normalize || c.normalize);
  std::printf("samples=%zu\nloss=%.6f\naccuracy=%.6f\n", records.size(), r.loss, r.accuracy);
  return kOk;
}

// --- count-params --------------------------------------------------------------

int cmd_count_params(const Globals& g, const std::string& preset, std::size_t classes) {
  tmnet::nn::ModelConfig config;
  if (!preset.empty()) {
    config = tmnet::nn::model_preset(preset, classes);
  } else if (!g.config.empty()) {
    config = tmnet::train::load_run_config(g.config).model;
  } else {
    throw UsageError("count-params needs --preset or --config (presets: " + join(tmnet::nn::preset_names()) + ")");
  }
  auto model = tmnet::nn::build_model<float>(config);
  const auto pc = model.param_count();
  std::cout << "scheme " << tmnet::nn::scheme_name(config.scheme) << "\nstages "
            << tmnet::nn::format_stages(config.stages) << "\ndepth " << tmnet::nn::conventional_depth(config)
            << "\nstem " << pc.stem << "\n";
  for (std::size_t i = 0; i < pc.stages.size(); ++i) std::cout << "stage" << i + 1 << " " << pc.stages[i] << "\n";
  std::cout << "head " << pc.head << "\ntotal " << pc.total << "\n";
  return kOk;
}

// --- grad-check ----------------------------------------------------------------

int cmd_grad_check(const Globals& g, const std::string& target, double tolerance, std::size_t coords) {
  const auto& layers = tmnet::nn::grad_check_targets();
  const auto& presets = tmnet::nn::preset_names();
  if (std::find(layers.begin(), layers.end(), target) == layers.end() &&
      std::find(presets.begin(), presets.end(), target) == presets.end())
    throw UsageError("unknown target '" + target + "' (valid: " + join(layers) + ", or a preset: " + join(presets) +
                     ")");
  if (!(tolerance >= 0)) throw UsageError("--tolerance must be >= 0");
  const auto rep = tmnet::nn::run_grad_check_target(target, g.seed, coords);
  const bool ok = rep.passed(tolerance);
  std::printf("target=%s coords=%zu kinks=%zu max_rel_error=%.3e worst=%s[%zu] analytic=%.9e numeric=%.9e tolerance=%.1e %s\n",
              target.c_str(), rep.coords_checked, rep.kinks_skipped, rep.max_rel_error, rep.worst_param.c_str(), rep.worst_index,
              rep.worst_analytic, rep.worst_numeric, tolerance, ok ? "PASS" : "FAIL");
  return ok ? kOk : kRuntimeError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tmnet: ODE integrators and integrator-wired residual networks"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->each([&](const std::string&) { g.seed_given = true; });
  app.add_option("--out", g.out, "Output directory (overrides $TMNET_OUT_DIR and config out_dir)");
  app.add_option("--config", g.config, "Run configuration file (key = value)");

  BenchOptions bench;
  auto* b = app.add_subcommand("bench-ode", "Fit empirical convergence orders of the ODE integrators");
  b->add_option("--methods", bench.methods, "Comma-separated methods or 'all'")->capture_default_str();
  b->add_option("--problem", bench.problem, "decay-sin, growth, decay or harmonic")->capture_default_str();
  b->add_option("--taus", bench.taus, "Comma-separated step sizes (at least 4)")->capture_default_str();
  b->add_option("--horizon", bench.horizon, "Integration horizon")->capture_default_str();
  b->add_option("--csv", bench.csv, "CSV path (default <out>/bench_ode.csv)");

  app.add_subcommand("train", "Train a model from --config (desk defaults when omitted)");

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint; prints loss and accuracy");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  e->add_option("--dataset", ev.dataset, "synth, cifar10 or mnist");
  e->add_option("--data-path", ev.data_path, "Dataset directory");
  e->add_option("--split", ev.split, "train or test")->capture_default_str();
  e->add_option("--synth-n", ev.synth_n, "Synthetic sample count");
  e->add_option("--synth-classes", ev.synth_classes, "Synthetic class count");
  e->add_option("--synth-size", ev.synth_size, "Synthetic image size");
  e->add_flag("--normalize", ev.normalize, "Apply CIFAR per-channel normalization");
  e->add_option("--batch", ev.batch, "Evaluation batch size")->capture_default_str();

  std::string preset;
  std::size_t classes = 10;
  auto* cp = app.add_subcommand("count-params", "Per-stage and total parameter counts");
  cp->add_option("--preset", preset, "Model preset");
  cp->add_option("--classes", classes, "Classifier width")->capture_default_str()->check(CLI::Range(2, 100000));

  std::string target;
  double tolerance = 1e-4;
  std::size_t coords = 2;
  auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient check; exit 0 iff max rel error < tolerance");
  gc->add_option("--target", target, "conv, bn, linear, euler-block, rk-block, tm-block or a preset")->required();
  gc->add_option("--tolerance", tolerance, "Relative error bound")->capture_default_str();
  gc->add_option("--coords", coords, "Sampled coordinates per tensor for preset targets")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (b->parsed()) return cmd_bench_ode(g, bench);
    if (app.got_subcommand("train")) return cmd_train(g);
    if (e->parsed()) return cmd_eval(g, ev);
    if (cp->parsed()) return cmd_count_params(g, preset, classes);
    if (gc->parsed()) return cmd_grad_check(g, target, tolerance, coords);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return kUsageError;
  } catch (const tmnet::Error& err) {
    std::cerr << "error: " << error_kind(err) << ": " << err.what() << "\n";
    return kRuntimeError;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kRuntimeError;
  }
  return kUsageError;
}
