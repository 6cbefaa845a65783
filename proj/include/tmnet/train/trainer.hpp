#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "tmnet/data/checkpoint.hpp"
#include "tmnet/data/dataset.hpp"
#include "tmnet/data/metrics.hpp"
#include "tmnet/errors.hpp"
#include "tmnet/nn/model.hpp"
#include "tmnet/train/run_config.hpp"

namespace tmnet::train {

using data::DatasetRecord;

/// SGD with momentum and L2 weight decay:
///   v <- momentum * v + (grad + weight_decay * w);  w <- w - lr * v.
template <class T>
class Sgd {
 public:
  Sgd(std::vector<ad::Parameter<T>*> params, double momentum, double weight_decay)
      : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
    for (auto* p : params_) velocity_.emplace_back(p->value.numel(), T{0});
  }

  void step(double lr) {
    const T mu = static_cast<T>(momentum_), wd = static_cast<T>(weight_decay_), eta = static_cast<T>(lr);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& w = params_[i]->value;
      const auto& g = params_[i]->grad;
      auto& v = velocity_[i];
      for (std::size_t k = 0; k < v.size(); ++k) {
        v[k] = mu * v[k] + (g[k] + wd * w[k]);
        w[k] -= eta * v[k];
      }
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

 private:
  std::vector<ad::Parameter<T>*> params_;
  std::vector<std::vector<T>> velocity_;
  double momentum_;
  double weight_decay_;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Dataset records for one split of the configured dataset.
inline std::vector<DatasetRecord> load_split(const RunConfig& c, data::Split split) {
  switch (c.dataset) {
    case DatasetKind::Synth:
      return split == data::Split::Train ? data::synth_dataset(c.seed, c.synth_n, c.synth_classes, c.synth_size)
                                         : data::synth_dataset(c.seed + 1, c.synth_test_n, c.synth_classes, c.synth_size);
    case DatasetKind::Cifar10: return data::load_cifar10(c.data_path, split);
    case DatasetKind::Mnist: return data::load_mnist_idx(c.data_path, split);
  }
  throw InvalidArgument("unknown dataset");
}

/// Eval-mode mean loss and accuracy over `records`, in fixed batch order.
template <class T>
EvalResult evaluate(nn::Model<T>& model, const std::vector<DatasetRecord>& records, std::size_t batch_size,
                    bool normalize) {
  if (records.empty()) throw EmptyBatch("evaluate: empty dataset");
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < records.size(); start += batch_size) {
    idx.resize(std::min(batch_size, records.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    auto [batch, labels] = data::make_batch(records, idx);
    if (normalize) data::normalize_batch(batch, data::kCifarMean, data::kCifarStd);
    ad::Tape<T> tape;
    auto logits = model.forward(tape, batch.template cast<T>(), ad::Mode::Eval);
    loss_sum += static_cast<double>(ad::softmax_cross_entropy(logits, labels).value()[0]) *
                static_cast<double>(idx.size());
    const auto pred = nn::argmax_rows(logits.value());
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
  }
  const double n = static_cast<double>(records.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

struct TrainResult {
  std::vector<data::MetricsRow> rows;
  double best_test_accuracy = -1.0;
  std::size_t param_count = 0;
};

/// Trains `config.model` and writes metrics.csv, final.ckpt and best.ckpt to
/// `out_dir` (metrics.csv is replaced, not appended to). `log` receives one
/// human-readable line per epoch.
inline TrainResult run_training(const RunConfig& config, const std::vector<DatasetRecord>& train_set,
                                const std::vector<DatasetRecord>& test_set, const std::filesystem::path& out_dir,
                                const std::function<void(const std::string&)>& log = {}) {
  validate(config);
  if (train_set.empty()) throw EmptyBatch("training set is empty");
  std::filesystem::create_directories(out_dir);
  const auto metrics_path = out_dir / "metrics.csv";
  std::filesystem::remove(metrics_path);

  nn::Model<float> model(config.model);
  Sgd<float> opt(model.parameters(), config.momentum, config.weight_decay);
  std::mt19937_64 rng(config.seed);
  TrainResult result;
  result.param_count = model.param_count().total;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::uint64_t step = 0;
  const auto wall_start = std::chrono::steady_clock::now();
  auto wall = [&] {
    if (!config.log_wall_time) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  };

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = config.lr_at_epoch(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      auto [batch, labels] = data::make_batch(train_set, std::span<const std::size_t>(order.data() + start, n));
      if (config.normalize) data::normalize_batch(batch, data::kCifarMean, data::kCifarStd);
      if (config.augment) data::augment_batch(batch, rng);
      opt.zero_grad();
      ad::Tape<float> tape;
      auto logits = model.forward(tape, batch, ad::Mode::Train);
      auto loss = ad::softmax_cross_entropy(logits, labels);
      const double batch_loss = loss.value()[0];
      if (!std::isfinite(batch_loss))
        throw NonFiniteValue("training loss became non-finite at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step));
      tape.backward(loss);
      opt.step(lr);
      ++step;
      loss_sum += batch_loss * static_cast<double>(n);
      const auto pred = nn::argmax_rows(logits.value());
      for (std::size_t i = 0; i < n; ++i) correct += pred[i] == labels[i];
    }
    const double n_train = static_cast<double>(train_set.size());
    data::MetricsRow train_row{static_cast<int>(epoch), "train", loss_sum / n_train,
                               static_cast<double>(correct) / n_train, lr, wall()};
    data::append_metrics(metrics_path, train_row);
    result.rows.push_back(train_row);

    const auto test = evaluate(model, test_set, config.eval_batch_size, config.normalize);
    data::MetricsRow test_row{static_cast<int>(epoch), "test", test.loss, test.accuracy, lr, wall()};
    data::append_metrics(metrics_path, test_row);
    result.rows.push_back(test_row);

    if (test.accuracy > result.best_test_accuracy) {
      result.best_test_accuracy = test.accuracy;
      data::save_checkpoint(model, out_dir / "best.ckpt", step);
    }
    if (log)
      log("epoch " + std::to_string(epoch) + ": " + data::format_metrics_row(train_row) + " | " +
          data::format_metrics_row(test_row));
  }
  data::save_checkpoint(model, out_dir / "final.ckpt", step);
  return result;
}

}  // namespace tmnet::train
