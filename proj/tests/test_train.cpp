#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "tmnet/train/run_config.hpp"
#include "tmnet/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace tmnet::train;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("tmnet_train_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(RunConfig, DeskDefaults) {
  const auto c = parse_run_config("");
  EXPECT_EQ(c.epochs, 5u);
  EXPECT_EQ(c.batch_size, 64u);
  EXPECT_EQ(c.lr, 0.05);
  EXPECT_EQ(c.momentum, 0.9);
  EXPECT_EQ(c.weight_decay, 5e-4);
  EXPECT_EQ(c.dataset, DatasetKind::Synth);
  EXPECT_EQ(c.model.scheme, tmnet::nn::Scheme::Euler);
  EXPECT_FALSE(c.normalize);
  EXPECT_FALSE(c.augment);
}

TEST(RunConfig, ParsesKeysCommentsAndModelOverrides) {
  const auto c = parse_run_config(R"(
# smoke run
seed = 17
epochs = 3            # short
batch_size = 32
lr = 0.1
lr_schedule = step
lr_step_epochs = 2
lr_step_factor = 0.5
model.scheme = tm
model.stages = 8x4s1,16x4s2
synth.classes = 3
model.classes = 3
)");
  EXPECT_EQ(c.seed, 17u);
  EXPECT_EQ(c.model.seed, 17u);
  EXPECT_EQ(c.model.scheme, tmnet::nn::Scheme::TM);
  EXPECT_EQ(c.model.stages.size(), 2u);
  EXPECT_DOUBLE_EQ(c.lr_at_epoch(1), 0.1);
  EXPECT_DOUBLE_EQ(c.lr_at_epoch(2), 0.1);
  EXPECT_DOUBLE_EQ(c.lr_at_epoch(3), 0.05);
}

TEST(RunConfig, PresetModelFollowsSynthClassCount) {
  const auto c = parse_run_config("model = tmresnet22-cifar\nsynth.classes = 5\n");
  EXPECT_EQ(c.model.classes, 5u);
  EXPECT_EQ(c.model.scheme, tmnet::nn::Scheme::TM);
}

TEST(RunConfig, FullScalePreset) {
  const auto c = parse_run_config("preset = paper-full\ndata_path = /data/cifar\n");
  EXPECT_EQ(c.epochs, 120u);
  EXPECT_EQ(c.batch_size, 256u);
  EXPECT_EQ(c.dataset, DatasetKind::Cifar10);
  EXPECT_EQ(c.model_preset, "tmresnet22-cifar");
  EXPECT_EQ(c.data_path, "/data/cifar");
}

TEST(RunConfig, ErrorsNameTheKey) {
  auto field_of = [](const std::string& text) -> std::string {
    try {
      parse_run_config(text);
    } catch (const tmnet::ConfigError& e) {
      return e.field();
    }
    return "<none>";
  };
  EXPECT_EQ(field_of("epoch = 5\n"), "epoch");
  EXPECT_EQ(field_of("epochs = 0\n"), "epochs");
  EXPECT_EQ(field_of("batch_size = 0\n"), "batch_size");
  EXPECT_EQ(field_of("lr = -1\n"), "lr");
  EXPECT_EQ(field_of("lr = fast\n"), "lr");
  EXPECT_EQ(field_of("epochs = 2\nepochs = 3\n"), "epochs");
  EXPECT_EQ(field_of("dataset = svhn\n"), "dataset");
  EXPECT_EQ(field_of("dataset = cifar10\n"), "data_path");
  EXPECT_EQ(field_of("model.classes = 7\n"), "model.classes");
  EXPECT_EQ(field_of("model.depth = 7\n"), "model.depth");
  EXPECT_EQ(field_of("model = resnet50\n"), "model");
  EXPECT_EQ(field_of("preset = tiny\n"), "preset");
  EXPECT_EQ(field_of("augment = maybe\n"), "augment");
  EXPECT_EQ(field_of("just words\n"), "line 1");
  EXPECT_EQ(field_of("dataset = mnist\ndata_path = x\nmodel.classes = 10\n"), "model.in_channels");
}

TEST(Sgd, MomentumAndWeightDecayArithmetic) {
  tmnet::ad::Parameter<double> w("w", tmnet::ad::Tensor<double>({1}, 2.0));
  Sgd<double> opt({&w}, 0.9, 0.1);
  w.grad[0] = 1.0;
  opt.step(0.5);  // v = 1 + 0.2 = 1.2; w = 2 - 0.6
  EXPECT_DOUBLE_EQ(w.value[0], 1.4);
  opt.step(0.5);  // v = 1.08 + 1 + 0.14 = 2.22; w = 1.4 - 1.11
  EXPECT_DOUBLE_EQ(w.value[0], 1.4 - 0.5 * 2.22);
  opt.zero_grad();
  EXPECT_EQ(w.grad[0], 0.0);
}

TEST(Evaluate, FreshModelIsNearChance) {
  auto c = parse_run_config("synth.classes = 10\nmodel.classes = 10\nsynth.test_n = 500\n");
  tmnet::nn::Model<float> model(c.model);
  const auto r = evaluate(model, load_split(c, tmnet::data::Split::Test), 128, false);
  EXPECT_GE(r.accuracy, 0.05);
  EXPECT_LE(r.accuracy, 0.20);
  EXPECT_GT(r.loss, 0.0);
}

TEST(Training, ShortRunIsDeterministicAndWritesArtifacts) {
  const auto c = parse_run_config(
      "epochs = 2\nsynth.n = 192\nsynth.test_n = 64\nbatch_size = 32\nmodel.stem = 4\n"
      "model.stages = 4x4s1,8x1s2\nmodel.scheme = tm\n");
  const auto tr = load_split(c, tmnet::data::Split::Train);
  const auto te = load_split(c, tmnet::data::Split::Test);
  const auto a = scratch("a"), b = scratch("b");
  const auto ra = run_training(c, tr, te, a);
  const auto rb = run_training(c, tr, te, b);
  ASSERT_EQ(ra.rows.size(), 4u);
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_EQ(slurp(a / "final.ckpt"), slurp(b / "final.ckpt"));
  EXPECT_TRUE(fs::exists(a / "best.ckpt"));

  // Re-running into the same directory replaces the metrics file.
  run_training(c, tr, te, a);
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));

  auto loaded = tmnet::data::load_checkpoint<float>(a / "final.ckpt", c.model);
  EXPECT_EQ(loaded.step, 2u * 6u);
  const auto eval = evaluate(loaded.model, te, 64, false);
  EXPECT_NEAR(eval.accuracy, ra.rows.back().accuracy, 1e-12);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Training, WallTimeIsOptIn) {
  auto c = parse_run_config("epochs = 1\nsynth.n = 64\nsynth.test_n = 16\nmodel.stem = 4\nmodel.stages = 4x1s1\n");
  const auto dir = scratch("wall");
  const auto r = run_training(c, load_split(c, tmnet::data::Split::Train), load_split(c, tmnet::data::Split::Test), dir);
  for (const auto& row : r.rows) EXPECT_EQ(row.wall_s, 0.0);
  c.log_wall_time = true;
  const auto r2 = run_training(c, load_split(c, tmnet::data::Split::Train), load_split(c, tmnet::data::Split::Test), dir);
  EXPECT_GT(r2.rows.back().wall_s, 0.0);
  fs::remove_all(dir);
}

TEST(RunConfig, ShippedConfigsParse) {
  const fs::path dir = TMNET_SOURCE_DIR "/configs";
  const auto smoke = load_run_config(dir / "smoke.conf");
  const auto smoke_tm = load_run_config(dir / "smoke-tm.conf");
  EXPECT_EQ(smoke.model.scheme, tmnet::nn::Scheme::Euler);
  EXPECT_EQ(smoke_tm.model.scheme, tmnet::nn::Scheme::TM);
  EXPECT_TRUE(smoke.model.same_architecture(RunConfig{}.model));
  const auto full = load_run_config(dir / "paper-full.conf");
  EXPECT_EQ(full.epochs, 120u);
  EXPECT_EQ(full.dataset, DatasetKind::Cifar10);
}
