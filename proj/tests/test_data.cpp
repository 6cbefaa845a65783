#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "tmnet/data/checkpoint.hpp"
#include "tmnet/data/dataset.hpp"
#include "tmnet/data/metrics.hpp"

namespace fs = std::filesystem;
using namespace tmnet::data;
using tmnet::ad::Mode;
using tmnet::ad::Tape;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("tmnet_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             std::to_string(counter++) + "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> cifar_records(std::size_t n, std::mt19937_64& rng) {
  std::vector<unsigned char> out(n * kCifarRecordBytes);
  std::uniform_int_distribution<int> byte(0, 255), label(0, 9);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<unsigned char>(i % kCifarRecordBytes == 0 ? label(rng) : byte(rng));
  return out;
}

void push_be32(std::vector<unsigned char>& v, std::uint32_t x) {
  for (int s = 24; s >= 0; s -= 8) v.push_back(static_cast<unsigned char>((x >> s) & 0xff));
}

std::vector<unsigned char> idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols, unsigned char fill) {
  std::vector<unsigned char> v;
  push_be32(v, 0x803);
  push_be32(v, n);
  push_be32(v, rows);
  push_be32(v, cols);
  v.resize(v.size() + std::size_t{n} * rows * cols, fill);
  return v;
}

std::vector<unsigned char> idx_labels(std::uint32_t n) {
  std::vector<unsigned char> v;
  push_be32(v, 0x801);
  push_be32(v, n);
  for (std::uint32_t i = 0; i < n; ++i) v.push_back(static_cast<unsigned char>(i % 10));
  return v;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(Cifar10, SingleRecordFile) {
  TempDir dir;
  std::mt19937_64 rng(1);
  auto bytes = cifar_records(1, rng);
  bytes[0] = 7;
  bytes[1] = 255;
  bytes[2] = 0;
  write_bytes(dir / "one.bin", bytes);
  const auto recs = load_cifar10_file(dir / "one.bin");
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].label, 7);
  EXPECT_EQ(recs[0].image.shape(), (tmnet::ad::Shape{3, 32, 32}));
  EXPECT_EQ(recs[0].image[0], 1.0f);
  EXPECT_EQ(recs[0].image[1], 0.0f);
  EXPECT_EQ(recs[0].image[5], static_cast<float>(bytes[6]) / 255.0f);
}

TEST(Cifar10, TestSplitOfTenThousand) {
  TempDir dir;
  std::mt19937_64 rng(2);
  write_bytes(dir / "test_batch.bin", cifar_records(10000, rng));
  const auto recs = load_cifar10(dir.path(), Split::Test);
  ASSERT_EQ(recs.size(), 10000u);
  for (const auto& r : recs) {
    ASSERT_EQ(r.image.shape(), (tmnet::ad::Shape{3, 32, 32}));
    ASSERT_LT(r.label, 10);
  }
}

TEST(Cifar10, TrainSplitConcatenatesFiveBatches) {
  TempDir dir;
  std::mt19937_64 rng(3);
  for (int i = 1; i <= 5; ++i) write_bytes(dir / ("data_batch_" + std::to_string(i) + ".bin"), cifar_records(3, rng));
  EXPECT_EQ(load_cifar10(dir.path(), Split::Train).size(), 15u);
  fs::remove(dir / "data_batch_4.bin");
  EXPECT_THROW(load_cifar10(dir.path(), Split::Train), tmnet::FileMissing);
}

TEST(Cifar10, MalformedFiles) {
  TempDir dir;
  std::mt19937_64 rng(4);
  auto bytes = cifar_records(1, rng);
  bytes.push_back(0);
  write_bytes(dir / "long.bin", bytes);
  EXPECT_THROW(load_cifar10_file(dir / "long.bin"), tmnet::TruncatedRecord);

  auto bad = cifar_records(2, rng);
  bad[kCifarRecordBytes] = 10;
  write_bytes(dir / "label.bin", bad);
  EXPECT_THROW(load_cifar10_file(dir / "label.bin"), tmnet::LabelOutOfRange);
  EXPECT_THROW(load_cifar10(dir.path(), Split::Test), tmnet::FileMissing);
}

TEST(Mnist, StandardTestFiles) {
  TempDir dir;
  write_bytes(dir / "t10k-images-idx3-ubyte", idx_images(10000, 28, 28, 0));
  write_bytes(dir / "t10k-labels-idx1-ubyte", idx_labels(10000));
  const auto recs = load_mnist_idx(dir.path(), Split::Test);
  ASSERT_EQ(recs.size(), 10000u);
  EXPECT_EQ(recs[0].image.shape(), (tmnet::ad::Shape{1, 28, 28}));
  for (float v : recs[123].image.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(recs[123].label, 3);
}

TEST(Mnist, Errors) {
  TempDir dir;
  write_bytes(dir / "img", idx_images(5, 4, 4, 255));
  write_bytes(dir / "lab", idx_labels(4));
  EXPECT_THROW(load_mnist_files(dir / "img", dir / "lab"), tmnet::DimensionMismatch);
  EXPECT_THROW(load_mnist_files(dir / "lab", dir / "lab"), tmnet::BadMagic);
  EXPECT_THROW(load_mnist_files(dir / "img", dir / "img"), tmnet::BadMagic);
  auto shortimg = idx_images(4, 4, 4, 255);
  shortimg.pop_back();
  write_bytes(dir / "short", shortimg);
  EXPECT_THROW(load_mnist_files(dir / "short", dir / "lab"), tmnet::TruncatedRecord);
  write_bytes(dir / "img4", idx_images(4, 4, 4, 255));
  const auto ok = load_mnist_files(dir / "img4", dir / "lab");
  EXPECT_EQ(ok[2].image[7], 1.0f);
  EXPECT_THROW(load_mnist_idx(dir.path(), Split::Train), tmnet::FileMissing);
}

TEST(Loaders, MalformedInputsAlwaysRaiseTypedErrors) {
  TempDir dir;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> byte(0, 255);
  std::uniform_int_distribution<std::size_t> len(0, 3 * kCifarRecordBytes);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<unsigned char> junk(len(rng));
    for (auto& b : junk) b = static_cast<unsigned char>(byte(rng));
    if (trial % 3 == 0 && junk.size() >= 8) {
      junk[0] = 0;
      junk[1] = 0;
      junk[2] = 8;
      junk[3] = static_cast<unsigned char>(trial % 2 ? 3 : 1);
    }
    write_bytes(dir / "junk", junk);
    try {
      const auto recs = load_cifar10_file(dir / "junk");
      EXPECT_EQ(recs.size() * kCifarRecordBytes, junk.size());
    } catch (const tmnet::Error&) {
    }
    try {
      load_mnist_files(dir / "junk", dir / "junk");
    } catch (const tmnet::Error&) {
    }
  }
}

TEST(Synth, DeterministicInSeed) {
  const auto a = synth_dataset(7, 100, 4, 16);
  const auto b = synth_dataset(7, 100, 4, 16);
  const auto c = synth_dataset(8, 100, 4, 16);
  ASSERT_EQ(a.size(), 100u);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].label, b[i].label);
    EXPECT_EQ(a[i].image, b[i].image);
    differs = differs || !(a[i].image == c[i].image);
  }
  EXPECT_TRUE(differs);
}

TEST(Synth, RoundRobinLabelsAndRange) {
  const auto d = synth_dataset(1, 1000, 4, 16);
  std::vector<int> hist(4);
  for (const auto& r : d) {
    ++hist[static_cast<std::size_t>(r.label)];
    EXPECT_EQ(r.image.shape(), (tmnet::ad::Shape{3, 16, 16}));
    for (float v : r.image.data()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
  EXPECT_EQ(hist, (std::vector<int>{250, 250, 250, 250}));
}

TEST(Synth, NearestCentroidSeparates) {
  const auto d = synth_dataset(3, 1000, 4, 16);
  const std::size_t dim = d[0].image.numel();
  std::vector<std::vector<double>> centroid(4, std::vector<double>(dim));
  for (const auto& r : d)
    for (std::size_t j = 0; j < dim; ++j) centroid[static_cast<std::size_t>(r.label)][j] += r.image[j] / 250.0;
  std::size_t correct = 0;
  for (const auto& r : d) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t k = 0; k < 4; ++k) {
      double dist = 0;
      for (std::size_t j = 0; j < dim; ++j) dist += (r.image[j] - centroid[k][j]) * (r.image[j] - centroid[k][j]);
      if (dist < best_d) best_d = dist, best = k;
    }
    correct += static_cast<int>(best) == r.label;
  }
  EXPECT_GT(static_cast<double>(correct) / 1000.0, 0.9);
}

TEST(Batches, MakeNormalizeAugment) {
  const auto d = synth_dataset(9, 10, 3, 8);
  const std::vector<std::size_t> idx{4, 1, 7};
  auto [batch, labels] = make_batch(d, idx);
  EXPECT_EQ(batch.shape(), (tmnet::ad::Shape{3, 3, 8, 8}));
  EXPECT_EQ(labels, (std::vector<int>{1, 1, 1}));
  EXPECT_EQ(batch[d[0].image.numel() + 5], d[1].image[5]);

  auto norm = batch;
  normalize_batch(norm, kCifarMean, kCifarStd);
  EXPECT_FLOAT_EQ(norm[0], (batch[0] - kCifarMean[0]) / kCifarStd[0]);
  const float one_mean[1] = {0.0f};
  EXPECT_THROW(normalize_batch(norm, one_mean, one_mean), tmnet::ShapeMismatch);

  // Without padding every augmented image is the original or its mirror.
  auto aug = batch;
  std::mt19937_64 rng(1);
  augment_batch(aug, rng, 0);
  for (std::size_t n = 0; n < 3; ++n) {
    bool same = true, mirrored = true;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) {
          same = same && aug.at(n, c, y, x) == batch.at(n, c, y, x);
          mirrored = mirrored && aug.at(n, c, y, x) == batch.at(n, c, y, 7 - x);
        }
    EXPECT_TRUE(same || mirrored);
  }
  auto again = batch;
  std::mt19937_64 rng2(1);
  augment_batch(again, rng2, 0);
  EXPECT_EQ(again, aug);
}

namespace {

tmnet::nn::ModelConfig tiny_config(tmnet::nn::Scheme s = tmnet::nn::Scheme::TM) {
  tmnet::nn::ModelConfig c;
  c.scheme = s;
  c.stem_channels = 4;
  c.stages = {{4, 4, 1}, {8, 1, 2}};
  c.classes = 5;
  c.seed = 99;
  return c;
}

}  // namespace

TEST(Checkpoint, RoundTripReproducesEvalLogitsBitwise) {
  TempDir dir;
  auto model = tmnet::nn::build_model<float>(tiny_config());
  const auto [batch, labels] = make_batch(synth_dataset(4, 6, 5, 8), std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
  {
    Tape<float> t;  // move running statistics off their initial values
    model.forward(t, batch, Mode::Train);
  }
  save_checkpoint(model, dir / "m.ckpt", 1234);
  auto loaded = load_checkpoint<float>(dir / "m.ckpt");
  EXPECT_EQ(loaded.step, 1234u);
  EXPECT_TRUE(loaded.model.config().same_architecture(model.config()));
  Tape<float> t1, t2;
  EXPECT_EQ(model.forward(t1, batch, Mode::Eval).value(), loaded.model.forward(t2, batch, Mode::Eval).value());
  const auto b1 = model.buffers();
  const auto b2 = loaded.model.buffers();
  for (std::size_t i = 0; i < b1.size(); ++i) EXPECT_EQ(*b1[i].tensor, *b2[i].tensor) << b1[i].name;
}

TEST(Checkpoint, TruncatedAndForeignFiles) {
  TempDir dir;
  auto model = tmnet::nn::build_model<float>(tiny_config());
  save_checkpoint(model, dir / "m.ckpt");
  std::ifstream in(dir / "m.ckpt", std::ios::binary);
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t{30}, std::size_t{6}}) {
    write_bytes(dir / "cut.ckpt", std::vector<unsigned char>(bytes.begin(), bytes.begin() + static_cast<long>(cut)));
    EXPECT_THROW(load_checkpoint<float>(dir / "cut.ckpt"), tmnet::CorruptBlob) << cut;
  }
  auto extra = bytes;
  extra.push_back(0);
  write_bytes(dir / "extra.ckpt", extra);
  EXPECT_THROW(load_checkpoint<float>(dir / "extra.ckpt"), tmnet::CorruptBlob);

  auto future = bytes;
  future[4] = 2;
  write_bytes(dir / "v2.ckpt", future);
  EXPECT_THROW(load_checkpoint<float>(dir / "v2.ckpt"), tmnet::UnsupportedVersion);

  write_bytes(dir / "junk.ckpt", {'n', 'o', 'p', 'e', 1, 0, 0, 0});
  EXPECT_THROW(load_checkpoint<float>(dir / "junk.ckpt"), tmnet::CorruptBlob);
  EXPECT_THROW(load_checkpoint<float>(dir / "missing.ckpt"), tmnet::IoError);
}

TEST(Checkpoint, ConfigIsAuthoritative) {
  TempDir dir;
  auto model = tmnet::nn::build_model<float>(tmnet::nn::model_preset("preactresnet18-cifar"));
  save_checkpoint(model, dir / "p18.ckpt");
  EXPECT_THROW(load_checkpoint<float>(dir / "p18.ckpt", tmnet::nn::model_preset("tmresnet22-cifar")),
               tmnet::ConfigError);
  auto small = tmnet::nn::build_model<float>(tiny_config());
  save_checkpoint(small, dir / "s.ckpt");
  auto other_seed = tiny_config();
  other_seed.seed = 5;
  EXPECT_NO_THROW(load_checkpoint<float>(dir / "s.ckpt", other_seed));
}

TEST(Checkpoint, ModelConfigTextRoundTrip) {
  auto c = tiny_config(tmnet::nn::Scheme::RK3);
  c.in_channels = 1;
  const auto back = tmnet::nn::model_config_from_text(tmnet::nn::to_text(c));
  EXPECT_TRUE(back.same_architecture(c));
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_THROW(tmnet::nn::model_config_from_text("scheme = rk7\n"), tmnet::ConfigError);
  EXPECT_THROW(tmnet::nn::model_config_from_text("depth = 3\n"), tmnet::ConfigError);
}

TEST(Metrics, HeaderRowsAndFormatting) {
  TempDir dir;
  const auto path = dir / "metrics.csv";
  append_metrics(path, {1, "train", 1.25, 0.9301, 0.05, 0.0});
  auto lines = read_lines(path);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0], "epoch,split,loss,accuracy,lr,wall_s");
  EXPECT_EQ(lines[1], "1,train,1.250000,0.930100,0.050000,0.000000");
  append_metrics(path, {1, "test", 1.0, 0.5, 0.05, 0.0});
  append_metrics(path, {2, "train", 0.5, 0.75, 0.05, 0.0});
  EXPECT_EQ(read_lines(path).size(), 4u);
  EXPECT_THROW(append_metrics(path, {3, "train", 0.5, 1.5, 0.05, 0.0}), tmnet::InvalidArgument);
  EXPECT_THROW(append_metrics(path, {3, "val", 0.5, 0.5, 0.05, 0.0}), tmnet::InvalidArgument);
  EXPECT_THROW(append_metrics(dir / "no/such/dir/m.csv", {1, "train", 0.5, 0.5, 0.05, 0.0}), tmnet::IoError);
}
