#pragma once

// Image datasets: CIFAR-10 binary batches, MNIST IDX files and a synthetic
// blob generator. Every loader returns images scaled to [0, 1].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tmnet/autodiff/tensor.hpp"
#include "tmnet/errors.hpp"

namespace tmnet::data {

using ad::Tensor;

struct DatasetRecord {
  Tensor<float> image;  // C x H x W
  int label = 0;
};

enum class Split { Train, Test };

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  return std::nullopt;
}

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileMissing("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const unsigned char* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

}  // namespace detail

inline constexpr std::size_t kCifarRecordBytes = 3073;

/// Parses one CIFAR-10 binary batch file (records of 1 label byte + 3072
/// channel-major pixel bytes).
inline std::vector<DatasetRecord> load_cifar10_file(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  if (bytes.size() % kCifarRecordBytes != 0)
    throw TruncatedRecord(path.string() + ": size " + std::to_string(bytes.size()) + " is not a multiple of 3073");
  std::vector<DatasetRecord> out;
  out.reserve(bytes.size() / kCifarRecordBytes);
  for (std::size_t off = 0; off < bytes.size(); off += kCifarRecordBytes) {
    const int label = bytes[off];
    if (label > 9)
      throw LabelOutOfRange(path.string() + ": record " + std::to_string(off / kCifarRecordBytes) + " has label " +
                            std::to_string(label));
    DatasetRecord r{Tensor<float>({3, 32, 32}), label};
    for (std::size_t i = 0; i < 3072; ++i) r.image[i] = static_cast<float>(bytes[off + 1 + i]) / 255.0f;
    out.push_back(std::move(r));
  }
  return out;
}

/// data_batch_1..5.bin for train, test_batch.bin for test.
inline std::vector<DatasetRecord> load_cifar10(const std::filesystem::path& dir, Split split) {
  std::vector<std::string> files;
  if (split == Split::Train)
    for (int i = 1; i <= 5; ++i) files.push_back("data_batch_" + std::to_string(i) + ".bin");
  else
    files.push_back("test_batch.bin");
  for (const auto& f : files)
    if (!std::filesystem::exists(dir / f)) throw FileMissing("CIFAR-10 file missing: " + (dir / f).string());
  std::vector<DatasetRecord> out;
  for (const auto& f : files) {
    auto part = load_cifar10_file(dir / f);
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

/// Parses an IDX image file (magic 0x803) and label file (magic 0x801).
inline std::vector<DatasetRecord> load_mnist_files(const std::filesystem::path& images,
                                                   const std::filesystem::path& labels) {
  const auto img = detail::read_file(images);
  const auto lab = detail::read_file(labels);
  if (img.size() < 16 || detail::read_be32(img.data()) != 0x803)
    throw BadMagic(images.string() + ": not an IDX image file (expected magic 0x00000803)");
  if (lab.size() < 8 || detail::read_be32(lab.data()) != 0x801)
    throw BadMagic(labels.string() + ": not an IDX label file (expected magic 0x00000801)");
  const std::size_t n = detail::read_be32(img.data() + 4);
  const std::size_t rows = detail::read_be32(img.data() + 8);
  const std::size_t cols = detail::read_be32(img.data() + 12);
  const std::size_t nl = detail::read_be32(lab.data() + 4);
  if (n != nl)
    throw DimensionMismatch("IDX image count " + std::to_string(n) + " differs from label count " + std::to_string(nl));
  const std::size_t payload = img.size() - 16;
  if (rows * cols == 0 ? payload != 0 : (n > payload / (rows * cols) || n * rows * cols != payload))
    throw TruncatedRecord(images.string() + ": header declares " + std::to_string(n) + " images of " +
                          std::to_string(rows) + "x" + std::to_string(cols) + " but the file holds " +
                          std::to_string(payload) + " pixel bytes");
  if (lab.size() != 8 + n)
    throw TruncatedRecord(labels.string() + ": expected " + std::to_string(8 + n) + " bytes, found " +
                          std::to_string(lab.size()));
  std::vector<DatasetRecord> out;
  out.reserve(n);
  const std::size_t px = rows * cols;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = lab[8 + i];
    if (label > 9) throw LabelOutOfRange(labels.string() + ": record " + std::to_string(i) + " has label " + std::to_string(label));
    DatasetRecord r{Tensor<float>({1, rows, cols}), label};
    for (std::size_t j = 0; j < px; ++j) r.image[j] = static_cast<float>(img[16 + i * px + j]) / 255.0f;
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<DatasetRecord> load_mnist_idx(const std::filesystem::path& dir, Split split) {
  const std::string prefix = split == Split::Train ? "train" : "t10k";
  const auto images = dir / (prefix + "-images-idx3-ubyte");
  const auto labels = dir / (prefix + "-labels-idx1-ubyte");
  for (const auto& f : {images, labels})
    if (!std::filesystem::exists(f)) throw FileMissing("MNIST file missing: " + f.string());
  return load_mnist_files(images, labels);
}

/// Class-conditional blobs: class k is a bright Gaussian spot placed on a
/// circle at angle 2*pi*k/classes (jittered by up to one pixel) over a dark
/// background, plus N(0, 0.1) pixel noise clipped to [0, 1]. Labels are
/// assigned round-robin.
inline std::vector<DatasetRecord> synth_dataset(std::uint64_t seed, std::size_t n, std::size_t classes,
                                                std::size_t size, std::size_t channels = 3) {
  if (classes < 2) throw InvalidArgument("synth_dataset needs at least 2 classes");
  if (size < 4) throw InvalidArgument("synth_dataset needs images of at least 4x4 pixels");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  const double centre = (static_cast<double>(size) - 1.0) / 2.0;
  const double radius = static_cast<double>(size) / 4.0;
  const double width = static_cast<double>(size) / 8.0;
  std::vector<DatasetRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % classes;
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(classes);
    const double cy = centre + radius * std::sin(angle) + jitter(rng);
    const double cx = centre + radius * std::cos(angle) + jitter(rng);
    DatasetRecord r{Tensor<float>({channels, size, size}), static_cast<int>(k)};
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
          const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
          const double blob = 0.8 * std::exp(-(dx * dx + dy * dy) / (2 * width * width));
          r.image[(c * size + y) * size + x] = static_cast<float>(std::clamp(0.1 + blob + noise(rng), 0.0, 1.0));
        }
    out.push_back(std::move(r));
  }
  return out;
}

/// Stacks records[indices] into an N x C x H x W batch.
inline std::pair<Tensor<float>, std::vector<int>> make_batch(const std::vector<DatasetRecord>& records,
                                                             std::span<const std::size_t> indices) {
  if (indices.empty()) throw EmptyBatch("make_batch: no indices");
  const auto& s = records.at(indices[0]).image.shape();
  Tensor<float> batch({indices.size(), s[0], s[1], s[2]});
  std::vector<int> labels(indices.size());
  const std::size_t per = records[indices[0]].image.numel();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& r = records.at(indices[i]);
    if (r.image.shape() != s)
      throw ShapeMismatch("make_batch: record shapes " + ad::shape_string(s) + " and " + ad::shape_string(r.image.shape()));
    std::copy(r.image.data().begin(), r.image.data().end(), batch.data().begin() + i * per);
    labels[i] = r.label;
  }
  return {std::move(batch), std::move(labels)};
}

// --- optional preprocessing ----------------------------------------------------

inline constexpr float kCifarMean[3] = {0.4914f, 0.4822f, 0.4465f};
inline constexpr float kCifarStd[3] = {0.2470f, 0.2435f, 0.2616f};

/// Per-channel (x - mean) / std on an NCHW batch.
inline void normalize_batch(Tensor<float>& batch, std::span<const float> mean, std::span<const float> stdev) {
  const std::size_t c = batch.dim(1);
  if (mean.size() != c || stdev.size() != c)
    throw ShapeMismatch("normalize_batch: " + std::to_string(c) + " channels but " + std::to_string(mean.size()) +
                        " means");
  const std::size_t plane = batch.dim(2) * batch.dim(3);
  for (std::size_t n = 0; n < batch.dim(0); ++n)
    for (std::size_t ch = 0; ch < c; ++ch) {
      float* p = batch.data().data() + (n * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - mean[ch]) / stdev[ch];
    }
}

/// Random crop after zero padding by `pad`, then a horizontal flip with
/// probability 1/2, per image.
inline void augment_batch(Tensor<float>& batch, std::mt19937_64& rng, std::size_t pad = 4) {
  const std::size_t c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  std::uniform_int_distribution<std::size_t> shift(0, 2 * pad);
  std::bernoulli_distribution flip(0.5);
  std::vector<float> img(c * h * w);
  for (std::size_t n = 0; n < batch.dim(0); ++n) {
    float* p = batch.data().data() + n * img.size();
    std::copy(p, p + img.size(), img.begin());
    const std::size_t dy = shift(rng), dx = shift(rng);
    const bool mirror = flip(rng);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t sx = mirror ? w - 1 - x : x;
          const long iy = static_cast<long>(y + dy) - static_cast<long>(pad);
          const long ix = static_cast<long>(sx + dx) - static_cast<long>(pad);
          const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(h) && ix < static_cast<long>(w);
          p[(ch * h + y) * w + x] =
              inside ? img[(ch * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] : 0.0f;
        }
  }
}

}  // namespace tmnet::data
