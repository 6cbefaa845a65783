#pragma once

// Binary model checkpoints. Byte layout (all integers little-endian):
//
//   "TMCK"                      4-byte magic
//   u32 version                 currently 1
//   u32 n, n bytes              model config text (key = value lines)
//   u64 step                    training step counter
//   u32 entries
//   per entry:
//     u32 n, n bytes            name ("stage1.block0.conv1.weight", "...running_mean")
//     u32 rank, rank x u64      shape
//     numel x f32               values, IEEE-754 binary32
//
// Entries are parameters followed by batch-norm running statistics, in model
// order. See docs/checkpoint_format.md.

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tmnet/errors.hpp"
#include "tmnet/nn/model.hpp"

namespace tmnet::data {

inline constexpr char kCheckpointMagic[4] = {'T', 'M', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void raw(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<char>& buf, std::string origin) : buf_(buf), origin_(std::move(origin)) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes() {
    const std::size_t n = u32();
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  const char* raw(std::size_t n) {
    need(n);
    pos_ += n;
    return buf_.data() + pos_ - n;
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{static_cast<unsigned char>(buf_[pos_ + i])} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n)
      throw CorruptBlob(origin_ + ": unexpected end of file at byte " + std::to_string(pos_));
  }

  const std::vector<char>& buf_;
  std::string origin_;
  std::size_t pos_ = 0;
};

template <class T>
std::vector<std::pair<std::string, ad::Tensor<T>*>> checkpoint_entries(nn::Model<T>& model) {
  std::vector<std::pair<std::string, ad::Tensor<T>*>> out;
  for (auto* p : model.parameters()) out.emplace_back(p->name, &p->value);
  for (auto& b : model.buffers()) out.emplace_back(b.name, b.tensor);
  return out;
}

}  // namespace detail

template <class T>
void save_checkpoint(nn::Model<T>& model, const std::filesystem::path& path, std::uint64_t step = 0) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.bytes(nn::to_text(model.config()));
  w.u64(step);
  const auto entries = detail::checkpoint_entries(model);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    w.bytes(name);
    w.u32(static_cast<std::uint32_t>(t->rank()));
    for (std::size_t d : t->shape()) w.u64(d);
    for (T v : t->data()) w.f32(static_cast<float>(v));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("write failed: " + path.string());
}

template <class T = float>
struct LoadedCheckpoint {
  nn::Model<T> model;
  std::uint64_t step = 0;
};

/// Rebuilds the model recorded in `path`. When `expected` is given, its
/// architecture must match the stored config (ConfigError otherwise).
template <class T = float>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path,
                                    const std::optional<nn::ModelConfig>& expected = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::vector<char> buf{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  detail::ByteReader r(buf, path.string());

  const char* magic = r.raw(4);
  if (!std::equal(magic, magic + 4, kCheckpointMagic)) throw CorruptBlob(path.string() + ": not a tmnet checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw UnsupportedVersion(path.string() + ": checkpoint version " + std::to_string(version) +
                             " (this build reads version " + std::to_string(kCheckpointVersion) + ")");
  const nn::ModelConfig config = nn::model_config_from_text(r.bytes());
  if (expected && !expected->same_architecture(config))
    throw ConfigError("model", "checkpoint holds a different architecture:\n" + nn::to_text(config) +
                                   "requested:\n" + nn::to_text(*expected));
  LoadedCheckpoint<T> loaded{nn::Model<T>(config), r.u64()};

  std::map<std::string, ad::Tensor<T>*> slots;
  for (const auto& [name, t] : detail::checkpoint_entries(loaded.model)) slots[name] = t;
  const std::uint32_t count = r.u32();
  if (count != slots.size())
    throw CorruptBlob(path.string() + ": " + std::to_string(count) + " entries, config implies " +
                      std::to_string(slots.size()));
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::string name = r.bytes();
    auto it = slots.find(name);
    if (it == slots.end()) throw CorruptBlob(path.string() + ": unexpected entry '" + name + "'");
    const std::uint32_t rank = r.u32();
    if (rank != it->second->rank())
      throw CorruptBlob(path.string() + ": entry '" + name + "' has rank " + std::to_string(rank));
    ad::Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    if (shape != it->second->shape())
      throw CorruptBlob(path.string() + ": entry '" + name + "' has shape " + ad::shape_string(shape) +
                        ", config implies " + ad::shape_string(it->second->shape()));
    for (auto& v : it->second->data()) v = static_cast<T>(r.f32());
    slots.erase(it);
  }
  if (!r.at_end()) throw CorruptBlob(path.string() + ": trailing bytes after last entry");
  return loaded;
}

}  // namespace tmnet::data
