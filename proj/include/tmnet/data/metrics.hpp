#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "tmnet/errors.hpp"

namespace tmnet::data {

inline constexpr const char* kMetricsHeader = "epoch,split,loss,accuracy,lr,wall_s";

struct MetricsRow {
  int epoch = 0;
  std::string split;  // "train" or "test"
  double loss = 0.0;
  double accuracy = 0.0;
  double lr = 0.0;
  double wall_s = 0.0;
};

inline std::string format_metrics_row(const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%s,%.6f,%.6f,%.6f,%.6f", r.epoch, r.split.c_str(), r.loss, r.accuracy, r.lr,
                r.wall_s);
  return buf;
}

/// Appends one CSV row, writing the header first if the file is new or empty.
inline void append_metrics(const std::filesystem::path& path, const MetricsRow& row) {
  if (row.split != "train" && row.split != "test") throw InvalidArgument("metrics split must be train or test");
  if (!(row.accuracy >= 0.0 && row.accuracy <= 1.0)) throw InvalidArgument("metrics accuracy outside [0, 1]");
  if (!(row.loss >= 0.0)) throw InvalidArgument("metrics loss must be non-negative");
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot open metrics file " + path.string());
  if (fresh) out << kMetricsHeader << '\n';
  out << format_metrics_row(row) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace tmnet::data
