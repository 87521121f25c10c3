// SPDX-License-Identifier: Apache-2.0
#include "ttzo/metrics.hpp"

#include <cstdio>

#include "ttzo/errors.hpp"

namespace ttzo {

namespace {

// Shortest-that-round-trips is not needed; 17 significant digits always
// round-trip doubles and keep the byte layout trivially predictable.
std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::string metrics_line(const MetricsRecord& r) {
  std::string line = "{\"k\":" + std::to_string(r.step) +
                     ",\"epoch\":" + std::to_string(r.epoch) +
                     ",\"Q\":" + std::to_string(r.query_count) +
                     ",\"loss\":" + fmt_double(r.train_loss);
  if (r.eval_loss) {
    line += ",\"eval_loss\":" + fmt_double(*r.eval_loss);
  }
  line += "}";
  return line;
}

std::string timing_line(const MetricsRecord& r) {
  return "{\"k\":" + std::to_string(r.step) +
         ",\"elapsed_ms\":" + fmt_double(r.elapsed_ms) + "}";
}

JsonlMetricsWriter::JsonlMetricsWriter(const std::string& dir)
    : metrics_(dir + "/metrics.jsonl", std::ios::app),
      timings_(dir + "/timings.jsonl", std::ios::app) {
  if (!metrics_ || !timings_) {
    throw IoError("cannot open metrics streams under '" + dir + "'");
  }
}

void JsonlMetricsWriter::header(const std::string& config_json) {
  metrics_ << "{\"type\":\"header\",\"config\":" << config_json << "}\n";
}

void JsonlMetricsWriter::step(const MetricsRecord& r) {
  metrics_ << metrics_line(r) << "\n";
  timings_ << timing_line(r) << "\n";
}

void JsonlMetricsWriter::flush() {
  metrics_.flush();
  timings_.flush();
}

void MemoryMetricsSink::header(const std::string& config_json) {
  lines_.push_back("{\"type\":\"header\",\"config\":" + config_json + "}");
}

void MemoryMetricsSink::step(const MetricsRecord& r) {
  lines_.push_back(metrics_line(r));
  records_.push_back(r);
}

}  // namespace ttzo
