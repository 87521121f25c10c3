// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace ttzo {

// One training step. `elapsed_ms` is wall time and therefore the only field
// that is not a pure function of (seed, config, build).
struct MetricsRecord {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  int query_count = 0;
  double train_loss = 0.0;
  std::optional<double> eval_loss;
  double elapsed_ms = 0.0;
};

// Serialized forms. The deterministic part goes to the metrics stream, wall
// time to a separate timings stream, keeping the metrics stream byte-stable
// across identical runs.
std::string metrics_line(const MetricsRecord& r);
std::string timing_line(const MetricsRecord& r);

class MetricsSink {
 public:
  virtual ~MetricsSink() = default;
  // One header before the first step; `config_json` is the resolved run
  // configuration as a single JSON object line.
  virtual void header(const std::string& config_json) = 0;
  virtual void step(const MetricsRecord& r) = 0;
  virtual void flush() = 0;
};

// Appends metrics lines to <dir>/metrics.jsonl and timing lines to
// <dir>/timings.jsonl. Files are opened in append mode and flushed at epoch
// boundaries by the trainer, so a crashed run leaves a parseable prefix.
class JsonlMetricsWriter final : public MetricsSink {
 public:
  explicit JsonlMetricsWriter(const std::string& dir);
  void header(const std::string& config_json) override;
  void step(const MetricsRecord& r) override;
  void flush() override;

 private:
  std::ofstream metrics_;
  std::ofstream timings_;
};

// Keeps the deterministic lines in memory; used by tests and cmd_compare.
class MemoryMetricsSink final : public MetricsSink {
 public:
  void header(const std::string& config_json) override;
  void step(const MetricsRecord& r) override;
  void flush() override {}

  const std::vector<std::string>& lines() const { return lines_; }
  const std::vector<MetricsRecord>& records() const { return records_; }

 private:
  std::vector<std::string> lines_;
  std::vector<MetricsRecord> records_;
};

// No-op sink for probes that do not need a trace.
class NullMetricsSink final : public MetricsSink {
 public:
  void header(const std::string&) override {}
  void step(const MetricsRecord&) override {}
  void flush() override {}
};

}  // namespace ttzo
