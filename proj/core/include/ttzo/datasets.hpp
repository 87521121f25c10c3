// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ttzo/tensor_train.hpp"

namespace ttzo {

enum class TaskKind { kBlobs, kTokenPattern, kQuadraticProbe };

TaskKind task_from_string(const std::string& s);
const char* to_string(TaskKind k);

struct DatasetParams {
  int classes = 2;
  int feature_dim = 16;
  // Distance from each class mean to the origin, in units of noise_sigma.
  // Means sit on mutually orthogonal directions, so any two are at least
  // sqrt(2) * separation * noise_sigma apart.
  double separation = 4.0;
  double noise_sigma = 1.0;
  int seq_len = 16;
  int vocab = 32;
};

struct Dataset {
  TaskKind kind = TaskKind::kBlobs;
  DatasetParams params;
  RowMatrix features;              // blobs: D x feature_dim (empty otherwise)
  std::vector<std::int32_t> tokens;  // token task: D * seq_len, row-major
  std::vector<int> labels;         // length D

  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
  std::span<const std::int32_t> sequence(std::int64_t i) const {
    return {tokens.data() + i * params.seq_len,
            static_cast<std::size_t>(params.seq_len)};
  }
};

// Deterministic synthetic data.
//   kBlobs: per-class Gaussian clusters; labels round-robin so every class
//     is populated for any D >= classes.
//   kTokenPattern: uniform filler tokens; the label says whether the two
//     marker tokens BOTH occur in the sequence. Negative samples plant one
//     marker or none (chosen evenly), so single-token presence carries no
//     signal.
//   kQuadraticProbe: placeholder samples; the probe objective ignores data.
// Throws BadParams when D < classes, D < 2, or dims are unusable.
Dataset make_synthetic(TaskKind kind, std::int64_t d_samples, std::uint64_t seed,
                       const DatasetParams& params);

// One sample per line: features (or token ids) then the label, whitespace
// separated; a single '#'-prefixed header line carries the task metadata.
// Floats are written with enough digits to round-trip bit-exactly.
void export_dataset(const Dataset& ds, const std::string& path);
Dataset import_dataset(const std::string& path);

// Marker tokens for the token task (never used as filler).
inline constexpr std::int32_t kMarkerA = 1;
inline constexpr std::int32_t kMarkerB = 2;

}  // namespace ttzo
