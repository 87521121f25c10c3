// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ttzo/datasets.hpp"
#include "ttzo/tensor_train.hpp"

namespace ttzo {

// Reference contraction: literal sum over every internal rank tuple, one
// product of 2o factor entries per tuple per element. Exponentially slower
// than the chained-GEMM path and entirely independent of it; usable when
// the total tuple count is small (<= ~1e5).
RowMatrix reference_materialize(const TTLayerSpec& spec,
                                const TTFactorsView& factors);

// Canonical content hash of a dataset (features, tokens, labels).
std::uint64_t dataset_checksum(const Dataset& ds);

struct CheckResult {
  std::string module;  // library module the invariant belongs to
  std::string id;      // stable short id, e.g. "TT-1"
  std::string name;
  bool pass = false;
  std::string detail;  // numbers behind the verdict, or the failure reason
};

// Pinned expected values for the frozen random-stream contract and the
// seeded dataset generators. The builtin set is compiled in; a replacement
// can be loaded from disk to audit a build (or to prove the suite notices
// corruption).
struct GoldenSet {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> mix64;  // input, output
  std::vector<std::pair<std::uint64_t, std::vector<double>>> normals;
  std::vector<std::pair<std::string, std::uint64_t>> dataset_checksums;
};

const GoldenSet& builtin_golden();

// Runs every library-level invariant check (the CLI layers its own checks
// on top). Deterministic; total runtime a few seconds.
std::vector<CheckResult> run_all_checks(const GoldenSet& golden);

}  // namespace ttzo
