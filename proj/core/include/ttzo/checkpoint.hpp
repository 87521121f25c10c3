// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ttzo/registry.hpp"

namespace ttzo {

// Binary checkpoint: registry manifest + the flat trainable vector, plus
// the (run seed, step) pair needed to resume the derived random streams.
// All integers and float bit patterns are little-endian on disk; round-trip
// is bit-exact.
struct Checkpoint {
  std::uint64_t run_seed = 0;
  std::int64_t step = 0;
  std::vector<ParameterRegistry::Entry> manifest;
  std::vector<double> w;
};

void save_checkpoint(const std::string& path, const ParameterRegistry& reg,
                     std::uint64_t run_seed, std::int64_t step);

Checkpoint load_checkpoint(const std::string& path);

// Writes the payload into a registry whose manifest matches (names, roles,
// offsets, lengths); throws ShapeMismatch otherwise.
void apply_checkpoint(ParameterRegistry& reg, const Checkpoint& ck);

}  // namespace ttzo
