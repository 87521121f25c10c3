// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ttzo/errors.hpp"

namespace ttzo {

enum class Role { kFrozen, kTrainable };

// Flat, addressable storage for model parameters. Trainable entries share
// one contiguous buffer w in registration order — the w of the optimizer —
// and frozen entries live in a second buffer that nothing downstream of
// construction is allowed to touch (checksummed to prove it).
//
// Lifecycle: register entries, seal(), then initialize values through the
// mutable views. Views are only handed out after sealing because the
// buffers may reallocate while entries are still being added.
class ParameterRegistry {
 public:
  struct Entry {
    std::string name;
    Role role;
    std::size_t offset;  // into the buffer of its role
    std::size_t length;
  };

  // Returns the entry id used to fetch views later.
  std::size_t add(std::string name, Role role, std::size_t length);

  void seal();
  bool sealed() const { return sealed_; }

  std::size_t dim() const { return trainable_.size(); }  // d
  std::size_t frozen_size() const { return frozen_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  std::span<double> view(std::size_t id);
  std::span<const double> view(std::size_t id) const;

  // Whole trainable vector w.
  std::span<double> trainable();
  std::span<const double> trainable() const;

  std::vector<double> read_flat() const;
  void write_flat(std::span<const double> w);

  // Writes `values` into w at [offset, offset + size); bounds-checked
  // against d but not against entry boundaries (callers use entry views for
  // that).
  void write_segment(std::size_t offset, std::span<const double> values);

  std::uint64_t frozen_checksum() const;
  std::uint64_t trainable_checksum() const;

 private:
  void require_sealed(const char* op) const;
  std::vector<Entry> entries_;
  std::vector<double> trainable_;
  std::vector<double> frozen_;
  bool sealed_ = false;
};

}  // namespace ttzo
