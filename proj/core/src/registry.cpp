// SPDX-License-Identifier: Apache-2.0
#include "ttzo/registry.hpp"

#include <algorithm>

#include "ttzo/rng.hpp"

namespace ttzo {

std::size_t ParameterRegistry::add(std::string name, Role role,
                                   std::size_t length) {
  if (sealed_) throw Error("registry is sealed; cannot add entries");
  if (length == 0) throw LengthMismatch("entry '" + name + "' has length 0");
  auto& buf = role == Role::kTrainable ? trainable_ : frozen_;
  Entry e{std::move(name), role, buf.size(), length};
  buf.resize(buf.size() + length, 0.0);
  entries_.push_back(std::move(e));
  return entries_.size() - 1;
}

void ParameterRegistry::seal() { sealed_ = true; }

void ParameterRegistry::require_sealed(const char* op) const {
  if (!sealed_) {
    throw Error(std::string("registry must be sealed before ") + op);
  }
}

std::span<double> ParameterRegistry::view(std::size_t id) {
  require_sealed("view");
  const Entry& e = entries_.at(id);
  auto& buf = e.role == Role::kTrainable ? trainable_ : frozen_;
  return {buf.data() + e.offset, e.length};
}

std::span<const double> ParameterRegistry::view(std::size_t id) const {
  require_sealed("view");
  const Entry& e = entries_.at(id);
  const auto& buf = e.role == Role::kTrainable ? trainable_ : frozen_;
  return {buf.data() + e.offset, e.length};
}

std::span<double> ParameterRegistry::trainable() {
  require_sealed("trainable view");
  return {trainable_.data(), trainable_.size()};
}

std::span<const double> ParameterRegistry::trainable() const {
  require_sealed("trainable view");
  return {trainable_.data(), trainable_.size()};
}

std::vector<double> ParameterRegistry::read_flat() const {
  require_sealed("read_flat");
  return trainable_;
}

void ParameterRegistry::write_flat(std::span<const double> w) {
  require_sealed("write_flat");
  if (w.size() != trainable_.size()) {
    throw LengthMismatch("write_flat length " + std::to_string(w.size()) +
                         " != d = " + std::to_string(trainable_.size()));
  }
  std::copy(w.begin(), w.end(), trainable_.begin());
}

void ParameterRegistry::write_segment(std::size_t offset,
                                      std::span<const double> values) {
  require_sealed("write_segment");
  if (offset + values.size() > trainable_.size()) {
    throw LengthMismatch("segment write past end of w");
  }
  std::copy(values.begin(), values.end(), trainable_.begin() + offset);
}

std::uint64_t ParameterRegistry::frozen_checksum() const {
  return fnv1a64(reinterpret_cast<const unsigned char*>(frozen_.data()),
                 frozen_.size() * sizeof(double));
}

std::uint64_t ParameterRegistry::trainable_checksum() const {
  return fnv1a64(reinterpret_cast<const unsigned char*>(trainable_.data()),
                 trainable_.size() * sizeof(double));
}

}  // namespace ttzo
