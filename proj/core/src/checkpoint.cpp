// SPDX-License-Identifier: Apache-2.0
#include "ttzo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace ttzo {
namespace {

constexpr char kMagic[8] = {'T', 'T', 'Z', 'O', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw IoError("truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw IoError("truncated checkpoint");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParameterRegistry& reg,
                     std::uint64_t run_seed, std::int64_t step) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  put_u64(out, run_seed);
  put_u64(out, static_cast<std::uint64_t>(step));
  put_u64(out, reg.entries().size());
  for (const auto& e : reg.entries()) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_u32(out, e.role == Role::kTrainable ? 1 : 0);
    put_u64(out, e.offset);
    put_u64(out, e.length);
  }
  const auto w = reg.trainable();
  put_u64(out, w.size());
  for (double x : w) put_u64(out, std::bit_cast<std::uint64_t>(x));
  if (!out) throw IoError("short write to '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw IoError("not a checkpoint file: '" + path + "'");
  }
  if (get_u32(in) != kVersion) throw IoError("unsupported checkpoint version");
  Checkpoint ck;
  ck.run_seed = get_u64(in);
  ck.step = static_cast<std::int64_t>(get_u64(in));
  const std::uint64_t n_entries = get_u64(in);
  ck.manifest.reserve(n_entries);
  for (std::uint64_t i = 0; i < n_entries; ++i) {
    ParameterRegistry::Entry e;
    const std::uint32_t name_len = get_u32(in);
    e.name.resize(name_len);
    in.read(e.name.data(), name_len);
    if (!in) throw IoError("truncated checkpoint");
    e.role = get_u32(in) == 1 ? Role::kTrainable : Role::kFrozen;
    e.offset = get_u64(in);
    e.length = get_u64(in);
    ck.manifest.push_back(std::move(e));
  }
  const std::uint64_t d = get_u64(in);
  ck.w.resize(d);
  for (std::uint64_t i = 0; i < d; ++i) {
    ck.w[i] = std::bit_cast<double>(get_u64(in));
  }
  return ck;
}

void apply_checkpoint(ParameterRegistry& reg, const Checkpoint& ck) {
  const auto& entries = reg.entries();
  if (entries.size() != ck.manifest.size()) {
    throw ShapeMismatch("checkpoint manifest size differs from registry");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& a = entries[i];
    const auto& b = ck.manifest[i];
    if (a.name != b.name || a.role != b.role || a.offset != b.offset ||
        a.length != b.length) {
      throw ShapeMismatch("checkpoint manifest mismatch at entry '" + a.name +
                          "'");
    }
  }
  if (ck.w.size() != reg.dim()) {
    throw ShapeMismatch("checkpoint payload length differs from d");
  }
  reg.write_flat(ck.w);
}

}  // namespace ttzo
