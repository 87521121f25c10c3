// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

namespace ttzo {

// ---------------------------------------------------------------------------
// Deterministic random streams.
//
// The zeroth-order estimator never stores a perturbation direction: it
// replays the generator from a recorded seed, three times per query. That
// only works if the mapping seed -> sample sequence is frozen, bit for bit,
// across the whole codebase and across runs. We therefore do not use
// std::normal_distribution (its algorithm is unspecified and differs between
// standard libraries); the generator below is part of the project's
// compatibility contract and must never change. Golden vectors for it are
// embedded in the self-check registry.
// ---------------------------------------------------------------------------

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// splitmix64 finalizer (Steele, Lea & Flood; public domain reference
// implementation). Also used as the seed-mixing primitive.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Derives per-use seeds from one run seed so that every (step, query) pair
// and every auxiliary stream gets a distinct, reproducible generator state.
// Perturbation seeds use step index k >= 1; auxiliary streams use the k = 0
// row, so the two domains cannot collide.
struct SeedDeriver {
  std::uint64_t run_seed = 0;

  constexpr std::uint64_t derive(std::uint64_t a, std::uint64_t b) const noexcept {
    std::uint64_t h = mix64(run_seed ^ 0x9E3779B97F4A7C15ULL);
    h = mix64(h ^ (a * 0xD1B54A32D192ED03ULL));
    return mix64(h ^ (b * 0x8CB92BA72F3D8DD7ULL));
  }

  // Seed s_q for query q of training step k (both 1-based).
  constexpr std::uint64_t perturb_seed(std::uint64_t k, std::uint64_t q) const noexcept {
    return derive(k, q);
  }

  enum class Stream : std::uint64_t {
    kDataset = 1,
    kBackbone = 2,
    kAdapterInit = 3,
    kShuffle = 4,
    kProbe = 5,
  };

  constexpr std::uint64_t stream_seed(Stream s, std::uint64_t index = 0) const noexcept {
    return derive(0, (static_cast<std::uint64_t>(s) << 48) + index);
  }
};

// Stateful stream of standard-normal samples: splitmix64 -> uniform (0,1]
// -> Box-Muller pair. O(1) memory. The exact operation order (u1 drawn
// before u2, cosine branch returned first) is load-bearing for replay.
class NormalStream {
 public:
  explicit constexpr NormalStream(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next_u64() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
  }

  // Uniform on (0,1]; the +1 on the 53-bit mantissa excludes 0 so that
  // log(u1) below is always finite.
  constexpr double next_unit() noexcept {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double next_normal() noexcept {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = kTwoPi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// FNV-1a over raw bytes; used for content checksums in tests and self-checks.
constexpr std::uint64_t fnv1a64(const unsigned char* data, std::size_t n,
                                std::uint64_t h = 0xCBF29CE484222325ULL) noexcept {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace ttzo
