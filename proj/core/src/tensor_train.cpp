// SPDX-License-Identifier: Apache-2.0
#include "ttzo/tensor_train.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <string>

#include "ttzo/rng.hpp"

namespace ttzo {
namespace {

using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

std::int64_t product(const std::vector<int>& v) {
  std::int64_t p = 1;
  for (int x : v) p *= x;
  return p;
}

// Absorb block B into block A from the right. Both blocks are row-major
// (r0, k, r1) buffers, so the product of the (r0*kA, rA1) and (rA1, kB*rB1)
// unfoldings is exactly the (r0, kA*kB, rB1) result buffer. No data is
// moved besides the GEMM itself.
TTBlock absorb(const TTBlock& a, const TTBlock& b) {
  if (a.r1 != b.r0) {
    throw ShapeMismatch("internal: rank chain broken between blocks (" +
                        std::to_string(a.r1) + " vs " + std::to_string(b.r0) +
                        ")");
  }
  TTBlock out;
  out.r0 = a.r0;
  out.k = a.k * b.k;
  out.r1 = b.r1;
  out.data.resize(static_cast<std::size_t>(out.r0) * out.k * out.r1);
  MutMap(out.data.data(), a.r0 * a.k, b.k * b.r1).noalias() =
      ConstMap(a.data.data(), a.r0 * a.k, a.r1) *
      ConstMap(b.data.data(), b.r0, b.k * b.r1);
  return out;
}

TTBlock block_of_factor(const TTLayerSpec& spec, const TTFactorsView& f, int t) {
  TTBlock b;
  b.r0 = spec.rank_before(t);
  b.k = spec.mode_dim(t);
  b.r1 = spec.rank_after(t);
  const auto& src = f.factors[static_cast<std::size_t>(t)];
  b.data.assign(src.begin(), src.end());
  return b;
}

// Work estimate used to decide whether spawning threads can possibly pay
// for itself; below this the grouped path runs inline (same result: the
// combine order is fixed regardless).
constexpr std::int64_t kAsyncThreshold = 1 << 15;

}  // namespace

void validate_spec(const TTLayerSpec& spec) {
  if (spec.in_factors.empty() || spec.out_factors.empty()) {
    throw BadParams("EmptyFactorList: spec needs at least one mode per side");
  }
  if (spec.in_factors.size() != spec.out_factors.size()) {
    throw BadParams("in/out factor lists must have equal length, got " +
                    std::to_string(spec.in_factors.size()) + " vs " +
                    std::to_string(spec.out_factors.size()));
  }
  if (spec.in_dim <= 0 || spec.out_dim <= 0) {
    throw BadParams("dense dimensions must be positive");
  }
  for (int k : spec.in_factors) {
    if (k < 1) throw BadParams("in_factors entries must be >= 1");
  }
  for (int k : spec.out_factors) {
    if (k < 1) throw BadParams("out_factors entries must be >= 1");
  }
  if (product(spec.in_factors) != spec.in_dim) {
    throw BadParams("DimensionMismatch: prod(in_factors) != in_dim (" +
                    std::to_string(product(spec.in_factors)) + " != " +
                    std::to_string(spec.in_dim) + ")");
  }
  if (product(spec.out_factors) != spec.out_dim) {
    throw BadParams("DimensionMismatch: prod(out_factors) != out_dim (" +
                    std::to_string(product(spec.out_factors)) + " != " +
                    std::to_string(spec.out_dim) + ")");
  }
  if (spec.ranks.size() != static_cast<std::size_t>(spec.num_modes()) + 1) {
    throw BadParams("ranks must have length 2*order + 1");
  }
  if (spec.ranks.front() != 1 || spec.ranks.back() != 1) {
    throw BadParams("boundary ranks must be 1");
  }
  for (int r : spec.ranks) {
    if (r < 1) throw BadParams("ranks must be >= 1");
  }
}

void validate_factors(const TTLayerSpec& spec, const TTFactorsView& factors) {
  const int modes = spec.num_modes();
  if (factors.factors.size() != static_cast<std::size_t>(modes)) {
    throw ShapeMismatch("expected " + std::to_string(modes) + " factors, got " +
                        std::to_string(factors.factors.size()));
  }
  for (int t = 0; t < modes; ++t) {
    const auto want = static_cast<std::size_t>(spec.rank_before(t)) *
                      spec.mode_dim(t) * spec.rank_after(t);
    if (factors.factors[static_cast<std::size_t>(t)].size() != want) {
      throw ShapeMismatch("factor " + std::to_string(t) + " has " +
                          std::to_string(factors.factors[t].size()) +
                          " elements, expected " + std::to_string(want));
    }
  }
}

std::int64_t param_count(const TTLayerSpec& spec) {
  std::int64_t total = 0;
  for (int t = 0; t < spec.num_modes(); ++t) {
    total += static_cast<std::int64_t>(spec.rank_before(t)) * spec.mode_dim(t) *
             spec.rank_after(t);
  }
  return total;
}

namespace {

// Greedy balanced factorization of dim into `order` factors: at each
// position pick the divisor of the remainder closest to remainder^(1/left),
// preferring >= 2 so trailing modes are not forced to 1 unless dim runs out.
std::vector<int> balanced_factorization(int dim, int order) {
  std::vector<int> out;
  int rem = dim;
  for (int pos = 0; pos < order; ++pos) {
    const int left = order - pos;
    if (left == 1) {
      out.push_back(rem);
      rem = 1;
      break;
    }
    const double target = std::pow(static_cast<double>(rem), 1.0 / left);
    int best = -1;
    double best_dist = 0;
    for (int d = 1; d <= rem; ++d) {
      if (rem % d != 0) continue;
      // The remainder must still split into left-1 factors; any divisor
      // works for that (1s are allowed), so only closeness matters.
      const double dist = std::abs(static_cast<double>(d) - target);
      const bool better =
          best < 0 || dist < best_dist - 1e-12 ||
          (std::abs(dist - best_dist) <= 1e-12 && d >= 2 && best < 2);
      if (better) {
        best = d;
        best_dist = dist;
      }
    }
    out.push_back(best);
    rem /= best;
  }
  if (product(out) != dim) {
    throw BadParams("cannot factorize " + std::to_string(dim) + " into " +
                    std::to_string(order) + " factors");
  }
  return out;
}

}  // namespace

TTLayerSpec make_spec(int in_dim, int out_dim, int order, int rank) {
  if (order < 1) throw BadParams("order must be >= 1");
  if (rank < 1) throw BadParams("rank must be >= 1");
  if (in_dim < 1 || out_dim < 1) throw BadParams("dims must be >= 1");
  TTLayerSpec spec;
  spec.in_dim = in_dim;
  spec.out_dim = out_dim;
  spec.in_factors = balanced_factorization(in_dim, order);
  spec.out_factors = balanced_factorization(out_dim, order);
  spec.ranks.assign(static_cast<std::size_t>(2 * order) + 1, rank);
  spec.ranks.front() = 1;
  spec.ranks.back() = 1;
  validate_spec(spec);
  return spec;
}

TTBlock contract_range(const TTLayerSpec& spec, const TTFactorsView& factors,
                       int lo, int hi) {
  if (lo < 0 || hi > spec.num_modes() || lo >= hi) {
    throw BadPartition("contract_range bounds [" + std::to_string(lo) + ", " +
                       std::to_string(hi) + ") out of range");
  }
  TTBlock acc = block_of_factor(spec, factors, lo);
  for (int t = lo + 1; t < hi; ++t) {
    acc = absorb(acc, block_of_factor(spec, factors, t));
  }
  return acc;
}

namespace {

RowMatrix block_to_matrix(const TTBlock& block, int rows, int cols) {
  // A (1, m*n, 1) block in row-major order IS the m x n matrix.
  return ConstMap(block.data.data(), rows, cols);
}

}  // namespace

RowMatrix materialize_sequential(const TTLayerSpec& spec,
                                 const TTFactorsView& factors) {
  validate_factors(spec, factors);
  const TTBlock full = contract_range(spec, factors, 0, spec.num_modes());
  return block_to_matrix(full, spec.in_dim, spec.out_dim);
}

RowMatrix materialize_parallel(const TTLayerSpec& spec,
                               const TTFactorsView& factors, int parts) {
  validate_factors(spec, factors);
  const int modes = spec.num_modes();
  if (parts < 2 || parts > modes) {
    throw BadPartition("parts must be in [2, " + std::to_string(modes) +
                       "], got " + std::to_string(parts));
  }
  // Contiguous near-equal groups; the first (modes % parts) groups take the
  // extra factor. For parts == 2 with equal sides this lands the boundary
  // exactly between input and output modes.
  std::vector<int> bounds(static_cast<std::size_t>(parts) + 1, 0);
  const int base = modes / parts;
  const int extra = modes % parts;
  for (int g = 0; g < parts; ++g) {
    bounds[static_cast<std::size_t>(g) + 1] =
        bounds[static_cast<std::size_t>(g)] + base + (g < extra ? 1 : 0);
  }

  std::vector<TTBlock> groups(static_cast<std::size_t>(parts));
  const std::int64_t dense = static_cast<std::int64_t>(spec.in_dim) * spec.out_dim;
  if (dense >= kAsyncThreshold) {
    std::vector<std::future<TTBlock>> futs;
    futs.reserve(static_cast<std::size_t>(parts));
    for (int g = 0; g < parts; ++g) {
      futs.push_back(std::async(std::launch::async, [&, g] {
        return contract_range(spec, factors, bounds[static_cast<std::size_t>(g)],
                              bounds[static_cast<std::size_t>(g) + 1]);
      }));
    }
    for (int g = 0; g < parts; ++g) {
      groups[static_cast<std::size_t>(g)] = futs[static_cast<std::size_t>(g)].get();
    }
  } else {
    for (int g = 0; g < parts; ++g) {
      groups[static_cast<std::size_t>(g)] = contract_range(
          spec, factors, bounds[static_cast<std::size_t>(g)],
          bounds[static_cast<std::size_t>(g) + 1]);
    }
  }

  TTBlock acc = std::move(groups.front());
  for (int g = 1; g < parts; ++g) {
    acc = absorb(acc, groups[static_cast<std::size_t>(g)]);
  }
  return block_to_matrix(acc, spec.in_dim, spec.out_dim);
}

TTFactors factor_gradients(const TTLayerSpec& spec, const TTFactorsView& factors,
                           const RowMatrix& dW) {
  validate_factors(spec, factors);
  if (dW.rows() != spec.in_dim || dW.cols() != spec.out_dim) {
    throw ShapeMismatch("dW shape does not match spec");
  }
  const int modes = spec.num_modes();
  TTFactors grads;
  grads.factors.resize(static_cast<std::size_t>(modes));
  // W is multilinear in the factors: with L = contraction of [0, t) as a
  // (K_L, r_{t-1}) matrix and R = contraction of (t, 2o) as a (r_t, K_R)
  // matrix, W unfolded as (K_L, k_t * K_R) equals L * G_t * R blockwise, so
  // dL/dG_t = L^T * unfold(dW) * R^T. Row-major buffers make each reshape a
  // reinterpretation, never a copy.
  for (int t = 0; t < modes; ++t) {
    const int r0 = spec.rank_before(t);
    const int kt = spec.mode_dim(t);
    const int r1 = spec.rank_after(t);

    std::int64_t left_k = 1;
    for (int u = 0; u < t; ++u) left_k *= spec.mode_dim(u);
    std::int64_t right_k = 1;
    for (int u = t + 1; u < modes; ++u) right_k *= spec.mode_dim(u);

    // Right projection: mid[(l, i_t), s] = sum_rho dW[l, i_t, rho] R[s, rho].
    // The (left_k * kt, r1) buffer doubles as (left_k, kt * r1) below.
    RowMatrix mid(left_k * kt, r1);
    if (t == modes - 1) {
      mid = ConstMap(dW.data(), left_k * kt, 1);  // r1 == 1, right_k == 1
    } else {
      const TTBlock right = contract_range(spec, factors, t + 1, modes);
      ConstMap rmat(right.data.data(), r1, right_k);
      ConstMap rows(dW.data(), left_k * kt, right_k);
      mid.noalias() = rows * rmat.transpose();
    }

    // Left projection: dG_t[a, (i_t, s)] = sum_l L[l, a] mid[l, (i_t, s)].
    RowMatrix g(r0, static_cast<std::int64_t>(kt) * r1);
    if (t == 0) {
      g = ConstMap(mid.data(), 1, static_cast<std::int64_t>(kt) * r1);
    } else {
      const TTBlock left = contract_range(spec, factors, 0, t);
      ConstMap lmat(left.data.data(), left_k, r0);
      ConstMap midv(mid.data(), left_k, static_cast<std::int64_t>(kt) * r1);
      g.noalias() = lmat.transpose() * midv;
    }

    auto& out = grads.factors[static_cast<std::size_t>(t)];
    out.assign(g.data(), g.data() + g.size());
  }
  return grads;
}

TTFactors init_factors(const TTLayerSpec& spec, std::uint64_t seed,
                       InitPolicy policy) {
  validate_spec(spec);
  const int modes = spec.num_modes();
  TTFactors out;
  out.factors.resize(static_cast<std::size_t>(modes));
  for (int t = 0; t < modes; ++t) {
    out.factors[static_cast<std::size_t>(t)].assign(
        static_cast<std::size_t>(spec.rank_before(t)) * spec.mode_dim(t) *
            spec.rank_after(t),
        0.0);
  }
  if (policy == InitPolicy::kZeroUp) {
    return out;
  }

  // W_ij is a sum over P = prod internal ranks products of 2o independent
  // factor entries. With every entry N(0, s^2), Var(W_ij) = P * s^(4o), so
  // s = (target / P)^(1/(4o)) gives Var(W_ij) = target = 2/(m+n).
  double log_p = 0.0;
  for (std::size_t i = 1; i + 1 < spec.ranks.size(); ++i) {
    log_p += std::log(static_cast<double>(spec.ranks[i]));
  }
  const double target =
      2.0 / (static_cast<double>(spec.in_dim) + static_cast<double>(spec.out_dim));
  const double sigma = std::exp((std::log(target) - log_p) / (2.0 * modes));

  NormalStream stream(seed);
  for (int t = 0; t < modes; ++t) {
    for (double& x : out.factors[static_cast<std::size_t>(t)]) {
      x = sigma * stream.next_normal();
    }
  }
  return out;
}

const std::vector<ShapePreset>& shape_presets() {
  static const std::vector<ShapePreset> presets = {
      {"w768x64", 768, 64, {8, 8, 12}, {4, 4, 4}},
      {"w4096x64", 4096, 64, {16, 16, 16}, {4, 4, 4}},
      {"w64x768", 64, 768, {4, 4, 4}, {12, 8, 8}},
      {"w64x4096", 64, 4096, {4, 4, 4}, {16, 16, 16}},
      {"w768x8", 768, 8, {8, 8, 12}, {2, 2, 2}},
      {"w4096x8", 4096, 8, {16, 16, 16}, {2, 2, 2}},
      {"w8x768", 8, 768, {2, 2, 2}, {12, 8, 8}},
      {"w8x4096", 8, 4096, {2, 2, 2}, {16, 16, 16}},
  };
  return presets;
}

TTLayerSpec preset_spec(const ShapePreset& preset, int rank) {
  TTLayerSpec spec;
  spec.in_dim = preset.in_dim;
  spec.out_dim = preset.out_dim;
  spec.in_factors = preset.in_factors;
  spec.out_factors = preset.out_factors;
  spec.ranks.assign(preset.in_factors.size() + preset.out_factors.size() + 1,
                    rank);
  spec.ranks.front() = 1;
  spec.ranks.back() = 1;
  validate_spec(spec);
  return spec;
}

}  // namespace ttzo
