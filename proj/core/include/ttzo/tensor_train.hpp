// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "ttzo/errors.hpp"

namespace ttzo {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Tensor-train parameterization of a dense m x n weight matrix.
//
// The matrix is reshaped into a 2o-way tensor with input modes k_1..k_o
// (prod = m) followed by output modes k_{o+1}..k_{2o} (prod = n), and written
// as a chain of factors G_t of shape (r_{t-1}, k_t, r_t) with boundary ranks
// r_0 = r_{2o} = 1:
//
//   W[i_1..i_o, j_1..j_o] = sum over ranks of
//       G_1[., i_1, .] * ... * G_o[., i_o, .] * G_{o+1}[., j_1, .] * ...
//
// Layout contract (everything else in the project builds on it):
//   * all reshapes are row-major: the LAST index varies fastest;
//   * a factor (r, k, r') is stored as one contiguous row-major buffer of
//     length r*k*r', which doubles as the (r, k*r') and (r*k, r') unfoldings
//     without any data movement;
//   * the flat index of W element (row i, col j) is i*n + j, with
//     i = ((i_1*k_2 + i_2)*k_3 + ...) and j likewise.
//
// Thanks to that, a left-to-right contraction is a chain of plain matrix
// products: the running block (r0, K, r1) times the next factor unfolded as
// (r1, k*r2) yields (r0, K*k, r2) in the correct row-major order, and the
// final block (1, m*n, 1) reinterprets directly as the m x n matrix.
// ---------------------------------------------------------------------------

struct TTLayerSpec {
  int in_dim = 0;                 // m
  int out_dim = 0;                // n
  std::vector<int> in_factors;    // k_1..k_o, product == in_dim
  std::vector<int> out_factors;   // k_{o+1}..k_{2o}, product == out_dim
  std::vector<int> ranks;         // r_0..r_{2o}, boundaries == 1

  int order() const { return static_cast<int>(in_factors.size()); }
  int num_modes() const { return 2 * order(); }
  // Mode dimension k_t for t in [0, 2o).
  int mode_dim(int t) const {
    const int o = order();
    return t < o ? in_factors[static_cast<std::size_t>(t)]
                 : out_factors[static_cast<std::size_t>(t - o)];
  }
  int rank_before(int t) const { return ranks[static_cast<std::size_t>(t)]; }
  int rank_after(int t) const { return ranks[static_cast<std::size_t>(t) + 1]; }
};

// Owning factor storage; factors[t] has length r_{t-1} * k_t * r_t.
struct TTFactors {
  std::vector<std::vector<double>> factors;
};

// Non-owning view used on the hot path (the registry owns the numbers).
struct TTFactorsView {
  std::vector<std::span<const double>> factors;
};

inline TTFactorsView view_of(const TTFactors& f) {
  TTFactorsView v;
  v.factors.assign(f.factors.begin(), f.factors.end());
  return v;
}

// Throws BadParams unless: both factor lists are non-empty and of equal
// length o; every mode dim and every rank is >= 1; mode products equal the
// dense dims; ranks has length 2o+1 with r_0 = r_{2o} = 1.
void validate_spec(const TTLayerSpec& spec);

// Throws ShapeMismatch unless factors match spec (count and per-factor
// length). Assumes validate_spec passed.
void validate_factors(const TTLayerSpec& spec, const TTFactorsView& factors);

// Total number of parameters: sum_t r_{t-1} * k_t * r_t.
std::int64_t param_count(const TTLayerSpec& spec);

// Builds a spec for an m x n layer with `order` input and `order` output
// modes and uniform internal rank `rank`. Each dimension is factorized
// greedily: at every position take the divisor of the remaining dimension
// closest to its (remaining modes)-th root, preferring factors >= 2.
// Throws BadParams if a dimension cannot be split into `order` factors.
TTLayerSpec make_spec(int in_dim, int out_dim, int order, int rank);

// Partial contraction of factors [lo, hi) into one block of shape
// (r_lo, prod k_t, r_hi), row-major. Requires 0 <= lo < hi <= 2o.
struct TTBlock {
  int r0 = 1;
  std::int64_t k = 1;  // product of the absorbed mode dims
  int r1 = 1;
  std::vector<double> data;  // row-major (r0, k, r1)
};
TTBlock contract_range(const TTLayerSpec& spec, const TTFactorsView& factors,
                       int lo, int hi);

// Full left-to-right contraction to the dense m x n matrix.
RowMatrix materialize_sequential(const TTLayerSpec& spec,
                                 const TTFactorsView& factors);

// Same result, computed by splitting the chain into `parts` contiguous
// groups of near-equal length, contracting each group independently, then
// folding the group blocks together left to right. parts = 2 puts the split
// on the input/output boundary. Groups run concurrently when the work is
// large enough to pay for the threads; the combine order is fixed either
// way, so the result does not depend on scheduling. Throws BadPartition
// unless 2 <= parts <= 2o.
RowMatrix materialize_parallel(const TTLayerSpec& spec,
                               const TTFactorsView& factors, int parts);

// Gradients of a scalar objective with respect to every factor, given the
// gradient dL/dW of the materialized matrix. Uses the multilinearity of the
// chain: for factor t,
//   dL/dG_t = L_t^T * unfold(dW) * R_t^T
// where L_t / R_t are the contractions of everything left / right of t.
// Exact up to rounding; used by analytic-gradient oracles, not by training.
TTFactors factor_gradients(const TTLayerSpec& spec, const TTFactorsView& factors,
                           const RowMatrix& dW);

enum class InitPolicy {
  kBalancedGaussian,  // every factor i.i.d. N(0, sigma^2), sigma chosen so
                      // that Var(W_ij) ~= 2 / (in_dim + out_dim)
  kZeroUp,            // all factors zero (adapter up-projections start as
                      // the zero map, so the adapter begins at identity)
};

// Draws factors with the stream seeded by `seed`. Sample order is factor 0
// first, each factor filled in row-major element order.
TTFactors init_factors(const TTLayerSpec& spec, std::uint64_t seed,
                       InitPolicy policy);

// Named dense shapes used by the contraction benchmark and the self-checks:
// down/up projections of bottleneck adapters at hidden sizes 768 and 4096,
// three modes per side each.
struct ShapePreset {
  const char* name;
  int in_dim;
  int out_dim;
  std::vector<int> in_factors;
  std::vector<int> out_factors;
};
const std::vector<ShapePreset>& shape_presets();

// Spec for a preset at uniform internal rank `rank`.
TTLayerSpec preset_spec(const ShapePreset& preset, int rank);

}  // namespace ttzo
