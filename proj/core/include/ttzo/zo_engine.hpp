// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ttzo/metrics.hpp"
#include "ttzo/models.hpp"
#include "ttzo/registry.hpp"
#include "ttzo/rng.hpp"

namespace ttzo {

// ---------------------------------------------------------------------------
// Forward-pass-only training: two-point randomized gradient estimation with
// seed-replayed in-place perturbations, an epoch-adaptive query count, and
// plain SGD.
//
// Memory discipline: the estimator keeps one O(d) gradient accumulator and
// streams every perturbation direction z from its seed in O(1) space — z is
// never stored, for any query count.
// ---------------------------------------------------------------------------

struct RGEConfig {
  double epsilon = 1e-3;  // perturbation scale
  double eta = 1e-2;      // learning rate
  // Evaluate queries on independent model copies in parallel instead of the
  // sequential in-place reference path. Same estimate up to floating-point
  // summation order.
  bool parallel_queries = false;
};

struct QuerySchedule {
  enum class Mode { kAdaptive, kFixed };
  Mode mode = Mode::kAdaptive;
  double alpha = 0.85;
  double beta = 0.45;
  int q_max = 20;
  int fixed_q = 1;

  // Adaptive: clamp(ceil(alpha * e^beta), 1, q_max). The ceiling keeps the
  // count integral and growing; the lower clamp keeps epoch 0 defined.
  int query_number(std::int64_t epoch) const;
  void validate() const;  // throws BadParams on out-of-range constants
};

// epoch(k) = floor(k / ceil(D / B)) for 1-based step k.
std::int64_t epoch_of_step(std::int64_t k, std::int64_t dataset_size,
                           std::int64_t batch_size);

// Epoch-wise shuffled batches without replacement. Each pass over the data
// reshuffles with a seed derived from (run seed, pass index); the tail
// batch may be short when B does not divide D.
class BatchSampler {
 public:
  BatchSampler(std::int64_t dataset_size, std::int64_t batch_size,
               const SeedDeriver& seeds);
  // Batch for 1-based step k. Stable: the same k always yields the same
  // indices for a given run seed.
  std::vector<int> batch_for_step(std::int64_t k);
  std::int64_t steps_per_pass() const { return steps_per_pass_; }

 private:
  void shuffle_pass(std::int64_t pass);
  std::int64_t d_, b_, steps_per_pass_;
  SeedDeriver seeds_;
  std::int64_t current_pass_ = -1;
  std::vector<int> order_;
};

// w += coeff * z, z streamed from `seed`. Replaying the same seed with
// coefficients (+e, -2e, +e) restores w up to rounding because each element
// sees the exact same product magnitude e*z_i three times.
void perturb_in_place(ParameterRegistry& reg, std::uint64_t seed, double coeff);

struct RgeResult {
  std::vector<double> grad;  // averaged two-point estimate
  double mean_loss = 0.0;    // mean of (l+ + l-)/2 over queries
};

// Algorithm: for each query q — perturb +eps from seed s_q, evaluate l+;
// perturb -2*eps (same seed), evaluate l-; then replay the seed once more,
// restoring w (+eps) while accumulating ((l+ - l-) / 2 eps) * z into the
// gradient in the same pass. Divide by Q at the end.
//
// On entry w must be unperturbed; on exit w equals entry up to replay
// drift. If a loss evaluation throws, w is left mid-perturbation — callers
// treat that as run-fatal (divergence).
RgeResult rge_estimate(Objective& model, const Dataset& data,
                       std::span<const int> batch, const RGEConfig& cfg, int q_count,
                       std::span<const std::uint64_t> seeds);

// w -= eta * grad.
void sgd_update(ParameterRegistry& reg, std::span<const double> grad, double eta);

struct TrainOptions {
  std::int64_t steps = 2000;       // K
  std::int64_t batch_size = 16;    // B
  std::int64_t eval_every = 0;     // 0 = only at the final step
  double eval_threshold = 0.0;     // 0 = no threshold tracking
  std::uint64_t run_seed = 7;
  QuerySchedule schedule;
  RGEConfig rge;
  // Divergence rule: halt when a step's train loss exceeds
  // loss_blowup_factor * initial loss for divergence_patience consecutive
  // steps, or on the first non-finite loss.
  double loss_blowup_factor = 1e3;
  int divergence_patience = 50;
};

struct TrainResult {
  bool diverged = false;
  std::int64_t steps_run = 0;
  double initial_loss = 0.0;
  double final_train_loss = 0.0;
  std::optional<double> best_eval;
  // First step whose eval loss <= eval_threshold (eval cadence applies).
  std::optional<std::int64_t> steps_to_threshold;
};

// Runs the optimizer loop: per step — recompute Q at epoch boundaries,
// draw the batch, estimate, update, record metrics. The full trace is a
// pure function of (run seed, options, build); wall time is reported but
// never influences control flow.
TrainResult train(Objective& model, const Dataset& data, const TrainOptions& opt,
                  MetricsSink& sink);

struct VarianceRow {
  int q_count = 0;
  double variance = 0.0;   // E ||g_Q - g_ref||^2
  double ci_half = 0.0;    // half-width of a 95% CI on that mean
};

// Monte-Carlo estimate of the estimator's mean squared deviation from the
// reference gradient (analytic when available, else the grand mean across
// trials) for each query count. Trials use derived seeds so rows are
// reproducible and mutually independent.
std::vector<VarianceRow> variance_probe(Objective& model, const Dataset& data,
                                        std::span<const int> batch,
                                        const RGEConfig& cfg,
                                        std::span<const int> q_list, int trials,
                                        std::uint64_t probe_seed);

}  // namespace ttzo
