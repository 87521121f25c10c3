// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "ttzo/adapters.hpp"
#include "ttzo/datasets.hpp"
#include "ttzo/registry.hpp"

namespace ttzo {

// A differentiable-free objective: loss evaluations over (params, batch).
// Implementations must keep loss() pure — same parameters, batch and build
// give the same bits, and nothing is mutated. clone() produces a deep copy
// (own registry) so perturbed evaluations can run on independent snapshots.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual ParameterRegistry& params() = 0;
  virtual const ParameterRegistry& params() const = 0;
  // Mean loss over the batch (indices into the dataset). Throws
  // NonFiniteLoss when the result is NaN or infinite.
  virtual double loss(const Dataset& data, std::span<const int> batch) const = 0;
  virtual std::unique_ptr<Objective> clone() const = 0;

  virtual bool has_analytic_gradient() const { return false; }
  virtual std::vector<double> analytic_gradient(
      const Dataset& data, std::span<const int> batch) const;
};

// ---------------------------------------------------------------------------
// Quadratic probe: loss(w) = 0.5 * ||w||^2 with gradient exactly w.
// The cheapest objective with a closed-form gradient; used to validate the
// estimator's unbiasedness and variance laws.
// ---------------------------------------------------------------------------
class QuadraticProbe final : public Objective {
 public:
  // norm > 0 rescales the seeded Gaussian init to ||w|| = norm; norm = 0
  // starts at the origin.
  QuadraticProbe(int dim, std::uint64_t seed, double norm = 1.0);

  ParameterRegistry& params() override { return reg_; }
  const ParameterRegistry& params() const override { return reg_; }
  double loss(const Dataset&, std::span<const int>) const override;
  std::unique_ptr<Objective> clone() const override {
    return std::make_unique<QuadraticProbe>(*this);
  }
  bool has_analytic_gradient() const override { return true; }
  std::vector<double> analytic_gradient(const Dataset&,
                                        std::span<const int>) const override;

 private:
  ParameterRegistry reg_;
  std::size_t w_id_ = 0;
};

// ---------------------------------------------------------------------------
// MLP over feature vectors: frozen random backbone, a tensorized adapter
// after each hidden activation, frozen small-scale head. Cross-entropy loss.
// ---------------------------------------------------------------------------
struct MlpConfig {
  int feature_dim = 16;
  int classes = 2;
  std::vector<int> hidden = {32};
  Nonlinearity activation = Nonlinearity::kRelu;
  AdapterConfig adapter;
  // Head weights are N(0, (head_scale / sqrt(h))^2): with identity-at-init
  // adapters the untrained logits stay near zero and the starting loss sits
  // near ln(num classes).
  double head_scale = 0.1;
};

class MlpModel final : public Objective {
 public:
  MlpModel(const MlpConfig& cfg, std::uint64_t seed);

  ParameterRegistry& params() override { return reg_; }
  const ParameterRegistry& params() const override { return reg_; }
  double loss(const Dataset& data, std::span<const int> batch) const override;
  std::unique_ptr<Objective> clone() const override {
    return std::make_unique<MlpModel>(*this);
  }
  bool has_analytic_gradient() const override { return true; }
  std::vector<double> analytic_gradient(const Dataset& data,
                                        std::span<const int> batch) const override;

  const std::vector<TensorizedAdapter>& adapters() const { return adapters_; }

 private:
  struct Dense {
    std::size_t w_id = 0;  // (out, in) row-major, frozen
    std::size_t b_id = 0;
    int in = 0, out = 0;
  };
  RowMatrix gather(const Dataset& data, std::span<const int> batch) const;
  RowMatrix dense_forward(const Dense& d, const RowMatrix& x) const;

  MlpConfig cfg_;
  ParameterRegistry reg_;
  std::vector<Dense> layers_;
  std::vector<TensorizedAdapter> adapters_;  // one per hidden layer
  Dense head_;
};

// ---------------------------------------------------------------------------
// Tiny pre-norm transformer encoder over token sequences, frozen except for
// the adapters placed after the attention output and after the feed-forward
// output of every layer. Mean-pooled final state feeds a frozen classifier
// head. Layer norms are frozen by construction.
// ---------------------------------------------------------------------------
struct TransformerConfig {
  int vocab = 32;
  int seq_len = 16;
  int width = 32;
  int heads = 2;
  int layers = 2;
  int ffn_mult = 2;
  int classes = 2;
  AdapterConfig adapter;
  double head_scale = 0.1;
};

class TinyTransformer final : public Objective {
 public:
  TinyTransformer(const TransformerConfig& cfg, std::uint64_t seed);

  ParameterRegistry& params() override { return reg_; }
  const ParameterRegistry& params() const override { return reg_; }
  double loss(const Dataset& data, std::span<const int> batch) const override;
  std::unique_ptr<Objective> clone() const override {
    return std::make_unique<TinyTransformer>(*this);
  }

 private:
  struct LayerIds {
    std::size_t ln1_g, ln1_b, wq, wk, wv, wo;
    std::size_t ln2_g, ln2_b, ff1_w, ff1_b, ff2_w, ff2_b;
  };
  RowMatrix encode(const Dataset& data, int sample) const;  // seq x width
  RowMatrix layer_norm(const RowMatrix& x, std::size_t g_id,
                       std::size_t b_id) const;
  RowMatrix logits_of(const Dataset& data, int sample) const;

  TransformerConfig cfg_;
  ParameterRegistry reg_;
  std::size_t tok_emb_ = 0, pos_emb_ = 0;
  std::vector<LayerIds> layers_;
  std::vector<TensorizedAdapter> adapters_;  // 2 per layer: attn, ffn
  std::size_t final_ln_g_ = 0, final_ln_b_ = 0;
  std::size_t head_w_ = 0, head_b_ = 0;
};

// Mean cross-entropy of logits (batch x classes) against labels; log-sum-exp
// stabilized. Throws NonFiniteLoss on a non-finite result.
double cross_entropy(const RowMatrix& logits, std::span<const int> labels);

// Loss over the whole dataset.
double full_loss(const Objective& model, const Dataset& data);

enum class GradientMode { kAnalytic, kCentralFd };

// Independent gradient reference. kCentralFd perturbs one coordinate at a
// time ((l(w + h e_i) - l(w - h e_i)) / 2h) and restores the saved value
// bit-exactly; it touches nothing but w.
std::vector<double> gradient_oracle(Objective& model, const Dataset& data,
                                    std::span<const int> batch,
                                    GradientMode mode, double h = 1e-5);

// All indices 0..D-1, the "batch" for full-dataset evaluation.
std::vector<int> all_indices(const Dataset& data);

}  // namespace ttzo
