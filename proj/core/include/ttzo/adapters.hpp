// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ttzo/registry.hpp"
#include "ttzo/tensor_train.hpp"

namespace ttzo {

enum class Nonlinearity { kRelu, kTanh, kGelu };

Nonlinearity nonlinearity_from_string(const std::string& s);
const char* to_string(Nonlinearity n);

// Applies the nonlinearity elementwise.
RowMatrix apply_nonlinearity(Nonlinearity n, RowMatrix x);
// Elementwise derivative at the pre-activation values (relu uses the
// right-continuous convention sigma'(0) = 0).
RowMatrix nonlinearity_grad(Nonlinearity n, const RowMatrix& pre);

// A linear layer whose weight lives in TT factors inside a registry. The
// struct holds entry ids, not data, so models can be copied freely; every
// operation takes the owning registry explicitly.
struct TensorizedLinear {
  TTLayerSpec spec;
  std::vector<std::size_t> factor_ids;  // one registry entry per factor
  std::size_t bias_id = 0;
  bool has_bias = false;

  TTFactorsView factors(const ParameterRegistry& reg) const;
  // x (batch x m) -> x * W + bias (batch x n); W comes from the grouped
  // contraction with the default bipartite split.
  RowMatrix forward(const ParameterRegistry& reg, const RowMatrix& x) const;
  RowMatrix weight(const ParameterRegistry& reg) const;  // materialized W
};

// Bottleneck block: down-projection, nonlinearity, up-projection, optional
// residual skip. With zero-initialized up factors the block is the identity
// map at construction time.
struct TensorizedAdapter {
  TensorizedLinear down;
  TensorizedLinear up;
  Nonlinearity nonlin = Nonlinearity::kRelu;
  bool residual = true;

  int hidden_dim() const { return down.spec.in_dim; }
  int bottleneck() const { return down.spec.out_dim; }
  RowMatrix forward(const ParameterRegistry& reg, const RowMatrix& x) const;
};

struct AdapterConfig {
  int bottleneck = 8;
  int order = 2;        // modes per side of each TT layer
  int rank = 3;
  Nonlinearity nonlin = Nonlinearity::kRelu;
  bool residual = true;
  bool bias = true;
  // Optional explicit factorizations (empty = greedy balanced).
  std::vector<int> down_in_factors, down_out_factors;
  std::vector<int> up_in_factors, up_out_factors;
};

// Registers the layer's factors (+ bias) as trainable entries named
// "<name>.G0".."<name>.G{2o-1}" and "<name>.bias". Values are written by
// init_tensorized_linear after the registry is sealed.
TensorizedLinear declare_tensorized_linear(ParameterRegistry& reg,
                                           const std::string& name,
                                           const TTLayerSpec& spec, bool bias);

void init_tensorized_linear(ParameterRegistry& reg,
                            const TensorizedLinear& layer, std::uint64_t seed,
                            InitPolicy policy);

TensorizedAdapter declare_adapter(ParameterRegistry& reg,
                                  const std::string& name, int hidden_dim,
                                  const AdapterConfig& cfg);

// Down gets balanced-gaussian draws, up gets the zero map (identity-at-init
// adapters) unless zero_up is false.
void init_adapter(ParameterRegistry& reg, const TensorizedAdapter& adapter,
                  std::uint64_t seed, bool zero_up = true);

// Trainable parameter count of one adapter (factors + biases); equals the
// registry span the adapter occupies.
std::int64_t adapter_param_count(const TensorizedAdapter& adapter);

}  // namespace ttzo
