// SPDX-License-Identifier: Apache-2.0
#include "ttzo/adapters.hpp"

#include <cmath>

#include "ttzo/rng.hpp"

namespace ttzo {

Nonlinearity nonlinearity_from_string(const std::string& s) {
  if (s == "relu") return Nonlinearity::kRelu;
  if (s == "tanh") return Nonlinearity::kTanh;
  if (s == "gelu") return Nonlinearity::kGelu;
  throw ConfigError("unknown nonlinearity '" + s + "'");
}

const char* to_string(Nonlinearity n) {
  switch (n) {
    case Nonlinearity::kRelu: return "relu";
    case Nonlinearity::kTanh: return "tanh";
    case Nonlinearity::kGelu: return "gelu";
  }
  return "?";
}

namespace {

// tanh-free erf-based gelu; exact derivative below matches it.
double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

}  // namespace

RowMatrix apply_nonlinearity(Nonlinearity n, RowMatrix x) {
  switch (n) {
    case Nonlinearity::kRelu:
      return x.cwiseMax(0.0);
    case Nonlinearity::kTanh:
      return x.array().tanh().matrix();
    case Nonlinearity::kGelu:
      return x.unaryExpr([](double v) { return gelu(v); });
  }
  return x;
}

RowMatrix nonlinearity_grad(Nonlinearity n, const RowMatrix& pre) {
  switch (n) {
    case Nonlinearity::kRelu:
      return pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Nonlinearity::kTanh:
      return pre.unaryExpr([](double v) {
        const double t = std::tanh(v);
        return 1.0 - t * t;
      });
    case Nonlinearity::kGelu:
      return pre.unaryExpr([](double v) { return gelu_grad(v); });
  }
  return pre;
}

TTFactorsView TensorizedLinear::factors(const ParameterRegistry& reg) const {
  TTFactorsView v;
  v.factors.reserve(factor_ids.size());
  for (std::size_t id : factor_ids) v.factors.push_back(reg.view(id));
  return v;
}

RowMatrix TensorizedLinear::weight(const ParameterRegistry& reg) const {
  return materialize_parallel(spec, factors(reg), 2);
}

RowMatrix TensorizedLinear::forward(const ParameterRegistry& reg,
                                    const RowMatrix& x) const {
  if (x.cols() != spec.in_dim) {
    throw ShapeMismatch("input has " + std::to_string(x.cols()) +
                        " columns, layer expects " + std::to_string(spec.in_dim));
  }
  RowMatrix y = x * weight(reg);
  if (has_bias) {
    const auto b = reg.view(bias_id);
    Eigen::Map<const Eigen::RowVectorXd> bias(b.data(),
                                              static_cast<Eigen::Index>(b.size()));
    y.rowwise() += bias;
  }
  return y;
}

RowMatrix TensorizedAdapter::forward(const ParameterRegistry& reg,
                                     const RowMatrix& x) const {
  RowMatrix h = apply_nonlinearity(nonlin, down.forward(reg, x));
  RowMatrix y = up.forward(reg, h);
  if (residual) y += x;
  return y;
}

TensorizedLinear declare_tensorized_linear(ParameterRegistry& reg,
                                           const std::string& name,
                                           const TTLayerSpec& spec, bool bias) {
  validate_spec(spec);
  TensorizedLinear layer;
  layer.spec = spec;
  for (int t = 0; t < spec.num_modes(); ++t) {
    const std::size_t len = static_cast<std::size_t>(spec.rank_before(t)) *
                            spec.mode_dim(t) * spec.rank_after(t);
    layer.factor_ids.push_back(
        reg.add(name + ".G" + std::to_string(t), Role::kTrainable, len));
  }
  layer.has_bias = bias;
  if (bias) {
    layer.bias_id = reg.add(name + ".bias", Role::kTrainable,
                            static_cast<std::size_t>(spec.out_dim));
  }
  return layer;
}

void init_tensorized_linear(ParameterRegistry& reg,
                            const TensorizedLinear& layer, std::uint64_t seed,
                            InitPolicy policy) {
  const TTFactors f = init_factors(layer.spec, seed, policy);
  for (std::size_t t = 0; t < layer.factor_ids.size(); ++t) {
    auto dst = reg.view(layer.factor_ids[t]);
    const auto& src = f.factors[t];
    std::copy(src.begin(), src.end(), dst.begin());
  }
  if (layer.has_bias) {
    auto b = reg.view(layer.bias_id);
    std::fill(b.begin(), b.end(), 0.0);
  }
}

namespace {

TTLayerSpec adapter_layer_spec(int in_dim, int out_dim, const AdapterConfig& cfg,
                               const std::vector<int>& in_factors,
                               const std::vector<int>& out_factors) {
  if (in_factors.empty() && out_factors.empty()) {
    return make_spec(in_dim, out_dim, cfg.order, cfg.rank);
  }
  TTLayerSpec spec;
  spec.in_dim = in_dim;
  spec.out_dim = out_dim;
  spec.in_factors =
      in_factors.empty() ? make_spec(in_dim, out_dim, cfg.order, cfg.rank).in_factors
                         : in_factors;
  spec.out_factors = out_factors.empty()
                         ? make_spec(in_dim, out_dim, cfg.order, cfg.rank).out_factors
                         : out_factors;
  spec.ranks.assign(spec.in_factors.size() + spec.out_factors.size() + 1,
                    cfg.rank);
  spec.ranks.front() = 1;
  spec.ranks.back() = 1;
  validate_spec(spec);
  return spec;
}

}  // namespace

TensorizedAdapter declare_adapter(ParameterRegistry& reg,
                                  const std::string& name, int hidden_dim,
                                  const AdapterConfig& cfg) {
  if (cfg.bottleneck < 1) throw BadParams("bottleneck must be >= 1");
  TensorizedAdapter ad;
  ad.nonlin = cfg.nonlin;
  ad.residual = cfg.residual;
  ad.down = declare_tensorized_linear(
      reg, name + ".down",
      adapter_layer_spec(hidden_dim, cfg.bottleneck, cfg,
                         cfg.down_in_factors, cfg.down_out_factors),
      cfg.bias);
  ad.up = declare_tensorized_linear(
      reg, name + ".up",
      adapter_layer_spec(cfg.bottleneck, hidden_dim, cfg, cfg.up_in_factors,
                         cfg.up_out_factors),
      cfg.bias);
  return ad;
}

void init_adapter(ParameterRegistry& reg, const TensorizedAdapter& adapter,
                  std::uint64_t seed, bool zero_up) {
  init_tensorized_linear(reg, adapter.down, seed,
                         InitPolicy::kBalancedGaussian);
  init_tensorized_linear(reg, adapter.up, seed + 1,
                         zero_up ? InitPolicy::kZeroUp
                                 : InitPolicy::kBalancedGaussian);
}

std::int64_t adapter_param_count(const TensorizedAdapter& adapter) {
  std::int64_t total = param_count(adapter.down.spec) +
                       param_count(adapter.up.spec);
  if (adapter.down.has_bias) total += adapter.down.spec.out_dim;
  if (adapter.up.has_bias) total += adapter.up.spec.out_dim;
  return total;
}

}  // namespace ttzo
