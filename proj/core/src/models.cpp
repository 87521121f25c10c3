// SPDX-License-Identifier: Apache-2.0
#include "ttzo/models.hpp"

#include <cmath>
#include <numeric>

#include "ttzo/rng.hpp"

namespace ttzo {

std::vector<double> Objective::analytic_gradient(const Dataset&,
                                                 std::span<const int>) const {
  throw Error("objective has no analytic gradient");
}

namespace {

void fill_gaussian(std::span<double> dst, NormalStream& stream, double sigma) {
  for (double& x : dst) x = sigma * stream.next_normal();
}

double require_finite(double loss) {
  if (!std::isfinite(loss)) throw NonFiniteLoss("loss is not finite");
  return loss;
}

}  // namespace

double cross_entropy(const RowMatrix& logits, std::span<const int> labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
    throw ShapeMismatch("logit rows != label count");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols()) {
      throw ShapeMismatch("label out of range");
    }
    const double m = logits.row(i).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      sum += std::exp(logits(i, c) - m);
    }
    const double lse = m + std::log(sum);
    total += lse - logits(i, y);
  }
  return require_finite(total / static_cast<double>(logits.rows()));
}

double full_loss(const Objective& model, const Dataset& data) {
  const std::vector<int> idx = all_indices(data);
  return model.loss(data, idx);
}

std::vector<int> all_indices(const Dataset& data) {
  std::vector<int> idx(static_cast<std::size_t>(data.size()));
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

// --------------------------------------------------------------------------
// QuadraticProbe

QuadraticProbe::QuadraticProbe(int dim, std::uint64_t seed, double norm) {
  if (dim < 1) throw BadParams("probe dimension must be >= 1");
  w_id_ = reg_.add("probe.w", Role::kTrainable, static_cast<std::size_t>(dim));
  reg_.seal();
  if (norm > 0.0) {
    auto w = reg_.view(w_id_);
    NormalStream stream(seed);
    fill_gaussian(w, stream, 1.0);
    double sq = 0.0;
    for (double x : w) sq += x * x;
    const double scale = norm / std::sqrt(sq);
    for (double& x : w) x *= scale;
  }
}

double QuadraticProbe::loss(const Dataset&, std::span<const int>) const {
  const auto w = reg_.trainable();
  double sq = 0.0;
  for (double x : w) sq += x * x;
  return require_finite(0.5 * sq);
}

std::vector<double> QuadraticProbe::analytic_gradient(
    const Dataset&, std::span<const int>) const {
  const auto w = reg_.trainable();
  return {w.begin(), w.end()};
}

// --------------------------------------------------------------------------
// MlpModel

MlpModel::MlpModel(const MlpConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.hidden.empty()) throw BadParams("mlp needs at least one hidden layer");
  const SeedDeriver seeds{seed};

  int in = cfg.feature_dim;
  for (std::size_t l = 0; l < cfg.hidden.size(); ++l) {
    const int out = cfg.hidden[l];
    Dense d;
    d.in = in;
    d.out = out;
    d.w_id = reg_.add("mlp.layer" + std::to_string(l) + ".w", Role::kFrozen,
                      static_cast<std::size_t>(out) * in);
    d.b_id = reg_.add("mlp.layer" + std::to_string(l) + ".b", Role::kFrozen,
                      static_cast<std::size_t>(out));
    layers_.push_back(d);
    adapters_.push_back(declare_adapter(
        reg_, "mlp.adapter" + std::to_string(l), out, cfg.adapter));
    in = out;
  }
  head_.in = in;
  head_.out = cfg.classes;
  head_.w_id = reg_.add("mlp.head.w", Role::kFrozen,
                        static_cast<std::size_t>(cfg.classes) * in);
  head_.b_id = reg_.add("mlp.head.b", Role::kFrozen,
                        static_cast<std::size_t>(cfg.classes));
  reg_.seal();

  for (std::size_t l = 0; l < layers_.size(); ++l) {
    NormalStream stream(
        seeds.stream_seed(SeedDeriver::Stream::kBackbone, l));
    const Dense& d = layers_[l];
    fill_gaussian(reg_.view(d.w_id), stream,
                  std::sqrt(2.0 / (d.in + d.out)));
    // biases stay zero
    init_adapter(reg_, adapters_[l],
                 seeds.stream_seed(SeedDeriver::Stream::kAdapterInit, 2 * l));
  }
  NormalStream head_stream(
      seeds.stream_seed(SeedDeriver::Stream::kBackbone, layers_.size()));
  fill_gaussian(reg_.view(head_.w_id), head_stream,
                cfg.head_scale / std::sqrt(static_cast<double>(head_.in)));
}

RowMatrix MlpModel::gather(const Dataset& data, std::span<const int> batch) const {
  if (data.features.cols() != cfg_.feature_dim) {
    throw ShapeMismatch("dataset feature dim != model feature dim");
  }
  RowMatrix x(static_cast<Eigen::Index>(batch.size()), cfg_.feature_dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = data.features.row(batch[i]);
  }
  return x;
}

RowMatrix MlpModel::dense_forward(const Dense& d, const RowMatrix& x) const {
  const auto wv = reg_.view(d.w_id);
  const auto bv = reg_.view(d.b_id);
  Eigen::Map<const RowMatrix> w(wv.data(), d.out, d.in);
  Eigen::Map<const Eigen::RowVectorXd> b(bv.data(), d.out);
  RowMatrix y = x * w.transpose();
  y.rowwise() += b;
  return y;
}

double MlpModel::loss(const Dataset& data, std::span<const int> batch) const {
  RowMatrix a = gather(data, batch);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    a = apply_nonlinearity(cfg_.activation, dense_forward(layers_[l], a));
    a = adapters_[l].forward(reg_, a);
  }
  const RowMatrix logits = dense_forward(head_, a);
  std::vector<int> labels(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    labels[i] = data.labels[static_cast<std::size_t>(batch[i])];
  }
  return cross_entropy(logits, labels);
}

std::vector<double> MlpModel::analytic_gradient(
    const Dataset& data, std::span<const int> batch) const {
  // Forward pass, keeping what the backward pass needs.
  const std::size_t n_layers = layers_.size();
  std::vector<RowMatrix> act_in(n_layers);    // input to dense layer l
  std::vector<RowMatrix> pre(n_layers);       // dense pre-activation
  std::vector<RowMatrix> ad_in(n_layers);     // adapter input (post sigma)
  std::vector<RowMatrix> ad_mid_pre(n_layers);  // adapter down pre-activation
  std::vector<RowMatrix> ad_mid(n_layers);    // sigma(down(x))

  RowMatrix a = gather(data, batch);
  for (std::size_t l = 0; l < n_layers; ++l) {
    act_in[l] = a;
    pre[l] = dense_forward(layers_[l], a);
    ad_in[l] = apply_nonlinearity(cfg_.activation, pre[l]);
    ad_mid_pre[l] = adapters_[l].down.forward(reg_, ad_in[l]);
    ad_mid[l] = apply_nonlinearity(adapters_[l].nonlin, ad_mid_pre[l]);
    a = adapters_[l].up.forward(reg_, ad_mid[l]);
    if (adapters_[l].residual) a += ad_in[l];
  }
  const RowMatrix logits = dense_forward(head_, a);

  // dL/dlogits for mean cross-entropy: (softmax - onehot) / batch.
  const auto bsz = static_cast<double>(batch.size());
  RowMatrix dlogits(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    Eigen::RowVectorXd ex = (logits.row(i).array() - m).exp();
    ex /= ex.sum();
    dlogits.row(i) = ex / bsz;
    const int y = data.labels[static_cast<std::size_t>(
        batch[static_cast<std::size_t>(i)])];
    dlogits(i, y) -= 1.0 / bsz;
  }

  std::vector<double> grad(reg_.dim(), 0.0);
  const auto scatter = [&](std::size_t entry_id, const double* src,
                           std::size_t len) {
    const auto& e = reg_.entries()[entry_id];
    for (std::size_t i = 0; i < len; ++i) grad[e.offset + i] += src[i];
  };

  // Backward through the frozen head.
  const auto hw = reg_.view(head_.w_id);
  Eigen::Map<const RowMatrix> head_w(hw.data(), head_.out, head_.in);
  RowMatrix da = dlogits * head_w;

  for (std::size_t li = n_layers; li-- > 0;) {
    const TensorizedAdapter& ad = adapters_[li];
    // Through the adapter: y = [x +] up(s), s = sigma_ad(down(x)).
    const RowMatrix& x = ad_in[li];
    const RowMatrix& s = ad_mid[li];
    const RowMatrix up_w = ad.up.weight(reg_);    // (b, h)
    const RowMatrix down_w = ad.down.weight(reg_);  // (h, b)

    RowMatrix d_up_w = s.transpose() * da;  // (b, h)
    if (ad.up.has_bias) {
      Eigen::RowVectorXd db = da.colwise().sum();
      scatter(ad.up.bias_id, db.data(), static_cast<std::size_t>(db.size()));
    }
    RowMatrix ds = da * up_w.transpose();
    RowMatrix du = ds.cwiseProduct(nonlinearity_grad(ad.nonlin, ad_mid_pre[li]));
    RowMatrix d_down_w = x.transpose() * du;  // (h, b)
    if (ad.down.has_bias) {
      Eigen::RowVectorXd db = du.colwise().sum();
      scatter(ad.down.bias_id, db.data(), static_cast<std::size_t>(db.size()));
    }
    RowMatrix dx = du * down_w.transpose();
    if (ad.residual) dx += da;

    const TTFactors up_g = factor_gradients(ad.up.spec, ad.up.factors(reg_), d_up_w);
    for (std::size_t t = 0; t < up_g.factors.size(); ++t) {
      scatter(ad.up.factor_ids[t], up_g.factors[t].data(), up_g.factors[t].size());
    }
    const TTFactors down_g =
        factor_gradients(ad.down.spec, ad.down.factors(reg_), d_down_w);
    for (std::size_t t = 0; t < down_g.factors.size(); ++t) {
      scatter(ad.down.factor_ids[t], down_g.factors[t].data(),
              down_g.factors[t].size());
    }

    // Through the backbone activation and frozen dense layer.
    RowMatrix dz = dx.cwiseProduct(nonlinearity_grad(cfg_.activation, pre[li]));
    const auto wv = reg_.view(layers_[li].w_id);
    Eigen::Map<const RowMatrix> w(wv.data(), layers_[li].out, layers_[li].in);
    da = dz * w;
  }
  return grad;
}

// --------------------------------------------------------------------------
// TinyTransformer

TinyTransformer::TinyTransformer(const TransformerConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  if (cfg.width % cfg.heads != 0) throw BadParams("width must divide by heads");
  const SeedDeriver seeds{seed};
  const int w = cfg.width;
  const int ffn = cfg.ffn_mult * w;

  tok_emb_ = reg_.add("tf.tok_emb", Role::kFrozen,
                      static_cast<std::size_t>(cfg.vocab) * w);
  pos_emb_ = reg_.add("tf.pos_emb", Role::kFrozen,
                      static_cast<std::size_t>(cfg.seq_len) * w);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "tf.layer" + std::to_string(l) + ".";
    LayerIds ids{};
    ids.ln1_g = reg_.add(p + "ln1.gamma", Role::kFrozen, static_cast<std::size_t>(w));
    ids.ln1_b = reg_.add(p + "ln1.beta", Role::kFrozen, static_cast<std::size_t>(w));
    ids.wq = reg_.add(p + "wq", Role::kFrozen, static_cast<std::size_t>(w) * w);
    ids.wk = reg_.add(p + "wk", Role::kFrozen, static_cast<std::size_t>(w) * w);
    ids.wv = reg_.add(p + "wv", Role::kFrozen, static_cast<std::size_t>(w) * w);
    ids.wo = reg_.add(p + "wo", Role::kFrozen, static_cast<std::size_t>(w) * w);
    ids.ln2_g = reg_.add(p + "ln2.gamma", Role::kFrozen, static_cast<std::size_t>(w));
    ids.ln2_b = reg_.add(p + "ln2.beta", Role::kFrozen, static_cast<std::size_t>(w));
    ids.ff1_w = reg_.add(p + "ff1.w", Role::kFrozen,
                         static_cast<std::size_t>(ffn) * w);
    ids.ff1_b = reg_.add(p + "ff1.b", Role::kFrozen, static_cast<std::size_t>(ffn));
    ids.ff2_w = reg_.add(p + "ff2.w", Role::kFrozen,
                         static_cast<std::size_t>(w) * ffn);
    ids.ff2_b = reg_.add(p + "ff2.b", Role::kFrozen, static_cast<std::size_t>(w));
    layers_.push_back(ids);
    adapters_.push_back(
        declare_adapter(reg_, p + "adapter_attn", w, cfg.adapter));
    adapters_.push_back(
        declare_adapter(reg_, p + "adapter_ffn", w, cfg.adapter));
  }
  final_ln_g_ = reg_.add("tf.final_ln.gamma", Role::kFrozen,
                         static_cast<std::size_t>(w));
  final_ln_b_ = reg_.add("tf.final_ln.beta", Role::kFrozen,
                         static_cast<std::size_t>(w));
  head_w_ = reg_.add("tf.head.w", Role::kFrozen,
                     static_cast<std::size_t>(cfg.classes) * w);
  head_b_ = reg_.add("tf.head.b", Role::kFrozen,
                     static_cast<std::size_t>(cfg.classes));
  reg_.seal();

  // Frozen init. Layer norms start at identity (gamma 1, beta 0).
  std::size_t stream_idx = 0;
  const auto draw = [&](std::size_t id, double sigma) {
    NormalStream s(seeds.stream_seed(SeedDeriver::Stream::kBackbone, stream_idx++));
    fill_gaussian(reg_.view(id), s, sigma);
  };
  draw(tok_emb_, 1.0);
  draw(pos_emb_, 0.5);
  const double proj_sigma = std::sqrt(1.0 / w);
  for (int l = 0; l < cfg.layers; ++l) {
    const LayerIds& ids = layers_[static_cast<std::size_t>(l)];
    auto g1 = reg_.view(ids.ln1_g);
    std::fill(g1.begin(), g1.end(), 1.0);
    draw(ids.wq, proj_sigma);
    draw(ids.wk, proj_sigma);
    draw(ids.wv, proj_sigma);
    draw(ids.wo, proj_sigma);
    auto g2 = reg_.view(ids.ln2_g);
    std::fill(g2.begin(), g2.end(), 1.0);
    draw(ids.ff1_w, std::sqrt(2.0 / (w + ffn)));
    draw(ids.ff2_w, std::sqrt(2.0 / (w + ffn)));
    init_adapter(reg_, adapters_[static_cast<std::size_t>(2 * l)],
                 seeds.stream_seed(SeedDeriver::Stream::kAdapterInit,
                                   static_cast<std::size_t>(2 * l)));
    init_adapter(reg_, adapters_[static_cast<std::size_t>(2 * l + 1)],
                 seeds.stream_seed(SeedDeriver::Stream::kAdapterInit,
                                   static_cast<std::size_t>(2 * l + 1)));
  }
  auto gf = reg_.view(final_ln_g_);
  std::fill(gf.begin(), gf.end(), 1.0);
  draw(head_w_, cfg.head_scale / std::sqrt(static_cast<double>(w)));
}

RowMatrix TinyTransformer::layer_norm(const RowMatrix& x, std::size_t g_id,
                                      std::size_t b_id) const {
  const auto gv = reg_.view(g_id);
  const auto bv = reg_.view(b_id);
  Eigen::Map<const Eigen::RowVectorXd> gamma(gv.data(),
                                             static_cast<Eigen::Index>(gv.size()));
  Eigen::Map<const Eigen::RowVectorXd> beta(bv.data(),
                                            static_cast<Eigen::Index>(bv.size()));
  RowMatrix y(x.rows(), x.cols());
  const double inv_n = 1.0 / static_cast<double>(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().sum() * inv_n;
    const double inv_sd = 1.0 / std::sqrt(var + 1e-5);
    y.row(i) =
        (((x.row(i).array() - mu) * inv_sd).matrix().cwiseProduct(gamma)) + beta;
  }
  return y;
}

RowMatrix TinyTransformer::encode(const Dataset& data, int sample) const {
  const int L = cfg_.seq_len;
  const int w = cfg_.width;
  const auto tokens = data.sequence(sample);
  const auto te = reg_.view(tok_emb_);
  const auto pe = reg_.view(pos_emb_);
  Eigen::Map<const RowMatrix> tok(te.data(), cfg_.vocab, w);
  Eigen::Map<const RowMatrix> pos(pe.data(), L, w);

  RowMatrix x(L, w);
  for (int t = 0; t < L; ++t) {
    const auto id = tokens[static_cast<std::size_t>(t)];
    if (id < 0 || id >= cfg_.vocab) throw BadParams("token id out of range");
    x.row(t) = tok.row(id) + pos.row(t);
  }

  const int dh = w / cfg_.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LayerIds& ids = layers_[l];
    const auto mat = [&](std::size_t id, int rows, int cols) {
      return Eigen::Map<const RowMatrix>(reg_.view(id).data(), rows, cols);
    };
    // Attention sublayer (pre-norm).
    const RowMatrix h = layer_norm(x, ids.ln1_g, ids.ln1_b);
    const RowMatrix q = h * mat(ids.wq, w, w);
    const RowMatrix k = h * mat(ids.wk, w, w);
    const RowMatrix v = h * mat(ids.wv, w, w);
    RowMatrix ctx(L, w);
    for (int hd = 0; hd < cfg_.heads; ++hd) {
      const auto qh = q.middleCols(hd * dh, dh);
      const auto kh = k.middleCols(hd * dh, dh);
      const auto vh = v.middleCols(hd * dh, dh);
      RowMatrix scores = (qh * kh.transpose()) * scale;  // L x L
      for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        const double m = scores.row(r).maxCoeff();
        Eigen::RowVectorXd ex = (scores.row(r).array() - m).exp();
        scores.row(r) = ex / ex.sum();
      }
      ctx.middleCols(hd * dh, dh) = scores * vh;
    }
    RowMatrix attn = ctx * mat(ids.wo, w, w);
    x += adapters_[2 * l].forward(reg_, attn);

    // Feed-forward sublayer (pre-norm).
    const RowMatrix h2 = layer_norm(x, ids.ln2_g, ids.ln2_b);
    const int ffn = cfg_.ffn_mult * w;
    RowMatrix f = h2 * mat(ids.ff1_w, ffn, w).transpose();
    {
      const auto bv = reg_.view(ids.ff1_b);
      Eigen::Map<const Eigen::RowVectorXd> b(bv.data(), ffn);
      f.rowwise() += b;
    }
    f = f.cwiseMax(0.0);
    RowMatrix f2 = f * mat(ids.ff2_w, w, ffn).transpose();
    {
      const auto bv = reg_.view(ids.ff2_b);
      Eigen::Map<const Eigen::RowVectorXd> b(bv.data(), w);
      f2.rowwise() += b;
    }
    x += adapters_[2 * l + 1].forward(reg_, f2);
  }
  return layer_norm(x, final_ln_g_, final_ln_b_);
}

RowMatrix TinyTransformer::logits_of(const Dataset& data, int sample) const {
  const RowMatrix enc = encode(data, sample);
  const Eigen::RowVectorXd pooled = enc.colwise().mean();
  const auto hw = reg_.view(head_w_);
  const auto hb = reg_.view(head_b_);
  Eigen::Map<const RowMatrix> head(hw.data(), cfg_.classes, cfg_.width);
  Eigen::Map<const Eigen::RowVectorXd> bias(hb.data(), cfg_.classes);
  return (pooled * head.transpose()) + bias;
}

double TinyTransformer::loss(const Dataset& data,
                             std::span<const int> batch) const {
  if (data.kind != TaskKind::kTokenPattern) {
    throw BadParams("transformer expects the token task");
  }
  RowMatrix logits(static_cast<Eigen::Index>(batch.size()), cfg_.classes);
  std::vector<int> labels(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    logits.row(static_cast<Eigen::Index>(i)) = logits_of(data, batch[i]);
    labels[i] = data.labels[static_cast<std::size_t>(batch[i])];
  }
  return cross_entropy(logits, labels);
}

// --------------------------------------------------------------------------

std::vector<double> gradient_oracle(Objective& model, const Dataset& data,
                                    std::span<const int> batch,
                                    GradientMode mode, double h) {
  if (mode == GradientMode::kAnalytic) {
    return model.analytic_gradient(data, batch);
  }
  if (h <= 0) throw BadParams("central difference step must be > 0");
  auto w = model.params().trainable();
  std::vector<double> grad(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double saved = w[i];
    w[i] = saved + h;
    const double lp = model.loss(data, batch);
    w[i] = saved - h;
    const double lm = model.loss(data, batch);
    w[i] = saved;
    grad[i] = (lp - lm) / (2.0 * h);
  }
  return grad;
}

}  // namespace ttzo
