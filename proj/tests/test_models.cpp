// SPDX-License-Identifier: Apache-2.0
//
// Unit tests for datasets, objectives, adapters-in-models, checkpoints and
// the metric stream framing.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <doctest.h>
#include <json.hpp>
#include <unistd.h>

#include "ttzo/adapters.hpp"
#include "ttzo/checkpoint.hpp"
#include "ttzo/datasets.hpp"
#include "ttzo/errors.hpp"
#include "ttzo/metrics.hpp"
#include "ttzo/models.hpp"
#include "ttzo/registry.hpp"
#include "ttzo/rng.hpp"

using namespace ttzo;
namespace fs = std::filesystem;

namespace {
std::string temp_root(const char* tag) {
  const auto dir = fs::temp_directory_path() /
                   (std::string(tag) + "-" + std::to_string(getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::vector<int> all_rows(const Dataset& d) {
  std::vector<int> idx(static_cast<std::size_t>(d.size()));
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}
}  // namespace

TEST_CASE("blob datasets are deterministic and class-complete") {
  DatasetParams p;
  p.classes = 3;
  p.feature_dim = 8;
  const Dataset a = make_synthetic(TaskKind::kBlobs, 64, 11, p);
  const Dataset b = make_synthetic(TaskKind::kBlobs, 64, 11, p);
  CHECK(a.features.rows() == 64);
  CHECK(a.features.cols() == 8);
  CHECK(a.labels == b.labels);
  CHECK((a.features - b.features).cwiseAbs().maxCoeff() == 0.0);
  int counts[3] = {0, 0, 0};
  for (int y : a.labels) counts[y]++;
  CHECK(counts[0] > 0);
  CHECK(counts[1] > 0);
  CHECK(counts[2] > 0);

  const Dataset c = make_synthetic(TaskKind::kBlobs, 64, 12, p);
  CHECK((a.features - c.features).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("token datasets stay inside the vocabulary") {
  DatasetParams p;
  p.seq_len = 8;
  p.vocab = 16;
  const Dataset d = make_synthetic(TaskKind::kTokenPattern, 48, 13, p);
  CHECK(d.size() == 48);
  CHECK(d.tokens.size() == 48u * 8u);
  bool labels_ok = true, tokens_ok = true;
  for (int y : d.labels) labels_ok = labels_ok && (y == 0 || y == 1);
  for (auto t : d.tokens) tokens_ok = tokens_ok && t >= 0 && t < 16;
  CHECK(labels_ok);
  CHECK(tokens_ok);
}

TEST_CASE("dataset text round-trip is bit-exact") {
  DatasetParams p;
  p.feature_dim = 5;
  const Dataset d = make_synthetic(TaskKind::kBlobs, 20, 7, p);
  const std::string path = temp_root("ttzo-ds") + "/blobs.txt";
  export_dataset(d, path);
  const Dataset back = import_dataset(path);
  CHECK(back.kind == d.kind);
  CHECK(back.labels == d.labels);
  REQUIRE(back.features.rows() == d.features.rows());
  CHECK((back.features.array() == d.features.array()).all());
}

TEST_CASE("probe loss and gradient closed forms") {
  QuadraticProbe probe(5, 0x41ULL, 2.0);
  const Dataset none;
  CHECK(probe.loss(none, {}) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(probe.has_analytic_gradient());
  CHECK(probe.analytic_gradient(none, {}) == probe.params().read_flat());
}

TEST_CASE("untrained classifier loss sits near ln(classes)") {
  DatasetParams p;
  const Dataset data = make_synthetic(TaskKind::kBlobs, 64, 17, p);
  MlpConfig mc;  // head_scale 0.1 keeps untrained logits near zero
  mc.hidden = {16};
  mc.adapter.bottleneck = 4;
  mc.adapter.rank = 2;
  MlpModel mlp(mc, 17);
  const double loss = mlp.loss(data, all_rows(data));
  CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(0.3));
}

TEST_CASE("adapters start as exact identity maps") {
  ParameterRegistry reg;
  AdapterConfig cfg;
  cfg.bottleneck = 2;
  cfg.order = 1;
  cfg.rank = 2;
  const TensorizedAdapter adapter = declare_adapter(reg, "blk", 6, cfg);
  reg.seal();
  init_adapter(reg, adapter, 0x51ULL);

  NormalStream xs(0x52ULL);
  RowMatrix x(4, 6);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 6; ++j) x(i, j) = xs.next_normal();
  const RowMatrix y = adapter.forward(reg, x);
  CHECK((y.array() == x.array()).all());  // zero up-projection, residual pass
}

TEST_CASE("models clone into independent registries") {
  DatasetParams p;
  const Dataset data = make_synthetic(TaskKind::kBlobs, 32, 19, p);
  MlpConfig mc;
  mc.hidden = {16};
  mc.adapter.bottleneck = 4;
  mc.adapter.rank = 2;
  MlpModel original(mc, 19);
  const auto rows = all_rows(data);
  const double base = original.loss(data, rows);

  auto copy = original.clone();
  std::vector<double> w = original.params().read_flat();
  for (auto& v : w) v += 0.05;
  original.params().write_flat(w);

  CHECK(original.loss(data, rows) != base);
  CHECK(copy->loss(data, rows) == base);
}

TEST_CASE("transformer losses are pure and seed-sensitive") {
  DatasetParams p;
  p.seq_len = 8;
  p.vocab = 16;
  const Dataset data = make_synthetic(TaskKind::kTokenPattern, 32, 23, p);
  TransformerConfig tc;
  tc.vocab = 16;
  tc.seq_len = 8;
  tc.width = 16;
  tc.layers = 1;
  tc.adapter.bottleneck = 4;
  tc.adapter.rank = 2;
  TinyTransformer t1(tc, 23), t2(tc, 23), t3(tc, 24);
  const auto rows = all_rows(data);
  const double l1 = t1.loss(data, rows);
  CHECK(l1 == t1.loss(data, rows));   // pure
  CHECK(l1 == t2.loss(data, rows));   // same seed, same bits
  CHECK(l1 != t3.loss(data, rows));   // different backbone draw
}

TEST_CASE("checkpoint round-trip is bit-exact and shape-checked") {
  MlpConfig mc;
  mc.hidden = {16};
  mc.adapter.bottleneck = 4;
  mc.adapter.rank = 2;
  MlpModel model(mc, 29);
  const std::string path = temp_root("ttzo-ckpt") + "/run.ckpt";
  save_checkpoint(path, model.params(), /*run_seed=*/29, /*step=*/123);

  const Checkpoint ck = load_checkpoint(path);
  CHECK(ck.run_seed == 29);
  CHECK(ck.step == 123);
  CHECK(ck.w == model.params().read_flat());

  auto copy = model.clone();
  std::vector<double> w = copy->params().read_flat();
  for (auto& v : w) v += 1.0;
  copy->params().write_flat(w);
  apply_checkpoint(copy->params(), ck);
  CHECK(copy->params().read_flat() == model.params().read_flat());

  QuadraticProbe other(8, 1, 1.0);
  CHECK_THROWS_AS(apply_checkpoint(other.params(), ck), ShapeMismatch);
}

TEST_CASE("metric records serialize at full precision and append") {
  const std::string dir = temp_root("ttzo-metrics");
  MetricsRecord r;
  r.step = 3;
  r.epoch = 0;
  r.query_count = 2;
  r.train_loss = 1.0 / 3.0;
  r.eval_loss = 0.1;
  {
    JsonlMetricsWriter w(dir);
    w.header("{\"run\":\"demo\"}");
    w.step(r);
    w.flush();
  }
  {
    JsonlMetricsWriter w(dir);  // append mode: reopening must not truncate
    r.step = 4;
    r.eval_loss.reset();
    w.step(r);
    w.flush();
  }
  std::ifstream in(dir + "/metrics.jsonl");
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  const auto header = nlohmann::json::parse(lines[0]);
  CHECK(header["type"] == "header");
  const auto step3 = nlohmann::json::parse(lines[1]);
  CHECK(step3["k"] == 3);
  CHECK(step3["Q"] == 2);
  CHECK(step3["loss"].get<double>() == 1.0 / 3.0);  // %.17g round-trips
  CHECK(step3.contains("eval_loss"));
  const auto step4 = nlohmann::json::parse(lines[2]);
  CHECK(step4["k"] == 4);
  CHECK(!step4.contains("eval_loss"));
}
