// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ttzo/adapters.hpp"
#include "ttzo/datasets.hpp"
#include "ttzo/models.hpp"
#include "ttzo/zo_engine.hpp"

namespace ttzo::cli {

enum class ModelKind { kMlp, kTransformer, kProbe };

ModelKind model_from_string(const std::string& s);
const char* to_string(ModelKind k);

// Everything a run needs, resolvable from a flat key=value file. Defaults
// here ARE the documented defaults: --help and the serialized form are both
// generated from this struct, so they cannot drift.
struct RunConfig {
  // task.*
  TaskKind task = TaskKind::kBlobs;
  std::int64_t task_size = 256;  // D
  DatasetParams data;

  // model.*
  ModelKind model = ModelKind::kMlp;
  std::vector<int> hidden = {32};       // mlp
  Nonlinearity activation = Nonlinearity::kRelu;
  int width = 32, heads = 2, layers = 2, ffn_mult = 2;  // transformer
  double head_scale = 0.1;
  int probe_dim = 10;
  double probe_norm = 1.0;

  // adapter.*
  AdapterConfig adapter;

  // schedule.*, rge.*, train.* (TrainOptions embeds the first two; its
  // run_seed is mirrored from run.seed at build time)
  TrainOptions train;

  // run.*
  std::uint64_t seed = 7;
  std::string out_dir = "runs/latest";
};

// Flat "section.key = value" text. '#' starts a comment; blank lines are
// skipped. Unknown keys and unparseable values throw ConfigError with the
// offending line.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);
void apply_key(RunConfig& cfg, const std::string& key, const std::string& value);

// Canonical serialized form: every key, fixed order, round-trips through
// parse_config_text. Used for the run header, --help, and golden configs.
std::string serialize_config(const RunConfig& cfg);
// Same content as a single-line JSON object (string values), for the
// metrics header record.
std::string config_json(const RunConfig& cfg);

// Builders. Dataset and model draw from seed-derived streams, so a config +
// seed fully determines the run.
Dataset make_dataset(const RunConfig& cfg);
std::unique_ptr<Objective> make_model(const RunConfig& cfg);
// train options with the run seed and schedule/rge sections folded in.
TrainOptions train_options(const RunConfig& cfg);

}  // namespace ttzo::cli
