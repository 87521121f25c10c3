// SPDX-License-Identifier: Apache-2.0
#include "config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "ttzo/errors.hpp"
#include "ttzo/rng.hpp"

namespace ttzo::cli {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::int64_t parse_i64(const std::string& v) {
  std::size_t used = 0;
  const std::int64_t x = std::stoll(v, &used);
  if (used != v.size()) throw std::invalid_argument(v);
  return x;
}

double parse_f64(const std::string& v) {
  std::size_t used = 0;
  const double x = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument(v);
  return x;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument(v);
}

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(static_cast<int>(parse_i64(item)));
  }
  if (out.empty()) throw std::invalid_argument(v);
  return out;
}

std::string join_ints(const std::vector<int>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(xs[i]);
  }
  return out;
}

std::string fmt_f64(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

const char* to_string(QuerySchedule::Mode m) {
  return m == QuerySchedule::Mode::kAdaptive ? "adaptive" : "fixed";
}

QuerySchedule::Mode schedule_mode_from_string(const std::string& s) {
  if (s == "adaptive") return QuerySchedule::Mode::kAdaptive;
  if (s == "fixed") return QuerySchedule::Mode::kFixed;
  throw std::invalid_argument(s);
}

// One table drives parsing, serialization, and the --help listing, so the
// three can never disagree.
struct KeyDef {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> t = {
      {"task.kind",
       [](RunConfig& c, const std::string& v) { c.task = task_from_string(v); },
       [](const RunConfig& c) { return std::string(to_string(c.task)); }},
      {"task.size",
       [](RunConfig& c, const std::string& v) { c.task_size = parse_i64(v); },
       [](const RunConfig& c) { return std::to_string(c.task_size); }},
      {"task.classes",
       [](RunConfig& c, const std::string& v) {
         c.data.classes = static_cast<int>(parse_i64(v));
       },
       [](const RunConfig& c) { return std::to_string(c.data.classes); }},
      {"task.features",
       [](RunConfig& c, const std::string& v) {
         c.data.feature_dim = static_cast<int>(parse_i64(v));
       },
       [](const RunConfig& c) { return std::to_string(c.data.feature_dim); }},
      {"task.separation",
       [](RunConfig& c, const std::string& v) { c.data.separation = parse_f64(v); },
       [](const RunConfig& c) { return fmt_f64(c.data.separation); }},
      {"task.noise_sigma",
       [](RunConfig& c, const std::string& v) { c.data.noise_sigma = parse_f64(v); },
       [](const RunConfig& c) { return fmt_f64(c.data.noise_sigma); }},
      {"task.seq_len",
       [](RunConfig& c, const std::string& v) {
         c.data.seq_len = static_cast<int>(parse_i64(v));
       },
       [](const RunConfig& c) { return std::to_string(c.data.seq_len); }},
      {"task.vocab",
       [](RunConfig& c, const std::string& v) {
         c.data.vocab = static_cast<int>(parse_i64(v));
       },
       [](const RunConfig& c) { return std::to_string(c.data.vocab); }},

      {"model.kind",
       [](RunConfig& c, const std::string& v) { c.model = model_from_string(v); },
       [](const RunConfig& c) { return std::string(to_string(c.model)); }},
      {"model.hidden",
       [](RunConfig& c, const std::string& v) { c.hidden = parse_int_list(v); },
       [](const RunConfig& c) { return join_ints(c.hidden); }},
      {"model.activation",
       [](RunConfig& c, const std::string& v) {
         c.activation = nonlinearity_from_string(v);
       },
       [](const RunConfig& c) { return std::string(to_string(c.activation)); }},
      {"model.width",
       [](RunConfig& c, const std::string& v) {
         c.width = static_cast<int>(parse_i64(v));
       },
       [](const RunConfig& c) { return std::to_string(c.width); }},
      {"model.heads",
       [](RunConfig& c, const std::string& v) {
         c.heads = static_cast<int>(parse_i64(v));
       },
       [](const RunConfig& c) { return std::to_string(c.heads); }},
      {"model.layers",
       [](RunConfig& c, const std::string& v) {
         c.layers = static_cast<int>(parse_i64(v));
       },
       [](const RunConfig& c) { return std::to_string(c.layers); }},
      {"model.ffn_mult",
       [](RunConfig& c, const std::string& v) {
         c.ffn_mult = static_cast<int>(parse_i64(v));
       },
       [](const RunConfig& c) { return std::to_string(c.ffn_mult); }},
      {"model.head_scale",
       [](RunConfig& c, const std::string& v) { c.head_scale = parse_f64(v); },
       [](const RunConfig& c) { return fmt_f64(c.head_scale); }},
      {"model.probe_dim",
       [](RunConfig& c, const std::string& v) {
         c.probe_dim = static_cast<int>(parse_i64(v));
       },
       [](const RunConfig& c) { return std::to_string(c.probe_dim); }},
      {"model.probe_norm",
       [](RunConfig& c, const std::string& v) { c.probe_norm = parse_f64(v); },
       [](const RunConfig& c) { return fmt_f64(c.probe_norm); }},

      {"adapter.bottleneck",
       [](RunConfig& c, const std::string& v) {
         c.adapter.bottleneck = static_cast<int>(parse_i64(v));
       },
       [](const RunConfig& c) { return std::to_string(c.adapter.bottleneck); }},
      {"adapter.order",
       [](RunConfig& c, const std::string& v) {
         c.adapter.order = static_cast<int>(parse_i64(v));
       },
       [](const RunConfig& c) { return std::to_string(c.adapter.order); }},
      {"adapter.rank",
       [](RunConfig& c, const std::string& v) {
         c.adapter.rank = static_cast<int>(parse_i64(v));
       },
       [](const RunConfig& c) { return std::to_string(c.adapter.rank); }},
      {"adapter.nonlin",
       [](RunConfig& c, const std::string& v) {
         c.adapter.nonlin = nonlinearity_from_string(v);
       },
       [](const RunConfig& c) { return std::string(to_string(c.adapter.nonlin)); }},
      {"adapter.residual",
       [](RunConfig& c, const std::string& v) { c.adapter.residual = parse_bool(v); },
       [](const RunConfig& c) { return c.adapter.residual ? "true" : "false"; }},
      {"adapter.bias",
       [](RunConfig& c, const std::string& v) { c.adapter.bias = parse_bool(v); },
       [](const RunConfig& c) { return c.adapter.bias ? "true" : "false"; }},

      {"schedule.mode",
       [](RunConfig& c, const std::string& v) {
         c.train.schedule.mode = schedule_mode_from_string(v);
       },
       [](const RunConfig& c) { return std::string(to_string(c.train.schedule.mode)); }},
      {"schedule.alpha",
       [](RunConfig& c, const std::string& v) {
         c.train.schedule.alpha = parse_f64(v);
       },
       [](const RunConfig& c) { return fmt_f64(c.train.schedule.alpha); }},
      {"schedule.beta",
       [](RunConfig& c, const std::string& v) { c.train.schedule.beta = parse_f64(v); },
       [](const RunConfig& c) { return fmt_f64(c.train.schedule.beta); }},
      {"schedule.q_max",
       [](RunConfig& c, const std::string& v) {
         c.train.schedule.q_max = static_cast<int>(parse_i64(v));
       },
       [](const RunConfig& c) { return std::to_string(c.train.schedule.q_max); }},
      {"schedule.fixed_q",
       [](RunConfig& c, const std::string& v) {
         c.train.schedule.fixed_q = static_cast<int>(parse_i64(v));
       },
       [](const RunConfig& c) { return std::to_string(c.train.schedule.fixed_q); }},

      {"rge.epsilon",
       [](RunConfig& c, const std::string& v) { c.train.rge.epsilon = parse_f64(v); },
       [](const RunConfig& c) { return fmt_f64(c.train.rge.epsilon); }},
      {"rge.eta",
       [](RunConfig& c, const std::string& v) { c.train.rge.eta = parse_f64(v); },
       [](const RunConfig& c) { return fmt_f64(c.train.rge.eta); }},
      {"rge.parallel",
       [](RunConfig& c, const std::string& v) {
         c.train.rge.parallel_queries = parse_bool(v);
       },
       [](const RunConfig& c) {
         return c.train.rge.parallel_queries ? "true" : "false";
       }},

      {"train.steps",
       [](RunConfig& c, const std::string& v) { c.train.steps = parse_i64(v); },
       [](const RunConfig& c) { return std::to_string(c.train.steps); }},
      {"train.batch",
       [](RunConfig& c, const std::string& v) { c.train.batch_size = parse_i64(v); },
       [](const RunConfig& c) { return std::to_string(c.train.batch_size); }},
      {"train.eval_every",
       [](RunConfig& c, const std::string& v) { c.train.eval_every = parse_i64(v); },
       [](const RunConfig& c) { return std::to_string(c.train.eval_every); }},
      {"train.eval_threshold",
       [](RunConfig& c, const std::string& v) {
         c.train.eval_threshold = parse_f64(v);
       },
       [](const RunConfig& c) { return fmt_f64(c.train.eval_threshold); }},
      {"train.blowup",
       [](RunConfig& c, const std::string& v) {
         c.train.loss_blowup_factor = parse_f64(v);
       },
       [](const RunConfig& c) { return fmt_f64(c.train.loss_blowup_factor); }},
      {"train.patience",
       [](RunConfig& c, const std::string& v) {
         c.train.divergence_patience = static_cast<int>(parse_i64(v));
       },
       [](const RunConfig& c) { return std::to_string(c.train.divergence_patience); }},

      {"run.seed",
       [](RunConfig& c, const std::string& v) {
         c.seed = static_cast<std::uint64_t>(parse_i64(v));
       },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"run.out",
       [](RunConfig& c, const std::string& v) { c.out_dir = v; },
       [](const RunConfig& c) { return c.out_dir; }},
  };
  return t;
}

}  // namespace

ModelKind model_from_string(const std::string& s) {
  if (s == "mlp") return ModelKind::kMlp;
  if (s == "transformer") return ModelKind::kTransformer;
  if (s == "probe") return ModelKind::kProbe;
  throw ConfigError("unknown model kind: " + s);
}

const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kMlp: return "mlp";
    case ModelKind::kTransformer: return "transformer";
    default: return "probe";
  }
}

void apply_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& def : key_table()) {
    if (key == def.key) {
      try {
        def.set(cfg, value);
      } catch (const std::exception&) {
        throw ConfigError("bad value for " + key + ": '" + value + "'");
      }
      return;
    }
  }
  throw ConfigError("unknown config key: " + key);
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected key = value, got '" + line + "'");
    }
    try {
      apply_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& def : key_table()) {
    out += def.key;
    out += " = ";
    out += def.get(cfg);
    out += '\n';
  }
  return out;
}

std::string config_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  for (const auto& def : key_table()) j[def.key] = def.get(cfg);
  return j.dump();
}

Dataset make_dataset(const RunConfig& cfg) {
  const SeedDeriver sd{cfg.seed};
  return make_synthetic(cfg.task, cfg.task_size,
                        sd.stream_seed(SeedDeriver::Stream::kDataset), cfg.data);
}

std::unique_ptr<Objective> make_model(const RunConfig& cfg) {
  switch (cfg.model) {
    case ModelKind::kMlp: {
      MlpConfig m;
      m.feature_dim = cfg.data.feature_dim;
      m.classes = cfg.data.classes;
      m.hidden = cfg.hidden;
      m.activation = cfg.activation;
      m.adapter = cfg.adapter;
      m.head_scale = cfg.head_scale;
      return std::make_unique<MlpModel>(m, cfg.seed);
    }
    case ModelKind::kTransformer: {
      TransformerConfig t;
      t.vocab = cfg.data.vocab;
      t.seq_len = cfg.data.seq_len;
      t.width = cfg.width;
      t.heads = cfg.heads;
      t.layers = cfg.layers;
      t.ffn_mult = cfg.ffn_mult;
      t.classes = cfg.data.classes;
      t.adapter = cfg.adapter;
      t.head_scale = cfg.head_scale;
      return std::make_unique<TinyTransformer>(t, cfg.seed);
    }
    default: {
      const SeedDeriver sd{cfg.seed};
      return std::make_unique<QuadraticProbe>(
          cfg.probe_dim, sd.stream_seed(SeedDeriver::Stream::kProbe),
          cfg.probe_norm);
    }
  }
}

TrainOptions train_options(const RunConfig& cfg) {
  TrainOptions opt = cfg.train;
  opt.run_seed = cfg.seed;
  return opt;
}

}  // namespace ttzo::cli
