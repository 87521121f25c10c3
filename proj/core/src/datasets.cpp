// SPDX-License-Identifier: Apache-2.0
#include "ttzo/datasets.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ttzo/rng.hpp"

namespace ttzo {

TaskKind task_from_string(const std::string& s) {
  if (s == "blobs") return TaskKind::kBlobs;
  if (s == "tokens") return TaskKind::kTokenPattern;
  if (s == "quadratic") return TaskKind::kQuadraticProbe;
  throw ConfigError("unknown task '" + s + "'");
}

const char* to_string(TaskKind k) {
  switch (k) {
    case TaskKind::kBlobs: return "blobs";
    case TaskKind::kTokenPattern: return "tokens";
    case TaskKind::kQuadraticProbe: return "quadratic";
  }
  return "?";
}

namespace {

// Orthonormal class directions via Gram-Schmidt over seeded Gaussian draws.
// Requires classes <= feature_dim.
RowMatrix class_directions(int classes, int dim, NormalStream& stream) {
  RowMatrix dirs(classes, dim);
  for (int c = 0; c < classes; ++c) {
    for (int j = 0; j < dim; ++j) dirs(c, j) = stream.next_normal();
    for (int p = 0; p < c; ++p) {
      dirs.row(c) -= dirs.row(c).dot(dirs.row(p)) * dirs.row(p);
    }
    const double norm = dirs.row(c).norm();
    if (norm < 1e-9) throw BadParams("degenerate class direction draw");
    dirs.row(c) /= norm;
  }
  return dirs;
}

Dataset make_blobs(std::int64_t d_samples, std::uint64_t seed,
                   const DatasetParams& p) {
  if (p.classes < 2) throw BadParams("blobs needs >= 2 classes");
  if (p.feature_dim < p.classes) {
    throw BadParams("blobs needs feature_dim >= classes for orthogonal means");
  }
  if (p.noise_sigma <= 0) throw BadParams("noise_sigma must be > 0");
  Dataset ds;
  ds.kind = TaskKind::kBlobs;
  ds.params = p;
  ds.features.resize(d_samples, p.feature_dim);
  ds.labels.resize(static_cast<std::size_t>(d_samples));

  NormalStream stream(seed);
  const RowMatrix dirs = class_directions(p.classes, p.feature_dim, stream);
  const double radius = p.separation * p.noise_sigma;
  for (std::int64_t i = 0; i < d_samples; ++i) {
    const int label = static_cast<int>(i % p.classes);
    ds.labels[static_cast<std::size_t>(i)] = label;
    for (int j = 0; j < p.feature_dim; ++j) {
      ds.features(i, j) =
          radius * dirs(label, j) + p.noise_sigma * stream.next_normal();
    }
  }
  return ds;
}

Dataset make_token_pattern(std::int64_t d_samples, std::uint64_t seed,
                           const DatasetParams& p) {
  if (p.vocab < 4) throw BadParams("token task needs vocab >= 4");
  if (p.seq_len < 2) throw BadParams("token task needs seq_len >= 2");
  Dataset ds;
  ds.kind = TaskKind::kTokenPattern;
  ds.params = p;
  ds.params.classes = 2;
  ds.tokens.resize(static_cast<std::size_t>(d_samples * p.seq_len));
  ds.labels.resize(static_cast<std::size_t>(d_samples));

  NormalStream stream(seed);
  const auto uniform_below = [&stream](std::int64_t n) {
    return static_cast<std::int64_t>(stream.next_u64() % static_cast<std::uint64_t>(n));
  };
  for (std::int64_t i = 0; i < d_samples; ++i) {
    const int label = static_cast<int>(i % 2);
    ds.labels[static_cast<std::size_t>(i)] = label;
    auto* row = ds.tokens.data() + i * p.seq_len;
    // Filler from [3, vocab), keeping the two markers reserved.
    for (int t = 0; t < p.seq_len; ++t) {
      row[t] = static_cast<std::int32_t>(3 + uniform_below(p.vocab - 3));
    }
    const std::int64_t pos_a = uniform_below(p.seq_len);
    std::int64_t pos_b = uniform_below(p.seq_len - 1);
    if (pos_b >= pos_a) ++pos_b;  // distinct positions
    if (label == 1) {
      row[pos_a] = kMarkerA;
      row[pos_b] = kMarkerB;
    } else {
      // One marker alone or none, evenly: co-occurrence is the only signal.
      switch (uniform_below(3)) {
        case 0: row[pos_a] = kMarkerA; break;
        case 1: row[pos_b] = kMarkerB; break;
        default: break;
      }
    }
  }
  return ds;
}

Dataset make_probe_placeholder(std::int64_t d_samples, const DatasetParams& p) {
  Dataset ds;
  ds.kind = TaskKind::kQuadraticProbe;
  ds.params = p;
  ds.params.classes = 1;
  ds.params.feature_dim = 1;
  ds.features = RowMatrix::Zero(d_samples, 1);
  ds.labels.assign(static_cast<std::size_t>(d_samples), 0);
  return ds;
}

}  // namespace

Dataset make_synthetic(TaskKind kind, std::int64_t d_samples, std::uint64_t seed,
                       const DatasetParams& params) {
  if (d_samples < 2) throw BadParams("dataset needs at least 2 samples");
  if (kind != TaskKind::kQuadraticProbe && d_samples < params.classes) {
    throw BadParams("need at least one sample per class");
  }
  switch (kind) {
    case TaskKind::kBlobs: return make_blobs(d_samples, seed, params);
    case TaskKind::kTokenPattern: return make_token_pattern(d_samples, seed, params);
    case TaskKind::kQuadraticProbe: return make_probe_placeholder(d_samples, params);
  }
  throw BadParams("unknown task kind");
}

void export_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const auto& p = ds.params;
  out << "# ttzo-dataset v1 task=" << to_string(ds.kind)
      << " classes=" << p.classes << " features=" << p.feature_dim
      << " separation=" << p.separation << " sigma=" << p.noise_sigma
      << " seq=" << p.seq_len << " vocab=" << p.vocab << "\n";
  char buf[40];
  for (std::int64_t i = 0; i < ds.size(); ++i) {
    if (ds.kind == TaskKind::kTokenPattern) {
      const auto seq = ds.sequence(i);
      for (auto t : seq) out << t << ' ';
    } else {
      for (int j = 0; j < ds.features.cols(); ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", ds.features(i, j));
        out << buf << ' ';
      }
    }
    out << ds.labels[static_cast<std::size_t>(i)] << "\n";
  }
  if (!out) throw IoError("short write to '" + path + "'");
}

Dataset import_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string header;
  if (!std::getline(in, header) || header.rfind("# ttzo-dataset v1 ", 0) != 0) {
    throw IoError("missing dataset header in '" + path + "'");
  }
  Dataset ds;
  DatasetParams p;
  {
    std::istringstream hs(header.substr(2));
    std::string tok;
    hs >> tok >> tok;  // "ttzo-dataset" "v1"
    std::string kv;
    while (hs >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw IoError("bad header field: " + kv);
      const std::string key = kv.substr(0, eq);
      const std::string val = kv.substr(eq + 1);
      if (key == "task") ds.kind = task_from_string(val);
      else if (key == "classes") p.classes = std::stoi(val);
      else if (key == "features") p.feature_dim = std::stoi(val);
      else if (key == "separation") p.separation = std::stod(val);
      else if (key == "sigma") p.noise_sigma = std::stod(val);
      else if (key == "seq") p.seq_len = std::stoi(val);
      else if (key == "vocab") p.vocab = std::stoi(val);
      else throw IoError("unknown header field: " + key);
    }
  }
  ds.params = p;

  std::vector<std::vector<double>> feat_rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (ds.kind == TaskKind::kTokenPattern) {
      std::vector<std::int32_t> row(static_cast<std::size_t>(p.seq_len));
      for (auto& t : row) {
        if (!(ls >> t)) throw IoError("truncated token row");
      }
      int label;
      if (!(ls >> label)) throw IoError("missing label");
      ds.tokens.insert(ds.tokens.end(), row.begin(), row.end());
      ds.labels.push_back(label);
    } else {
      std::vector<double> row(static_cast<std::size_t>(p.feature_dim));
      for (auto& x : row) {
        if (!(ls >> x)) throw IoError("truncated feature row");
      }
      int label;
      if (!(ls >> label)) throw IoError("missing label");
      feat_rows.push_back(std::move(row));
      ds.labels.push_back(label);
    }
  }
  if (ds.kind != TaskKind::kTokenPattern) {
    ds.features.resize(static_cast<std::int64_t>(feat_rows.size()), p.feature_dim);
    for (std::size_t i = 0; i < feat_rows.size(); ++i) {
      for (int j = 0; j < p.feature_dim; ++j) {
        ds.features(static_cast<std::int64_t>(i), j) = feat_rows[i][static_cast<std::size_t>(j)];
      }
    }
  }
  return ds;
}

}  // namespace ttzo
