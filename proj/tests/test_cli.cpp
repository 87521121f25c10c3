// SPDX-License-Identifier: Apache-2.0
//
// Process-level tests of the ttzo-bench binary: exit-code contract
// (0 ok, 1 usage/config, 2 diverged), artifact layout, and rerun identity.
// The binary path comes in through TTZO_BENCH_PATH.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>
#include <json.hpp>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
  int code = -1;
  std::string output;  // stdout + stderr
};

RunResult run_bench(const std::string& args) {
  const std::string cmd = std::string(TTZO_BENCH_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe) != nullptr) r.output += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string temp_root(const char* tag) {
  const auto dir = fs::temp_directory_path() /
                   (std::string(tag) + "-" + std::to_string(getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

constexpr const char* kTinyConfig =
    "task.kind = blobs\ntask.size = 48\ntask.features = 8\n"
    "model.kind = mlp\nmodel.hidden = 16\nadapter.bottleneck = 4\n"
    "adapter.rank = 2\ntrain.steps = 12\ntrain.batch = 16\n"
    "train.eval_every = 5\nrge.eta = 0.05\nrun.seed = 17\n";

constexpr const char* kProbeConfig =
    "task.kind = quadratic\nmodel.kind = probe\nmodel.probe_dim = 10\n"
    "run.seed = 7\n";

}  // namespace

TEST_CASE("help exits zero and names the subcommands") {
  const auto r = run_bench("--help");
  CHECK(r.code == 0);
  CHECK(r.output.find("train") != std::string::npos);
  CHECK(r.output.find("verify") != std::string::npos);
}

TEST_CASE("usage errors exit one") {
  CHECK(run_bench("").code == 1);
  CHECK(run_bench("frobnicate").code == 1);
  CHECK(run_bench("train").code == 1);                       // missing --config
  CHECK(run_bench("train --config /no/such/file.cfg").code == 1);
}

TEST_CASE("malformed configs exit one and leave no artifacts") {
  const std::string dir = temp_root("ttzo-cli-bad");
  const std::string cfg = write_file(dir + "/bad.cfg", "train.steps = soon\n");
  const std::string out = dir + "/out";
  const auto r = run_bench("train --config " + cfg + " --out " + out);
  CHECK(r.code == 1);
  CHECK(r.output.find("train.steps") != std::string::npos);
  CHECK(!fs::exists(out));
}

TEST_CASE("train writes a complete artifact set") {
  const std::string dir = temp_root("ttzo-cli-train");
  const std::string cfg = write_file(dir + "/run.cfg", kTinyConfig);
  const auto r = run_bench("train --config " + cfg + " --out " + dir + " --quiet");
  CHECK(r.code == 0);

  std::ifstream metrics(dir + "/metrics.jsonl");
  std::vector<std::string> lines;
  for (std::string line; std::getline(metrics, line);) lines.push_back(line);
  REQUIRE(lines.size() == 13);  // header + one record per step
  CHECK(json::parse(lines[0])["type"] == "header");
  CHECK(json::parse(lines[12])["k"] == 12);

  const auto summary = json::parse(slurp(dir + "/summary.json"));
  CHECK(summary["steps_run"] == 12);
  CHECK(summary["diverged"] == false);
  CHECK(summary["config"]["run.seed"] == "17");
  CHECK(fs::file_size(dir + "/timings.jsonl") > 0);
}

TEST_CASE("reruns into a cleared directory are byte-identical") {
  const std::string dir = temp_root("ttzo-cli-rerun");
  const std::string cfg = write_file(dir + "/run.cfg", kTinyConfig);
  std::string captured[2];
  for (auto& stream : captured) {
    fs::remove(dir + "/metrics.jsonl");
    fs::remove(dir + "/timings.jsonl");
    const auto r = run_bench("train --config " + cfg + " --out " + dir + " --quiet");
    REQUIRE(r.code == 0);
    stream = slurp(dir + "/metrics.jsonl");
  }
  CHECK(!captured[0].empty());
  CHECK(captured[0] == captured[1]);
}

TEST_CASE("seed override changes the trace") {
  const std::string dir = temp_root("ttzo-cli-seed");
  const std::string cfg = write_file(dir + "/run.cfg", kTinyConfig);
  const auto base = run_bench("train --config " + cfg + " --out " + dir + "/a --quiet");
  const auto other =
      run_bench("train --config " + cfg + " --out " + dir + "/b --quiet --seed 19");
  REQUIRE(base.code == 0);
  REQUIRE(other.code == 0);
  CHECK(slurp(dir + "/a/metrics.jsonl") != slurp(dir + "/b/metrics.jsonl"));
}

TEST_CASE("divergent runs exit two and say so") {
  const std::string dir = temp_root("ttzo-cli-div");
  const std::string cfg = write_file(
      dir + "/run.cfg",
      std::string(kTinyConfig) + "rge.eta = 50\ntrain.steps = 400\n");
  const auto r = run_bench("train --config " + cfg + " --out " + dir + " --quiet");
  CHECK(r.code == 2);
  const auto summary = json::parse(slurp(dir + "/summary.json"));
  CHECK(summary["diverged"] == true);
}

TEST_CASE("compare validates its arms") {
  const std::string dir = temp_root("ttzo-cli-cmp");
  const std::string a = write_file(dir + "/a.cfg", kTinyConfig);
  CHECK(run_bench("compare --config " + a + " --config-b " + a + " --seeds 0")
            .code == 1);
  const std::string b = write_file(
      dir + "/b.cfg", std::string(kTinyConfig) + "adapter.rank = 3\n");
  CHECK(run_bench("compare --config " + a + " --config-b " + b + " --seeds 2 --out " +
                  dir)
            .code == 1);
}

TEST_CASE("compare pairs two arms over shared seeds") {
  const std::string dir = temp_root("ttzo-cli-cmp2");
  const std::string a = write_file(dir + "/a.cfg", kTinyConfig);
  const std::string b = write_file(
      dir + "/b.cfg",
      std::string(kTinyConfig) + "schedule.mode = fixed\nschedule.fixed_q = 2\n");
  const auto r = run_bench("compare --config " + a + " --config-b " + b +
                           " --seeds 2 --out " + dir + " --quiet");
  CHECK(r.code == 0);
  const auto report = json::parse(slurp(dir + "/compare.json"));
  REQUIRE(report["arms"].size() == 2);
  CHECK(report["arms"][0]["runs"].size() == 2);
  CHECK(report["arms"][1]["runs"].size() == 2);
  CHECK(report["arms"][0].contains("divergence_rate"));
  CHECK(report["arms"][0].contains("median_steps_to_threshold"));
}

TEST_CASE("variance enforces the trial floor and writes the table") {
  const std::string dir = temp_root("ttzo-cli-var");
  const std::string cfg = write_file(dir + "/probe.cfg", kProbeConfig);
  CHECK(run_bench("variance --config " + cfg + " --trials 10").code == 1);

  const auto r = run_bench("variance --config " + cfg +
                           " --q 1,4 --trials 2000 --out " + dir + " --quiet");
  CHECK(r.code == 0);
  const auto table = json::parse(slurp(dir + "/variance.json"));
  REQUIRE(table["rows"].size() == 2);
  CHECK(table["rows"][1]["expected_ratio"].get<double>() == 0.25);
  // 1/Q averaging at MC accuracy; 2000 trials keep this loose check stable.
  CHECK(table["rows"][1]["ratio_to_first"].get<double>() ==
        doctest::Approx(0.25).epsilon(0.5));
}

TEST_CASE("contract-bench validates shape names and reports timings") {
  const auto unknown = run_bench("contract-bench --shapes w1x1");
  CHECK(unknown.code == 1);
  CHECK(unknown.output.find("w768x64") != std::string::npos);  // lists knowns

  const std::string dir = temp_root("ttzo-cli-cb");
  const auto r = run_bench("contract-bench --shapes w64x768 --ranks 2 --reps 1 --out " +
                           dir + " --quiet");
  CHECK(r.code == 0);
  const auto report = json::parse(slurp(dir + "/contract_bench.json"));
  CHECK(report["correctness_ok"] == true);
  REQUIRE(report["rows"].size() == 3);  // one shape, one rank, parts 1/2/3
  for (const auto& row : report["rows"]) {
    CHECK(row["shape"] == "w64x768");
    CHECK(row["rank"] == 2);
    CHECK(row["max_abs_deviation"].get<double>() <= 1e-10);
    CHECK(row["median_ms"].get<double>() >= 0.0);
  }
}

TEST_CASE("verify round-trips its golden fixture") {
  const std::string dir = temp_root("ttzo-cli-verify");
  const std::string golden = dir + "/golden.json";
  CHECK(run_bench("verify --dump-golden " + golden).code == 0);
  REQUIRE(fs::exists(golden));

  const auto ok = run_bench("verify --golden " + golden + " --quiet --out " + dir);
  CHECK(ok.code == 0);

  // Flip one golden constant; the run must fail and name the check.
  auto fixture = json::parse(slurp(golden));
  fixture["mix64"][1][1] = "0x0000000000000001";
  write_file(golden, fixture.dump());
  const auto bad = run_bench("verify --golden " + golden + " --quiet --out " + dir);
  CHECK(bad.code == 1);
  CHECK(bad.output.find("ZO-1") != std::string::npos);
}
