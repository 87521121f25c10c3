// SPDX-License-Identifier: Apache-2.0
//
// ttzo-bench: training runs, variance probes, contraction benchmarks, and
// the self-verification suite for the tensor-train zeroth-order engine.
#include <cstdio>
#include <exception>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "config.hpp"
#include "ttzo/errors.hpp"

namespace {

// Every command reports failures the same way: message to stderr, exit 1
// (exit 2 is reserved for a diverged training run).
int guarded(const char* what, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ttzo::Error& e) {
    std::fprintf(stderr, "%s: %s\n", what, e.what());
    return ttzo::cli::kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s: unexpected error: %s\n", what, e.what());
    return ttzo::cli::kExitUsage;
  }
}

void add_common(CLI::App* sub, ttzo::cli::CommonArgs& args, bool needs_config) {
  auto* c = sub->add_option("--config", args.config, "run config file");
  if (needs_config) c->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", args.seed, "override run.seed");
  sub->add_option("--out", args.out, "override the output directory");
  sub->add_flag("--quiet", args.quiet, "suppress per-step/per-check output");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tensor-train adapters trained with seed-replayed zeroth-order "
               "estimates; benchmark and verification harness"};
  app.require_subcommand(1);
  int rc = ttzo::cli::kExitOk;

  // train ----------------------------------------------------------------
  ttzo::cli::CommonArgs train_args;
  auto* train = app.add_subcommand(
      "train", "run one training job and persist metrics + summary");
  add_common(train, train_args, true);
  train->footer("Config keys and defaults:\n" +
                ttzo::cli::serialize_config(ttzo::cli::RunConfig{}));
  train->callback([&] {
    rc = guarded("train", [&] { return ttzo::cli::cmd_train(train_args); });
  });

  // compare --------------------------------------------------------------
  ttzo::cli::CommonArgs cmp_args;
  std::string config_b;
  int n_seeds = 10;
  auto* cmp = app.add_subcommand(
      "compare", "run two configs over N seeds and compare divergence rate "
                 "and steps-to-threshold");
  add_common(cmp, cmp_args, true);
  cmp->add_option("--config-b", config_b, "second arm's config file")
      ->required()
      ->check(CLI::ExistingFile);
  cmp->add_option("--seeds", n_seeds, "number of seeds per arm")
      ->capture_default_str();
  cmp->callback([&] {
    rc = guarded("compare", [&] {
      return ttzo::cli::cmd_compare(cmp_args, config_b, n_seeds);
    });
  });

  // variance ---------------------------------------------------------------
  ttzo::cli::CommonArgs var_args;
  std::vector<int> q_list = {1, 2, 4, 8};
  int trials = 10000;
  auto* var = app.add_subcommand(
      "variance", "measure estimator variance against the analytic reference");
  add_common(var, var_args, true);
  var->add_option("--q", q_list, "query counts to probe")
      ->delimiter(',')
      ->capture_default_str();
  var->add_option("--trials", trials, "Monte-Carlo trials per Q (>= 1000)")
      ->capture_default_str();
  var->callback([&] {
    rc = guarded("variance", [&] {
      return ttzo::cli::cmd_variance(var_args, q_list, trials);
    });
  });

  // contract-bench ---------------------------------------------------------
  ttzo::cli::CommonArgs cb_args;
  std::vector<std::string> shapes;
  std::vector<int> ranks = {5, 8, 16};
  int reps = 5;
  auto* cb = app.add_subcommand(
      "contract-bench",
      "time sequential vs grouped weight materialization on the bundled "
      "adapter shapes (correctness-gated)");
  add_common(cb, cb_args, false);
  cb->add_option("--shapes", shapes,
                 "preset names to benchmark (default: all)")
      ->delimiter(',');
  cb->add_option("--ranks", ranks, "TT ranks to sweep")->delimiter(',')
      ->capture_default_str();
  cb->add_option("--reps", reps, "repetitions per timing")
      ->capture_default_str();
  cb->callback([&] {
    rc = guarded("contract-bench", [&] {
      return ttzo::cli::cmd_contract_bench(cb_args, shapes, ranks, reps);
    });
  });

  // verify -----------------------------------------------------------------
  ttzo::cli::CommonArgs ver_args;
  std::string golden_path, dump_golden;
  auto* ver = app.add_subcommand(
      "verify", "run every module's invariant checks and write a report");
  add_common(ver, ver_args, false);
  ver->add_option("--golden", golden_path,
                  "golden fixture JSON (default: built-in constants)")
      ->check(CLI::ExistingFile);
  ver->add_option("--dump-golden", dump_golden,
                  "write the built-in golden fixture to this path and exit");
  ver->callback([&] {
    rc = guarded("verify", [&] {
      return ttzo::cli::cmd_verify(ver_args, golden_path, dump_golden);
    });
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // app.exit prints the message/help; fold CLI11's code space into ours.
    return app.exit(e) == 0 ? ttzo::cli::kExitOk : ttzo::cli::kExitUsage;
  }
  return rc;
}
