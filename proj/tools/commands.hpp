// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ttzo::cli {

// Shared flag values; each command applies the ones that concern it.
struct CommonArgs {
  std::string config;                      // --config
  std::optional<std::uint64_t> seed;       // --seed (overrides run.seed)
  std::optional<std::string> out;          // --out  (overrides run.out)
  bool quiet = false;                      // --quiet
};

// Exit codes across all commands: 0 success, 1 usage/config/I-O error,
// 2 run diverged.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitDiverged = 2;

int cmd_train(const CommonArgs& args);
int cmd_compare(const CommonArgs& args, const std::string& config_b, int n_seeds);
int cmd_variance(const CommonArgs& args, const std::vector<int>& q_list,
                 int trials);
int cmd_contract_bench(const CommonArgs& args,
                       const std::vector<std::string>& shapes,
                       const std::vector<int>& ranks, int repetitions);
int cmd_verify(const CommonArgs& args, const std::string& golden_path,
               const std::string& dump_golden_path);

}  // namespace ttzo::cli
