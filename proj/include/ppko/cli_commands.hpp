#pragma once

#include <filesystem>
#include <optional>

#include "ppko/config.hpp"

namespace ppko {

/// Exit codes shared by every command: 0 ok, 2 config, 3 numeric,
/// 4 manifest/model mismatch, 5 validation gate, 6 run abort, 7 bench assert.
enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kNumericError = 3,
  kMismatchError = 4,
  kValidationGate = 5,
  kRunAbort = 6,
  kBenchAssert = 7,
};

struct CliOptions {
  std::filesystem::path config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out_dir;
  std::optional<int> quad_nodes;
  std::optional<int> horizon;
  std::optional<std::filesystem::path> dataset_path;
  std::optional<std::filesystem::path> model_path;
};

RunConfig load_config_with_overrides(const CliOptions& opt);

int cmd_gen_data(const CliOptions& opt);
int cmd_train(const CliOptions& opt);
int cmd_validate(const CliOptions& opt);
int cmd_smpc(const CliOptions& opt);
int cmd_bench(const CliOptions& opt);

}  // namespace ppko
