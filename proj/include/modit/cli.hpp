#pragma once

#include <string>
#include <vector>

#include "modit/config.hpp"

namespace modit {

// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric abort.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

// Command entry points, exposed so tests can drive them in-process. Each may
// throw ConfigError / DataError / NumericError; run_cli maps those to exit
// codes.
void cmd_gen_data(const RunConfig& cfg, const std::string& out_path);
void cmd_train(const RunConfig& cfg, const std::string& data_path, const std::string& out_ckpt,
               const std::string& resume_path = "", const std::string& metrics_path = "");
void cmd_sample(const RunConfig& cfg, const std::string& ckpt_path, const std::string& data_path,
                int pair_index, const std::string& out_base);
void cmd_eval(const std::string& generated_path, const std::string& reference_path,
              const std::string& ckpt_path, const std::string& out_path);
int cmd_gradcheck(const RunConfig& cfg, const std::string& out_path, bool inject_fault = false);
void cmd_ablate(const RunConfig& cfg, const std::string& spec_path, const std::string& data_path,
                const std::string& out_path);

// Full CLI: parses arguments, dispatches, maps errors to exit codes.
int run_cli(const std::vector<std::string>& args);

}  // namespace modit
