#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "rsnn/config.hpp"

namespace rsnn {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2 };

using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Defaults, then the file (if any), then each override in order.
RunConfig resolve_config(const std::string& config_path, const Overrides& overrides);

int cmd_synth(const std::string& out_dir, const SynthOptions& opt, std::ostream& out);
int cmd_train(const RunConfig& cfg, const std::string& out_dir, std::ostream& out);
int cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& data,
             const std::string& decisions_csv, std::ostream& out);
int cmd_stats(const RunConfig& cfg, const std::string& checkpoint, const std::string& data,
              const std::string& out_csv, std::ostream& out);

/// Entry point shared by the executable and the tests; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rsnn
