#pragma once

// Command dispatch behind the collapselab binary. Resolves the config,
// runs one command and writes results.csv, summary.json, meta.json and
// plot.svg into the output directory.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "collapselab/config.hpp"
#include "collapselab/datamodel.hpp"
#include "collapselab/losses.hpp"
#include "collapselab/trainer.hpp"

namespace collapselab {

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_numeric = 3 };

struct RunOptions {
    std::optional<std::string> config_path;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::vector<std::string> overrides;  // key.path=value, applied in order
    std::optional<std::string> command;  // positional command, overrides config
};

/// Defaults, then the config file, then --set overrides, then the dedicated
/// flags. Throws ConfigError.
Config resolve_config(const RunOptions& opts);

// Builders used by the runner; exposed for tests. All throw ConfigError.
CovarianceModel build_covariance(const Config& cfg);
LossSpec build_loss(const Config& cfg);
TrainConfig build_train_config(const Config& cfg);

/// Runs the resolved config. Diagnostics go to `err`, human-readable tables
/// to `out`.
int run(const Config& cfg, std::ostream& out, std::ostream& err);

/// Full entry point: argument parsing plus run().
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

/// git describe of the source tree at configure time.
std::string build_describe();

} // namespace collapselab
