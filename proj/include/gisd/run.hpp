#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gisd/config.hpp"
#include "gisd/hierarchy.hpp"
#include "gisd/training.hpp"

namespace gisd {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitInvariant = 2,
    kExitNumerical = 3,
};

struct RunOptions {
    std::string command;  // train-skills | check-invariants | eval | train-downstream
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    std::string checkpoint;
    std::string mode;  // eval: coverage | downstream | orbit-generalization
};

/// Dispatches one CLI command; returns the process exit code.
int run_command(const RunOptions& opts, std::ostream& out, std::ostream& err);

struct CheckResult {
    std::string name;
    double residual = 0.0;
    double threshold = 0.0;
    bool passed = true;
    std::string detail;
};

/// Exact invariance battery over the configured group, feature map, policy and
/// environment. Feature-map checks also redraw the parameters `trials` times.
std::vector<CheckResult> invariant_battery(const Config& cfg, const Model& model, int trials = 1000);

/// Per-epoch metrics row, every number printed with %.17g.
std::string metrics_header();
std::string metrics_row(const EpochMetrics& m);

/// High-level checkpoint: the downstream config plus the high-level network.
void save_high_level(const std::filesystem::path& path, const Config& cfg, const HighLevelPolicy& high);
HighLevelPolicy load_high_level(const std::filesystem::path& path, const Model& low, Config* cfg_out);

/// High-level policy over the low level's frequency-1 skill block.
HighLevelPolicy make_high_level(const Config& cfg, const Model& low);

}  // namespace gisd
