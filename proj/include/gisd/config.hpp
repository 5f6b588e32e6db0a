#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gisd {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Every tunable of a run. The text form is flat `key = value` lines; lists are
/// comma separated; `#` starts a comment. Unknown keys are errors.
struct Config {
    // environment
    std::string env = "grid";  // grid | pointmass
    int grid_side = 5;
    double grid_slip = 0.0;
    int group_order = 4;
    double pm_dt = 0.1;
    double pm_arena_radius = 1.0;
    double pm_max_speed = 1.0;
    double pm_noise_std = 0.0;

    // Fourier feature space
    std::string rep = "0:1,1:1,2:1";  // frequency:multiplicity blocks
    std::vector<double> mask{0.0, 1.0, 0.0};  // one weight per block
    std::vector<double> mask_coords;         // per-coordinate override

    // networks and optimization
    std::vector<int> phi_hidden{32, 32};
    std::vector<int> policy_hidden{32, 32};
    std::vector<int> value_hidden{32, 32};
    double lr_phi = 1e-3;
    double lr_policy = 1e-3;
    double lr_value = 1e-3;
    double lr_dual = 1e-2;
    double epsilon = 1e-3;
    double lambda_init = 30.0;
    double gamma = 0.99;
    double policy_std = 0.3;

    // training loop
    int epochs = 200;
    int episodes = 8;
    int horizon = 50;
    int buffer_capacity = 100000;
    int batch_size = 256;
    int phi_steps = 32;
    int dual_steps = 1;
    int policy_steps = 32;
    bool ablation = false;
    std::uint64_t seed = 0;

    // outputs and evaluation
    int checkpoint_every = 50;
    int coverage_every = 50;
    int eval_skills = 48;
    int coverage_cells = 10;
    double coverage_half_width = 1.0;

    // downstream semi-MDP
    int hl_interval = 10;
    int hl_goal_half_width = 2;
    int hl_iterations = 500;
    int hl_episode_steps = 40;
    int hl_episodes_per_iter = 8;
    double hl_lr = 1e-2;
    double hl_angle_std = 0.5;
    std::vector<int> hl_hidden{32};
    bool hl_symmetrize = true;
    std::string low_checkpoint;
};

Config parse_config(std::string_view text);
/// Reads a key=value config file, or the config section of a run manifest.
Config load_config(const std::filesystem::path& path);
/// Canonical text form; parse_config(to_text(c)) == c.
std::string to_text(const Config& cfg);
/// Sets one key from its text value (used for --seed style overrides).
void set_key(Config& cfg, std::string_view key, std::string_view value);
/// Documented key list for --help output.
std::vector<std::pair<std::string, std::string>> config_keys();
/// Cross-field checks (env/group compatibility, positive sizes, mask shape).
void validate(const Config& cfg);

}  // namespace gisd
