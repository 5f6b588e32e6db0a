#include "gisd/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "gisd/groups.hpp"

namespace gisd {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
    const std::string t = trim(text);
    T value{};
    const auto* first = t.data();
    const auto* last = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || t.empty()) {
        throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + t + "'");
    }
    return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
    const std::string t = trim(text);
    if (t == "1" || t == "true") return true;
    if (t == "0" || t == "false") return false;
    throw ConfigError("config key '" + std::string(key) + "': expected true/false, got '" + t + "'");
}

template <class T>
std::vector<T> parse_list(std::string_view key, std::string_view text) {
    std::vector<T> out;
    std::stringstream ss{std::string(text)};
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (trim(item).empty()) continue;
        out.push_back(parse_number<T>(key, item));
    }
    return out;
}

template <class T>
std::string print_list(const std::vector<T>& v) {
    std::string out;
    for (const auto& x : v) {
        if (!out.empty()) out += ',';
        if constexpr (std::is_floating_point_v<T>) {
            out += fmt_double(x);
        } else {
            out += std::to_string(x);
        }
    }
    return out;
}

struct Entry {
    const char* name;
    const char* doc;
    std::function<void(Config&, std::string_view)> set;
    std::function<std::string(const Config&)> get;
};

#define GISD_INT(field, doc)                                                              \
    Entry{#field, doc,                                                                    \
          [](Config& c, std::string_view v) { c.field = parse_number<int>(#field, v); }, \
          [](const Config& c) { return std::to_string(c.field); }}
#define GISD_DOUBLE(field, doc)                                                              \
    Entry{#field, doc,                                                                       \
          [](Config& c, std::string_view v) { c.field = parse_number<double>(#field, v); }, \
          [](const Config& c) { return fmt_double(c.field); }}
#define GISD_BOOL(field, doc)                                                       \
    Entry{#field, doc, [](Config& c, std::string_view v) { c.field = parse_bool(#field, v); }, \
          [](const Config& c) { return std::string(c.field ? "true" : "false"); }}
#define GISD_STRING(field, doc)                                                       \
    Entry{#field, doc, [](Config& c, std::string_view v) { c.field = trim(v); }, \
          [](const Config& c) { return c.field; }}
#define GISD_LIST(field, T, doc)                                                              \
    Entry{#field, doc,                                                                        \
          [](Config& c, std::string_view v) { c.field = parse_list<T>(#field, v); },        \
          [](const Config& c) { return print_list(c.field); }}

const std::vector<Entry>& schema() {
    static const std::vector<Entry> entries{
        GISD_STRING(env, "environment: grid | pointmass"),
        GISD_INT(grid_side, "grid side length (odd)"),
        GISD_DOUBLE(grid_slip, "grid slip probability in [0,1)"),
        GISD_INT(group_order, "order N of the rotation group C_N (grid requires 4)"),
        GISD_DOUBLE(pm_dt, "point-mass step scale"),
        GISD_DOUBLE(pm_arena_radius, "point-mass disc arena radius"),
        GISD_DOUBLE(pm_max_speed, "point-mass velocity bound"),
        GISD_DOUBLE(pm_noise_std, "point-mass isotropic noise std"),
        GISD_STRING(rep, "feature representation blocks 'freq:mult,...'"),
        GISD_LIST(mask, double, "frequency mask, one weight per rep block"),
        GISD_LIST(mask_coords, double, "per-coordinate mask override (may break equivariance)"),
        GISD_LIST(phi_hidden, int, "feature-map hidden layer sizes"),
        GISD_LIST(policy_hidden, int, "policy hidden layer sizes"),
        GISD_LIST(value_hidden, int, "value-baseline hidden layer sizes"),
        GISD_DOUBLE(lr_phi, "feature-map Adam learning rate"),
        GISD_DOUBLE(lr_policy, "policy Adam learning rate"),
        GISD_DOUBLE(lr_value, "value-baseline Adam learning rate"),
        GISD_DOUBLE(lr_dual, "dual-variable learning rate"),
        GISD_DOUBLE(epsilon, "Lipschitz slack epsilon"),
        GISD_DOUBLE(lambda_init, "initial dual variable"),
        GISD_DOUBLE(gamma, "policy-gradient discount"),
        GISD_DOUBLE(policy_std, "Gaussian policy exploration std"),
        GISD_INT(epochs, "training epochs N"),
        GISD_INT(episodes, "episodes per epoch M"),
        GISD_INT(horizon, "episode horizon T"),
        GISD_INT(buffer_capacity, "replay buffer capacity"),
        GISD_INT(batch_size, "discriminator/dual batch size"),
        GISD_INT(phi_steps, "discriminator steps per epoch"),
        GISD_INT(dual_steps, "dual steps per epoch"),
        GISD_INT(policy_steps, "policy steps per epoch"),
        GISD_BOOL(ablation, "unsymmetrized feature map and policy"),
        Entry{"seed", "root seed",
              [](Config& c, std::string_view v) { c.seed = parse_number<std::uint64_t>("seed", v); },
              [](const Config& c) { return std::to_string(c.seed); }},
        GISD_INT(checkpoint_every, "checkpoint cadence in epochs (0 = final only)"),
        GISD_INT(coverage_every, "coverage evaluation cadence in epochs (0 = final only)"),
        GISD_INT(eval_skills, "skills sampled for coverage evaluation"),
        GISD_INT(coverage_cells, "coverage grid cells per side (pointmass)"),
        GISD_DOUBLE(coverage_half_width, "coverage region half width (pointmass)"),
        GISD_INT(hl_interval, "high-level decision interval K"),
        GISD_INT(hl_goal_half_width, "goal sampling half width (cells)"),
        GISD_INT(hl_iterations, "high-level training iterations"),
        GISD_INT(hl_episode_steps, "primitive steps per downstream episode"),
        GISD_INT(hl_episodes_per_iter, "downstream episodes per iteration"),
        GISD_DOUBLE(hl_lr, "high-level Adam learning rate"),
        GISD_DOUBLE(hl_angle_std, "high-level skill-angle exploration std"),
        GISD_LIST(hl_hidden, int, "high-level hidden layer sizes"),
        GISD_BOOL(hl_symmetrize, "group-average the high-level policy"),
        GISD_STRING(low_checkpoint, "pretrained low-level checkpoint path"),
    };
    return entries;
}

#undef GISD_INT
#undef GISD_DOUBLE
#undef GISD_BOOL
#undef GISD_STRING
#undef GISD_LIST

}  // namespace

void set_key(Config& cfg, std::string_view key, std::string_view value) {
    for (const auto& e : schema()) {
        if (key == e.name) {
            e.set(cfg, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + std::string(key) + "'");
}

Config parse_config(std::string_view text) {
    Config cfg;
    std::stringstream ss{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        set_key(cfg, trim(std::string_view(line).substr(0, eq)),
                std::string_view(line).substr(eq + 1));
    }
    validate(cfg);
    return cfg;
}

Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    const std::string head = trim(text);
    if (!head.empty() && head.front() == '{') {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("manifest '" + path.string() + "': " + e.what());
        }
        if (!j.contains("config") || !j["config"].is_object()) {
            throw ConfigError("manifest '" + path.string() + "' has no config object");
        }
        Config cfg;
        for (const auto& [key, value] : j["config"].items()) {
            set_key(cfg, key, value.get<std::string>());
        }
        validate(cfg);
        return cfg;
    }
    return parse_config(text);
}

std::string to_text(const Config& cfg) {
    std::string out;
    for (const auto& e : schema()) out += std::string(e.name) + " = " + e.get(cfg) + "\n";
    return out;
}

std::vector<std::pair<std::string, std::string>> config_keys() {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& e : schema()) out.emplace_back(e.name, e.doc);
    return out;
}

void validate(const Config& cfg) {
    auto require = [](bool ok, const std::string& key, const std::string& what) {
        if (!ok) throw ConfigError("config key '" + key + "': " + what);
    };
    require(cfg.env == "grid" || cfg.env == "pointmass", "env", "must be grid or pointmass");
    if (cfg.env == "grid") {
        require(cfg.grid_side >= 1 && cfg.grid_side % 2 == 1, "grid_side", "must be odd and >= 1");
        require(cfg.grid_slip >= 0.0 && cfg.grid_slip < 1.0, "grid_slip", "must lie in [0,1)");
        require(cfg.group_order == 4, "group_order", "the grid env is C4-symmetric (use 4)");
    }
    require(cfg.group_order >= 1, "group_order", "must be >= 1");
    require(cfg.epochs >= 1, "epochs", "must be >= 1");
    require(cfg.episodes >= 1, "episodes", "must be >= 1");
    require(cfg.horizon >= 1, "horizon", "must be >= 1");
    require(cfg.buffer_capacity >= 1, "buffer_capacity", "must be >= 1");
    require(cfg.batch_size >= 1, "batch_size", "must be >= 1");
    require(cfg.phi_steps >= 0 && cfg.dual_steps >= 0 && cfg.policy_steps >= 0, "phi_steps",
            "step counts must be >= 0");
    require(cfg.epsilon > 0.0, "epsilon", "must be > 0");
    require(cfg.lambda_init >= 0.0, "lambda_init", "must be >= 0");
    require(cfg.policy_std > 0.0, "policy_std", "must be > 0");
    require(cfg.eval_skills >= 1, "eval_skills", "must be >= 1");
    require(cfg.coverage_cells >= 1, "coverage_cells", "must be >= 1");
    require(cfg.hl_interval >= 1, "hl_interval", "must be >= 1");
    try {
        const auto rep = DirectSumRep::from_spec(make_cyclic_group(cfg.group_order), cfg.rep);
        if (cfg.mask_coords.empty()) {
            require(cfg.mask.size() == rep.blocks().size(), "mask",
                    "needs one weight per rep block (" + std::to_string(rep.blocks().size()) + ")");
        } else {
            require(cfg.mask_coords.size() == static_cast<std::size_t>(rep.total_dim()),
                    "mask_coords", "needs one weight per feature coordinate");
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config key 'rep': ") + e.what());
    }
}

}  // namespace gisd
