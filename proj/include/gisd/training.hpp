#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "gisd/config.hpp"
#include "gisd/equivariant.hpp"
#include "gisd/kernels.hpp"
#include "gisd/objective.hpp"
#include "gisd/policy.hpp"
#include "gisd/replay_buffer.hpp"

namespace gisd {

/// Environment plus the three trainable components, built from a Config.
struct Model {
    std::unique_ptr<Env> env;
    std::unique_ptr<EquivariantFeatureMap> phi;
    std::unique_ptr<Policy> policy;
    std::unique_ptr<ValueBaseline> value;

    const TabularSymmetricMDP* tabular() const {
        return dynamic_cast<const TabularSymmetricMDP*>(env.get());
    }
    const PointMassEnv* point_mass() const { return dynamic_cast<const PointMassEnv*>(env.get()); }
};

std::unique_ptr<Env> build_env(const Config& cfg);
/// Parameters are drawn from the "phi-init", "policy-init" and "value-init" streams.
Model build_model(const Config& cfg);

/// One episode of length T from s0 with a fixed skill. Rewards are filled in
/// from `reward_map` when given.
Trajectory rollout(const Env& env, const Policy& policy, Vec s0, const Vec& z, int T, Rng& rng,
                   bool deterministic, const EquivariantFeatureMap* reward_map = nullptr);

/// M episodes, episode m drawing its skill and all randomness from stream
/// ("episode", epoch, m). Episodes run in parallel; transitions are appended
/// to `buffer` in episode order afterwards.
std::vector<Trajectory> collect_episodes(const Env& env, const Policy& policy,
                                         const FrequencyMask& skill_mask, int M, int T,
                                         std::uint64_t seed, std::uint64_t epoch,
                                         ReplayBuffer* buffer,
                                         const EquivariantFeatureMap* reward_map = nullptr);

struct PolicySample {
    Vec s;
    Vec z;
    Vec a;
    double advantage = 0.0;
};

/// L = -mean(A * log pi(a|s,z)); gradient written to *grad when non-null.
double policy_surrogate(const Policy& policy, std::span<const PolicySample> samples, Vec* grad);

struct PolicyUpdateResult {
    double surrogate = 0.0;
    double value_loss = 0.0;
    double mean_return = 0.0;
};

/// One advantage-weighted policy-gradient step (and one baseline regression
/// step) on intrinsic rewards recomputed with the current feature map.
PolicyUpdateResult policy_update(Policy& policy, Adam& policy_opt, ValueBaseline& value,
                                 Adam& value_opt, std::span<const Trajectory> trajectories,
                                 const EquivariantFeatureMap& map, double gamma);

struct Coverage {
    double fraction = 0.0;
    int cells = 0;
    std::vector<int> counts;  // cells x cells, row-major (row = x bin, column = y bin)
};

/// Rolls every skill deterministically from the initial state and bins the
/// visited positions on a cells x cells grid over [-half_width, half_width]^2.
Coverage evaluate_coverage(const Env& env, const Policy& policy, std::span<const Vec> skills,
                           int horizon, double half_width, int cells);
Coverage evaluate_coverage(const Env& env, const Policy& policy, const FrequencyMask& mask,
                           int num_skills, int horizon, double half_width, int cells,
                           std::uint64_t seed);

/// pi_bar(a|s,z) = mean_g pi(g^{-1} a | g^{-1} s, g^{-1} z).
PolicyTable symmetrized_table(const TabularPolicy& policy, const TabularSymmetricMDP& mdp,
                              std::span<const double> z);

/// Exact E[<phi(s_T) - phi(s_0), z>] averaged over `skills`, from the state
/// marginals of each skill's policy table.
double giwdm_exact(const TabularSymmetricMDP& mdp,
                   const std::function<PolicyTable(const Vec&)>& table_for,
                   const EquivariantFeatureMap& map, std::span<const Vec> skills, int horizon);

struct EpochMetrics {
    int epoch = 0;
    double j_phi = 0.0;
    double lambda = 0.0;
    double mean_violation = 0.0;
    double giwdm = 0.0;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    std::optional<double> coverage;
};

/// Training state: collect, discriminator ascent, dual step,
/// policy update. Every random draw is keyed by (seed, epoch, index), so a
/// checkpoint only needs parameters, optimizer moments, the buffer and the
/// epoch counter to resume bit-identically.
class Trainer {
public:
    explicit Trainer(Config cfg);

    EpochMetrics run_epoch();

    int epoch() const { return epoch_; }
    const Config& config() const { return cfg_; }
    Model& model() { return model_; }
    const Model& model() const { return model_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    const DualVariable& dual() const { return dual_; }
    const std::vector<Trajectory>& last_episodes() const { return last_episodes_; }

    /// Written with the offending batch before a NumericalAbort is thrown.
    void set_dump_path(std::filesystem::path p) { dump_path_ = std::move(p); }

    Coverage coverage() const;

    void save(const std::filesystem::path& path) const;
    static Trainer load(const std::filesystem::path& path);

private:
    void abort_with_batch(const std::string& what, std::span<const Transition> batch) const;

    Config cfg_;
    Model model_;
    ReplayBuffer buffer_;
    DualVariable dual_;
    Adam phi_opt_;
    Adam policy_opt_;
    Adam value_opt_;
    int epoch_ = 0;
    std::vector<Trajectory> last_episodes_;
    std::filesystem::path dump_path_;
};

/// Runs epochs until cfg.epochs, calling on_epoch after each.
void train(Trainer& trainer, const std::function<void(const EpochMetrics&, const Trainer&)>& on_epoch);

}  // namespace gisd
