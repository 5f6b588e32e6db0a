#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "gisd/kernels.hpp"
#include "gisd/equivariant.hpp"
#include "gisd/policy.hpp"

namespace gisd {

struct SemiMDPConfig {
    int interval = 10;          // K primitive steps per skill
    int goal_half_width = 2;    // goals drawn uniformly within this Chebyshev radius (cells)
    int episode_steps = 40;     // fixed primitive-step budget per episode
};

/// High-level policy pi_h(z | s, goal) over unit skills in one 2-D frequency-1
/// block of the feature space. The skill angle is Gaussian around the
/// direction of a network output computed from (position, goal - position);
/// with symmetrize = true that output is group-averaged so that
/// pi_h(rho_F(g) z | g s, g goal) = pi_h(z | s, goal).
class HighLevelPolicy {
public:
    HighLevelPolicy(DirectSumRep state_rep, DirectSumRep skill_rep, std::vector<double> skill_mask,
                    std::vector<int> hidden, double angle_std, bool symmetrize);

    void init(Rng& rng);

    /// Mean skill angle for (state, goal displacement).
    double mean_angle(std::span<const double> s, std::span<const double> rel_goal) const;
    Vec skill_from_angle(double angle) const;
    Vec mean_skill(std::span<const double> s, std::span<const double> rel_goal) const;
    /// Draws an angle; returns it so the caller can score it later.
    double sample_angle(std::span<const double> s, std::span<const double> rel_goal, Rng& rng) const;
    /// Adds weight * d log N(angle; mean_angle, std) / d theta into grad.
    double log_prob_grad(std::span<const double> s, std::span<const double> rel_goal, double angle,
                         double weight, std::span<double> grad) const;

    DiffNet& net() { return net_; }
    const DiffNet& net() const { return net_; }
    double angle_std() const { return angle_std_; }
    bool symmetric() const { return symmetrize_; }

private:
    Vec direction(std::span<const double> s, std::span<const double> rel_goal,
                  std::vector<DiffNet::Tape>* tapes) const;

    DirectSumRep state_rep_;
    DirectSumRep skill_rep_;
    int block_offset_ = 0;
    DiffNet net_;
    double angle_std_;
    bool symmetrize_;
};

struct HighLevelDecision {
    int t = 0;
    Vec s;
    Vec rel_goal;
    double angle = 0.0;
    Vec z;
    double reward_after = 0.0;  // extrinsic reward collected until the next decision
};

struct HierarchicalEpisode {
    double total_reward = 0.0;
    int steps = 0;
    int goal_events = 0;
    std::vector<HighLevelDecision> decisions;
    std::vector<Vec> goals;  // goal in force at each step
};

/// Runs one downstream episode on the tabular env. A new skill is chosen at
/// t = 0, every `interval` steps, and whenever the goal is reached; a goal is
/// reached on exact cell match, pays 1, and is replaced by a uniform draw from
/// the in-grid cells within goal_half_width of the agent (the current cell
/// excluded). `first_goal` overrides the initial draw.
HierarchicalEpisode run_hierarchical_episode(const TabularSymmetricMDP& env,
                                             const HighLevelPolicy& high, const Policy& low,
                                             const SemiMDPConfig& cfg, Rng& rng,
                                             bool greedy_high = false,
                                             std::optional<Vec> first_goal = std::nullopt);

/// Orbit closure {rho(g) z} of `count` skills drawn on the mask's sphere;
/// entry [i * |G| + g] is rho(g) z_i.
std::vector<Vec> orbit_closed_skills(const DirectSumRep& rep, const FrequencyMask& mask, int count,
                                     Rng& rng);

struct InvarianceReport {
    double max_abs = 0.0;  // max |P_k(gs'|gs,gz) - P_k(s'|s,z)|
    double max_tv = 0.0;   // max over rows of the total-variation distance
    int witness_g = 0;
    int witness_s = 0;
    int witness_skill = 0;
};

/// Exact k-step kernel comparison over every g, start state and skill of an
/// orbit-closed set laid out as orbit_closed_skills() returns it.
InvarianceReport verify_semi_mdp_invariance(
    const TabularSymmetricMDP& env, const std::function<PolicyTable(const Vec&)>& low_table,
    std::span<const Vec> orbit_skills, int k);

struct OrbitGeneralization {
    std::vector<Vec> states;      // s_t from (s0, z)
    std::vector<Vec> transformed; // s_t from (g s0, rho(g) z)
    double max_deviation = 0.0;   // max_t || g s_t - s_t^(g) ||
};

/// Paired deterministic rollouts; throws std::invalid_argument on a stochastic env.
OrbitGeneralization transform_skill_generalization(const Env& env, const Policy& low,
                                                   const Vec& z, int g, const Vec& s0, int T);

struct HighLevelTraining {
    double baseline_return = 0.0;      // mean eval return before training (R0)
    double final_return = 0.0;         // mean eval return after training
    std::vector<double> return_curve;  // mean training return per iteration
};

struct HighLevelTrainConfig {
    SemiMDPConfig semi;
    int iterations = 500;
    int episodes_per_iter = 8;
    int eval_episodes = 64;
    double lr = 1e-2;
    double gamma = 0.99;
    std::uint64_t seed = 0;
};

/// REINFORCE on the sparse extrinsic reward with the low level frozen.
HighLevelTraining train_high_level(const TabularSymmetricMDP& env, HighLevelPolicy& high,
                                   const Policy& low, const HighLevelTrainConfig& cfg);

double evaluate_high_level(const TabularSymmetricMDP& env, const HighLevelPolicy& high,
                           const Policy& low, const SemiMDPConfig& cfg, int episodes,
                           std::uint64_t seed);

/// FNV-1a over the raw parameter bytes.
std::uint64_t param_checksum(const DiffNet& net);

}  // namespace gisd
