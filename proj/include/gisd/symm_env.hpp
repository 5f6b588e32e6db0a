#pragma once

#include <map>
#include <span>
#include <vector>

#include "gisd/groups.hpp"
#include "gisd/rng.hpp"
#include "gisd/types.hpp"

namespace gisd {

/// Environment whose dynamics are invariant under a finite group acting on
/// states and actions. States and actions are exchanged as raw numeric vectors:
/// cell coordinates / action index for tabular envs, positions / velocities for
/// continuous ones.
class Env {
public:
    virtual ~Env() = default;

    virtual const FiniteGroup& group() const = 0;
    /// Representation by which the group acts on raw state vectors.
    virtual const DirectSumRep& state_rep() const = 0;
    virtual int state_dim() const = 0;
    virtual int action_dim() const = 0;
    virtual bool is_tabular() const = 0;
    virtual bool is_deterministic() const = 0;

    virtual Vec initial_state(Rng& rng) const = 0;
    virtual Vec step(std::span<const double> s, std::span<const double> a, Rng& rng) const = 0;
    virtual Vec act_on_state(int g, std::span<const double> s) const = 0;
    virtual Vec act_on_action(int g, std::span<const double> a) const = 0;
};

class TabularSymmetricMDP final : public Env {
public:
    TabularSymmetricMDP(DirectSumRep feature_rep, std::vector<Vec> features, int num_actions,
                        std::vector<double> transition, Vec init_dist,
                        std::vector<std::vector<int>> state_perm,
                        std::vector<std::vector<int>> action_perm);

    int num_states() const { return num_states_; }
    int num_actions() const { return num_actions_; }

    double prob(int s, int a, int s_next) const {
        return transition_[static_cast<std::size_t>((s * num_actions_ + a) * num_states_ + s_next)];
    }
    std::span<const double> row(int s, int a) const {
        return {transition_.data() + static_cast<std::size_t>((s * num_actions_ + a) * num_states_),
                static_cast<std::size_t>(num_states_)};
    }
    const Vec& init_dist() const { return init_dist_; }
    int state_perm(int g, int s) const { return state_perm_[g][s]; }
    int action_perm(int g, int a) const { return action_perm_[g][a]; }
    const Vec& features(int s) const { return features_[static_cast<std::size_t>(s)]; }
    /// Exact lookup of a state index from its coordinate vector.
    int index_of(std::span<const double> x) const;

    /// Sample s' ~ P(.|s,a) by inverse CDF on one uniform draw.
    int step_index(int s, int a, Rng& rng) const;
    /// Most likely successor (lowest index on ties).
    int mode_step_index(int s, int a) const;

    const FiniteGroup& group() const override { return rep_.group(); }
    const DirectSumRep& state_rep() const override { return rep_; }
    int state_dim() const override { return rep_.total_dim(); }
    int action_dim() const override { return 1; }
    bool is_tabular() const override { return true; }
    bool is_deterministic() const override;
    Vec initial_state(Rng& rng) const override;
    Vec step(std::span<const double> s, std::span<const double> a, Rng& rng) const override;
    Vec act_on_state(int g, std::span<const double> s) const override;
    Vec act_on_action(int g, std::span<const double> a) const override;

private:
    DirectSumRep rep_;
    std::vector<Vec> features_;
    int num_states_;
    int num_actions_;
    std::vector<double> transition_;
    Vec init_dist_;
    std::vector<std::vector<int>> state_perm_;
    std::vector<std::vector<int>> action_perm_;
    std::map<Vec, int> index_;
};

/// side x side grid centred on the origin, C4 acting by quarter turns about the
/// centre cell. Actions 0..3 move +x, +y, -x, -y; a quarter turn maps action a
/// to (a+1) mod 4. The intended move succeeds with probability 1-slip and each
/// other move happens with probability slip/3; moves into a wall leave the
/// agent in place. Episodes start in the centre cell.
TabularSymmetricMDP build_grid_c4(int side, double slip);

/// Deterministic 1-D chain of `length` cells under the trivial group.
/// Action 0 moves right, action 1 moves left; the ends bounce back.
TabularSymmetricMDP build_chain(int length);

/// Largest |P[g s][g a][g s'] - P[s][a][s']| over all g, s, a, s'. Zero for a
/// correctly constructed env.
double verify_invariance(const TabularSymmetricMDP& mdp);

struct PointMassConfig {
    int group_order = 4;
    double dt = 0.1;
    double arena_radius = 1.0;
    double max_speed = 1.0;
    double noise_std = 0.0;
};

/// Planar point mass: s' = clip_R(s + dt * clip_v(a) + noise), where both
/// clips project onto discs so they commute with every rotation.
class PointMassEnv final : public Env {
public:
    explicit PointMassEnv(PointMassConfig cfg);

    const PointMassConfig& config() const { return cfg_; }

    const FiniteGroup& group() const override { return rep_.group(); }
    const DirectSumRep& state_rep() const override { return rep_; }
    int state_dim() const override { return 2; }
    int action_dim() const override { return 2; }
    bool is_tabular() const override { return false; }
    bool is_deterministic() const override { return cfg_.noise_std == 0.0; }
    Vec initial_state(Rng& rng) const override;
    Vec step(std::span<const double> s, std::span<const double> a, Rng& rng) const override;
    Vec act_on_state(int g, std::span<const double> s) const override;
    Vec act_on_action(int g, std::span<const double> a) const override;

private:
    PointMassConfig cfg_;
    DirectSumRep rep_;
};

struct Step {
    Vec s;
    Vec a;
    double reward = 0.0;
    Vec s_next;
};

struct Trajectory {
    Vec skill;
    std::vector<Step> steps;
};

}  // namespace gisd
