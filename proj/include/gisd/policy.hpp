#pragma once

#include <memory>
#include <span>
#include <vector>

#include "gisd/diffnet.hpp"
#include "gisd/groups.hpp"
#include "gisd/kernels.hpp"

namespace gisd {

/// Skill-conditioned low-level policy pi(a|s,z). With symmetrize = true the
/// network output is averaged over the group so that
/// pi(g a | g s, rho_F(g) z) = pi(a | s, z) for every parameter value.
class Policy {
public:
    virtual ~Policy() = default;

    virtual Vec sample(std::span<const double> s, std::span<const double> z, Rng& rng) const = 0;
    /// Deterministic action used for evaluation rollouts.
    virtual Vec mode(std::span<const double> s, std::span<const double> z) const = 0;
    virtual double log_prob(std::span<const double> s, std::span<const double> z,
                            std::span<const double> a) const = 0;
    /// Adds weight * d log pi(a|s,z) / d theta into grad; returns log pi(a|s,z).
    virtual double log_prob_grad(std::span<const double> s, std::span<const double> z,
                                 std::span<const double> a, double weight,
                                 std::span<double> grad) const = 0;
    virtual std::unique_ptr<Policy> clone() const = 0;

    DiffNet& net() { return net_; }
    const DiffNet& net() const { return net_; }
    bool symmetric() const { return symmetrize_; }
    const DirectSumRep& state_rep() const { return state_rep_; }
    const DirectSumRep& skill_rep() const { return skill_rep_; }
    const FiniteGroup& group() const { return state_rep_.group(); }

protected:
    Policy(DirectSumRep state_rep, DirectSumRep skill_rep, bool symmetrize)
        : state_rep_(std::move(state_rep)), skill_rep_(std::move(skill_rep)), symmetrize_(symmetrize) {}

    int terms() const { return symmetrize_ ? group().order() : 1; }
    /// Network input for group element g: [g s, rho_F(g) z] (or [s, z] unsymmetrized).
    Vec input(int g, std::span<const double> s, std::span<const double> z) const;

    DirectSumRep state_rep_;
    DirectSumRep skill_rep_;
    DiffNet net_;
    bool symmetrize_;
};

/// Softmax policy over a finite action set permuted by the group:
/// logit(a|s,z) = (1/|G|) sum_g L(g s, g z)[g a].
class TabularPolicy final : public Policy {
public:
    TabularPolicy(DirectSumRep state_rep, DirectSumRep skill_rep,
                  std::vector<std::vector<int>> action_perm, std::vector<int> hidden,
                  bool symmetrize = true);

    int num_actions() const { return static_cast<int>(action_perm_.front().size()); }
    Vec logits(std::span<const double> s, std::span<const double> z) const;
    Vec probs(std::span<const double> s, std::span<const double> z) const;
    /// pi(.|s,z) for every state of the MDP.
    PolicyTable table(const TabularSymmetricMDP& mdp, std::span<const double> z) const;

    Vec sample(std::span<const double> s, std::span<const double> z, Rng& rng) const override;
    Vec mode(std::span<const double> s, std::span<const double> z) const override;
    double log_prob(std::span<const double> s, std::span<const double> z,
                    std::span<const double> a) const override;
    double log_prob_grad(std::span<const double> s, std::span<const double> z,
                         std::span<const double> a, double weight,
                         std::span<double> grad) const override;
    std::unique_ptr<Policy> clone() const override;

private:
    std::vector<std::vector<int>> action_perm_;
};

/// Isotropic Gaussian policy on planar velocity commands with mean
/// mu(s,z) = (1/|G|) sum_g g^{-1} (v_max tanh L(g s, g z)).
class GaussianPolicy final : public Policy {
public:
    GaussianPolicy(DirectSumRep state_rep, DirectSumRep skill_rep, std::vector<int> hidden,
                   double max_speed, double stddev, bool symmetrize = true);

    double stddev() const { return stddev_; }
    Vec mean(std::span<const double> s, std::span<const double> z) const;

    Vec sample(std::span<const double> s, std::span<const double> z, Rng& rng) const override;
    Vec mode(std::span<const double> s, std::span<const double> z) const override;
    double log_prob(std::span<const double> s, std::span<const double> z,
                    std::span<const double> a) const override;
    double log_prob_grad(std::span<const double> s, std::span<const double> z,
                         std::span<const double> a, double weight,
                         std::span<double> grad) const override;
    std::unique_ptr<Policy> clone() const override;

private:
    double max_speed_;
    double stddev_;
};

/// State-skill value baseline, group-averaged (hence invariant) when
/// symmetrize = true.
class ValueBaseline {
public:
    ValueBaseline(DirectSumRep state_rep, DirectSumRep skill_rep, std::vector<int> hidden,
                  bool symmetrize = true);

    double value(std::span<const double> s, std::span<const double> z) const;
    /// Adds weight * dV/dtheta into grad; returns V.
    double value_grad(std::span<const double> s, std::span<const double> z, double weight,
                      std::span<double> grad) const;

    DiffNet& net() { return net_; }
    const DiffNet& net() const { return net_; }

private:
    Vec input(int g, std::span<const double> s, std::span<const double> z) const;

    DirectSumRep state_rep_;
    DirectSumRep skill_rep_;
    DiffNet net_;
    bool symmetrize_;
};

}  // namespace gisd
