#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gisd/diffnet.hpp"
#include "gisd/groups.hpp"

namespace gisd {

/// Per-coordinate gate on the Fourier feature vector. Built per irrep block it
/// commutes with the representation; per_coordinate() exists so tests and the
/// invariant battery can inject a mask that does not.
class FrequencyMask {
public:
    static FrequencyMask all(const DirectSumRep& rep);
    /// One weight per entry of rep.blocks(), shared by all copies of that irrep.
    static FrequencyMask per_block(const DirectSumRep& rep, const std::vector<double>& weights);
    /// Keeps the listed frequencies, zeroes the rest.
    static FrequencyMask keep_frequencies(const DirectSumRep& rep, const std::vector<int>& freqs);
    static FrequencyMask per_coordinate(Vec weights);

    const Vec& weights() const { return weights_; }
    int dim() const { return static_cast<int>(weights_.size()); }
    bool is_block_constant(const DirectSumRep& rep) const;
    /// Coordinates with a nonzero weight.
    std::vector<int> support() const;
    Vec apply(std::span<const double> v) const;

private:
    explicit FrequencyMask(Vec w) : weights_(std::move(w)) {}
    Vec weights_;
};

/// phi_F(s) = M (1/|G|) sum_g rho_F(g)^T h(g s), equivariant for every value of
/// the parameters of h. With symmetrize = false it is the plain masked network
/// h (the unconstrained ablation).
class EquivariantFeatureMap {
public:
    struct Tape {
        std::vector<DiffNet::Tape> per_element;
    };

    EquivariantFeatureMap(DirectSumRep input_rep, DirectSumRep rep, FrequencyMask mask,
                          std::vector<int> hidden, bool symmetrize = true);

    void init(Rng& rng);

    const DirectSumRep& input_rep() const { return input_rep_; }
    const DirectSumRep& rep() const { return rep_; }
    const FrequencyMask& mask() const { return mask_; }
    const FiniteGroup& group() const { return rep_.group(); }
    bool symmetric() const { return symmetrize_; }
    int dim() const { return rep_.total_dim(); }

    DiffNet& net() { return net_; }
    const DiffNet& net() const { return net_; }

    Vec forward(std::span<const double> x, Tape* tape = nullptr) const;
    /// Adds (d phi / d theta)^T cotangent into grad.
    void backward(const Tape& tape, std::span<const double> cotangent, std::span<double> grad) const;

private:
    DirectSumRep input_rep_;
    DirectSumRep rep_;
    FrequencyMask mask_;
    DiffNet net_;
    bool symmetrize_;
};

using ScoringFn = std::function<double(std::span<const double> s, std::span<const double> z)>;
using GroupActionFn = std::function<Vec(int g, std::span<const double> x)>;

/// f~(s,z) = (1/|G|) sum_g f(g s, g z).
ScoringFn group_average_scoring(const FiniteGroup& group, ScoringFn f, GroupActionFn act_state,
                                GroupActionFn act_skill);

/// min(eps, 1 - ||delta||^2); negative iff the unit-step constraint is violated.
double lipschitz_slack(std::span<const double> delta, double epsilon);
double lipschitz_violation(const EquivariantFeatureMap& map, std::span<const double> s,
                           std::span<const double> s_next, double epsilon);

}  // namespace gisd
