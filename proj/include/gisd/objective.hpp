#pragma once

#include <span>
#include <vector>

#include "gisd/equivariant.hpp"
#include "gisd/symm_env.hpp"

namespace gisd {

/// Replay record (s, a, s', z).
struct Transition {
    Vec s;
    Vec a;
    Vec s_next;
    Vec z;
};

/// Uniform draw from the unit sphere S^{d-1} (normalized isotropic Gaussian).
Vec sample_skill(Rng& rng, int d);
/// Uniform on the unit sphere of the mask's support; zero elsewhere.
Vec sample_skill(Rng& rng, const FrequencyMask& mask);

/// r = <phi(s') - phi(s), z>.
double intrinsic_reward(const EquivariantFeatureMap& map, std::span<const double> s,
                        std::span<const double> z, std::span<const double> s_next);

struct DiscriminatorResult {
    double objective = 0.0;   // J_phi, to be maximized
    double mean_slack = 0.0;  // mean of min(eps, 1 - ||dphi||^2)
    Vec grad;                 // dJ_phi / dtheta
};

/// J_phi = mean [ <dphi, z> + lambda * min(eps, 1 - ||dphi||^2) ] and its
/// parameter gradient. At the kink (1 - ||dphi||^2 == eps) the constraint
/// branch is taken. Evaluated in fixed-size chunks under OpenMP and reduced in
/// chunk order, so the result does not depend on the thread count.
DiscriminatorResult discriminator_loss(const EquivariantFeatureMap& map, double lambda,
                                       std::span<const Transition> batch, double epsilon);

namespace ref {
DiscriminatorResult discriminator_loss(const EquivariantFeatureMap& map, double lambda,
                                       std::span<const Transition> batch, double epsilon);
}

struct DualVariable {
    double lambda = 0.0;
    double lr = 1e-2;
};

/// lambda <- max(0, lambda - lr * mean(slacks)). Returns the mean slack.
double dual_update(DualVariable& dual, std::span<const double> slacks);
double dual_update(DualVariable& dual, const EquivariantFeatureMap& map,
                   std::span<const Transition> batch, double epsilon);

/// Mean over trajectories of sum_t <phi(s_{t+1}) - phi(s_t), z>.
double giwdm_estimate(const EquivariantFeatureMap& map, std::span<const Trajectory> trajectories);

}  // namespace gisd
