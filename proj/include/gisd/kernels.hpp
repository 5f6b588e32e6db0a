#pragma once

#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "gisd/symm_env.hpp"

namespace gisd {

/// Explicit policy pi(a|s) for one fixed skill: rows are states, columns
/// actions, each row a distribution.
using PolicyTable = Eigen::MatrixXd;

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

PolicyTable uniform_policy(const TabularSymmetricMDP& mdp);

/// One-step state kernel T(s'|s) = sum_a pi(a|s) P(s'|s,a).
Eigen::MatrixXd skill_transition(const TabularSymmetricMDP& mdp, const PolicyTable& pi);

/// k-step high-level kernel P_k[s][s'] (rows sum to 1). OpenMP over start states.
Eigen::MatrixXd k_step_kernel(const TabularSymmetricMDP& mdp, const PolicyTable& pi, int k);

/// State marginals p_t for t = 0..horizon from init_dist.
std::vector<Eigen::VectorXd> occupancy_recursion(const TabularSymmetricMDP& mdp,
                                                 const PolicyTable& pi, int horizon);

/// Expected number of transitions from s1 to first reach s2, by Jacobi value
/// iteration until the sup-norm update falls below `tol`. Pairs that are not
/// reached with probability one are kUnreachable. OpenMP over targets.
Eigen::MatrixXd temporal_distance(const TabularSymmetricMDP& mdp, const PolicyTable& pi,
                                  double tol = 1e-10, int max_iter = 10'000'000);

/// Serial reference implementations kept for testing and benchmarking.
namespace ref {

/// Literal path sum over every intermediate (action, state) sequence.
Eigen::MatrixXd k_step_kernel(const TabularSymmetricMDP& mdp, const PolicyTable& pi, int k);

std::vector<Eigen::VectorXd> occupancy_recursion(const TabularSymmetricMDP& mdp,
                                                 const PolicyTable& pi, int horizon);

/// Direct linear solve (I - T_F) d = 1 on the finite-hitting-time set F.
Eigen::MatrixXd temporal_distance(const TabularSymmetricMDP& mdp, const PolicyTable& pi);

}  // namespace ref

}  // namespace gisd
