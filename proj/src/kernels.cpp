#include "gisd/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace gisd {

namespace {

void check_policy(const TabularSymmetricMDP& mdp, const PolicyTable& pi) {
    if (pi.rows() != mdp.num_states() || pi.cols() != mdp.num_actions()) {
        throw std::invalid_argument("policy table shape does not match the MDP");
    }
}

// States from which `target` is hit with probability one: start from the set
// that can reach the target and repeatedly drop states with an edge leaving it.
std::vector<bool> finite_hitting_set(const Eigen::MatrixXd& T, int target) {
    const int S = static_cast<int>(T.rows());
    std::vector<bool> in(static_cast<std::size_t>(S), false);
    in[target] = true;
    bool grew = true;
    while (grew) {
        grew = false;
        for (int s = 0; s < S; ++s) {
            if (in[s]) continue;
            for (int j = 0; j < S; ++j) {
                if (T(s, j) > 0.0 && in[j]) {
                    in[s] = true;
                    grew = true;
                    break;
                }
            }
        }
    }
    bool shrunk = true;
    while (shrunk) {
        shrunk = false;
        for (int s = 0; s < S; ++s) {
            if (!in[s] || s == target) continue;
            for (int j = 0; j < S; ++j) {
                if (T(s, j) > 0.0 && !in[j]) {
                    in[s] = false;
                    shrunk = true;
                    break;
                }
            }
        }
    }
    return in;
}

}  // namespace

PolicyTable uniform_policy(const TabularSymmetricMDP& mdp) {
    return PolicyTable::Constant(mdp.num_states(), mdp.num_actions(), 1.0 / mdp.num_actions());
}

Eigen::MatrixXd skill_transition(const TabularSymmetricMDP& mdp, const PolicyTable& pi) {
    check_policy(mdp, pi);
    const int S = mdp.num_states();
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(S, S);
#pragma omp parallel for schedule(static)
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < mdp.num_actions(); ++a) {
            const double w = pi(s, a);
            if (w == 0.0) continue;
            const auto r = mdp.row(s, a);
            for (int j = 0; j < S; ++j) T(s, j) += w * r[j];
        }
    }
    return T;
}

Eigen::MatrixXd k_step_kernel(const TabularSymmetricMDP& mdp, const PolicyTable& pi, int k) {
    if (k < 1) throw std::invalid_argument("k_step_kernel: k must be >= 1");
    const Eigen::MatrixXd T = skill_transition(mdp, pi);
    const int S = mdp.num_states();
    Eigen::MatrixXd out(S, S);
#pragma omp parallel for schedule(static)
    for (int s = 0; s < S; ++s) {
        Eigen::RowVectorXd p = T.row(s);
        for (int i = 1; i < k; ++i) p = p * T;
        out.row(s) = p;
    }
    return out;
}

std::vector<Eigen::VectorXd> occupancy_recursion(const TabularSymmetricMDP& mdp,
                                                 const PolicyTable& pi, int horizon) {
    if (horizon < 0) throw std::invalid_argument("occupancy_recursion: negative horizon");
    const Eigen::MatrixXd T = skill_transition(mdp, pi);
    const int S = mdp.num_states();
    std::vector<Eigen::VectorXd> out;
    out.push_back(Eigen::Map<const Eigen::VectorXd>(mdp.init_dist().data(), S));
    for (int t = 0; t < horizon; ++t) {
        const Eigen::VectorXd& p = out.back();
        Eigen::VectorXd next(S);
#pragma omp parallel for schedule(static)
        for (int j = 0; j < S; ++j) {
            double acc = 0.0;
            for (int s = 0; s < S; ++s) acc += T(s, j) * p(s);
            next(j) = acc;
        }
        out.push_back(std::move(next));
    }
    return out;
}

Eigen::MatrixXd temporal_distance(const TabularSymmetricMDP& mdp, const PolicyTable& pi,
                                  double tol, int max_iter) {
    const Eigen::MatrixXd T = skill_transition(mdp, pi);
    const int S = mdp.num_states();
    Eigen::MatrixXd D = Eigen::MatrixXd::Constant(S, S, kUnreachable);
    bool converged = true;
#pragma omp parallel for schedule(dynamic) reduction(&& : converged)
    for (int target = 0; target < S; ++target) {
        const auto in = finite_hitting_set(T, target);
        Eigen::VectorXd d = Eigen::VectorXd::Zero(S);
        Eigen::VectorXd next(S);
        int iter = 0;
        for (; iter < max_iter; ++iter) {
            double change = 0.0;
            for (int s = 0; s < S; ++s) {
                if (!in[s] || s == target) {
                    next(s) = 0.0;
                    continue;
                }
                double acc = 1.0;
                for (int j = 0; j < S; ++j) {
                    if (in[j]) acc += T(s, j) * d(j);
                }
                next(s) = acc;
                change = std::max(change, std::abs(acc - d(s)));
            }
            d.swap(next);
            if (change < tol) break;
        }
        if (iter == max_iter) converged = false;
        for (int s = 0; s < S; ++s) {
            if (in[s]) D(s, target) = d(s);
        }
    }
    if (!converged) throw std::runtime_error("temporal_distance: value iteration did not converge");
    return D;
}

namespace ref {

Eigen::MatrixXd k_step_kernel(const TabularSymmetricMDP& mdp, const PolicyTable& pi, int k) {
    check_policy(mdp, pi);
    if (k < 1) throw std::invalid_argument("k_step_kernel: k must be >= 1");
    const int S = mdp.num_states();
    const int A = mdp.num_actions();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(S, S);
    // depth-first over (a_i, s_{i+1}) sequences carrying the path weight
    auto expand = [&](auto&& self, int start, int s, int depth, double weight) -> void {
        for (int a = 0; a < A; ++a) {
            const double wa = weight * pi(s, a);
            if (wa == 0.0) continue;
            for (int j = 0; j < S; ++j) {
                const double w = wa * mdp.prob(s, a, j);
                if (w == 0.0) continue;
                if (depth + 1 == k) {
                    out(start, j) += w;
                } else {
                    self(self, start, j, depth + 1, w);
                }
            }
        }
    };
    for (int s = 0; s < S; ++s) expand(expand, s, s, 0, 1.0);
    return out;
}

std::vector<Eigen::VectorXd> occupancy_recursion(const TabularSymmetricMDP& mdp,
                                                 const PolicyTable& pi, int horizon) {
    check_policy(mdp, pi);
    const int S = mdp.num_states();
    std::vector<Eigen::VectorXd> out;
    out.push_back(Eigen::Map<const Eigen::VectorXd>(mdp.init_dist().data(), S));
    for (int t = 0; t < horizon; ++t) {
        Eigen::VectorXd next = Eigen::VectorXd::Zero(S);
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < mdp.num_actions(); ++a)
                for (int j = 0; j < S; ++j) next(j) += out.back()(s) * pi(s, a) * mdp.prob(s, a, j);
        out.push_back(std::move(next));
    }
    return out;
}

Eigen::MatrixXd temporal_distance(const TabularSymmetricMDP& mdp, const PolicyTable& pi) {
    const Eigen::MatrixXd T = skill_transition(mdp, pi);
    const int S = mdp.num_states();
    Eigen::MatrixXd D = Eigen::MatrixXd::Constant(S, S, kUnreachable);
    for (int target = 0; target < S; ++target) {
        const auto in = finite_hitting_set(T, target);
        std::vector<int> idx;
        for (int s = 0; s < S; ++s)
            if (in[s] && s != target) idx.push_back(s);
        D(target, target) = 0.0;
        if (idx.empty()) continue;
        const int n = static_cast<int>(idx.size());
        Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) M(i, j) -= T(idx[i], idx[j]);
        const Eigen::VectorXd d = M.fullPivLu().solve(Eigen::VectorXd::Ones(n));
        for (int i = 0; i < n; ++i) D(idx[i], target) = d(i);
    }
    return D;
}

}  // namespace ref

}  // namespace gisd
