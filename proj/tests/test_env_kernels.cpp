#include <doctest.h>

#include "gisd/kernels.hpp"
#include "gisd/symm_env.hpp"

using namespace gisd;

namespace {

int cell(const TabularSymmetricMDP& mdp, double x, double y) {
    const Vec v{x, y};
    return mdp.index_of(v);
}

// Random policy table that commutes with the group: pi(g a | g s) = pi(a | s).
PolicyTable random_equivariant_policy(const TabularSymmetricMDP& mdp, Rng& rng) {
    const int S = mdp.num_states();
    const int A = mdp.num_actions();
    const int G = mdp.group().order();
    PolicyTable pi = PolicyTable::Zero(S, A);
    PolicyTable raw(S, A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) raw(s, a) = 0.05 + rng.uniform();
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            for (int g = 0; g < G; ++g) pi(s, a) += raw(mdp.state_perm(g, s), mdp.action_perm(g, a));
        }
    for (int s = 0; s < S; ++s) pi.row(s) /= pi.row(s).sum();
    return pi;
}

}  // namespace

TEST_CASE("grid construction") {
    SUBCASE("even side rejected") { CHECK_THROWS_AS(build_grid_c4(4, 0.0), std::invalid_argument); }
    SUBCASE("slip out of range") { CHECK_THROWS_AS(build_grid_c4(3, 1.0), std::invalid_argument); }
    SUBCASE("rows are distributions") {
        const auto mdp = build_grid_c4(5, 0.2);
        for (int s = 0; s < mdp.num_states(); ++s)
            for (int a = 0; a < 4; ++a) {
                double total = 0.0;
                for (double p : mdp.row(s, a)) total += p;
                CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
            }
    }
    SUBCASE("wall bounce") {
        const auto mdp = build_grid_c4(3, 0.0);
        const int corner = cell(mdp, 1, 1);
        CHECK(mdp.prob(corner, 0, corner) == 1.0);
        CHECK(mdp.prob(corner, 2, cell(mdp, 0, 1)) == 1.0);
    }
    SUBCASE("quarter turn maps +x to +y") {
        const auto mdp = build_grid_c4(5, 0.0);
        CHECK(mdp.state_perm(1, cell(mdp, 2, 0)) == cell(mdp, 0, 2));
        CHECK(mdp.state_perm(2, cell(mdp, 1, 2)) == cell(mdp, -1, -2));
        CHECK(mdp.action_perm(1, 0) == 1);
        CHECK(mdp.action_perm(3, 0) == 3);
    }
    SUBCASE("dynamics invariance") {
        CHECK(verify_invariance(build_grid_c4(5, 0.0)) == 0.0);
        CHECK(verify_invariance(build_grid_c4(7, 0.3)) < 1e-15);
        CHECK(verify_invariance(build_chain(4)) == 0.0);
    }
    SUBCASE("start in the centre") {
        const auto mdp = build_grid_c4(5, 0.0);
        Rng rng(1);
        CHECK(mdp.initial_state(rng) == Vec{0.0, 0.0});
    }
    SUBCASE("unknown coordinates rejected") {
        const auto mdp = build_grid_c4(3, 0.0);
        CHECK_THROWS(cell(mdp, 5, 5));
    }
    SUBCASE("sampled step frequencies follow the row") {
        const auto mdp = build_grid_c4(5, 0.3);
        Rng rng(9);
        const int s = cell(mdp, 0, 0);
        std::vector<int> counts(static_cast<std::size_t>(mdp.num_states()), 0);
        const int n = 40000;
        for (int i = 0; i < n; ++i) ++counts[mdp.step_index(s, 0, rng)];
        CHECK(counts[cell(mdp, 1, 0)] / double(n) == doctest::Approx(0.7).epsilon(0.02));
        CHECK(counts[cell(mdp, 0, 1)] / double(n) == doctest::Approx(0.1).epsilon(0.08));
        CHECK(mdp.mode_step_index(s, 0) == cell(mdp, 1, 0));
    }
}

TEST_CASE("point mass") {
    const PointMassEnv env(PointMassConfig{});
    Rng rng(0);
    SUBCASE("plain step") {
        const Vec s{0.2, -0.1};
        const Vec a{0.5, 0.3};
        const Vec out = env.step(s, a, rng);
        CHECK(out[0] == doctest::Approx(0.25));
        CHECK(out[1] == doctest::Approx(-0.07));
    }
    SUBCASE("action clipped to the speed disc") {
        const Vec out = env.step(Vec{0.0, 0.0}, Vec{3.0, 4.0}, rng);
        CHECK(out[0] == doctest::Approx(0.06));
        CHECK(out[1] == doctest::Approx(0.08));
    }
    SUBCASE("position clipped to the arena") {
        const Vec out = env.step(Vec{0.95, 0.0}, Vec{1.0, 0.0}, rng);
        CHECK(out[0] == doctest::Approx(1.0));
        CHECK(out[1] == doctest::Approx(0.0));
    }
    SUBCASE("equivariant step") {
        Rng draws(4);
        for (int t = 0; t < 200; ++t) {
            const Vec s{draws.uniform() - 0.5, draws.uniform() - 0.5};
            const Vec a{4 * draws.normal(), 4 * draws.normal()};
            const int g = draws.uniform_int(4);
            const Vec lhs = env.step(env.act_on_state(g, s), env.act_on_action(g, a), rng);
            const Vec rhs = env.act_on_state(g, env.step(s, a, rng));
            CHECK(max_abs_diff(lhs, rhs) < 1e-12);
        }
    }
    SUBCASE("noise makes it stochastic") {
        PointMassConfig cfg;
        cfg.noise_std = 0.05;
        const PointMassEnv noisy(cfg);
        CHECK_FALSE(noisy.is_deterministic());
        CHECK(env.is_deterministic());
    }
    SUBCASE("bad config rejected") {
        PointMassConfig cfg;
        cfg.dt = 0.0;
        CHECK_THROWS_AS(PointMassEnv{cfg}, std::invalid_argument);
    }
}

TEST_CASE("k-step kernel") {
    SUBCASE("3x3 grid, uniform policy, hand-computed rows from the centre") {
        const auto mdp = build_grid_c4(3, 0.0);
        const auto pi = uniform_policy(mdp);
        const int c = cell(mdp, 0, 0);
        const auto P1 = k_step_kernel(mdp, pi, 1);
        CHECK(P1(c, cell(mdp, 1, 0)) == doctest::Approx(0.25));
        CHECK(P1(c, c) == 0.0);
        const auto P2 = k_step_kernel(mdp, pi, 2);
        CHECK(P2(c, c) == doctest::Approx(0.25));
        CHECK(P2(c, cell(mdp, 1, 0)) == doctest::Approx(1.0 / 16));
        CHECK(P2(c, cell(mdp, 1, 1)) == doctest::Approx(1.0 / 8));
    }
    SUBCASE("matches the path-sum reference") {
        const auto mdp = build_grid_c4(5, 0.2);
        Rng rng(2);
        const auto pi = random_equivariant_policy(mdp, rng);
        for (int k = 1; k <= 3; ++k) {
            const auto fast = k_step_kernel(mdp, pi, k);
            const auto slow = ref::k_step_kernel(mdp, pi, k);
            CHECK((fast - slow).cwiseAbs().maxCoeff() < 1e-13);
            CHECK((fast.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-13);
        }
    }
    SUBCASE("two-step Monte Carlo") {
        const auto mdp = build_grid_c4(3, 0.3);
        Rng rng(6);
        const auto pi = random_equivariant_policy(mdp, rng);
        const auto P2 = k_step_kernel(mdp, pi, 2);
        const int start = cell(mdp, 1, 0);
        std::vector<double> freq(9, 0.0);
        const int n = 400000;
        for (int i = 0; i < n; ++i) {
            int s = start;
            for (int t = 0; t < 2; ++t) {
                double u = rng.uniform();
                int a = 0;
                while (a < 3 && u >= pi(s, a)) u -= pi(s, a++);
                s = mdp.step_index(s, a, rng);
            }
            freq[static_cast<std::size_t>(s)] += 1.0 / n;
        }
        for (int s = 0; s < 9; ++s) {
            const double se = std::sqrt(P2(start, s) * (1.0 - P2(start, s)) / n);
            CHECK(std::abs(freq[s] - P2(start, s)) <= 3.0 * se + 1e-12);
        }
    }
    SUBCASE("k < 1 rejected") {
        const auto mdp = build_grid_c4(3, 0.0);
        CHECK_THROWS_AS(k_step_kernel(mdp, uniform_policy(mdp), 0), std::invalid_argument);
    }
}

TEST_CASE("occupancy recursion") {
    const auto mdp = build_grid_c4(5, 0.1);
    Rng rng(3);
    const auto pi = random_equivariant_policy(mdp, rng);
    const auto fast = occupancy_recursion(mdp, pi, 20);
    const auto slow = ref::occupancy_recursion(mdp, pi, 20);
    REQUIRE(fast.size() == 21);
    CHECK(fast[0](cell(mdp, 0, 0)) == 1.0);
    for (std::size_t t = 0; t < fast.size(); ++t) {
        CHECK((fast[t] - slow[t]).cwiseAbs().maxCoeff() < 1e-14);
        CHECK(fast[t].sum() == doctest::Approx(1.0).epsilon(1e-13));
    }
    SUBCASE("uniform policy first step") {
        const auto occ = occupancy_recursion(mdp, uniform_policy(mdp), 1);
        CHECK(occ[1](cell(mdp, 0, 1)) == doctest::Approx(0.25));
    }
}

TEST_CASE("temporal distance") {
    SUBCASE("deterministic chain walking right") {
        const auto chain = build_chain(6);
        PolicyTable right = PolicyTable::Zero(6, 2);
        right.col(0).setOnes();
        const auto d = temporal_distance(chain, right);
        CHECK(d(0, 5) == doctest::Approx(5.0).epsilon(1e-9));
        CHECK(d(2, 2) == 0.0);
        CHECK(d(5, 0) == kUnreachable);
    }
    SUBCASE("three-cell chain, uniform policy") {
        // d(0,2) = 1 + (d(0,2) + d(1,2)) / 2, d(1,2) = 1 + d(0,2) / 2  =>  6 and 4
        const auto chain = build_chain(3);
        const auto d = temporal_distance(chain, uniform_policy(chain));
        CHECK(d(0, 2) == doctest::Approx(6.0).epsilon(1e-9));
        CHECK(d(1, 2) == doctest::Approx(4.0).epsilon(1e-9));
        CHECK(d(2, 0) == doctest::Approx(6.0).epsilon(1e-9));
    }
    SUBCASE("grid agrees with the linear solve and is symmetric") {
        const auto mdp = build_grid_c4(5, 0.0);
        const auto pi = uniform_policy(mdp);
        const auto d = temporal_distance(mdp, pi, 1e-10);
        const auto exact = ref::temporal_distance(mdp, pi);
        CHECK((d - exact).cwiseAbs().maxCoeff() < 1e-6);
        double worst = 0.0;
        for (int g = 0; g < 4; ++g)
            for (int a = 0; a < 25; ++a)
                for (int b = 0; b < 25; ++b)
                    worst = std::max(worst, std::abs(d(mdp.state_perm(g, a), mdp.state_perm(g, b)) - d(a, b)));
        CHECK(worst < 1e-8);
    }
}
