#include <doctest.h>

#include <numbers>

#include "fd.hpp"
#include "gisd/objective.hpp"

using namespace gisd;
using gisd::testing::central_difference;
using gisd::testing::relative_error;

namespace {

Vec random_vec(Rng& rng, int n, double scale = 1.0) {
    Vec v(static_cast<std::size_t>(n));
    for (auto& x : v) x = scale * rng.normal();
    return v;
}

// phi(x) = x on R^2 under the trivial group.
EquivariantFeatureMap identity_map() {
    const auto g = make_cyclic_group(1);
    const auto rep = DirectSumRep::from_spec(g, "0:2");
    EquivariantFeatureMap map(rep, rep, FrequencyMask::all(rep), {});
    map.net().params() = {1.0, 0.0, 0.0, 1.0, 0.0, 0.0};
    return map;
}

struct C4Map {
    DirectSumRep input;
    DirectSumRep features;
    EquivariantFeatureMap map;
};

C4Map c4_map(std::uint64_t seed, double scale = 1.0) {
    const auto g = make_cyclic_group(4);
    auto in = DirectSumRep::from_spec(g, "1:1");
    auto feat = DirectSumRep::from_spec(g, "0:1,1:1,2:1");
    EquivariantFeatureMap map(in, feat, FrequencyMask::all(feat), {8});
    Rng rng(seed);
    map.init(rng);
    for (auto& p : map.net().params()) p *= scale;
    return {in, feat, std::move(map)};
}

std::vector<Transition> random_batch(Rng& rng, int n, int skill_dim, double step = 0.3) {
    std::vector<Transition> batch;
    for (int i = 0; i < n; ++i) {
        Transition tr;
        tr.s = random_vec(rng, 2);
        tr.s_next = tr.s;
        for (auto& v : tr.s_next) v += step * rng.normal();
        tr.a = {0.0, 0.0};
        tr.z = sample_skill(rng, skill_dim);
        batch.push_back(tr);
    }
    return batch;
}

}  // namespace

TEST_CASE("skill prior") {
    Rng rng(1);
    SUBCASE("unit norm") {
        for (int d : {1, 2, 3, 6}) {
            for (int i = 0; i < 100; ++i) CHECK(std::abs(norm2(sample_skill(rng, d)) - 1.0) < 1e-12);
        }
    }
    SUBCASE("d = 1 gives signs") {
        int plus = 0;
        for (int i = 0; i < 10000; ++i) {
            const double z = sample_skill(rng, 1)[0];
            CHECK(std::abs(z) == 1.0);
            plus += z > 0;
        }
        CHECK(std::abs(plus - 5000) < 200);
    }
    SUBCASE("zero mean") {
        Vec mean(2, 0.0);
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            const Vec z = sample_skill(rng, 2);
            mean[0] += z[0] / n;
            mean[1] += z[1] / n;
        }
        CHECK(norm2(mean) < 0.02);
    }
    SUBCASE("rotated prior matches the prior") {
        // two-sample chi-squared on 16 angular bins; 30.578 is the 0.99 quantile at 15 dof
        const auto c8 = make_cyclic_group(8);
        const auto rep = DirectSumRep::from_spec(c8, "1:1");
        const int bins = 16;
        const int n = 50000;
        std::vector<double> a(bins, 0.0), b(bins, 0.0);
        auto bin = [&](const Vec& z) {
            const double t = std::atan2(z[1], z[0]) + std::numbers::pi;
            return std::min(bins - 1, static_cast<int>(t / (2 * std::numbers::pi) * bins));
        };
        for (int i = 0; i < n; ++i) {
            a[bin(sample_skill(rng, 2))] += 1;
            b[bin(rep.apply(3, sample_skill(rng, 2)))] += 1;
        }
        double stat = 0.0;
        for (int k = 0; k < bins; ++k) stat += (a[k] - b[k]) * (a[k] - b[k]) / (a[k] + b[k]);
        CHECK(stat < 30.578);
    }
    SUBCASE("masked prior lives on the support") {
        const auto mask = FrequencyMask::per_coordinate({0.0, 1.0, 1.0, 0.0});
        for (int i = 0; i < 50; ++i) {
            const Vec z = sample_skill(rng, mask);
            CHECK(z[0] == 0.0);
            CHECK(z[3] == 0.0);
            CHECK(std::abs(norm2(z) - 1.0) < 1e-12);
        }
    }
    SUBCASE("bad dimension") { CHECK_THROWS_AS(sample_skill(rng, 0), std::invalid_argument); }
}

TEST_CASE("intrinsic reward") {
    SUBCASE("hand example") {
        const auto map = identity_map();
        CHECK(intrinsic_reward(map, Vec{1.0, 0.0}, Vec{1.0, 0.0}, Vec{0.0, 1.0}) == -1.0);
        CHECK(intrinsic_reward(map, Vec{0.3, 0.5}, Vec{0.6, 0.8}, Vec{0.3, 0.5}) == 0.0);
    }
    SUBCASE("invariance under the joint action") {
        for (int n : {2, 4, 8}) {
            const auto g = make_cyclic_group(n);
            const auto in = DirectSumRep::from_spec(g, n == 2 ? "1:2" : "1:1");
            const auto feat = DirectSumRep::from_spec(g, n == 8 ? "0:1,1:1,2:1,3:1,4:1" : "0:1,1:1");
            EquivariantFeatureMap map(in, feat, FrequencyMask::all(feat), {8});
            Rng rng(40 + n);
            map.init(rng);
            double worst = 0.0;
            for (int t = 0; t < 1000; ++t) {
                const Vec s = random_vec(rng, 2);
                const Vec s2 = random_vec(rng, 2);
                const Vec z = sample_skill(rng, feat.total_dim());
                const int h = rng.uniform_int(n);
                const double r = intrinsic_reward(map, s, z, s2);
                const double rh = intrinsic_reward(map, in.apply(h, s), feat.apply(h, z), in.apply(h, s2));
                worst = std::max(worst, std::abs(r - rh));
            }
            CHECK(worst < 1e-10);
        }
    }
    SUBCASE("skill size checked") {
        const auto map = identity_map();
        CHECK_THROWS_AS(intrinsic_reward(map, Vec{0, 0}, Vec{1.0}, Vec{0, 0}), std::invalid_argument);
    }
}

TEST_CASE("discriminator objective") {
    SUBCASE("no displacement gives lambda * eps") {
        auto cm = c4_map(3);
        Rng rng(3);
        auto batch = random_batch(rng, 10, 4);
        for (auto& tr : batch) tr.s_next = tr.s;
        const auto res = discriminator_loss(cm.map, 2.5, batch, 1e-3);
        CHECK(res.objective == doctest::Approx(2.5e-3).epsilon(1e-12));
        CHECK(res.mean_slack == doctest::Approx(1e-3));
    }
    SUBCASE("lambda = 0 on one transition is the reward") {
        auto cm = c4_map(4);
        Rng rng(4);
        const auto batch = random_batch(rng, 1, 4);
        const auto res = discriminator_loss(cm.map, 0.0, batch, 1e-3);
        CHECK(res.objective == doctest::Approx(intrinsic_reward(cm.map, batch[0].s, batch[0].z, batch[0].s_next)));
    }
    SUBCASE("hand example with an active constraint") {
        // dphi = (2, 0), z = (1, 0): 2 + 0.5 * (1 - 4) = 0.5
        const auto map = identity_map();
        const std::vector<Transition> batch{{{0.0, 0.0}, {0.0}, {2.0, 0.0}, {1.0, 0.0}}};
        const auto res = discriminator_loss(map, 0.5, batch, 1e-3);
        CHECK(res.objective == doctest::Approx(0.5));
        CHECK(res.mean_slack == doctest::Approx(-3.0));
    }
    SUBCASE("kink takes the constraint branch") {
        // 1 - ||dphi||^2 == eps exactly: gradient includes the -2 lambda dphi term
        const auto map = identity_map();
        const double eps = 0.75;
        const std::vector<Transition> batch{{{0.0, 0.0}, {0.0}, {0.5, 0.0}, {1.0, 0.0}}};
        const auto res = discriminator_loss(map, 1.0, batch, eps);
        CHECK(res.mean_slack == 0.75);
        // d/d(bias_0) of [dphi_0 + lambda (1 - dphi^2)] is zero (bias cancels in the difference),
        // d/d(W_00) = s'_0 * (1 - 2 lambda dphi_0) = 0.5 * 0
        CHECK(std::abs(res.grad[0]) < 1e-15);
        const auto off = discriminator_loss(map, 1.0, batch, 0.7);  // slack branch: gradient = s'_0 = 0.5
        CHECK(off.grad[0] == doctest::Approx(0.5));
    }
    SUBCASE("gradient matches finite differences, 20 seeds") {
        for (int seed = 0; seed < 20; ++seed) {
            auto cm = c4_map(static_cast<std::uint64_t>(seed), 1.5);
            Rng rng(static_cast<std::uint64_t>(1000 + seed));
            const auto batch = random_batch(rng, 24, 4, 0.6);
            const double lambda = 0.5 + rng.uniform() * 3.0;
            const auto res = discriminator_loss(cm.map, lambda, batch, 1e-3);
            const Vec fd = central_difference(cm.map.net().params(), [&] {
                return discriminator_loss(cm.map, lambda, batch, 1e-3).objective;
            });
            CHECK(relative_error(res.grad, fd) < 1e-4);
        }
    }
    SUBCASE("chunked parallel sum agrees with the serial reference") {
        auto cm = c4_map(9);
        Rng rng(9);
        const auto batch = random_batch(rng, 77, 4, 0.8);
        const auto a = discriminator_loss(cm.map, 1.3, batch, 1e-3);
        const auto b = ref::discriminator_loss(cm.map, 1.3, batch, 1e-3);
        CHECK(std::abs(a.objective - b.objective) < 1e-12);
        CHECK(std::abs(a.mean_slack - b.mean_slack) < 1e-12);
        CHECK(max_abs_diff(a.grad, b.grad) < 1e-12);
        const auto again = discriminator_loss(cm.map, 1.3, batch, 1e-3);
        CHECK(again.objective == a.objective);
        CHECK(again.grad == a.grad);
    }
    SUBCASE("empty batch rejected") {
        const auto map = identity_map();
        CHECK_THROWS_AS(discriminator_loss(map, 1.0, std::vector<Transition>{}, 1e-3), std::invalid_argument);
    }
}

TEST_CASE("dual update") {
    SUBCASE("satisfied constraints shrink lambda by lr * eps") {
        DualVariable d{1.0, 0.1};
        const Vec slacks(5, 1e-3);
        dual_update(d, slacks);
        CHECK(d.lambda == doctest::Approx(1.0 - 1e-4));
    }
    SUBCASE("floored at zero") {
        DualVariable d{1e-5, 0.1};
        dual_update(d, Vec{1e-3});
        CHECK(d.lambda == 0.0);
    }
    SUBCASE("mean violation -0.5 raises lambda by lr / 2") {
        DualVariable d{0.2, 0.1};
        const double mean = dual_update(d, Vec{-1.0, 0.0});
        CHECK(mean == -0.5);
        CHECK(d.lambda == doctest::Approx(0.25));
    }
    SUBCASE("batch form uses the map") {
        const auto map = identity_map();
        const std::vector<Transition> batch{{{0.0, 0.0}, {0.0}, {2.0, 0.0}, {1.0, 0.0}},
                                            {{0.0, 0.0}, {0.0}, {0.0, 0.0}, {1.0, 0.0}}};
        DualVariable d{0.0, 1.0};
        CHECK(dual_update(d, map, batch, 1e-3) == doctest::Approx((-3.0 + 1e-3) / 2));
        CHECK(d.lambda == doctest::Approx((3.0 - 1e-3) / 2));
    }
    SUBCASE("alternating updates settle where the mean slack vanishes") {
        // scalar discriminator dphi = w, z = 1: ascent on w + lambda min(eps, 1 - w^2),
        // descent on lambda; the saddle is w = 1, lambda = 1/2
        double w = 0.2;
        DualVariable d{0.0, 1.0};
        const double eps = 1e-3;
        double slack = 0.0;
        for (int it = 0; it < 10000; ++it) {
            const bool active = 1.0 - w * w <= eps;
            w += 1e-3 * (1.0 - (active ? 2.0 * d.lambda * w : 0.0));
            slack = std::min(eps, 1.0 - w * w);
            dual_update(d, Vec{slack});
        }
        CHECK(std::abs(slack) < 1e-3);
        CHECK(d.lambda == doctest::Approx(0.5).epsilon(1e-2));
    }
}

TEST_CASE("GIWDM estimate") {
    auto cm = c4_map(17);
    Rng rng(17);
    std::vector<Trajectory> trajs;
    for (int k = 0; k < 12; ++k) {
        Trajectory tr;
        tr.skill = sample_skill(rng, 4);
        Vec s = random_vec(rng, 2, 0.3);
        for (int t = 0; t < 30; ++t) {
            Vec s2 = s;
            for (auto& v : s2) v += 0.1 * rng.normal();
            tr.steps.push_back({s, {0.0, 0.0}, intrinsic_reward(cm.map, s, tr.skill, s2), s2});
            s = s2;
        }
        trajs.push_back(tr);
    }
    SUBCASE("telescoping") {
        double mean = 0.0;
        for (const auto& tr : trajs) {
            double sum = 0.0;
            for (const auto& st : tr.steps) sum += st.reward;
            const double ends = dot(sub(cm.map.forward(tr.steps.back().s_next), cm.map.forward(tr.steps.front().s)), tr.skill);
            CHECK(std::abs(sum - ends) < 1e-10);
            mean += ends / trajs.size();
        }
        CHECK(std::abs(giwdm_estimate(cm.map, trajs) - mean) < 1e-12);
    }
    SUBCASE("stationary trajectories give zero") {
        auto still = trajs;
        for (auto& tr : still)
            for (auto& st : tr.steps) st.s_next = st.s = tr.steps.front().s;
        CHECK(giwdm_estimate(cm.map, still) == 0.0);
    }
    SUBCASE("invariant under joint relabeling") {
        const double base = giwdm_estimate(cm.map, trajs);
        for (int g = 0; g < 4; ++g) {
            auto moved = trajs;
            for (auto& tr : moved) {
                tr.skill = cm.features.apply(g, tr.skill);
                for (auto& st : tr.steps) {
                    st.s = cm.input.apply(g, st.s);
                    st.s_next = cm.input.apply(g, st.s_next);
                }
            }
            CHECK(std::abs(giwdm_estimate(cm.map, moved) - base) < 1e-12);
        }
    }
    SUBCASE("empty set rejected") {
        CHECK_THROWS_AS(giwdm_estimate(cm.map, std::vector<Trajectory>{}), std::invalid_argument);
    }
}
