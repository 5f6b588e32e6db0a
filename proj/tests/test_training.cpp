#include <doctest.h>

#include <deque>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "fd.hpp"
#include "gisd/checkpoint.hpp"
#include "gisd/training.hpp"

using namespace gisd;
using gisd::testing::central_difference;
using gisd::testing::relative_error;

namespace {

Config small_pointmass() {
    Config c;
    c.env = "pointmass";
    c.rep = "0:1,1:1,2:1";
    c.mask = {0.0, 1.0, 0.0};
    c.phi_hidden = {8};
    c.policy_hidden = {8};
    c.value_hidden = {8};
    c.epochs = 4;
    c.episodes = 3;
    c.horizon = 10;
    c.batch_size = 16;
    c.phi_steps = 3;
    c.policy_steps = 2;
    c.eval_skills = 4;
    c.coverage_every = 2;
    return c;
}

Config small_grid() {
    Config c;
    c.env = "grid";
    c.grid_side = 3;
    c.phi_hidden = {8};
    c.policy_hidden = {8};
    c.value_hidden = {8};
    c.epochs = 3;
    c.episodes = 2;
    c.horizon = 6;
    c.batch_size = 8;
    c.phi_steps = 2;
    c.policy_steps = 2;
    c.eval_skills = 4;
    return c;
}

Vec random_vec(Rng& rng, int n, double scale = 1.0) {
    Vec v(static_cast<std::size_t>(n));
    for (auto& x : v) x = scale * rng.normal();
    return v;
}

bool same_metrics(const EpochMetrics& a, const EpochMetrics& b) {
    return a.epoch == b.epoch && a.j_phi == b.j_phi && a.lambda == b.lambda &&
           a.mean_violation == b.mean_violation && a.giwdm == b.giwdm && a.policy_loss == b.policy_loss &&
           a.value_loss == b.value_loss && a.coverage == b.coverage;
}

}  // namespace

TEST_CASE("replay buffer") {
    SUBCASE("FIFO against a deque model, 1e5 operations") {
        ReplayBuffer buf(37);
        std::deque<double> model;
        Rng rng(5);
        double next = 0.0;
        for (int op = 0; op < 100000; ++op) {
            if (rng.uniform() < 0.7) {
                buf.push({{next}, {0.0}, {next}, {1.0}});
                model.push_back(next);
                if (model.size() > 37) model.pop_front();
                next += 1.0;
            } else if (!model.empty()) {
                const auto batch = buf.sample(3, rng);
                for (const auto& t : batch) CHECK((t.s[0] >= model.front() && t.s[0] <= model.back()));
            }
            REQUIRE(buf.size() == model.size());
            REQUIRE(buf.size() <= buf.capacity());
            if (op % 997 == 0)
                for (std::size_t i = 0; i < model.size(); ++i) CHECK(buf.at(i).s[0] == model[i]);
        }
        CHECK(buf.inserted() == static_cast<std::uint64_t>(next));
    }
    SUBCASE("sampling reproducible") {
        ReplayBuffer buf(10);
        for (int i = 0; i < 10; ++i) buf.push({{double(i)}, {}, {}, {}});
        Rng a(3), b(3);
        const auto x = buf.sample(20, a);
        const auto y = buf.sample(20, b);
        for (int i = 0; i < 20; ++i) CHECK(x[i].s == y[i].s);
    }
    SUBCASE("empty buffer cannot be sampled") {
        ReplayBuffer buf(4);
        Rng rng(1);
        CHECK_THROWS(buf.sample(1, rng));
    }
    SUBCASE("restore keeps order and counter") {
        ReplayBuffer buf(3);
        buf.restore({{{1.0}, {}, {}, {}}, {{2.0}, {}, {}, {}}}, 9);
        buf.push({{3.0}, {}, {}, {}});
        buf.push({{4.0}, {}, {}, {}});
        CHECK(buf.at(0).s[0] == 2.0);
        CHECK(buf.at(2).s[0] == 4.0);
        CHECK(buf.inserted() == 11);
    }
}

TEST_CASE("policies") {
    const auto c4 = make_cyclic_group(4);
    const auto plane = DirectSumRep::from_spec(c4, "1:1");
    const auto feat = DirectSumRep::from_spec(c4, "0:1,1:1,2:1");
    const std::vector<std::vector<int>> perm{{0, 1, 2, 3}, {1, 2, 3, 0}, {2, 3, 0, 1}, {3, 0, 1, 2}};
    Rng rng(8);

    SUBCASE("tabular probabilities and equivariance") {
        TabularPolicy pi(plane, feat, perm, {8});
        pi.net().init(rng);
        double worst = 0.0;
        for (int t = 0; t < 200; ++t) {
            const Vec s = random_vec(rng, 2);
            const Vec z = random_vec(rng, 4);
            const Vec p = pi.probs(s, z);
            double total = 0.0;
            for (double v : p) total += v;
            CHECK(std::abs(total - 1.0) < 1e-12);
            const int g = rng.uniform_int(4);
            const Vec pg = pi.probs(plane.apply(g, s), feat.apply(g, z));
            for (int a = 0; a < 4; ++a) worst = std::max(worst, std::abs(pg[perm[g][a]] - p[a]));
        }
        CHECK(worst < 1e-12);
    }
    SUBCASE("gaussian mean is equivariant, ablation is not") {
        GaussianPolicy pi(plane, feat, {8}, 1.0, 0.3);
        GaussianPolicy raw(plane, feat, {8}, 1.0, 0.3, false);
        pi.net().init(rng);
        raw.net().params() = pi.net().params();
        double worst = 0.0;
        double worst_raw = 0.0;
        for (int t = 0; t < 200; ++t) {
            const Vec s = random_vec(rng, 2);
            const Vec z = random_vec(rng, 4);
            const int g = rng.uniform_int(4);
            worst = std::max(worst, max_abs_diff(pi.mean(plane.apply(g, s), feat.apply(g, z)),
                                                 plane.apply(g, pi.mean(s, z))));
            worst_raw = std::max(worst_raw, max_abs_diff(raw.mean(plane.apply(g, s), feat.apply(g, z)),
                                                         plane.apply(g, raw.mean(s, z))));
            CHECK(norm2(pi.mean(s, z)) <= 1.0 + 1e-12);
        }
        CHECK(worst < 1e-12);
        CHECK(worst_raw > 1e-3);
    }
    SUBCASE("gaussian log density") {
        GaussianPolicy pi(plane, feat, {4}, 1.0, 0.5);
        pi.net().params().assign(pi.net().num_params(), 0.0);  // mean 0
        const double lp = pi.log_prob(Vec{0.0, 0.0}, Vec{1, 0, 0, 0}, Vec{0.5, 0.0});
        CHECK(lp == doctest::Approx(-std::log(2 * std::numbers::pi * 0.25) - 0.5));
    }
    SUBCASE("value baseline is invariant and differentiable") {
        ValueBaseline v(plane, feat, {6});
        v.net().init(rng);
        for (int t = 0; t < 100; ++t) {
            const Vec s = random_vec(rng, 2);
            const Vec z = random_vec(rng, 4);
            const int g = rng.uniform_int(4);
            CHECK(std::abs(v.value(plane.apply(g, s), feat.apply(g, z)) - v.value(s, z)) < 1e-12);
        }
        const Vec s{0.3, -0.2};
        const Vec z{0.1, 0.5, -0.4, 0.2};
        Vec grad(v.net().num_params(), 0.0);
        v.value_grad(s, z, 1.0, grad);
        CHECK(relative_error(grad, central_difference(v.net().params(), [&] { return v.value(s, z); })) < 1e-4);
    }
}

TEST_CASE("policy surrogate") {
    const auto c4 = make_cyclic_group(4);
    const auto plane = DirectSumRep::from_spec(c4, "1:1");
    const auto feat = DirectSumRep::from_spec(c4, "0:1,1:1,2:1");
    const std::vector<std::vector<int>> perm{{0, 1, 2, 3}, {1, 2, 3, 0}, {2, 3, 0, 1}, {3, 0, 1, 2}};

    auto samples_for = [&](Policy& pi, Rng& rng, bool zero_adv) {
        std::vector<PolicySample> out;
        for (int i = 0; i < 12; ++i) {
            PolicySample p;
            p.s = random_vec(rng, 2);
            p.z = random_vec(rng, 4);
            p.a = pi.sample(p.s, p.z, rng);
            p.advantage = zero_adv ? 0.0 : rng.normal();
            out.push_back(p);
        }
        return out;
    };

    SUBCASE("gradient matches finite differences, 20 seeds each") {
        for (int seed = 0; seed < 20; ++seed) {
            Rng rng(static_cast<std::uint64_t>(seed));
            TabularPolicy tab(plane, feat, perm, {6, 5});
            GaussianPolicy gau(plane, feat, {6, 5}, 1.0, 0.4);
            tab.net().init(rng);
            gau.net().init(rng);
            for (Policy* pi : {static_cast<Policy*>(&tab), static_cast<Policy*>(&gau)}) {
                const auto samples = samples_for(*pi, rng, false);
                Vec grad;
                policy_surrogate(*pi, samples, &grad);
                const Vec fd = central_difference(pi->net().params(),
                                                  [&] { return policy_surrogate(*pi, samples, nullptr); });
                CHECK(relative_error(grad, fd) < 1e-4);
            }
        }
    }
    SUBCASE("zero advantages give a zero gradient") {
        Rng rng(2);
        GaussianPolicy gau(plane, feat, {6}, 1.0, 0.4);
        gau.net().init(rng);
        Vec grad;
        CHECK(policy_surrogate(gau, samples_for(gau, rng, true), &grad) == 0.0);
        CHECK(norm2(grad) == 0.0);
    }
    SUBCASE("surrogate value") {
        // uniform tabular policy: log pi = -log 4 for every action
        TabularPolicy tab(plane, feat, perm, {3});
        tab.net().params().assign(tab.net().num_params(), 0.0);
        const std::vector<PolicySample> s{{{0.1, 0.2}, {1, 0, 0, 0}, {2.0}, 2.0}, {{0.0, 0.0}, {1, 0, 0, 0}, {0.0}, -1.0}};
        CHECK(policy_surrogate(tab, s, nullptr) == doctest::Approx(0.5 * std::log(4.0)));
    }
    SUBCASE("equivariance survives an update") {
        Trainer tr(small_pointmass());
        tr.run_epoch();
        const auto& pi = dynamic_cast<const GaussianPolicy&>(*tr.model().policy);
        Rng rng(4);
        const auto& rep = tr.model().env->state_rep();
        const auto& frep = tr.model().phi->rep();
        for (int t = 0; t < 50; ++t) {
            const Vec s = random_vec(rng, 2, 0.5);
            const Vec z = random_vec(rng, 4);
            const int g = rng.uniform_int(4);
            CHECK(max_abs_diff(pi.mean(rep.apply(g, s), frep.apply(g, z)), rep.apply(g, pi.mean(s, z))) < 1e-12);
        }
    }
}

TEST_CASE("episode collection") {
    const PointMassEnv env(PointMassConfig{});
    const auto& rep = env.state_rep();
    const auto feat = DirectSumRep::from_spec(env.group(), "0:1,1:1,2:1");
    GaussianPolicy pi(rep, feat, {8}, 1.0, 0.3);
    Rng init(1);
    pi.net().init(init, 1.0);
    const auto mask = FrequencyMask::keep_frequencies(feat, {1});

    SUBCASE("one episode of five steps") {
        ReplayBuffer buf(100);
        const auto eps = collect_episodes(env, pi, mask, 1, 5, 7, 0, &buf);
        CHECK(buf.size() == 5);
        CHECK(eps.size() == 1);
        for (std::size_t t = 1; t < 5; ++t) CHECK(eps[0].steps[t].s == eps[0].steps[t - 1].s_next);
        for (std::size_t i = 0; i < 5; ++i) CHECK(buf.at(i).z == eps[0].skill);
    }
    SUBCASE("repeatable, episode order preserved") {
        ReplayBuffer a(1000), b(1000);
        collect_episodes(env, pi, mask, 6, 7, 11, 3, &a);
        collect_episodes(env, pi, mask, 6, 7, 11, 3, &b);
        REQUIRE(a.size() == 42);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a.at(i).s_next == b.at(i).s_next);
            CHECK(a.at(i).a == b.at(i).a);
        }
        // episode m is also reproducible by itself
        Rng rng = Rng::stream(11, "episode", 3, 4);
        const Vec z = sample_skill(rng, mask);
        const auto solo = rollout(env, pi, env.initial_state(rng), z, 7, rng, false);
        CHECK(solo.steps.back().s_next == a.at(4 * 7 + 6).s_next);
    }
    SUBCASE("zero episodes rejected") {
        CHECK_THROWS_AS(collect_episodes(env, pi, mask, 0, 5, 0, 0, nullptr), std::invalid_argument);
    }
    SUBCASE("rollout from (g s0, g z) is the rotated rollout") {
        Rng rng(3);
        double worst = 0.0;
        for (int k = 0; k < 16; ++k) {
            const Vec z = sample_skill(rng, mask);
            const Vec s0 = random_vec(rng, 2, 0.3);
            const auto base = rollout(env, pi, s0, z, 40, rng, true);
            for (int g = 0; g < 4; ++g) {
                const auto moved = rollout(env, pi, rep.apply(g, s0), feat.apply(g, z), 40, rng, true);
                for (std::size_t t = 0; t < base.steps.size(); ++t)
                    worst = std::max(worst, max_abs_diff(moved.steps[t].s_next, rep.apply(g, base.steps[t].s_next)));
            }
        }
        CHECK(worst < 1e-8);
    }
}

TEST_CASE("coverage") {
    SUBCASE("stationary policy covers only the start cell") {
        const PointMassEnv env(PointMassConfig{});
        const auto feat = DirectSumRep::from_spec(env.group(), "0:1,1:1,2:1");
        GaussianPolicy pi(env.state_rep(), feat, {4}, 1.0, 0.3);
        pi.net().params().assign(pi.net().num_params(), 0.0);
        const auto cov = evaluate_coverage(env, pi, FrequencyMask::all(feat), 48, 30, 1.0, 10, 0);
        CHECK(cov.fraction == doctest::Approx(0.01));
        CHECK(cov.counts[5 * 10 + 5] == 48 * 31);
    }
    SUBCASE("rotated skills give the rotated visit grid on the tabular env") {
        const auto mdp = build_grid_c4(5, 0.0);
        const auto feat = DirectSumRep::from_spec(mdp.group(), "0:1,1:1,2:1");
        const std::vector<std::vector<int>> perm{{0, 1, 2, 3}, {1, 2, 3, 0}, {2, 3, 0, 1}, {3, 0, 1, 2}};
        TabularPolicy pi(mdp.state_rep(), feat, perm, {8});
        Rng rng(12);
        pi.net().init(rng, 3.0);
        std::vector<Vec> skills;
        for (int i = 0; i < 10; ++i) skills.push_back(sample_skill(rng, 4));
        const auto base = evaluate_coverage(mdp, pi, skills, 12, 2.5, 5);
        for (int g = 0; g < 4; ++g) {
            std::vector<Vec> moved;
            for (const auto& z : skills) moved.push_back(feat.apply(g, z));
            const auto cov = evaluate_coverage(mdp, pi, moved, 12, 2.5, 5);
            CHECK(cov.fraction == base.fraction);
            for (int x = 0; x < 5; ++x)
                for (int y = 0; y < 5; ++y) {
                    const Vec r = mdp.state_rep().apply(g, Vec{double(x - 2), double(y - 2)});
                    const int gx = static_cast<int>(r[0]) + 2;
                    const int gy = static_cast<int>(r[1]) + 2;
                    CHECK(cov.counts[gx * 5 + gy] == base.counts[x * 5 + y]);
                }
        }
    }
}

TEST_CASE("trainer") {
    SUBCASE("smoke: one epoch, one episode") {
        auto c = small_grid();
        c.epochs = 1;
        c.episodes = 1;
        Trainer tr(c);
        int rows = 0;
        train(tr, [&](const EpochMetrics& m, const Trainer&) {
            ++rows;
            CHECK(m.epoch == 1);
            CHECK(m.coverage.has_value());
        });
        CHECK(rows == 1);
        CHECK(tr.buffer().size() == static_cast<std::size_t>(c.horizon));
    }
    SUBCASE("lambda stays non-negative") {
        auto c = small_pointmass();
        c.lambda_init = 0.0;
        c.lr_dual = 1.0;
        c.epochs = 6;
        Trainer tr(c);
        train(tr, [&](const EpochMetrics& m, const Trainer&) { CHECK(m.lambda >= 0.0); });
    }
    SUBCASE("identical seeds, identical metrics; different seeds differ") {
        Trainer a(small_pointmass()), b(small_pointmass());
        auto c = small_pointmass();
        c.seed = 1;
        Trainer other(c);
        bool any_diff = false;
        for (int e = 0; e < 3; ++e) {
            const auto ma = a.run_epoch();
            CHECK(same_metrics(ma, b.run_epoch()));
            any_diff |= !same_metrics(ma, other.run_epoch());
        }
        CHECK(any_diff);
    }
    SUBCASE("resume from a checkpoint continues bit-identically") {
        for (const auto& cfg : {small_pointmass(), small_grid()}) {
            Trainer straight(cfg);
            std::vector<EpochMetrics> expected;
            train(straight, [&](const EpochMetrics& m, const Trainer&) { expected.push_back(m); });

            Trainer first(cfg);
            first.run_epoch();
            first.run_epoch();
            const auto path = std::filesystem::temp_directory_path() / "gisd_test_resume.ckpt";
            first.save(path);
            Trainer resumed = Trainer::load(path);
            std::filesystem::remove(path);
            CHECK(resumed.epoch() == 2);
            CHECK(resumed.buffer().size() == first.buffer().size());
            std::vector<EpochMetrics> got;
            train(resumed, [&](const EpochMetrics& m, const Trainer&) { got.push_back(m); });
            REQUIRE(got.size() == expected.size() - 2);
            for (std::size_t i = 0; i < got.size(); ++i) CHECK(same_metrics(got[i], expected[i + 2]));
            CHECK(resumed.model().policy->net().params() == straight.model().policy->net().params());
        }
    }
    SUBCASE("bad checkpoint rejected") {
        const auto path = std::filesystem::temp_directory_path() / "gisd_test_bad.ckpt";
        {
            std::ofstream(path) << "hello\n";
        }
        CHECK_THROWS(Trainer::load(path));
        std::filesystem::remove(path);
    }
    SUBCASE("non-finite loss aborts with a batch dump") {
        auto c = small_pointmass();
        c.lr_phi = 1e300;
        c.lambda_init = 1e300;
        Trainer tr(c);
        const auto dump = std::filesystem::temp_directory_path() / "gisd_test_dump.csv";
        tr.set_dump_path(dump);
        CHECK_THROWS_AS(
            [&] {
                for (int e = 0; e < 4; ++e) tr.run_epoch();
            }(),
            NumericalAbort);
        CHECK(std::filesystem::exists(dump));
        std::filesystem::remove(dump);
    }
}

TEST_CASE("feature map file round trip") {
    Trainer tr(small_pointmass());
    tr.run_epoch();
    const auto path = std::filesystem::temp_directory_path() / "gisd_test_phi.txt";
    save_feature_map(path, *tr.model().phi);
    const auto back = load_feature_map(path);
    std::filesystem::remove(path);
    CHECK(back.net().params() == tr.model().phi->net().params());
    CHECK(back.rep().spec() == tr.model().phi->rep().spec());
    CHECK(back.mask().weights() == tr.model().phi->mask().weights());
    const Vec s{0.2, 0.1};
    CHECK(back.forward(s) == tr.model().phi->forward(s));
}
