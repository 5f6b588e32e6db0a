#include <benchmark/benchmark.h>

#include "gisd/kernels.hpp"
#include "gisd/objective.hpp"
#include "gisd/training.hpp"

using namespace gisd;

namespace {

struct GridFixture {
    TabularSymmetricMDP mdp;
    PolicyTable pi;
};

GridFixture grid(int side) {
    auto mdp = build_grid_c4(side, 0.1);
    PolicyTable pi = uniform_policy(mdp);
    return {std::move(mdp), std::move(pi)};
}

void BM_KStep(benchmark::State& st) {
    const auto f = grid(static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(k_step_kernel(f.mdp, f.pi, 3));
}

void BM_KStepSerial(benchmark::State& st) {
    const auto f = grid(static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(ref::k_step_kernel(f.mdp, f.pi, 3));
}

void BM_Occupancy(benchmark::State& st) {
    const auto f = grid(static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(occupancy_recursion(f.mdp, f.pi, 20));
}

void BM_OccupancySerial(benchmark::State& st) {
    const auto f = grid(static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(ref::occupancy_recursion(f.mdp, f.pi, 20));
}

void BM_TemporalDistance(benchmark::State& st) {
    const auto f = grid(static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(temporal_distance(f.mdp, f.pi));
}

void BM_TemporalDistanceSerial(benchmark::State& st) {
    const auto f = grid(static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(ref::temporal_distance(f.mdp, f.pi));
}

struct LossFixture {
    Model model;
    std::vector<Transition> batch;
};

LossFixture loss_fixture(int n) {
    Config cfg;
    cfg.env = "pointmass";
    LossFixture f{build_model(cfg), {}};
    Rng rng(1);
    for (int i = 0; i < n; ++i) {
        Vec s{0.5 * rng.normal(), 0.5 * rng.normal()};
        Vec s2{s[0] + 0.1 * rng.normal(), s[1] + 0.1 * rng.normal()};
        f.batch.push_back({s, {0.0, 0.0}, s2, sample_skill(rng, f.model.phi->mask())});
    }
    return f;
}

void BM_DiscriminatorLoss(benchmark::State& st) {
    const auto f = loss_fixture(static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(discriminator_loss(*f.model.phi, 30.0, f.batch, 1e-3));
}

void BM_DiscriminatorLossSerial(benchmark::State& st) {
    const auto f = loss_fixture(static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(ref::discriminator_loss(*f.model.phi, 30.0, f.batch, 1e-3));
}

}  // namespace

BENCHMARK(BM_KStep)->Arg(5)->Arg(9)->Arg(15)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_KStepSerial)->Arg(5)->Arg(9)->Arg(15)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Occupancy)->Arg(5)->Arg(15)->Arg(31)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_OccupancySerial)->Arg(5)->Arg(15)->Arg(31)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_TemporalDistance)->Arg(5)->Arg(9)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TemporalDistanceSerial)->Arg(5)->Arg(9)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DiscriminatorLoss)->Arg(256)->Arg(1024)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DiscriminatorLossSerial)->Arg(256)->Arg(1024)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
