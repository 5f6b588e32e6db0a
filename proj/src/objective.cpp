#include "gisd/objective.hpp"

#include <algorithm>
#include <stdexcept>

namespace gisd {

Vec sample_skill(Rng& rng, int d) {
    if (d < 1) throw std::invalid_argument("sample_skill: d must be >= 1");
    for (;;) {
        Vec z(static_cast<std::size_t>(d));
        for (auto& v : z) v = rng.normal();
        const double n = norm2(z);
        if (n < 1e-12) continue;
        for (auto& v : z) v /= n;
        return z;
    }
}

Vec sample_skill(Rng& rng, const FrequencyMask& mask) {
    const auto support = mask.support();
    if (support.empty()) throw std::invalid_argument("sample_skill: mask keeps no coordinates");
    const Vec inner = sample_skill(rng, static_cast<int>(support.size()));
    Vec z(static_cast<std::size_t>(mask.dim()), 0.0);
    for (std::size_t i = 0; i < support.size(); ++i) z[support[i]] = inner[i];
    return z;
}

double intrinsic_reward(const EquivariantFeatureMap& map, std::span<const double> s,
                        std::span<const double> z, std::span<const double> s_next) {
    if (z.size() != static_cast<std::size_t>(map.dim())) {
        throw std::invalid_argument("intrinsic_reward: skill dimension mismatch");
    }
    return dot(sub(map.forward(s_next), map.forward(s)), z);
}

namespace {

struct Partial {
    double objective = 0.0;
    double slack = 0.0;
};

// Adds one transition's contribution (unnormalized) to grad.
Partial accumulate(const EquivariantFeatureMap& map, double lambda, const Transition& tr,
                   double epsilon, std::span<double> grad) {
    EquivariantFeatureMap::Tape t0;
    EquivariantFeatureMap::Tape t1;
    const Vec p0 = map.forward(tr.s, &t0);
    const Vec p1 = map.forward(tr.s_next, &t1);
    const Vec delta = sub(p1, p0);
    const double align = dot(delta, tr.z);
    const double gap = 1.0 - dot(delta, delta);
    const bool constraint_active = gap <= epsilon;
    const double slack = constraint_active ? gap : epsilon;

    Vec c(tr.z.begin(), tr.z.end());
    if (constraint_active) {
        for (std::size_t i = 0; i < c.size(); ++i) c[i] -= 2.0 * lambda * delta[i];
    }
    map.backward(t1, c, grad);
    for (auto& v : c) v = -v;
    map.backward(t0, c, grad);
    return {align + lambda * slack, slack};
}

void check_batch(const EquivariantFeatureMap& map, std::span<const Transition> batch) {
    if (batch.empty()) throw std::invalid_argument("discriminator_loss: empty batch");
    for (const auto& tr : batch) {
        if (tr.z.size() != static_cast<std::size_t>(map.dim())) {
            throw std::invalid_argument("discriminator_loss: skill dimension mismatch");
        }
    }
}

constexpr std::size_t kChunk = 16;

}  // namespace

DiscriminatorResult discriminator_loss(const EquivariantFeatureMap& map, double lambda,
                                       std::span<const Transition> batch, double epsilon) {
    check_batch(map, batch);
    const std::size_t P = map.net().num_params();
    const std::size_t nchunks = (batch.size() + kChunk - 1) / kChunk;
    std::vector<Vec> grads(nchunks, Vec(P, 0.0));
    std::vector<Partial> parts(nchunks);
#pragma omp parallel for schedule(static)
    for (long long c = 0; c < static_cast<long long>(nchunks); ++c) {
        const std::size_t begin = static_cast<std::size_t>(c) * kChunk;
        const std::size_t end = std::min(batch.size(), begin + kChunk);
        Partial acc;
        for (std::size_t i = begin; i < end; ++i) {
            const Partial p = accumulate(map, lambda, batch[i], epsilon, grads[c]);
            acc.objective += p.objective;
            acc.slack += p.slack;
        }
        parts[c] = acc;
    }
    DiscriminatorResult out;
    out.grad.assign(P, 0.0);
    for (std::size_t c = 0; c < nchunks; ++c) {
        out.objective += parts[c].objective;
        out.mean_slack += parts[c].slack;
        for (std::size_t i = 0; i < P; ++i) out.grad[i] += grads[c][i];
    }
    const double n = static_cast<double>(batch.size());
    out.objective /= n;
    out.mean_slack /= n;
    for (auto& g : out.grad) g /= n;
    return out;
}

namespace ref {

DiscriminatorResult discriminator_loss(const EquivariantFeatureMap& map, double lambda,
                                       std::span<const Transition> batch, double epsilon) {
    check_batch(map, batch);
    DiscriminatorResult out;
    out.grad.assign(map.net().num_params(), 0.0);
    for (const auto& tr : batch) {
        const Partial p = accumulate(map, lambda, tr, epsilon, out.grad);
        out.objective += p.objective;
        out.mean_slack += p.slack;
    }
    const double n = static_cast<double>(batch.size());
    out.objective /= n;
    out.mean_slack /= n;
    for (auto& g : out.grad) g /= n;
    return out;
}

}  // namespace ref

double dual_update(DualVariable& dual, std::span<const double> slacks) {
    if (slacks.empty()) return 0.0;
    double mean = 0.0;
    for (double s : slacks) mean += s;
    mean /= static_cast<double>(slacks.size());
    dual.lambda = std::max(0.0, dual.lambda - dual.lr * mean);
    return mean;
}

double dual_update(DualVariable& dual, const EquivariantFeatureMap& map,
                   std::span<const Transition> batch, double epsilon) {
    std::vector<double> slacks(batch.size());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(batch.size()); ++i) {
        slacks[i] = lipschitz_violation(map, batch[i].s, batch[i].s_next, epsilon);
    }
    return dual_update(dual, slacks);
}

double giwdm_estimate(const EquivariantFeatureMap& map, std::span<const Trajectory> trajectories) {
    if (trajectories.empty()) throw std::invalid_argument("giwdm_estimate: no trajectories");
    double total = 0.0;
    for (const auto& tr : trajectories) {
        double sum = 0.0;
        for (const auto& st : tr.steps) sum += intrinsic_reward(map, st.s, tr.skill, st.s_next);
        total += sum;
    }
    return total / static_cast<double>(trajectories.size());
}

}  // namespace gisd
