#include "gisd/symm_env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gisd {

namespace {

FiniteGroup rotation_group(int n) {
    if (n < 1) throw std::invalid_argument("group order must be >= 1");
    return make_cyclic_group(n);
}

// Representation of C_N on the plane: the frequency-1 rotation block, or two
// trivial copies for C_1 and C_2's sign pair.
DirectSumRep plane_rep(const FiniteGroup& group) {
    const int n = group.order();
    if (n == 1) return DirectSumRep(group, {{cyclic_irrep(group, 0), 2}});
    if (n == 2) return DirectSumRep(group, {{cyclic_irrep(group, 1), 2}});
    return DirectSumRep(group, {{cyclic_irrep(group, 1), 1}});
}

Vec disc_clip(Vec v, double radius) {
    const double n = norm2(v);
    if (n > radius) {
        const double scale = radius / n;
        for (auto& x : v) x *= scale;
    }
    return v;
}

}  // namespace

TabularSymmetricMDP::TabularSymmetricMDP(DirectSumRep feature_rep, std::vector<Vec> features,
                                         int num_actions, std::vector<double> transition,
                                         Vec init_dist, std::vector<std::vector<int>> state_perm,
                                         std::vector<std::vector<int>> action_perm)
    : rep_(std::move(feature_rep)),
      features_(std::move(features)),
      num_states_(static_cast<int>(features_.size())),
      num_actions_(num_actions),
      transition_(std::move(transition)),
      init_dist_(std::move(init_dist)),
      state_perm_(std::move(state_perm)),
      action_perm_(std::move(action_perm)) {
    const auto S = static_cast<std::size_t>(num_states_);
    const auto A = static_cast<std::size_t>(num_actions_);
    if (transition_.size() != S * A * S || init_dist_.size() != S) {
        throw std::invalid_argument("TabularSymmetricMDP: tensor shape mismatch");
    }
    const auto G = static_cast<std::size_t>(rep_.group().order());
    if (state_perm_.size() != G || action_perm_.size() != G) {
        throw std::invalid_argument("TabularSymmetricMDP: one permutation per group element");
    }
    for (std::size_t s = 0; s < S; ++s) {
        if (features_[s].size() != static_cast<std::size_t>(rep_.total_dim())) {
            throw std::invalid_argument("TabularSymmetricMDP: feature dimension mismatch");
        }
        if (!index_.emplace(features_[s], static_cast<int>(s)).second) {
            throw std::invalid_argument("TabularSymmetricMDP: duplicate state features");
        }
        for (std::size_t a = 0; a < A; ++a) {
            double total = 0.0;
            for (double p : row(static_cast<int>(s), static_cast<int>(a))) total += p;
            if (std::abs(total - 1.0) > 1e-12) {
                throw std::invalid_argument("TabularSymmetricMDP: transition row does not sum to 1");
            }
        }
    }
}

int TabularSymmetricMDP::index_of(std::span<const double> x) const {
    auto it = index_.find(Vec(x.begin(), x.end()));
    if (it == index_.end()) throw std::out_of_range("TabularSymmetricMDP: unknown state");
    return it->second;
}

int TabularSymmetricMDP::step_index(int s, int a, Rng& rng) const {
    if (s < 0 || s >= num_states_ || a < 0 || a >= num_actions_) {
        throw std::out_of_range("TabularSymmetricMDP::step: state or action out of range");
    }
    const double u = rng.uniform();
    double acc = 0.0;
    const auto r = row(s, a);
    int last = 0;
    for (int j = 0; j < num_states_; ++j) {
        if (r[j] <= 0.0) continue;
        acc += r[j];
        last = j;
        if (u < acc) return j;
    }
    return last;
}

int TabularSymmetricMDP::mode_step_index(int s, int a) const {
    const auto r = row(s, a);
    return static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
}

bool TabularSymmetricMDP::is_deterministic() const {
    return std::all_of(transition_.begin(), transition_.end(),
                       [](double p) { return p == 0.0 || p == 1.0; });
}

Vec TabularSymmetricMDP::initial_state(Rng& rng) const {
    const double u = rng.uniform();
    double acc = 0.0;
    for (int s = 0; s < num_states_; ++s) {
        acc += init_dist_[s];
        if (u < acc) return features(s);
    }
    return features(num_states_ - 1);
}

Vec TabularSymmetricMDP::step(std::span<const double> s, std::span<const double> a,
                              Rng& rng) const {
    if (a.size() != 1) throw std::invalid_argument("TabularSymmetricMDP::step: action is an index");
    return features(step_index(index_of(s), static_cast<int>(a[0]), rng));
}

Vec TabularSymmetricMDP::act_on_state(int g, std::span<const double> s) const {
    return features(state_perm(g, index_of(s)));
}

Vec TabularSymmetricMDP::act_on_action(int g, std::span<const double> a) const {
    return {static_cast<double>(action_perm(g, static_cast<int>(a[0])))};
}

TabularSymmetricMDP build_grid_c4(int side, double slip) {
    if (side < 1 || side % 2 == 0) {
        throw std::invalid_argument("build_grid_c4: side must be odd (centre cell is the fixed point)");
    }
    if (!(slip >= 0.0 && slip < 1.0)) throw std::invalid_argument("build_grid_c4: slip in [0,1)");
    const int half = side / 2;
    const int S = side * side;
    const int A = 4;
    const auto group = make_cyclic_group(4);
    const DirectSumRep rep(group, {{cyclic_irrep(group, 1), 1}});

    auto index = [&](int x, int y) { return (x + half) * side + (y + half); };
    std::vector<Vec> features(static_cast<std::size_t>(S));
    for (int x = -half; x <= half; ++x)
        for (int y = -half; y <= half; ++y) features[index(x, y)] = {double(x), double(y)};

    const int dx[4] = {1, 0, -1, 0};
    const int dy[4] = {0, 1, 0, -1};
    std::vector<double> P(static_cast<std::size_t>(S * A * S), 0.0);
    for (int x = -half; x <= half; ++x) {
        for (int y = -half; y <= half; ++y) {
            const int s = index(x, y);
            for (int a = 0; a < A; ++a) {
                for (int m = 0; m < A; ++m) {
                    const double p = (m == a) ? 1.0 - slip : slip / 3.0;
                    if (p == 0.0) continue;
                    int nx = x + dx[m];
                    int ny = y + dy[m];
                    if (std::abs(nx) > half || std::abs(ny) > half) {
                        nx = x;
                        ny = y;
                    }
                    P[static_cast<std::size_t>((s * A + a) * S + index(nx, ny))] += p;
                }
            }
        }
    }

    Vec init(static_cast<std::size_t>(S), 0.0);
    init[index(0, 0)] = 1.0;

    std::vector<std::vector<int>> sperm(4, std::vector<int>(static_cast<std::size_t>(S)));
    std::vector<std::vector<int>> aperm(4, std::vector<int>(4));
    for (int g = 0; g < 4; ++g) {
        for (int s = 0; s < S; ++s) {
            const Vec r = rep.apply(g, features[s]);
            sperm[g][s] = index(static_cast<int>(r[0]), static_cast<int>(r[1]));
        }
        for (int a = 0; a < A; ++a) aperm[g][a] = (a + g) % 4;
    }
    return TabularSymmetricMDP(rep, std::move(features), A, std::move(P), std::move(init),
                               std::move(sperm), std::move(aperm));
}

TabularSymmetricMDP build_chain(int length) {
    if (length < 1) throw std::invalid_argument("build_chain: length must be >= 1");
    const auto group = make_cyclic_group(1);
    const DirectSumRep rep(group, {{cyclic_irrep(group, 0), 1}});
    std::vector<Vec> features;
    for (int i = 0; i < length; ++i) features.push_back({double(i)});
    const int S = length;
    std::vector<double> P(static_cast<std::size_t>(S * 2 * S), 0.0);
    for (int s = 0; s < S; ++s) {
        P[static_cast<std::size_t>((s * 2 + 0) * S + std::min(s + 1, S - 1))] = 1.0;
        P[static_cast<std::size_t>((s * 2 + 1) * S + std::max(s - 1, 0))] = 1.0;
    }
    Vec init(static_cast<std::size_t>(S), 0.0);
    init[0] = 1.0;
    std::vector<std::vector<int>> sperm(1, std::vector<int>(static_cast<std::size_t>(S)));
    for (int s = 0; s < S; ++s) sperm[0][s] = s;
    std::vector<std::vector<int>> aperm{{0, 1}};
    return TabularSymmetricMDP(rep, std::move(features), 2, std::move(P), std::move(init),
                               std::move(sperm), std::move(aperm));
}

double verify_invariance(const TabularSymmetricMDP& mdp) {
    double worst = 0.0;
    const int S = mdp.num_states();
    for (int g = 0; g < mdp.group().order(); ++g)
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < mdp.num_actions(); ++a) {
                const int gs = mdp.state_perm(g, s);
                const int ga = mdp.action_perm(g, a);
                for (int s2 = 0; s2 < S; ++s2) {
                    worst = std::max(worst, std::abs(mdp.prob(gs, ga, mdp.state_perm(g, s2)) -
                                                     mdp.prob(s, a, s2)));
                }
            }
    return worst;
}

PointMassEnv::PointMassEnv(PointMassConfig cfg)
    : cfg_(cfg), rep_(plane_rep(rotation_group(cfg.group_order))) {
    if (!(cfg_.dt > 0.0) || !(cfg_.arena_radius > 0.0) || !(cfg_.max_speed > 0.0) ||
        cfg_.noise_std < 0.0) {
        throw std::invalid_argument("PointMassEnv: dt, arena_radius, max_speed must be > 0");
    }
}

Vec PointMassEnv::initial_state(Rng&) const { return {0.0, 0.0}; }

Vec PointMassEnv::step(std::span<const double> s, std::span<const double> a, Rng& rng) const {
    if (s.size() != 2 || a.size() != 2) {
        throw std::invalid_argument("PointMassEnv::step: state and action are 2-D");
    }
    const Vec v = disc_clip({a[0], a[1]}, cfg_.max_speed);
    Vec next{s[0] + cfg_.dt * v[0], s[1] + cfg_.dt * v[1]};
    if (cfg_.noise_std > 0.0) {
        next[0] += cfg_.noise_std * rng.normal();
        next[1] += cfg_.noise_std * rng.normal();
    }
    return disc_clip(std::move(next), cfg_.arena_radius);
}

Vec PointMassEnv::act_on_state(int g, std::span<const double> s) const { return rep_.apply(g, s); }

Vec PointMassEnv::act_on_action(int g, std::span<const double> a) const {
    return rep_.apply(g, a);
}

}  // namespace gisd
