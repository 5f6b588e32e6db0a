#include "gisd/hierarchy.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>

#include "gisd/objective.hpp"

namespace gisd {

namespace {

double wrap_angle(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

}  // namespace

HighLevelPolicy::HighLevelPolicy(DirectSumRep state_rep, DirectSumRep skill_rep,
                                 std::vector<double> skill_mask, std::vector<int> hidden,
                                 double angle_std, bool symmetrize)
    : state_rep_(std::move(state_rep)),
      skill_rep_(std::move(skill_rep)),
      angle_std_(angle_std),
      symmetrize_(symmetrize) {
    if (state_rep_.total_dim() != 2) throw std::invalid_argument("HighLevelPolicy: planar states only");
    if (skill_mask.size() != static_cast<std::size_t>(skill_rep_.total_dim())) {
        throw std::invalid_argument("HighLevelPolicy: mask dimension mismatch");
    }
    int found = -1;
    for (const auto& slot : skill_rep_.slots()) {
        bool on = false;
        for (int i = 0; i < slot.dim; ++i) on = on || skill_mask[slot.offset + i] != 0.0;
        if (!on) continue;
        const auto& irrep = skill_rep_.blocks()[slot.block].irrep;
        if (found >= 0 || slot.dim != 2 || irrep.frequency != 1) {
            throw std::invalid_argument(
                "HighLevelPolicy: skill space must be a single frequency-1 rotation block");
        }
        found = slot.offset;
    }
    if (found < 0) throw std::invalid_argument("HighLevelPolicy: mask keeps no skill block");
    block_offset_ = found;
    if (!(angle_std_ > 0.0)) throw std::invalid_argument("HighLevelPolicy: angle_std must be > 0");
    std::vector<int> sizes{4};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(2);
    net_ = DiffNet(std::move(sizes));
}

void HighLevelPolicy::init(Rng& rng) { net_.init(rng); }

Vec HighLevelPolicy::direction(std::span<const double> s, std::span<const double> rel_goal,
                               std::vector<DiffNet::Tape>* tapes) const {
    const int n = symmetrize_ ? state_rep_.group().order() : 1;
    if (tapes) tapes->resize(static_cast<std::size_t>(n));
    Vec m(2, 0.0);
    for (int g = 0; g < n; ++g) {
        Vec x = symmetrize_ ? state_rep_.apply(g, s) : Vec(s.begin(), s.end());
        const Vec r = symmetrize_ ? state_rep_.apply(g, rel_goal) : Vec(rel_goal.begin(), rel_goal.end());
        x.insert(x.end(), r.begin(), r.end());
        const Vec o = net_.forward(x, tapes ? &(*tapes)[g] : nullptr);
        const Vec back = symmetrize_ ? state_rep_.apply_transpose(g, o) : o;
        m[0] += back[0] / n;
        m[1] += back[1] / n;
    }
    return m;
}

double HighLevelPolicy::mean_angle(std::span<const double> s, std::span<const double> rel_goal) const {
    const Vec m = direction(s, rel_goal, nullptr);
    return std::atan2(m[1], m[0]);
}

Vec HighLevelPolicy::skill_from_angle(double angle) const {
    Vec z(static_cast<std::size_t>(skill_rep_.total_dim()), 0.0);
    z[block_offset_] = std::cos(angle);
    z[block_offset_ + 1] = std::sin(angle);
    return z;
}

Vec HighLevelPolicy::mean_skill(std::span<const double> s, std::span<const double> rel_goal) const {
    // built from the direction itself so that symmetric inputs give exactly
    // rotated skills, without an atan2/cos/sin round trip
    const Vec m = direction(s, rel_goal, nullptr);
    const double n = std::hypot(m[0], m[1]);
    Vec z(static_cast<std::size_t>(skill_rep_.total_dim()), 0.0);
    if (n == 0.0) {
        z[block_offset_] = 1.0;
        return z;
    }
    z[block_offset_] = m[0] / n;
    z[block_offset_ + 1] = m[1] / n;
    return z;
}

double HighLevelPolicy::sample_angle(std::span<const double> s, std::span<const double> rel_goal,
                                     Rng& rng) const {
    return mean_angle(s, rel_goal) + angle_std_ * rng.normal();
}

double HighLevelPolicy::log_prob_grad(std::span<const double> s, std::span<const double> rel_goal,
                                      double angle, double weight, std::span<double> grad) const {
    std::vector<DiffNet::Tape> tapes;
    const Vec m = direction(s, rel_goal, &tapes);
    const double theta = std::atan2(m[1], m[0]);
    const double var = angle_std_ * angle_std_;
    const double delta = wrap_angle(angle - theta);
    const double r2 = m[0] * m[0] + m[1] * m[1];
    // d logp / d theta = delta / var;  d theta / d m = (-m1, m0) / |m|^2
    const double dtheta = weight * delta / var;
    const Vec dm{dtheta * -m[1] / r2, dtheta * m[0] / r2};
    const int n = static_cast<int>(tapes.size());
    for (int g = 0; g < n; ++g) {
        Vec d = symmetrize_ ? state_rep_.apply(g, dm) : dm;
        d[0] /= n;
        d[1] /= n;
        net_.backward(tapes[g], d, grad);
    }
    return -delta * delta / (2.0 * var) - 0.5 * std::log(2.0 * std::numbers::pi * var);
}

namespace {

Vec draw_goal(const TabularSymmetricMDP& env, int s, int half_width, Rng& rng) {
    const Vec& x = env.features(s);
    std::vector<int> candidates;
    for (int j = 0; j < env.num_states(); ++j) {
        if (j == s) continue;
        const Vec& y = env.features(j);
        double cheb = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) cheb = std::max(cheb, std::abs(y[i] - x[i]));
        if (cheb <= half_width) candidates.push_back(j);
    }
    if (candidates.empty()) return x;
    return env.features(candidates[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(candidates.size())))]);
}

}  // namespace

HierarchicalEpisode run_hierarchical_episode(const TabularSymmetricMDP& env,
                                             const HighLevelPolicy& high, const Policy& low,
                                             const SemiMDPConfig& cfg, Rng& rng, bool greedy_high,
                                             std::optional<Vec> first_goal) {
    if (cfg.interval < 1) throw std::invalid_argument("run_hierarchical_episode: interval must be >= 1");
    HierarchicalEpisode ep;
    Vec s = env.initial_state(rng);
    Vec goal = first_goal ? *first_goal : draw_goal(env, env.index_of(s), cfg.goal_half_width, rng);
    Vec z;
    int since_choice = 0;
    bool need_skill = true;

    auto credit = [&](double r) {
        ep.total_reward += r;
        if (!ep.decisions.empty()) ep.decisions.back().reward_after += r;
    };
    auto check_goal = [&]() {
        if (s != goal) return;
        ++ep.goal_events;
        credit(1.0);
        goal = draw_goal(env, env.index_of(s), cfg.goal_half_width, rng);
        need_skill = true;
    };
    // a goal on the start cell is collected before the first action
    if (s == goal) {
        ++ep.goal_events;
        ep.total_reward += 1.0;
        goal = draw_goal(env, env.index_of(s), cfg.goal_half_width, rng);
    }

    for (int t = 0; t < cfg.episode_steps; ++t) {
        if (need_skill || since_choice >= cfg.interval) {
            HighLevelDecision d;
            d.t = t;
            d.s = s;
            d.rel_goal = sub(goal, s);
            if (greedy_high) {
                d.z = high.mean_skill(d.s, d.rel_goal);
                d.angle = high.mean_angle(d.s, d.rel_goal);
            } else {
                d.angle = high.sample_angle(d.s, d.rel_goal, rng);
                d.z = high.skill_from_angle(d.angle);
            }
            z = d.z;
            ep.decisions.push_back(std::move(d));
            since_choice = 0;
            need_skill = false;
        }
        ep.goals.push_back(goal);
        const Vec a = low.sample(s, z, rng);
        s = env.step(s, a, rng);
        ++ep.steps;
        ++since_choice;
        check_goal();
    }
    return ep;
}

std::vector<Vec> orbit_closed_skills(const DirectSumRep& rep, const FrequencyMask& mask, int count,
                                     Rng& rng) {
    std::vector<Vec> out;
    for (int i = 0; i < count; ++i) {
        const Vec z = sample_skill(rng, mask);
        for (int g = 0; g < rep.group().order(); ++g) out.push_back(rep.apply(g, z));
    }
    return out;
}

InvarianceReport verify_semi_mdp_invariance(
    const TabularSymmetricMDP& env, const std::function<PolicyTable(const Vec&)>& low_table,
    std::span<const Vec> orbit_skills, int k) {
    const int G = env.group().order();
    if (orbit_skills.size() % static_cast<std::size_t>(G) != 0) {
        throw std::invalid_argument("verify_semi_mdp_invariance: skill set is not orbit-closed");
    }
    const int S = env.num_states();
    std::vector<Eigen::MatrixXd> kernels;
    for (const auto& z : orbit_skills) kernels.push_back(k_step_kernel(env, low_table(z), k));

    InvarianceReport rep;
    const int orbits = static_cast<int>(orbit_skills.size()) / G;
    for (int o = 0; o < orbits; ++o) {
        for (int h = 0; h < G; ++h) {
            const int zi = o * G + h;
            for (int g = 0; g < G; ++g) {
                // rho(g) rho(h) z_o = rho(gh) z_o sits at index o*G + gh
                const int zj = o * G + env.group().mul(g, h);
                const auto& base = kernels[zi];
                const auto& moved = kernels[zj];
                for (int s = 0; s < S; ++s) {
                    const int gs = env.state_perm(g, s);
                    double tv = 0.0;
                    for (int s2 = 0; s2 < S; ++s2) {
                        const double d = std::abs(moved(gs, env.state_perm(g, s2)) - base(s, s2));
                        tv += d;
                        if (d > rep.max_abs) {
                            rep.max_abs = d;
                            rep.witness_g = g;
                            rep.witness_s = s;
                            rep.witness_skill = zi;
                        }
                    }
                    rep.max_tv = std::max(rep.max_tv, 0.5 * tv);
                }
            }
        }
    }
    return rep;
}

OrbitGeneralization transform_skill_generalization(const Env& env, const Policy& low,
                                                   const Vec& z, int g, const Vec& s0, int T) {
    if (!env.is_deterministic()) {
        throw std::invalid_argument(
            "transform_skill_generalization: environment is stochastic; use verify_semi_mdp_invariance");
    }
    OrbitGeneralization out;
    Rng unused(0);
    Vec s = s0;
    Vec sg = env.act_on_state(g, s0);
    const Vec zg = low.skill_rep().apply(g, z);
    out.states.push_back(s);
    out.transformed.push_back(sg);
    out.max_deviation = norm2(sub(env.act_on_state(g, s), sg));
    for (int t = 0; t < T; ++t) {
        s = env.step(s, low.mode(s, z), unused);
        sg = env.step(sg, low.mode(sg, zg), unused);
        out.states.push_back(s);
        out.transformed.push_back(sg);
        out.max_deviation = std::max(out.max_deviation, norm2(sub(env.act_on_state(g, s), sg)));
    }
    return out;
}

double evaluate_high_level(const TabularSymmetricMDP& env, const HighLevelPolicy& high,
                           const Policy& low, const SemiMDPConfig& cfg, int episodes,
                           std::uint64_t seed) {
    double total = 0.0;
    for (int e = 0; e < episodes; ++e) {
        Rng rng = Rng::stream(seed, "hl-eval", static_cast<std::uint64_t>(e));
        total += run_hierarchical_episode(env, high, low, cfg, rng).total_reward;
    }
    return total / episodes;
}

HighLevelTraining train_high_level(const TabularSymmetricMDP& env, HighLevelPolicy& high,
                                   const Policy& low, const HighLevelTrainConfig& cfg) {
    HighLevelTraining out;
    out.baseline_return = evaluate_high_level(env, high, low, cfg.semi, cfg.eval_episodes, cfg.seed);
    Adam opt(high.net().num_params(), cfg.lr);
    for (int it = 0; it < cfg.iterations; ++it) {
        std::vector<HierarchicalEpisode> eps;
        double mean_return = 0.0;
        for (int e = 0; e < cfg.episodes_per_iter; ++e) {
            Rng rng = Rng::stream(cfg.seed, "hl-episode", static_cast<std::uint64_t>(it),
                                  static_cast<std::uint64_t>(e));
            eps.push_back(run_hierarchical_episode(env, high, low, cfg.semi, rng));
            mean_return += eps.back().total_reward / cfg.episodes_per_iter;
        }
        out.return_curve.push_back(mean_return);

        // decision-level returns with a batch-mean baseline
        std::vector<std::pair<const HighLevelDecision*, double>> items;
        for (const auto& ep : eps) {
            double acc = 0.0;
            std::vector<double> G(ep.decisions.size());
            for (std::size_t i = ep.decisions.size(); i-- > 0;) {
                acc = ep.decisions[i].reward_after + cfg.gamma * acc;
                G[i] = acc;
            }
            for (std::size_t i = 0; i < ep.decisions.size(); ++i) items.emplace_back(&ep.decisions[i], G[i]);
        }
        if (items.empty()) continue;
        double baseline = 0.0;
        for (const auto& it2 : items) baseline += it2.second;
        baseline /= static_cast<double>(items.size());
        Vec grad(high.net().num_params(), 0.0);
        for (const auto& [d, G] : items) {
            // descend on -A log pi
            high.log_prob_grad(d->s, d->rel_goal, d->angle,
                               -(G - baseline) / static_cast<double>(items.size()), grad);
        }
        opt.step(high.net().params(), grad);
    }
    out.final_return = evaluate_high_level(env, high, low, cfg.semi, cfg.eval_episodes, cfg.seed);
    return out;
}

std::uint64_t param_checksum(const DiffNet& net) {
    std::uint64_t h = 1469598103934665603ull;
    for (double v : net.params()) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &v, sizeof v);
        for (unsigned char b : bytes) {
            h ^= b;
            h *= 1099511628211ull;
        }
    }
    return h;
}

}  // namespace gisd
