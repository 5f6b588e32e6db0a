#include "gisd/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gisd/checkpoint.hpp"

namespace gisd {

namespace {

FrequencyMask make_mask(const Config& cfg, const DirectSumRep& rep) {
    if (!cfg.mask_coords.empty()) return FrequencyMask::per_coordinate(cfg.mask_coords);
    return FrequencyMask::per_block(rep, cfg.mask);
}

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

std::string join(std::span<const double> v) {
    std::string out;
    for (double x : v) {
        if (!out.empty()) out += ' ';
        out += format_double(x);
    }
    return out;
}

}  // namespace

std::unique_ptr<Env> build_env(const Config& cfg) {
    if (cfg.env == "grid") {
        return std::make_unique<TabularSymmetricMDP>(build_grid_c4(cfg.grid_side, cfg.grid_slip));
    }
    PointMassConfig pm;
    pm.group_order = cfg.group_order;
    pm.dt = cfg.pm_dt;
    pm.arena_radius = cfg.pm_arena_radius;
    pm.max_speed = cfg.pm_max_speed;
    pm.noise_std = cfg.pm_noise_std;
    return std::make_unique<PointMassEnv>(pm);
}

Model build_model(const Config& cfg) {
    validate(cfg);
    Model m;
    m.env = build_env(cfg);
    const auto& group = m.env->group();
    const auto rep = DirectSumRep::from_spec(group, cfg.rep);
    const bool sym = !cfg.ablation;
    m.phi = std::make_unique<EquivariantFeatureMap>(m.env->state_rep(), rep, make_mask(cfg, rep),
                                                    cfg.phi_hidden, sym);
    Rng phi_rng = Rng::stream(cfg.seed, "phi-init");
    m.phi->init(phi_rng);

    if (const auto* mdp = m.tabular()) {
        std::vector<std::vector<int>> perm;
        for (int g = 0; g < group.order(); ++g) {
            std::vector<int> p;
            for (int a = 0; a < mdp->num_actions(); ++a) p.push_back(mdp->action_perm(g, a));
            perm.push_back(std::move(p));
        }
        m.policy = std::make_unique<TabularPolicy>(m.env->state_rep(), rep, std::move(perm),
                                                   cfg.policy_hidden, sym);
    } else {
        m.policy = std::make_unique<GaussianPolicy>(m.env->state_rep(), rep, cfg.policy_hidden,
                                                    cfg.pm_max_speed, cfg.policy_std, sym);
    }
    Rng pol_rng = Rng::stream(cfg.seed, "policy-init");
    m.policy->net().init(pol_rng, 0.1);

    m.value = std::make_unique<ValueBaseline>(m.env->state_rep(), rep, cfg.value_hidden, sym);
    Rng val_rng = Rng::stream(cfg.seed, "value-init");
    m.value->net().init(val_rng, 0.1);
    return m;
}

Trajectory rollout(const Env& env, const Policy& policy, Vec s0, const Vec& z, int T, Rng& rng,
                   bool deterministic, const EquivariantFeatureMap* reward_map) {
    Trajectory tr;
    tr.skill = z;
    Vec s = std::move(s0);
    const auto* mdp = dynamic_cast<const TabularSymmetricMDP*>(&env);
    for (int t = 0; t < T; ++t) {
        Vec a = deterministic ? policy.mode(s, z) : policy.sample(s, z, rng);
        Vec next;
        if (deterministic && mdp) {
            next = mdp->features(mdp->mode_step_index(mdp->index_of(s), static_cast<int>(a[0])));
        } else {
            next = env.step(s, a, rng);
        }
        Step st{s, std::move(a), 0.0, next};
        if (reward_map) st.reward = intrinsic_reward(*reward_map, st.s, z, st.s_next);
        tr.steps.push_back(std::move(st));
        s = std::move(next);
    }
    return tr;
}

std::vector<Trajectory> collect_episodes(const Env& env, const Policy& policy,
                                         const FrequencyMask& skill_mask, int M, int T,
                                         std::uint64_t seed, std::uint64_t epoch,
                                         ReplayBuffer* buffer,
                                         const EquivariantFeatureMap* reward_map) {
    if (M < 1) throw std::invalid_argument("collect_episodes: M must be >= 1");
    std::vector<Trajectory> out(static_cast<std::size_t>(M));
#pragma omp parallel for schedule(dynamic)
    for (int m = 0; m < M; ++m) {
        Rng rng = Rng::stream(seed, "episode", epoch, static_cast<std::uint64_t>(m));
        const Vec z = sample_skill(rng, skill_mask);
        out[m] = rollout(env, policy, env.initial_state(rng), z, T, rng, false, reward_map);
    }
    if (buffer) {
        for (const auto& tr : out)
            for (const auto& st : tr.steps) buffer->push({st.s, st.a, st.s_next, tr.skill});
    }
    return out;
}

double policy_surrogate(const Policy& policy, std::span<const PolicySample> samples, Vec* grad) {
    if (samples.empty()) throw std::invalid_argument("policy_surrogate: no samples");
    const double n = static_cast<double>(samples.size());
    if (grad) grad->assign(policy.net().num_params(), 0.0);
    double loss = 0.0;
    for (const auto& smp : samples) {
        if (grad) {
            loss -= smp.advantage *
                    policy.log_prob_grad(smp.s, smp.z, smp.a, -smp.advantage / n, *grad);
        } else {
            loss -= smp.advantage * policy.log_prob(smp.s, smp.z, smp.a);
        }
    }
    return loss / n;
}

PolicyUpdateResult policy_update(Policy& policy, Adam& policy_opt, ValueBaseline& value,
                                 Adam& value_opt, std::span<const Trajectory> trajectories,
                                 const EquivariantFeatureMap& map, double gamma) {
    PolicyUpdateResult res;
    std::vector<PolicySample> samples;
    std::vector<double> returns;
    double total_return = 0.0;
    for (const auto& tr : trajectories) {
        const std::size_t T = tr.steps.size();
        std::vector<double> r(T);
        for (std::size_t t = 0; t < T; ++t) {
            r[t] = intrinsic_reward(map, tr.steps[t].s, tr.skill, tr.steps[t].s_next);
            total_return += r[t];
        }
        std::vector<double> G(T);
        double acc = 0.0;
        for (std::size_t t = T; t-- > 0;) {
            acc = r[t] + gamma * acc;
            G[t] = acc;
        }
        for (std::size_t t = 0; t < T; ++t) {
            samples.push_back({tr.steps[t].s, tr.skill, tr.steps[t].a, 0.0});
            returns.push_back(G[t]);
        }
    }
    if (samples.empty()) return res;
    res.mean_return = total_return / static_cast<double>(trajectories.size());
    const double n = static_cast<double>(samples.size());

    Vec vgrad(value.net().num_params(), 0.0);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double v = value.value(samples[i].s, samples[i].z);
        samples[i].advantage = returns[i] - v;
        res.value_loss += samples[i].advantage * samples[i].advantage / n;
        value.value_grad(samples[i].s, samples[i].z, -2.0 * samples[i].advantage / n, vgrad);
    }
    Vec pgrad;
    res.surrogate = policy_surrogate(policy, samples, &pgrad);
    if (!all_finite(pgrad) || !all_finite(vgrad) || !std::isfinite(res.surrogate)) {
        throw NumericalAbort("policy_update: non-finite gradient");
    }
    policy_opt.step(policy.net().params(), pgrad);
    value_opt.step(value.net().params(), vgrad);
    return res;
}

Coverage evaluate_coverage(const Env& env, const Policy& policy, std::span<const Vec> skills,
                           int horizon, double half_width, int cells) {
    if (cells < 1 || !(half_width > 0.0)) throw std::invalid_argument("evaluate_coverage: bad region");
    Coverage cov;
    cov.cells = cells;
    cov.counts.assign(static_cast<std::size_t>(cells * cells), 0);
    auto bin = [&](double x) {
        const double u = (x + half_width) / (2.0 * half_width) * cells;
        return static_cast<int>(std::floor(u));
    };
    auto visit = [&](const Vec& s) {
        const int bx = bin(s[0]);
        const int by = s.size() > 1 ? bin(s[1]) : 0;
        if (bx < 0 || bx >= cells || by < 0 || by >= cells) return;
        ++cov.counts[static_cast<std::size_t>(bx * cells + by)];
    };
    Rng unused(0);
    for (const auto& z : skills) {
        const Trajectory tr = rollout(env, policy, env.initial_state(unused), z, horizon, unused, true);
        visit(tr.steps.empty() ? env.initial_state(unused) : tr.steps.front().s);
        for (const auto& st : tr.steps) visit(st.s_next);
    }
    int visited = 0;
    for (int c : cov.counts) visited += c > 0;
    cov.fraction = static_cast<double>(visited) / static_cast<double>(cov.counts.size());
    return cov;
}

Coverage evaluate_coverage(const Env& env, const Policy& policy, const FrequencyMask& mask,
                           int num_skills, int horizon, double half_width, int cells,
                           std::uint64_t seed) {
    Rng rng = Rng::stream(seed, "eval-skills");
    std::vector<Vec> skills;
    for (int i = 0; i < num_skills; ++i) skills.push_back(sample_skill(rng, mask));
    return evaluate_coverage(env, policy, skills, horizon, half_width, cells);
}

PolicyTable symmetrized_table(const TabularPolicy& policy, const TabularSymmetricMDP& mdp,
                              std::span<const double> z) {
    const auto& group = mdp.group();
    const auto& skill_rep = policy.skill_rep();
    PolicyTable out = PolicyTable::Zero(mdp.num_states(), mdp.num_actions());
    for (int g = 0; g < group.order(); ++g) {
        const int ginv = group.inv(g);
        const Vec zg = skill_rep.apply(ginv, z);
        for (int s = 0; s < mdp.num_states(); ++s) {
            const Vec p = policy.probs(mdp.features(mdp.state_perm(ginv, s)), zg);
            for (int a = 0; a < mdp.num_actions(); ++a) out(s, a) += p[mdp.action_perm(ginv, a)];
        }
    }
    return out / static_cast<double>(group.order());
}

double giwdm_exact(const TabularSymmetricMDP& mdp,
                   const std::function<PolicyTable(const Vec&)>& table_for,
                   const EquivariantFeatureMap& map, std::span<const Vec> skills, int horizon) {
    if (skills.empty()) throw std::invalid_argument("giwdm_exact: no skills");
    std::vector<Vec> phi;
    for (int s = 0; s < mdp.num_states(); ++s) phi.push_back(map.forward(mdp.features(s)));
    double total = 0.0;
    for (const auto& z : skills) {
        const auto occ = occupancy_recursion(mdp, table_for(z), horizon);
        double v = 0.0;
        for (int s = 0; s < mdp.num_states(); ++s) {
            v += (occ.back()(s) - occ.front()(s)) * dot(phi[s], z);
        }
        total += v;
    }
    return total / static_cast<double>(skills.size());
}

Trainer::Trainer(Config cfg)
    : cfg_(std::move(cfg)),
      model_(build_model(cfg_)),
      buffer_(static_cast<std::size_t>(cfg_.buffer_capacity)),
      dual_{cfg_.lambda_init, cfg_.lr_dual},
      phi_opt_(model_.phi->net().num_params(), cfg_.lr_phi),
      policy_opt_(model_.policy->net().num_params(), cfg_.lr_policy),
      value_opt_(model_.value->net().num_params(), cfg_.lr_value) {}

void Trainer::abort_with_batch(const std::string& what, std::span<const Transition> batch) const {
    if (!dump_path_.empty()) {
        std::ofstream out(dump_path_);
        out << "# " << what << " (epoch " << epoch_ << ")\n";
        out << "s,a,s_next,z\n";
        for (const auto& t : batch) {
            out << join(t.s) << ',' << join(t.a) << ',' << join(t.s_next) << ',' << join(t.z) << '\n';
        }
    }
    throw NumericalAbort(what + " at epoch " + std::to_string(epoch_) +
                         (dump_path_.empty() ? "" : "; batch dumped to " + dump_path_.string()));
}

EpochMetrics Trainer::run_epoch() {
    auto& phi = *model_.phi;
    EpochMetrics m;
    m.epoch = epoch_ + 1;
    const auto ep = static_cast<std::uint64_t>(epoch_);

    last_episodes_ = collect_episodes(*model_.env, *model_.policy, phi.mask(), cfg_.episodes,
                                      cfg_.horizon, cfg_.seed, ep, &buffer_);

    const auto B = static_cast<std::size_t>(cfg_.batch_size);
    for (int k = 0; k < cfg_.phi_steps; ++k) {
        Rng rng = Rng::stream(cfg_.seed, "batch", ep, static_cast<std::uint64_t>(k));
        const auto batch = buffer_.sample(B, rng);
        auto res = discriminator_loss(phi, dual_.lambda, batch, cfg_.epsilon);
        if (!std::isfinite(res.objective) || !all_finite(res.grad)) {
            abort_with_batch("non-finite discriminator objective", batch);
        }
        for (auto& g : res.grad) g = -g;  // ascent
        phi_opt_.step(phi.net().params(), res.grad);
        m.j_phi = res.objective;
    }

    for (int k = 0; k < cfg_.dual_steps; ++k) {
        Rng rng = Rng::stream(cfg_.seed, "dual", ep, static_cast<std::uint64_t>(k));
        const auto batch = buffer_.sample(B, rng);
        m.mean_violation = dual_update(dual_, phi, batch, cfg_.epsilon);
        if (!std::isfinite(dual_.lambda)) abort_with_batch("non-finite dual variable", batch);
    }
    m.lambda = dual_.lambda;

    for (int k = 0; k < cfg_.policy_steps; ++k) {
        const auto res = policy_update(*model_.policy, policy_opt_, *model_.value, value_opt_,
                                       last_episodes_, phi, cfg_.gamma);
        m.policy_loss = res.surrogate;
        m.value_loss = res.value_loss;
    }
    m.giwdm = giwdm_estimate(phi, last_episodes_);
    if (!std::isfinite(m.giwdm)) throw NumericalAbort("non-finite GIWDM estimate");

    ++epoch_;
    const bool last = epoch_ == cfg_.epochs;
    if ((cfg_.coverage_every > 0 && epoch_ % cfg_.coverage_every == 0) || last) {
        m.coverage = coverage().fraction;
    }
    return m;
}

Coverage Trainer::coverage() const {
    double half = cfg_.coverage_half_width;
    int cells = cfg_.coverage_cells;
    if (const auto* mdp = model_.tabular()) {
        (void)mdp;
        half = cfg_.grid_side / 2 + 0.5;
        cells = cfg_.grid_side;
    }
    return evaluate_coverage(*model_.env, *model_.policy, model_.phi->mask(), cfg_.eval_skills,
                             cfg_.horizon, half, cells, cfg_.seed);
}

void Trainer::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
    out << "gisd-checkpoint v1\n";
    const std::string cfg_text = to_text(cfg_);
    out << "config " << std::count(cfg_text.begin(), cfg_text.end(), '\n') << '\n';
    out << cfg_text;
    out << "epoch " << epoch_ << '\n';
    out << "lambda " << format_double(dual_.lambda) << '\n';
    write_net(out, "phi", model_.phi->net());
    write_net(out, "policy", model_.policy->net());
    write_net(out, "value", model_.value->net());
    auto write_adam = [&](const std::string& tag, const Adam& a) {
        out << "adam " << tag << ' ' << a.t() << '\n';
        write_vector(out, tag + "_m", a.m());
        write_vector(out, tag + "_v", a.v());
    };
    write_adam("phi", phi_opt_);
    write_adam("policy", policy_opt_);
    write_adam("value", value_opt_);
    out << "buffer " << buffer_.size() << ' ' << buffer_.inserted() << '\n';
    for (std::size_t i = 0; i < buffer_.size(); ++i) {
        const auto& t = buffer_.at(i);
        out << join(t.s) << " | " << join(t.a) << " | " << join(t.s_next) << " | " << join(t.z) << '\n';
    }
}

Trainer Trainer::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    if (line != "gisd-checkpoint v1") throw std::runtime_error("not a checkpoint: " + path.string());
    std::string word;
    std::size_t nlines = 0;
    in >> word >> nlines;
    if (word != "config") throw std::runtime_error("checkpoint: missing config section");
    std::getline(in, line);
    std::string text;
    for (std::size_t i = 0; i < nlines && std::getline(in, line); ++i) text += line + '\n';
    Trainer tr(parse_config(text));
    in >> word >> tr.epoch_;
    in >> word >> tr.dual_.lambda;
    read_net(in, "phi", tr.model_.phi->net());
    read_net(in, "policy", tr.model_.policy->net());
    read_net(in, "value", tr.model_.value->net());
    auto read_adam = [&](const std::string& tag, Adam& a) {
        long long t = 0;
        in >> word >> word >> t;
        a.set_t(t);
        a.m() = read_vector(in, tag + "_m");
        a.v() = read_vector(in, tag + "_v");
    };
    read_adam("phi", tr.phi_opt_);
    read_adam("policy", tr.policy_opt_);
    read_adam("value", tr.value_opt_);
    std::size_t size = 0;
    std::uint64_t inserted = 0;
    in >> word >> size >> inserted;
    std::getline(in, line);
    auto parse_vec = [](const std::string& s) {
        std::istringstream ss(s);
        Vec v;
        for (std::string tok; ss >> tok;) v.push_back(std::stod(tok));
        return v;
    };
    std::vector<Transition> records;
    records.reserve(size);
    for (std::size_t i = 0; i < size; ++i) {
        if (!std::getline(in, line)) throw std::runtime_error("checkpoint: truncated buffer");
        std::vector<std::string> parts;
        std::size_t start = 0;
        for (std::size_t bar; (bar = line.find(" | ", start)) != std::string::npos; start = bar + 3) {
            parts.push_back(line.substr(start, bar - start));
        }
        parts.push_back(line.substr(start));
        if (parts.size() != 4) throw std::runtime_error("checkpoint: malformed buffer record");
        records.push_back({parse_vec(parts[0]), parse_vec(parts[1]), parse_vec(parts[2]),
                           parse_vec(parts[3])});
    }
    tr.buffer_.restore(std::move(records), inserted);
    return tr;
}

void train(Trainer& trainer,
           const std::function<void(const EpochMetrics&, const Trainer&)>& on_epoch) {
    while (trainer.epoch() < trainer.config().epochs) {
        const auto m = trainer.run_epoch();
        if (on_epoch) on_epoch(m, trainer);
    }
}

}  // namespace gisd
