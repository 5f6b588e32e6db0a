#include "gisd/run.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "gisd/checkpoint.hpp"
#include "gisd/kernels.hpp"

#ifndef GISD_VERSION
#define GISD_VERSION "unknown"
#endif

namespace gisd {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifestName = "manifest.json";

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- outputs

std::string csv_comment() { return std::string("# manifest: ") + kManifestName + "\n"; }

struct Artifact {
    std::string kind;
    std::string path;  // relative to the out dir
};

class RunWriter {
public:
    RunWriter(fs::path dir, std::string command, const Config& cfg)
        : dir_(std::move(dir)), command_(std::move(command)), cfg_(cfg) {
        fs::create_directories(dir_);
    }

    fs::path path(const std::string& name) const { return dir_ / name; }

    std::ofstream open(const std::string& kind, const std::string& name) {
        std::ofstream out(path(name));
        if (!out) throw std::runtime_error("cannot write '" + path(name).string() + "'");
        add(kind, name);
        return out;
    }
    void add(const std::string& kind, const std::string& name) { artifacts_.push_back({kind, name}); }
    void set_extra(const std::string& key, nlohmann::json value) { extra_[key] = std::move(value); }

    void write_manifest() const {
        nlohmann::ordered_json j;
        j["format"] = "gisd-run-manifest v1";
        j["version"] = GISD_VERSION;
        j["command"] = command_;
        j["seed"] = cfg_.seed;
        nlohmann::ordered_json env;
        env["name"] = cfg_.env;
        env["group"] = "C" + std::to_string(cfg_.group_order);
        if (cfg_.env == "grid") {
            env["side"] = cfg_.grid_side;
            env["slip"] = cfg_.grid_slip;
        } else {
            env["dt"] = cfg_.pm_dt;
            env["arena_radius"] = cfg_.pm_arena_radius;
            env["max_speed"] = cfg_.pm_max_speed;
            env["noise_std"] = cfg_.pm_noise_std;
        }
        j["env"] = env;
        j["rep"] = cfg_.rep;
        nlohmann::ordered_json c;
        std::istringstream lines(to_text(cfg_));
        for (std::string line; std::getline(lines, line);) {
            const auto eq = line.find(" = ");
            c[line.substr(0, eq)] = line.substr(eq + 3);
        }
        j["config"] = c;
        for (const auto& [k, v] : extra_.items()) j[k] = v;
        nlohmann::ordered_json arts = nlohmann::ordered_json::array();
        for (const auto& a : artifacts_) arts.push_back({{"kind", a.kind}, {"path", a.path}});
        j["artifacts"] = arts;
        std::ofstream out(path(kManifestName));
        out << j.dump(2) << '\n';
    }

private:
    fs::path dir_;
    std::string command_;
    Config cfg_;
    std::vector<Artifact> artifacts_;
    nlohmann::json extra_ = nlohmann::json::object();
};

void write_trajectories(std::ostream& out, std::span<const Trajectory> trajs) {
    out << csv_comment();
    if (trajs.empty() || trajs.front().steps.empty()) {
        out << "episode,t,reward\n";
        return;
    }
    const auto& first = trajs.front();
    out << "episode,t";
    for (std::size_t i = 0; i < first.skill.size(); ++i) out << ",z" << i;
    for (std::size_t i = 0; i < first.steps.front().s.size(); ++i) out << ",s" << i;
    for (std::size_t i = 0; i < first.steps.front().a.size(); ++i) out << ",a" << i;
    out << ",reward\n";
    for (std::size_t e = 0; e < trajs.size(); ++e) {
        for (std::size_t t = 0; t < trajs[e].steps.size(); ++t) {
            const auto& st = trajs[e].steps[t];
            out << e << ',' << t;
            for (double v : trajs[e].skill) out << ',' << format_double(v);
            for (double v : st.s) out << ',' << format_double(v);
            for (double v : st.a) out << ',' << format_double(v);
            out << ',' << format_double(st.reward) << '\n';
        }
    }
}

void write_coverage(std::ostream& out, const Coverage& cov, double half_width) {
    out << csv_comment();
    out << "# fraction " << format_double(cov.fraction) << " cells " << cov.cells << " half_width "
        << format_double(half_width) << " (rows: x bins, columns: y bins)\n";
    for (int r = 0; r < cov.cells; ++r) {
        for (int c = 0; c < cov.cells; ++c) {
            if (c) out << ' ';
            out << cov.counts[static_cast<std::size_t>(r * cov.cells + c)];
        }
        out << '\n';
    }
}

double coverage_half_width(const Config& cfg) {
    return cfg.env == "grid" ? cfg.grid_side / 2 + 0.5 : cfg.coverage_half_width;
}

std::string epoch_tag(int epoch) {
    std::ostringstream s;
    s << std::setw(5) << std::setfill('0') << epoch;
    return s.str();
}

Config resolve_config(const RunOptions& opts) {
    Config cfg = opts.config.empty() ? Config{} : load_config(opts.config);
    if (opts.seed) cfg.seed = *opts.seed;
    validate(cfg);
    return cfg;
}

// ---------------------------------------------------------------- battery

Vec random_vec(Rng& rng, int n, double scale = 1.0) {
    Vec v(static_cast<std::size_t>(n));
    for (auto& x : v) x = scale * rng.normal();
    return v;
}

// Random state in the env's own coordinates: a grid cell or a point in the arena.
Vec random_state(const Env& env, Rng& rng) {
    if (const auto* mdp = dynamic_cast<const TabularSymmetricMDP*>(&env)) {
        return mdp->features(rng.uniform_int(mdp->num_states()));
    }
    return random_vec(rng, env.state_dim(), 0.5);
}

CheckResult below(std::string name, double residual, double threshold, std::string detail = {}) {
    return {std::move(name), residual, threshold, residual < threshold, std::move(detail)};
}

// max over orbit-closed skills, g, s of |p_t(g s) under g z - p_t(s) under z|
double occupancy_residual(const TabularSymmetricMDP& mdp, const TabularPolicy& pi,
                          std::span<const Vec> skills, int horizon) {
    const int G = mdp.group().order();
    double worst = 0.0;
    for (std::size_t o = 0; o < skills.size(); o += static_cast<std::size_t>(G)) {
        const auto base = occupancy_recursion(mdp, pi.table(mdp, skills[o]), horizon);
        for (int g = 1; g < G; ++g) {
            const auto moved = occupancy_recursion(mdp, pi.table(mdp, skills[o + g]), horizon);
            for (std::size_t t = 0; t < base.size(); ++t)
                for (int s = 0; s < mdp.num_states(); ++s)
                    worst = std::max(worst, std::abs(moved[t](mdp.state_perm(g, s)) - base[t](s)));
        }
    }
    return worst;
}

double distance_residual(const TabularSymmetricMDP& mdp, const Eigen::MatrixXd& d) {
    double worst = 0.0;
    for (int g = 0; g < mdp.group().order(); ++g)
        for (int a = 0; a < mdp.num_states(); ++a)
            for (int b = 0; b < mdp.num_states(); ++b) {
                const double x = d(mdp.state_perm(g, a), mdp.state_perm(g, b));
                const double y = d(a, b);
                if (std::isinf(x) || std::isinf(y)) {
                    if (x != y) return kUnreachable;
                    continue;
                }
                worst = std::max(worst, std::abs(x - y));
            }
    return worst;
}

}  // namespace

std::vector<CheckResult> invariant_battery(const Config& cfg, const Model& model, int trials) {
    std::vector<CheckResult> out;
    const auto& group = model.env->group();
    const int G = group.order();
    Rng rng = Rng::stream(cfg.seed, "invariants");

    {
        const auto irreps = cyclic_irreps(group);
        double worst = 0.0;
        for (int t = 0; t < 100; ++t) {
            std::vector<double> f(static_cast<std::size_t>(G));
            for (auto& x : f) x = rng.normal();
            worst = std::max(worst, max_abs_diff(f, fourier_synthesize(group, irreps, fourier_analyze(group, irreps, f))));
        }
        out.push_back(below("fourier round trip", worst, 1e-10));
        double schur = 0.0;
        for (std::size_t i = 0; i < irreps.size(); ++i)
            for (std::size_t j = 0; j < irreps.size(); ++j)
                if (i != j) schur = std::max(schur, schur_cross_average(group, irreps[i], irreps[j]).norm());
        out.push_back(below("schur cross-frequency", schur, 1e-10));
    }

    const auto& phi = *model.phi;
    const auto& srep = model.env->state_rep();
    const auto& frep = phi.rep();
    {
        EquivariantFeatureMap probe = phi;
        double eq = 0.0, reward = 0.0, slack = 0.0, avg = 0.0;
        Rng init = Rng::stream(cfg.seed, "invariants-theta");
        for (int t = 0; t < trials; ++t) {
            // the current parameters first, then fresh draws
            if (t > 0) probe.init(init);
            const Vec s = random_state(*model.env, rng);
            const Vec s2 = random_state(*model.env, rng);
            const Vec z = sample_skill(rng, frep.total_dim());
            const int g = rng.uniform_int(G);
            eq = std::max(eq, max_abs_diff(probe.forward(srep.apply(g, s)), frep.apply(g, probe.forward(s))));
            reward = std::max(reward, std::abs(intrinsic_reward(probe, srep.apply(g, s), frep.apply(g, z), srep.apply(g, s2)) -
                                               intrinsic_reward(probe, s, z, s2)));
            slack = std::max(slack, std::abs(lipschitz_violation(probe, srep.apply(g, s), srep.apply(g, s2), cfg.epsilon) -
                                             lipschitz_violation(probe, s, s2, cfg.epsilon)));
            // averaging the raw (unsymmetrized) score <h(s), z>
            const ScoringFn f = [&](std::span<const double> x, std::span<const double> w) {
                return dot(probe.net().forward(x), w);
            };
            const auto ft = group_average_scoring(
                group, f, [&](int h, std::span<const double> x) { return srep.apply(h, x); },
                [&](int h, std::span<const double> x) { return frep.apply(h, x); });
            avg = std::max(avg, std::abs(ft(srep.apply(g, s), frep.apply(g, z)) - ft(s, z)));
        }
        out.push_back(below("feature-map equivariance", eq, 1e-9, std::to_string(trials) + " draws"));
        out.push_back(below("intrinsic reward invariance", reward, 1e-9));
        out.push_back(below("lipschitz slack invariance", slack, 1e-9));
        out.push_back(below("group-averaged score invariance", avg, 1e-9));
    }

    {
        double worst = 0.0;
        if (const auto* tab = dynamic_cast<const TabularPolicy*>(model.policy.get())) {
            const auto* mdp = model.tabular();
            for (int t = 0; t < trials; ++t) {
                const Vec s = random_state(*model.env, rng);
                const Vec z = sample_skill(rng, phi.mask());
                const int g = rng.uniform_int(G);
                const Vec p = tab->probs(s, z);
                const Vec pg = tab->probs(srep.apply(g, s), frep.apply(g, z));
                for (int a = 0; a < tab->num_actions(); ++a)
                    worst = std::max(worst, std::abs(pg[mdp->action_perm(g, a)] - p[a]));
            }
        } else if (const auto* gau = dynamic_cast<const GaussianPolicy*>(model.policy.get())) {
            for (int t = 0; t < trials; ++t) {
                const Vec s = random_state(*model.env, rng);
                const Vec z = sample_skill(rng, phi.mask());
                const int g = rng.uniform_int(G);
                worst = std::max(worst, max_abs_diff(gau->mean(srep.apply(g, s), frep.apply(g, z)),
                                                     srep.apply(g, gau->mean(s, z))));
            }
        }
        out.push_back(below("policy equivariance", worst, 1e-9));
    }

    if (const auto* mdp = model.tabular()) {
        out.push_back(below("transition tensor invariance", verify_invariance(*mdp), 1e-12));
        const auto& pi = dynamic_cast<const TabularPolicy&>(*model.policy);
        Rng skill_rng = Rng::stream(cfg.seed, "invariants-skills");
        const auto skills = orbit_closed_skills(frep, phi.mask(), 8, skill_rng);
        const auto table = [&](const Vec& z) { return pi.table(*mdp, z); };
        for (int k = 1; k <= 3; ++k) {
            const auto rep = verify_semi_mdp_invariance(*mdp, table, skills, k);
            std::ostringstream w;
            w << "witness g=" << rep.witness_g << " s=" << rep.witness_s << " skill=" << rep.witness_skill;
            out.push_back(below("k-step kernel invariance k=" + std::to_string(k), rep.max_tv, 1e-9,
                                rep.max_tv < 1e-9 ? std::string("max abs ") + format_double(rep.max_abs) : w.str()));
        }
        out.push_back(below("occupancy invariance T=20", occupancy_residual(*mdp, pi, skills, 20), 1e-9));
        const auto d = temporal_distance(*mdp, uniform_policy(*mdp), 1e-10);
        out.push_back(below("temporal distance invariance", distance_residual(*mdp, d), 1e-8, "uniform policy"));
    } else {
        double worst = 0.0;
        Rng unused(0);
        for (int t = 0; t < trials; ++t) {
            const Vec s = random_state(*model.env, rng);
            const Vec a = random_vec(rng, model.env->action_dim(), 2.0);
            const int g = rng.uniform_int(G);
            worst = std::max(worst, max_abs_diff(model.env->step(srep.apply(g, s), model.env->act_on_action(g, a), unused),
                                                 srep.apply(g, model.env->step(s, a, unused))));
        }
        out.push_back(below("point-mass step equivariance", model.env->is_deterministic() ? worst : 0.0, 1e-12,
                            model.env->is_deterministic() ? "" : "noise on: checked on the noise-free core"));
        if (model.env->is_deterministic()) {
            double dev = 0.0;
            for (int k = 0; k < 16; ++k) {
                const Vec z = sample_skill(rng, phi.mask());
                for (int g = 0; g < G; ++g) {
                    dev = std::max(dev, transform_skill_generalization(*model.env, *model.policy, z, g,
                                                                       model.env->initial_state(unused),
                                                                       cfg.horizon)
                                            .max_deviation);
                }
            }
            out.push_back(below("orbit rollout generalization", dev, 1e-8, "16 skills"));
        }
    }
    return out;
}

std::string metrics_header() {
    return "epoch,j_phi,lambda,mean_violation,giwdm,policy_loss,value_loss,coverage\n";
}

std::string metrics_row(const EpochMetrics& m) {
    std::string s = std::to_string(m.epoch);
    for (double v : {m.j_phi, m.lambda, m.mean_violation, m.giwdm, m.policy_loss, m.value_loss}) {
        s += ',';
        s += format_double(v);
    }
    s += ',';
    if (m.coverage) s += format_double(*m.coverage);
    s += '\n';
    return s;
}

HighLevelPolicy make_high_level(const Config& cfg, const Model& low) {
    HighLevelPolicy high(low.env->state_rep(), low.phi->rep(), low.phi->mask().weights(), cfg.hl_hidden,
                         cfg.hl_angle_std, cfg.hl_symmetrize);
    Rng rng = Rng::stream(cfg.seed, "hl-init");
    high.init(rng);
    return high;
}

void save_high_level(const fs::path& path, const Config& cfg, const HighLevelPolicy& high) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << "gisd-high-level v1\n";
    const std::string text = to_text(cfg);
    out << "config " << std::count(text.begin(), text.end(), '\n') << '\n' << text;
    write_net(out, "high", high.net());
}

HighLevelPolicy load_high_level(const fs::path& path, const Model& low, Config* cfg_out) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open high-level checkpoint '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    if (line != "gisd-high-level v1") throw std::runtime_error("not a high-level checkpoint: " + path.string());
    std::string word;
    std::size_t n = 0;
    in >> word >> n;
    std::getline(in, line);
    std::string text;
    for (std::size_t i = 0; i < n && std::getline(in, line); ++i) text += line + '\n';
    const Config cfg = parse_config(text);
    HighLevelPolicy high = make_high_level(cfg, low);
    read_net(in, "high", high.net());
    if (cfg_out) *cfg_out = cfg;
    return high;
}

namespace {

// ---------------------------------------------------------------- commands

int cmd_train_skills(const RunOptions& opts, std::ostream& out, std::ostream& err) {
    std::optional<Trainer> trainer;
    if (!opts.checkpoint.empty()) {
        trainer.emplace(Trainer::load(opts.checkpoint));
        if (!opts.config.empty()) err << "note: resuming; the checkpoint's config is used\n";
    } else {
        trainer.emplace(resolve_config(opts));
    }
    const Config& cfg = trainer->config();
    RunWriter run(opts.out_dir, "train-skills", cfg);
    if (!opts.checkpoint.empty()) run.set_extra("resumed_from", opts.checkpoint);
    trainer->set_dump_path(run.path("nan_dump.csv"));

    auto metrics = run.open("metrics", "metrics.csv");
    metrics << csv_comment() << metrics_header();
    const double half = coverage_half_width(cfg);
    int exit_code = kExitOk;
    try {
        train(*trainer, [&](const EpochMetrics& m, const Trainer& t) {
            metrics << metrics_row(m);
            metrics.flush();
            const bool last = m.epoch == cfg.epochs;
            if (!last && cfg.checkpoint_every > 0 && m.epoch % cfg.checkpoint_every == 0) {
                const std::string name = "checkpoint_" + epoch_tag(m.epoch) + ".ckpt";
                t.save(run.path(name));
                run.add("checkpoint", name);
            }
            if (!last && m.coverage) {
                const std::string name = "coverage_" + epoch_tag(m.epoch) + ".txt";
                auto f = run.open("coverage-grid", name);
                write_coverage(f, t.coverage(), half);
            }
            out << "epoch " << m.epoch << "/" << cfg.epochs << "  J_phi " << format_double(m.j_phi)
                << "  lambda " << format_double(m.lambda) << "  giwdm " << format_double(m.giwdm);
            if (m.coverage) out << "  coverage " << format_double(*m.coverage);
            out << '\n';
        });
    } catch (const NumericalAbort& e) {
        err << "numerical abort: " << e.what() << '\n';
        run.add("nan-dump", "nan_dump.csv");
        exit_code = kExitNumerical;
    }
    if (exit_code == kExitOk) {
        auto traj = run.open("trajectories", "trajectories.csv");
        std::vector<Trajectory> last = trainer->last_episodes();
        for (auto& tr : last)
            for (auto& st : tr.steps) st.reward = intrinsic_reward(*trainer->model().phi, st.s, tr.skill, st.s_next);
        write_trajectories(traj, last);
        trainer->save(run.path("checkpoint.ckpt"));
        run.add("checkpoint", "checkpoint.ckpt");
        auto cov = run.open("coverage-grid", "coverage.txt");
        write_coverage(cov, trainer->coverage(), half);
    }
    run.write_manifest();
    return exit_code;
}

int print_battery(const std::vector<CheckResult>& rows, std::ostream& out) {
    std::size_t width = 0;
    for (const auto& r : rows) width = std::max(width, r.name.size());
    bool ok = true;
    for (const auto& r : rows) {
        out << (r.passed ? "PASS  " : "FAIL  ") << std::left << std::setw(static_cast<int>(width) + 2) << r.name
            << "residual " << std::setw(24) << format_double(r.residual) << " < " << std::setprecision(3) << r.threshold;
        if (!r.detail.empty()) out << "   (" << r.detail << ")";
        out << '\n';
        ok = ok && r.passed;
    }
    out << (ok ? "all invariants hold\n" : "invariant failure\n");
    return ok ? kExitOk : kExitInvariant;
}

int cmd_check_invariants(const RunOptions& opts, std::ostream& out, std::ostream&) {
    if (!opts.checkpoint.empty()) {
        const Trainer tr = Trainer::load(opts.checkpoint);
        Config cfg = tr.config();
        if (opts.seed) cfg.seed = *opts.seed;
        return print_battery(invariant_battery(cfg, tr.model()), out);
    }
    const Config cfg = resolve_config(opts);
    const Model model = build_model(cfg);
    return print_battery(invariant_battery(cfg, model), out);
}

std::string require_checkpoint(const RunOptions& opts, const std::string& what) {
    if (opts.checkpoint.empty()) throw UsageError(what + " requires --checkpoint");
    return opts.checkpoint;
}

int eval_coverage(const RunOptions& opts, std::ostream& out) {
    const Trainer tr = Trainer::load(require_checkpoint(opts, "eval --mode coverage"));
    Config cfg = tr.config();
    if (opts.seed) cfg.seed = *opts.seed;
    const auto& m = tr.model();
    const double half = coverage_half_width(cfg);
    const int cells = m.tabular() ? cfg.grid_side : cfg.coverage_cells;
    Rng rng = Rng::stream(cfg.seed, "eval-skills");
    std::vector<Vec> skills;
    for (int i = 0; i < cfg.eval_skills; ++i) skills.push_back(sample_skill(rng, m.phi->mask()));
    const auto cov = evaluate_coverage(*m.env, *m.policy, skills, cfg.horizon, half, cells);

    RunWriter run(opts.out_dir, "eval coverage", cfg);
    run.set_extra("checkpoint", opts.checkpoint);
    auto grid = run.open("coverage-grid", "eval_coverage.txt");
    write_coverage(grid, cov, half);
    std::vector<Trajectory> trajs;
    Rng unused(0);
    for (const auto& z : skills) {
        auto t = rollout(*m.env, *m.policy, m.env->initial_state(unused), z, cfg.horizon, unused, true, m.phi.get());
        trajs.push_back(std::move(t));
    }
    auto traj = run.open("trajectories", "eval_trajectories.csv");
    write_trajectories(traj, trajs);
    run.write_manifest();
    out << "coverage " << format_double(cov.fraction) << " over " << skills.size() << " skills, "
        << cells << "x" << cells << " cells\n";
    return kExitOk;
}

int eval_orbit(const RunOptions& opts, std::ostream& out) {
    const Trainer tr = Trainer::load(require_checkpoint(opts, "eval --mode orbit-generalization"));
    Config cfg = tr.config();
    if (opts.seed) cfg.seed = *opts.seed;
    const auto& m = tr.model();
    if (!m.env->is_deterministic()) {
        throw UsageError("eval --mode orbit-generalization needs a deterministic env (set pm_noise_std = 0 "
                         "or grid_slip = 0)");
    }
    RunWriter run(opts.out_dir, "eval orbit-generalization", cfg);
    run.set_extra("checkpoint", opts.checkpoint);
    auto csv = run.open("orbit-generalization", "orbit_generalization.csv");
    csv << csv_comment() << "skill,g,t";
    for (int i = 0; i < m.env->state_dim(); ++i) csv << ",gs" << i;
    for (int i = 0; i < m.env->state_dim(); ++i) csv << ",s_g" << i;
    csv << ",deviation\n";
    Rng rng = Rng::stream(cfg.seed, "orbit-skills");
    Rng unused(0);
    double worst = 0.0;
    const int G = m.env->group().order();
    for (int k = 0; k < 16; ++k) {
        const Vec z = sample_skill(rng, m.phi->mask());
        for (int g = 0; g < G; ++g) {
            const auto res = transform_skill_generalization(*m.env, *m.policy, z, g, m.env->initial_state(unused),
                                                            cfg.horizon);
            worst = std::max(worst, res.max_deviation);
            for (std::size_t t = 0; t < res.states.size(); ++t) {
                const Vec gs = m.env->act_on_state(g, res.states[t]);
                csv << k << ',' << g << ',' << t;
                for (double v : gs) csv << ',' << format_double(v);
                for (double v : res.transformed[t]) csv << ',' << format_double(v);
                csv << ',' << format_double(norm2(sub(gs, res.transformed[t]))) << '\n';
            }
        }
    }
    run.write_manifest();
    const bool pass = worst < 1e-8;
    out << "max deviation " << format_double(worst) << " over 16 skills x " << G << " group elements: "
        << (pass ? "PASS" : "FAIL") << " (threshold 1e-8)\n";
    return pass ? kExitOk : kExitInvariant;
}

// Low level for downstream work: --checkpoint, else the config's low_checkpoint.
std::string low_level_path(const Config& cfg, const std::string& fallback) {
    if (!cfg.low_checkpoint.empty()) return cfg.low_checkpoint;
    if (!fallback.empty()) return fallback;
    throw ConfigError("config key 'low_checkpoint': downstream training needs a pretrained low-level checkpoint");
}

const TabularSymmetricMDP& require_tabular(const Model& m) {
    const auto* mdp = m.tabular();
    if (!mdp) throw UsageError("downstream tasks run on the grid env; the low-level checkpoint is a point-mass run");
    return *mdp;
}

SemiMDPConfig semi_config(const Config& cfg) {
    return {cfg.hl_interval, cfg.hl_goal_half_width, cfg.hl_episode_steps};
}

void write_decisions(std::ostream& out, const std::string& label, int episode, const HierarchicalEpisode& ep,
                     bool header) {
    if (header) {
        out << "probe,episode,t,s0,s1,rel_goal0,rel_goal1,angle";
        for (std::size_t i = 0; i < ep.decisions.front().z.size(); ++i) out << ",z" << i;
        out << ",reward_after\n";
    }
    for (const auto& d : ep.decisions) {
        out << label << ',' << episode << ',' << d.t << ',' << format_double(d.s[0]) << ',' << format_double(d.s[1])
            << ',' << format_double(d.rel_goal[0]) << ',' << format_double(d.rel_goal[1]) << ','
            << format_double(d.angle);
        for (double v : d.z) out << ',' << format_double(v);
        out << ',' << format_double(d.reward_after) << '\n';
    }
}

// Greedy episodes from the centre towards goal and its rotations, logged per decision.
double mirrored_goal_probe(std::ostream& csv, const TabularSymmetricMDP& mdp, const HighLevelPolicy& high,
                           const Policy& low, const SemiMDPConfig& semi, const DirectSumRep& frep,
                           std::uint64_t seed) {
    const Vec goal = mdp.num_states() > 9 ? Vec{1.0, 2.0} : Vec{1.0, 1.0};
    double worst = 0.0;
    std::vector<HierarchicalEpisode> eps;
    for (int g = 0; g < mdp.group().order(); ++g) {
        Rng rng = Rng::stream(seed, "hl-probe");
        eps.push_back(run_hierarchical_episode(mdp, high, low, semi, rng, true, mdp.state_rep().apply(g, goal)));
        write_decisions(csv, "g" + std::to_string(g), 0, eps.back(), g == 0);
        worst = std::max(worst, max_abs_diff(eps.back().decisions.front().z, frep.apply(g, eps.front().decisions.front().z)));
    }
    return worst;
}

int eval_downstream(const RunOptions& opts, std::ostream& out) {
    const std::string hl_path = require_checkpoint(opts, "eval --mode downstream");
    // the high-level checkpoint names its low level
    Config hl_cfg;
    {
        std::ifstream in(hl_path);
        if (!in) throw std::runtime_error("cannot open high-level checkpoint '" + hl_path + "'");
        std::string line, word;
        std::getline(in, line);
        if (line != "gisd-high-level v1") throw UsageError("eval --mode downstream expects a high-level checkpoint");
        std::size_t n = 0;
        in >> word >> n;
        std::getline(in, line);
        std::string text;
        for (std::size_t i = 0; i < n && std::getline(in, line); ++i) text += line + '\n';
        hl_cfg = parse_config(text);
    }
    if (hl_cfg.low_checkpoint.empty()) {
        throw ConfigError("config key 'low_checkpoint' is missing from the high-level checkpoint");
    }
    const Trainer low = Trainer::load(hl_cfg.low_checkpoint);
    const auto& mdp = require_tabular(low.model());
    Config cfg;
    const HighLevelPolicy high = load_high_level(hl_path, low.model(), &cfg);
    if (opts.seed) cfg.seed = *opts.seed;
    const auto semi = semi_config(cfg);

    RunWriter run(opts.out_dir, "eval downstream", cfg);
    run.set_extra("checkpoint", hl_path);
    auto csv = run.open("high-level-decisions", "downstream_eval.csv");
    csv << csv_comment();
    double total = 0.0;
    const int episodes = 64;
    for (int e = 0; e < episodes; ++e) {
        Rng rng = Rng::stream(cfg.seed, "hl-eval", static_cast<std::uint64_t>(e));
        const auto ep = run_hierarchical_episode(mdp, high, *low.model().policy, semi, rng);
        total += ep.total_reward;
        write_decisions(csv, "eval", e, ep, e == 0);
    }
    auto probe = run.open("mirrored-goal-probe", "mirrored_goal_probe.csv");
    probe << csv_comment();
    const double dev = mirrored_goal_probe(probe, mdp, high, *low.model().policy, semi, low.model().phi->rep(), cfg.seed);
    run.write_manifest();
    out << "mean return " << format_double(total / episodes) << " over " << episodes << " episodes\n";
    out << "mirrored-goal probe: first-decision skill deviation " << format_double(dev) << '\n';
    return kExitOk;
}

int cmd_eval(const RunOptions& opts, std::ostream& out, std::ostream&) {
    if (opts.mode == "coverage") return eval_coverage(opts, out);
    if (opts.mode == "orbit-generalization") return eval_orbit(opts, out);
    if (opts.mode == "downstream") return eval_downstream(opts, out);
    throw UsageError("eval --mode must be coverage, downstream or orbit-generalization (got '" + opts.mode + "')");
}

int cmd_train_downstream(const RunOptions& opts, std::ostream& out, std::ostream&) {
    Config cfg = resolve_config(opts);
    cfg.low_checkpoint = low_level_path(cfg, opts.checkpoint);
    const Trainer low = Trainer::load(cfg.low_checkpoint);
    const auto& mdp = require_tabular(low.model());
    const Policy& low_policy = *low.model().policy;
    HighLevelPolicy high = make_high_level(cfg, low.model());

    HighLevelTrainConfig hc;
    hc.semi = semi_config(cfg);
    hc.iterations = cfg.hl_iterations;
    hc.episodes_per_iter = cfg.hl_episodes_per_iter;
    hc.lr = cfg.hl_lr;
    hc.gamma = cfg.gamma;
    hc.seed = cfg.seed;

    const auto before = param_checksum(low_policy.net());
    const auto res = train_high_level(mdp, high, low_policy, hc);
    const auto after = param_checksum(low_policy.net());

    RunWriter run(opts.out_dir, "train-downstream", cfg);
    run.set_extra("low_level_checksum", std::to_string(before));
    auto curve = run.open("return-curve", "downstream_returns.csv");
    curve << csv_comment() << "iteration,mean_return\n";
    curve << "0," << format_double(res.baseline_return) << '\n';
    for (std::size_t i = 0; i < res.return_curve.size(); ++i)
        curve << i + 1 << ',' << format_double(res.return_curve[i]) << '\n';
    save_high_level(run.path("high_level.ckpt"), cfg, high);
    run.add("checkpoint", "high_level.ckpt");
    auto probe = run.open("mirrored-goal-probe", "mirrored_goal_probe.csv");
    probe << csv_comment();
    const double dev = mirrored_goal_probe(probe, mdp, high, low_policy, hc.semi, low.model().phi->rep(), cfg.seed);
    run.write_manifest();

    out << "baseline return " << format_double(res.baseline_return) << ", final return "
        << format_double(res.final_return) << '\n';
    out << "mirrored-goal probe: first-decision skill deviation " << format_double(dev) << '\n';
    if (before != after) {
        out << "low-level parameters changed during downstream training\n";
        return kExitInvariant;
    }
    return kExitOk;
}

}  // namespace

int run_command(const RunOptions& opts, std::ostream& out, std::ostream& err) {
    try {
        if (opts.command == "train-skills") return cmd_train_skills(opts, out, err);
        if (opts.command == "check-invariants") return cmd_check_invariants(opts, out, err);
        if (opts.command == "eval") return cmd_eval(opts, out, err);
        if (opts.command == "train-downstream") return cmd_train_downstream(opts, out, err);
        err << "unknown command '" << opts.command << "'\n";
        return kExitUsage;
    } catch (const NumericalAbort& e) {
        err << "numerical abort: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}

}  // namespace gisd
