#include "gisd/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gisd {

namespace {

std::vector<int> with_io(int in, const std::vector<int>& hidden, int out) {
    std::vector<int> sizes{in};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(out);
    return sizes;
}

Vec softmax(Vec v) {
    const double m = *std::max_element(v.begin(), v.end());
    double total = 0.0;
    for (auto& x : v) {
        x = std::exp(x - m);
        total += x;
    }
    for (auto& x : v) x /= total;
    return v;
}

}  // namespace

Vec Policy::input(int g, std::span<const double> s, std::span<const double> z) const {
    if (s.size() != static_cast<std::size_t>(state_rep_.total_dim()) ||
        z.size() != static_cast<std::size_t>(skill_rep_.total_dim())) {
        throw std::invalid_argument("Policy: state or skill dimension mismatch");
    }
    Vec x = symmetrize_ ? state_rep_.apply(g, s) : Vec(s.begin(), s.end());
    const Vec gz = symmetrize_ ? skill_rep_.apply(g, z) : Vec(z.begin(), z.end());
    x.insert(x.end(), gz.begin(), gz.end());
    return x;
}

TabularPolicy::TabularPolicy(DirectSumRep state_rep, DirectSumRep skill_rep,
                             std::vector<std::vector<int>> action_perm, std::vector<int> hidden,
                             bool symmetrize)
    : Policy(std::move(state_rep), std::move(skill_rep), symmetrize),
      action_perm_(std::move(action_perm)) {
    if (action_perm_.size() != static_cast<std::size_t>(group().order())) {
        throw std::invalid_argument("TabularPolicy: one action permutation per group element");
    }
    net_ = DiffNet(with_io(state_rep_.total_dim() + skill_rep_.total_dim(), hidden, num_actions()));
}

Vec TabularPolicy::logits(std::span<const double> s, std::span<const double> z) const {
    const int A = num_actions();
    Vec out(static_cast<std::size_t>(A), 0.0);
    const int n = terms();
    for (int g = 0; g < n; ++g) {
        const Vec o = net_.forward(input(g, s, z));
        for (int a = 0; a < A; ++a) out[a] += symmetrize_ ? o[action_perm_[g][a]] : o[a];
    }
    for (auto& v : out) v /= static_cast<double>(n);
    return out;
}

Vec TabularPolicy::probs(std::span<const double> s, std::span<const double> z) const {
    return softmax(logits(s, z));
}

PolicyTable TabularPolicy::table(const TabularSymmetricMDP& mdp, std::span<const double> z) const {
    if (mdp.num_actions() != num_actions()) {
        throw std::invalid_argument("TabularPolicy::table: action count mismatch");
    }
    PolicyTable t(mdp.num_states(), mdp.num_actions());
    for (int s = 0; s < mdp.num_states(); ++s) {
        const Vec p = probs(mdp.features(s), z);
        for (int a = 0; a < mdp.num_actions(); ++a) t(s, a) = p[a];
    }
    return t;
}

Vec TabularPolicy::sample(std::span<const double> s, std::span<const double> z, Rng& rng) const {
    const Vec p = probs(s, z);
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t a = 0; a < p.size(); ++a) {
        acc += p[a];
        if (u < acc) return {static_cast<double>(a)};
    }
    return {static_cast<double>(p.size() - 1)};
}

Vec TabularPolicy::mode(std::span<const double> s, std::span<const double> z) const {
    const Vec l = logits(s, z);
    return {static_cast<double>(std::max_element(l.begin(), l.end()) - l.begin())};
}

double TabularPolicy::log_prob(std::span<const double> s, std::span<const double> z,
                               std::span<const double> a) const {
    return std::log(probs(s, z).at(static_cast<std::size_t>(a[0])));
}

double TabularPolicy::log_prob_grad(std::span<const double> s, std::span<const double> z,
                                    std::span<const double> a, double weight,
                                    std::span<double> grad) const {
    const int A = num_actions();
    const int n = terms();
    std::vector<DiffNet::Tape> tapes(static_cast<std::size_t>(n));
    std::vector<Vec> outs;
    Vec l(static_cast<std::size_t>(A), 0.0);
    for (int g = 0; g < n; ++g) {
        outs.push_back(net_.forward(input(g, s, z), &tapes[g]));
        for (int b = 0; b < A; ++b) l[b] += symmetrize_ ? outs[g][action_perm_[g][b]] : outs[g][b];
    }
    for (auto& v : l) v /= static_cast<double>(n);
    const Vec p = softmax(l);
    const auto act = static_cast<std::size_t>(a[0]);
    // d log p[act] / d logit[b] = [b == act] - p[b]
    Vec dl(static_cast<std::size_t>(A));
    for (int b = 0; b < A; ++b) dl[b] = weight * ((static_cast<std::size_t>(b) == act) - p[b]) / n;
    for (int g = 0; g < n; ++g) {
        Vec dout(static_cast<std::size_t>(A), 0.0);
        for (int b = 0; b < A; ++b) dout[symmetrize_ ? action_perm_[g][b] : b] += dl[b];
        net_.backward(tapes[g], dout, grad);
    }
    return std::log(p[act]);
}

std::unique_ptr<Policy> TabularPolicy::clone() const {
    return std::make_unique<TabularPolicy>(*this);
}

GaussianPolicy::GaussianPolicy(DirectSumRep state_rep, DirectSumRep skill_rep,
                               std::vector<int> hidden, double max_speed, double stddev,
                               bool symmetrize)
    : Policy(std::move(state_rep), std::move(skill_rep), symmetrize),
      max_speed_(max_speed),
      stddev_(stddev) {
    if (state_rep_.total_dim() != 2) throw std::invalid_argument("GaussianPolicy: planar states only");
    if (!(stddev_ > 0.0)) throw std::invalid_argument("GaussianPolicy: stddev must be > 0");
    net_ = DiffNet(with_io(2 + skill_rep_.total_dim(), hidden, 2));
}

Vec GaussianPolicy::mean(std::span<const double> s, std::span<const double> z) const {
    Vec mu(2, 0.0);
    const int n = terms();
    for (int g = 0; g < n; ++g) {
        Vec o = net_.forward(input(g, s, z));
        for (auto& v : o) v = max_speed_ * std::tanh(v);
        const Vec back = symmetrize_ ? state_rep_.apply_transpose(g, o) : o;
        mu[0] += back[0];
        mu[1] += back[1];
    }
    mu[0] /= n;
    mu[1] /= n;
    return mu;
}

Vec GaussianPolicy::sample(std::span<const double> s, std::span<const double> z, Rng& rng) const {
    Vec a = mean(s, z);
    for (auto& v : a) v += stddev_ * rng.normal();
    return a;
}

Vec GaussianPolicy::mode(std::span<const double> s, std::span<const double> z) const {
    return mean(s, z);
}

double GaussianPolicy::log_prob(std::span<const double> s, std::span<const double> z,
                                std::span<const double> a) const {
    const Vec mu = mean(s, z);
    const double var = stddev_ * stddev_;
    const double d0 = a[0] - mu[0];
    const double d1 = a[1] - mu[1];
    return -(d0 * d0 + d1 * d1) / (2.0 * var) - std::log(2.0 * std::numbers::pi * var);
}

double GaussianPolicy::log_prob_grad(std::span<const double> s, std::span<const double> z,
                                     std::span<const double> a, double weight,
                                     std::span<double> grad) const {
    const int n = terms();
    std::vector<DiffNet::Tape> tapes(static_cast<std::size_t>(n));
    std::vector<Vec> squashed;
    Vec mu(2, 0.0);
    for (int g = 0; g < n; ++g) {
        Vec o = net_.forward(input(g, s, z), &tapes[g]);
        for (auto& v : o) v = std::tanh(v);
        squashed.push_back(o);
        Vec scaled{max_speed_ * o[0], max_speed_ * o[1]};
        const Vec back = symmetrize_ ? state_rep_.apply_transpose(g, scaled) : scaled;
        mu[0] += back[0] / n;
        mu[1] += back[1] / n;
    }
    const double var = stddev_ * stddev_;
    const Vec dmu{weight * (a[0] - mu[0]) / var, weight * (a[1] - mu[1]) / var};
    for (int g = 0; g < n; ++g) {
        Vec dm = symmetrize_ ? state_rep_.apply(g, dmu) : dmu;
        for (int i = 0; i < 2; ++i) {
            const double t = squashed[g][i];
            dm[i] *= max_speed_ * (1.0 - t * t) / n;
        }
        net_.backward(tapes[g], dm, grad);
    }
    const double d0 = a[0] - mu[0];
    const double d1 = a[1] - mu[1];
    return -(d0 * d0 + d1 * d1) / (2.0 * var) - std::log(2.0 * std::numbers::pi * var);
}

std::unique_ptr<Policy> GaussianPolicy::clone() const {
    return std::make_unique<GaussianPolicy>(*this);
}

ValueBaseline::ValueBaseline(DirectSumRep state_rep, DirectSumRep skill_rep,
                             std::vector<int> hidden, bool symmetrize)
    : state_rep_(std::move(state_rep)), skill_rep_(std::move(skill_rep)), symmetrize_(symmetrize) {
    net_ = DiffNet(with_io(state_rep_.total_dim() + skill_rep_.total_dim(), hidden, 1));
}

Vec ValueBaseline::input(int g, std::span<const double> s, std::span<const double> z) const {
    Vec x = symmetrize_ ? state_rep_.apply(g, s) : Vec(s.begin(), s.end());
    const Vec gz = symmetrize_ ? skill_rep_.apply(g, z) : Vec(z.begin(), z.end());
    x.insert(x.end(), gz.begin(), gz.end());
    return x;
}

double ValueBaseline::value(std::span<const double> s, std::span<const double> z) const {
    const int n = symmetrize_ ? state_rep_.group().order() : 1;
    double v = 0.0;
    for (int g = 0; g < n; ++g) v += net_.forward(input(g, s, z))[0];
    return v / n;
}

double ValueBaseline::value_grad(std::span<const double> s, std::span<const double> z,
                                 double weight, std::span<double> grad) const {
    const int n = symmetrize_ ? state_rep_.group().order() : 1;
    double v = 0.0;
    for (int g = 0; g < n; ++g) {
        DiffNet::Tape tape;
        v += net_.forward(input(g, s, z), &tape)[0];
        const double dy = weight / n;
        net_.backward(tape, std::span<const double>(&dy, 1), grad);
    }
    return v / n;
}

}  // namespace gisd
