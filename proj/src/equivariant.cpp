#include "gisd/equivariant.hpp"

#include <algorithm>
#include <stdexcept>

namespace gisd {

FrequencyMask FrequencyMask::all(const DirectSumRep& rep) {
    return FrequencyMask(Vec(static_cast<std::size_t>(rep.total_dim()), 1.0));
}

FrequencyMask FrequencyMask::per_block(const DirectSumRep& rep, const std::vector<double>& weights) {
    if (weights.size() != rep.blocks().size()) {
        throw std::invalid_argument("FrequencyMask: need one weight per irrep block (" +
                                    std::to_string(rep.blocks().size()) + ")");
    }
    Vec w(static_cast<std::size_t>(rep.total_dim()), 0.0);
    for (const auto& slot : rep.slots())
        for (int i = 0; i < slot.dim; ++i) w[slot.offset + i] = weights[slot.block];
    return FrequencyMask(std::move(w));
}

FrequencyMask FrequencyMask::keep_frequencies(const DirectSumRep& rep,
                                              const std::vector<int>& freqs) {
    std::vector<double> w;
    for (const auto& b : rep.blocks()) {
        const bool keep = std::find(freqs.begin(), freqs.end(), b.irrep.frequency) != freqs.end();
        w.push_back(keep ? 1.0 : 0.0);
    }
    return per_block(rep, w);
}

FrequencyMask FrequencyMask::per_coordinate(Vec weights) {
    if (weights.empty()) throw std::invalid_argument("FrequencyMask: empty");
    return FrequencyMask(std::move(weights));
}

bool FrequencyMask::is_block_constant(const DirectSumRep& rep) const {
    if (dim() != rep.total_dim()) return false;
    for (const auto& slot : rep.slots())
        for (int i = 1; i < slot.dim; ++i)
            if (weights_[slot.offset + i] != weights_[slot.offset]) return false;
    return true;
}

std::vector<int> FrequencyMask::support() const {
    std::vector<int> out;
    for (int i = 0; i < dim(); ++i)
        if (weights_[i] != 0.0) out.push_back(i);
    return out;
}

Vec FrequencyMask::apply(std::span<const double> v) const {
    if (v.size() != weights_.size()) throw std::invalid_argument("FrequencyMask: dimension mismatch");
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = weights_[i] * v[i];
    return out;
}

EquivariantFeatureMap::EquivariantFeatureMap(DirectSumRep input_rep, DirectSumRep rep,
                                             FrequencyMask mask, std::vector<int> hidden,
                                             bool symmetrize)
    : input_rep_(std::move(input_rep)),
      rep_(std::move(rep)),
      mask_(std::move(mask)),
      symmetrize_(symmetrize) {
    if (!(input_rep_.group() == rep_.group())) {
        throw std::invalid_argument("EquivariantFeatureMap: input and feature reps over different groups");
    }
    if (mask_.dim() != rep_.total_dim()) {
        throw std::invalid_argument("EquivariantFeatureMap: mask dimension != rep dimension");
    }
    std::vector<int> sizes{input_rep_.total_dim()};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(rep_.total_dim());
    net_ = DiffNet(std::move(sizes));
}

void EquivariantFeatureMap::init(Rng& rng) { net_.init(rng); }

Vec EquivariantFeatureMap::forward(std::span<const double> x, Tape* tape) const {
    if (x.size() != static_cast<std::size_t>(input_rep_.total_dim())) {
        throw std::invalid_argument("EquivariantFeatureMap: state dimension mismatch");
    }
    const int n = symmetrize_ ? group().order() : 1;
    if (tape) tape->per_element.resize(static_cast<std::size_t>(n));
    Vec acc(static_cast<std::size_t>(dim()), 0.0);
    for (int g = 0; g < n; ++g) {
        DiffNet::Tape* t = tape ? &tape->per_element[static_cast<std::size_t>(g)] : nullptr;
        if (!symmetrize_) {
            acc = net_.forward(x, t);
            break;
        }
        const Vec h = net_.forward(input_rep_.apply(g, x), t);
        const Vec back = rep_.apply_transpose(g, h);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += back[i];
    }
    if (symmetrize_) {
        for (auto& v : acc) v /= static_cast<double>(n);
    }
    return mask_.apply(acc);
}

void EquivariantFeatureMap::backward(const Tape& tape, std::span<const double> cotangent,
                                     std::span<double> grad) const {
    const Vec c = mask_.apply(cotangent);
    if (!symmetrize_) {
        net_.backward(tape.per_element.at(0), c, grad);
        return;
    }
    const int n = group().order();
    if (tape.per_element.size() != static_cast<std::size_t>(n)) {
        throw std::invalid_argument("EquivariantFeatureMap::backward: tape from another map");
    }
    for (int g = 0; g < n; ++g) {
        Vec dh = rep_.apply(g, c);
        for (auto& v : dh) v /= static_cast<double>(n);
        net_.backward(tape.per_element[static_cast<std::size_t>(g)], dh, grad);
    }
}

ScoringFn group_average_scoring(const FiniteGroup& group, ScoringFn f, GroupActionFn act_state,
                                GroupActionFn act_skill) {
    return [group, f = std::move(f), act_state = std::move(act_state),
            act_skill = std::move(act_skill)](std::span<const double> s,
                                              std::span<const double> z) {
        double acc = 0.0;
        for (int g = 0; g < group.order(); ++g) acc += f(act_state(g, s), act_skill(g, z));
        return acc / static_cast<double>(group.order());
    };
}

double lipschitz_slack(std::span<const double> delta, double epsilon) {
    return std::min(epsilon, 1.0 - dot(delta, delta));
}

double lipschitz_violation(const EquivariantFeatureMap& map, std::span<const double> s,
                           std::span<const double> s_next, double epsilon) {
    return lipschitz_slack(sub(map.forward(s_next), map.forward(s)), epsilon);
}

}  // namespace gisd
