#include "gisd/groups.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace gisd {

FiniteGroup::FiniteGroup(std::vector<int> mul_table, std::vector<int> inv_table, int identity,
                         bool cyclic)
    : order_(static_cast<int>(inv_table.size())),
      mul_(std::move(mul_table)),
      inv_(std::move(inv_table)),
      identity_(identity),
      cyclic_(cyclic) {
    if (order_ < 1 || mul_.size() != static_cast<std::size_t>(order_ * order_)) {
        throw std::invalid_argument("FiniteGroup: table sizes inconsistent");
    }
    for (int v : mul_) {
        if (v < 0 || v >= order_) throw std::invalid_argument("FiniteGroup: table not closed");
    }
}

FiniteGroup make_cyclic_group(int n) {
    if (n < 1) throw std::invalid_argument("make_cyclic_group: order must be >= 1");
    std::vector<int> mul(static_cast<std::size_t>(n * n));
    std::vector<int> inv(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        inv[i] = (n - i) % n;
        for (int j = 0; j < n; ++j) mul[i * n + j] = (i + j) % n;
    }
    return FiniteGroup(std::move(mul), std::move(inv), 0, true);
}

namespace {

// Snap trig values that are exactly 0 or +-1 in exact arithmetic, so quarter
// and half turns act by integer matrices.
double snap(double v) {
    for (double target : {-1.0, 0.0, 1.0}) {
        if (std::abs(v - target) < 1e-14) return target;
    }
    return v;
}

}  // namespace

Irrep cyclic_irrep(const FiniteGroup& group, int frequency) {
    if (!group.is_cyclic()) throw std::invalid_argument("cyclic_irrep: group is not cyclic");
    const int n = group.order();
    if (frequency < 0 || 2 * frequency > n) {
        throw std::invalid_argument("cyclic_irrep: frequency out of range 0..N/2");
    }
    Irrep rep;
    rep.frequency = frequency;
    rep.dim = (frequency == 0 || 2 * frequency == n) ? 1 : 2;
    rep.matrices.reserve(static_cast<std::size_t>(n));
    for (int g = 0; g < n; ++g) {
        if (rep.dim == 1) {
            Eigen::MatrixXd m(1, 1);
            m(0, 0) = (frequency == 0 || g % 2 == 0) ? 1.0 : -1.0;
            rep.matrices.push_back(m);
        } else {
            // angle reduced mod N before the trig call keeps rho(gh) = rho(g)rho(h) tight
            const double theta = 2.0 * std::numbers::pi * static_cast<double>((frequency * g) % n) /
                                 static_cast<double>(n);
            const double c = snap(std::cos(theta));
            const double s = snap(std::sin(theta));
            Eigen::MatrixXd m(2, 2);
            m << c, -s, s, c;
            rep.matrices.push_back(m);
        }
    }
    return rep;
}

std::vector<Irrep> cyclic_irreps(const FiniteGroup& group) {
    if (!group.is_cyclic()) throw std::invalid_argument("cyclic_irreps: group is not cyclic");
    std::vector<Irrep> out;
    for (int k = 0; 2 * k <= group.order(); ++k) out.push_back(cyclic_irrep(group, k));
    return out;
}

Eigen::VectorXd haar_average(const FiniteGroup& group,
                             const std::function<Eigen::VectorXd(int)>& f) {
    Eigen::VectorXd acc = f(0);
    for (int g = 1; g < group.order(); ++g) acc += f(g);
    return acc / static_cast<double>(group.order());
}

namespace {

void check_complete(const FiniteGroup& group, const std::vector<Irrep>& irreps) {
    int count = 0;
    std::vector<bool> seen(static_cast<std::size_t>(group.order() / 2 + 1), false);
    for (const auto& rep : irreps) {
        if (rep.matrices.size() != static_cast<std::size_t>(group.order())) {
            throw std::invalid_argument("fourier: irrep defined on a different group");
        }
        const auto k = static_cast<std::size_t>(rep.frequency);
        if (k >= seen.size() || seen[k]) {
            throw std::invalid_argument("fourier: duplicate or invalid irrep frequency");
        }
        seen[k] = true;
        count += rep.complex_count();
    }
    if (count != group.order()) {
        throw std::invalid_argument("fourier: incomplete irrep list (complex count " +
                                    std::to_string(count) + " != |G| " +
                                    std::to_string(group.order()) + ")");
    }
}

}  // namespace

FourierCoefficients fourier_analyze(const FiniteGroup& group, const std::vector<Irrep>& irreps,
                                    std::span<const double> f) {
    check_complete(group, irreps);
    if (f.size() != static_cast<std::size_t>(group.order())) {
        throw std::invalid_argument("fourier_analyze: function size != |G|");
    }
    const double n = group.order();
    FourierCoefficients out;
    for (const auto& rep : irreps) {
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(rep.dim, rep.dim);
        for (int g = 0; g < group.order(); ++g) acc += f[static_cast<std::size_t>(g)] * rep(g);
        out.blocks.push_back(acc * std::sqrt(static_cast<double>(rep.dim)) / n);
    }
    return out;
}

std::vector<double> fourier_synthesize(const FiniteGroup& group,
                                       const std::vector<Irrep>& irreps,
                                       const FourierCoefficients& coeffs) {
    check_complete(group, irreps);
    if (coeffs.blocks.size() != irreps.size()) {
        throw std::invalid_argument("fourier_synthesize: coefficient count != irrep count");
    }
    for (std::size_t j = 0; j < irreps.size(); ++j) {
        if (coeffs.blocks[j].rows() != irreps[j].dim || coeffs.blocks[j].cols() != irreps[j].dim) {
            throw std::invalid_argument("fourier_synthesize: coefficient shape mismatch");
        }
    }
    std::vector<double> out(static_cast<std::size_t>(group.order()), 0.0);
    for (int g = 0; g < group.order(); ++g) {
        double v = 0.0;
        for (std::size_t j = 0; j < irreps.size(); ++j) {
            const auto& rep = irreps[j];
            const double w = std::sqrt(static_cast<double>(rep.dim)) / rep.complex_count();
            v += w * (rep(g).transpose() * coeffs.blocks[j]).trace();
        }
        out[static_cast<std::size_t>(g)] = v;
    }
    return out;
}

Eigen::MatrixXd schur_cross_average(const FiniteGroup& group, const Irrep& rho,
                                    const Irrep& sigma) {
    const int d = rho.dim * sigma.dim;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
    for (int g = 0; g < group.order(); ++g) {
        const auto& a = rho(g);
        const auto& b = sigma(g);
        for (int i = 0; i < rho.dim; ++i)
            for (int j = 0; j < rho.dim; ++j)
                acc.block(i * sigma.dim, j * sigma.dim, sigma.dim, sigma.dim) += a(i, j) * b;
    }
    return acc / static_cast<double>(group.order());
}

DirectSumRep::DirectSumRep(FiniteGroup group, std::vector<Block> blocks)
    : group_(std::move(group)), blocks_(std::move(blocks)) {
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const auto& blk = blocks_[b];
        if (blk.multiplicity < 1) throw std::invalid_argument("DirectSumRep: multiplicity < 1");
        if (blk.irrep.matrices.size() != static_cast<std::size_t>(group_.order())) {
            throw std::invalid_argument("DirectSumRep: irrep over a different group");
        }
        for (int m = 0; m < blk.multiplicity; ++m) {
            slots_.push_back({static_cast<int>(b), total_dim_, blk.irrep.dim});
            total_dim_ += blk.irrep.dim;
        }
    }
    if (total_dim_ == 0) throw std::invalid_argument("DirectSumRep: empty");
}

DirectSumRep DirectSumRep::from_spec(const FiniteGroup& group, const std::string& spec) {
    std::vector<Block> blocks;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto colon = item.find(':');
        int freq = 0;
        int mult = 1;
        try {
            freq = std::stoi(item.substr(0, colon));
            if (colon != std::string::npos) mult = std::stoi(item.substr(colon + 1));
        } catch (const std::exception&) {
            throw std::invalid_argument("DirectSumRep: bad block spec '" + item + "'");
        }
        blocks.push_back({cyclic_irrep(group, freq), mult});
    }
    return DirectSumRep(group, std::move(blocks));
}

std::string DirectSumRep::spec() const {
    std::string out;
    for (const auto& b : blocks_) {
        if (!out.empty()) out += ',';
        out += std::to_string(b.irrep.frequency) + ':' + std::to_string(b.multiplicity);
    }
    return out;
}

Vec DirectSumRep::apply(int g, std::span<const double> v) const {
    if (v.size() != static_cast<std::size_t>(total_dim_)) {
        throw std::invalid_argument("DirectSumRep::apply: dimension mismatch");
    }
    Vec out(v.size(), 0.0);
    for (const auto& slot : slots_) {
        const auto& m = blocks_[static_cast<std::size_t>(slot.block)].irrep(g);
        for (int i = 0; i < slot.dim; ++i) {
            double s = 0.0;
            for (int j = 0; j < slot.dim; ++j) s += m(i, j) * v[slot.offset + j];
            out[slot.offset + i] = s;
        }
    }
    return out;
}

Vec DirectSumRep::apply_transpose(int g, std::span<const double> v) const {
    if (v.size() != static_cast<std::size_t>(total_dim_)) {
        throw std::invalid_argument("DirectSumRep::apply_transpose: dimension mismatch");
    }
    Vec out(v.size(), 0.0);
    for (const auto& slot : slots_) {
        const auto& m = blocks_[static_cast<std::size_t>(slot.block)].irrep(g);
        for (int i = 0; i < slot.dim; ++i) {
            double s = 0.0;
            for (int j = 0; j < slot.dim; ++j) s += m(j, i) * v[slot.offset + j];
            out[slot.offset + i] = s;
        }
    }
    return out;
}

Eigen::MatrixXd DirectSumRep::matrix(int g) const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(total_dim_, total_dim_);
    for (const auto& slot : slots_) {
        out.block(slot.offset, slot.offset, slot.dim, slot.dim) =
            blocks_[static_cast<std::size_t>(slot.block)].irrep(g);
    }
    return out;
}

}  // namespace gisd
