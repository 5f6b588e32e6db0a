#include "gisd/diffnet.hpp"

#include <cmath>
#include <stdexcept>

namespace gisd {

DiffNet::DiffNet(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("DiffNet: need input and output sizes");
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        if (sizes_[l] < 1 || sizes_[l + 1] < 1) throw std::invalid_argument("DiffNet: empty layer");
        n += static_cast<std::size_t>(sizes_[l + 1]) * (sizes_[l] + 1);
    }
    params_.assign(n, 0.0);
}

void DiffNet::init(Rng& rng, double output_scale) {
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        const int in = sizes_[l];
        const int out = sizes_[l + 1];
        double limit = std::sqrt(6.0 / (in + out));
        if (l + 2 == sizes_.size()) limit *= output_scale;
        for (int i = 0; i < out * in; ++i) params_[off++] = limit * (2.0 * rng.uniform() - 1.0);
        for (int i = 0; i < out; ++i) params_[off++] = 0.0;
    }
}

Vec DiffNet::forward(std::span<const double> x, Tape* tape) const {
    if (x.size() != static_cast<std::size_t>(input_dim())) {
        throw std::invalid_argument("DiffNet::forward: input dimension mismatch");
    }
    Vec cur(x.begin(), x.end());
    if (tape) {
        tape->activations.clear();
        tape->activations.push_back(cur);
    }
    std::size_t off = 0;
    const std::size_t layers = sizes_.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
        const int in = sizes_[l];
        const int out = sizes_[l + 1];
        const double* W = params_.data() + off;
        const double* b = W + static_cast<std::size_t>(out) * in;
        Vec next(static_cast<std::size_t>(out));
        for (int i = 0; i < out; ++i) {
            double s = b[i];
            const double* row = W + static_cast<std::size_t>(i) * in;
            for (int j = 0; j < in; ++j) s += row[j] * cur[j];
            next[i] = (l + 1 < layers) ? std::tanh(s) : s;
        }
        off += static_cast<std::size_t>(out) * (in + 1);
        cur = std::move(next);
        if (tape) tape->activations.push_back(cur);
    }
    return cur;
}

Vec DiffNet::backward(const Tape& tape, std::span<const double> dy, std::span<double> grad) const {
    if (grad.size() != params_.size()) throw std::invalid_argument("DiffNet::backward: grad size");
    if (dy.size() != static_cast<std::size_t>(output_dim())) {
        throw std::invalid_argument("DiffNet::backward: cotangent dimension mismatch");
    }
    const std::size_t layers = sizes_.size() - 1;
    if (tape.activations.size() != layers + 1) throw std::invalid_argument("DiffNet: bad tape");

    std::vector<std::size_t> offsets(layers);
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        offsets[l] = off;
        off += static_cast<std::size_t>(sizes_[l + 1]) * (sizes_[l] + 1);
    }

    Vec delta(dy.begin(), dy.end());  // d/d(pre-activation) of the current layer
    for (std::size_t l = layers; l-- > 0;) {
        const int in = sizes_[l];
        const int out = sizes_[l + 1];
        if (l + 1 < layers) {
            const Vec& a = tape.activations[l + 1];
            for (int i = 0; i < out; ++i) delta[i] *= 1.0 - a[i] * a[i];
        }
        const Vec& x = tape.activations[l];
        const double* W = params_.data() + offsets[l];
        double* gW = grad.data() + offsets[l];
        double* gb = gW + static_cast<std::size_t>(out) * in;
        Vec dx(static_cast<std::size_t>(in), 0.0);
        for (int i = 0; i < out; ++i) {
            const double d = delta[i];
            if (d == 0.0) continue;
            gb[i] += d;
            double* grow = gW + static_cast<std::size_t>(i) * in;
            const double* row = W + static_cast<std::size_t>(i) * in;
            for (int j = 0; j < in; ++j) {
                grow[j] += d * x[j];
                dx[j] += d * row[j];
            }
        }
        delta = std::move(dx);
    }
    return delta;
}

void Adam::step(std::span<double> params, std::span<const double> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size()) {
        throw std::invalid_argument("Adam::step: size mismatch");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
        params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
}

}  // namespace gisd
