#pragma once

#include <span>
#include <vector>

#include "gisd/rng.hpp"
#include "gisd/types.hpp"

namespace gisd {

/// Fully connected tanh network with a linear output layer. Parameters live in
/// one flat vector, layer by layer, each layer as its row-major weight matrix
/// followed by its bias.
class DiffNet {
public:
    /// Cached activations of one forward pass, consumed by backward().
    struct Tape {
        std::vector<Vec> activations;  // input, hidden..., output
    };

    DiffNet() = default;
    explicit DiffNet(std::vector<int> sizes);

    /// Glorot-uniform weights, zero biases.
    void init(Rng& rng, double output_scale = 1.0);

    const std::vector<int>& sizes() const { return sizes_; }
    int input_dim() const { return sizes_.front(); }
    int output_dim() const { return sizes_.back(); }
    std::size_t num_params() const { return params_.size(); }

    Vec& params() { return params_; }
    const Vec& params() const { return params_; }

    Vec forward(std::span<const double> x, Tape* tape = nullptr) const;

    /// Adds (d out / d params)^T dy into `grad` and returns (d out / d x)^T dy.
    Vec backward(const Tape& tape, std::span<const double> dy, std::span<double> grad) const;

private:
    std::vector<int> sizes_;
    Vec params_;
};

/// Adam on a flat parameter vector. `step` descends; pass a negated gradient to
/// ascend.
class Adam {
public:
    Adam() = default;
    Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::span<double> params, std::span<const double> grad);

    double lr() const { return lr_; }
    long long t() const { return t_; }
    Vec& m() { return m_; }
    Vec& v() { return v_; }
    const Vec& m() const { return m_; }
    const Vec& v() const { return v_; }
    void set_t(long long t) { t_ = t; }

private:
    double lr_ = 1e-3;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    long long t_ = 0;
    Vec m_;
    Vec v_;
};

}  // namespace gisd
