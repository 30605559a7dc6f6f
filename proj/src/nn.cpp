#include "cfpc/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace cfpc::nn {

namespace {

void require_cols(const Tensor2D& x, int dim, const char* what) {
    if (int(x.cols()) != dim)
        throw std::invalid_argument(std::string(what) + ": feature dimension mismatch");
}

} // namespace

Tensor2D dense_forward(const DenseParams& params, const Tensor2D& x) {
    require_cols(x, params.in_dim(), "dense_forward");
    const std::size_t B = x.rows();
    const std::size_t in = params.weight.cols();
    const std::size_t out = params.weight.rows();

    Tensor2D y(B, out);
    for (std::size_t b = 0; b < B; ++b) {
        const double* xb = x.data() + b * in;
        double* yb = y.data() + b * out;
        for (std::size_t o = 0; o < out; ++o) {
            const double* wo = params.weight.data() + o * in;
            double acc = params.bias[o];
            for (std::size_t i = 0; i < in; ++i) acc += xb[i] * wo[i];
            yb[o] = acc;
        }
    }
    return y;
}

Tensor2D dense_backward(const DenseParams& params, const Tensor2D& x,
                        const Tensor2D& grad_y, DenseGrads& grads) {
    require_cols(x, params.in_dim(), "dense_backward");
    require_cols(grad_y, params.out_dim(), "dense_backward");
    if (x.rows() != grad_y.rows())
        throw std::invalid_argument("dense_backward: batch mismatch");

    const std::size_t B = x.rows();
    const std::size_t in = params.weight.cols();
    const std::size_t out = params.weight.rows();

    Tensor2D grad_x(B, in, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
        const double* gyb = grad_y.data() + b * out;
        const double* xb = x.data() + b * in;
        double* gxb = grad_x.data() + b * in;
        for (std::size_t o = 0; o < out; ++o) {
            const double g = gyb[o];
            if (g == 0.0) continue;
            const double* wo = params.weight.data() + o * in;
            double* gwo = grads.weight.data() + o * in;
            for (std::size_t i = 0; i < in; ++i) {
                gxb[i] += g * wo[i];
                gwo[i] += g * xb[i];
            }
            grads.bias[o] += g;
        }
    }
    return grad_x;
}

Tensor2D relu_forward(const Tensor2D& x) {
    Tensor2D y = x;
    for (double& v : y.storage()) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor2D relu6_forward(const Tensor2D& x) {
    Tensor2D y = x;
    for (double& v : y.storage()) v = std::min(std::max(v, 0.0), 6.0);
    return y;
}

Tensor2D relu_backward(const Tensor2D& x, const Tensor2D& grad_y) {
    Tensor2D grad_x = grad_y;
    for (std::size_t n = 0; n < x.size(); ++n)
        if (x.data()[n] <= 0.0) grad_x.data()[n] = 0.0;
    return grad_x;
}

Tensor2D relu6_backward(const Tensor2D& x, const Tensor2D& grad_y) {
    Tensor2D grad_x = grad_y;
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double v = x.data()[n];
        if (v <= 0.0 || v >= 6.0) grad_x.data()[n] = 0.0;
    }
    return grad_x;
}

Tensor2D batchnorm_forward_train(BatchNormParams& params, const Tensor2D& x,
                                 BatchNormCache& cache) {
    const std::size_t B = x.rows();
    const std::size_t F = x.cols();
    require_cols(x, int(params.gamma.size()), "batchnorm_forward_train");
    if (B < 2)
        throw std::invalid_argument("batchnorm_forward_train: batch must be >= 2");

    std::vector<double> mean(F, 0.0), var(F, 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t f = 0; f < F; ++f) mean[f] += x(b, f);
    for (double& m : mean) m /= double(B);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t f = 0; f < F; ++f) {
            const double d = x(b, f) - mean[f];
            var[f] += d * d;
        }
    for (double& v : var) v /= double(B);

    cache.x_hat = Tensor2D(B, F);
    cache.inv_std.resize(F);
    for (std::size_t f = 0; f < F; ++f)
        cache.inv_std[f] = 1.0 / std::sqrt(var[f] + params.epsilon);

    Tensor2D y(B, F);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t f = 0; f < F; ++f) {
            const double xh = (x(b, f) - mean[f]) * cache.inv_std[f];
            cache.x_hat(b, f) = xh;
            y(b, f) = params.gamma[f] * xh + params.beta[f];
        }

    for (std::size_t f = 0; f < F; ++f) {
        params.running_mean[f] =
            params.momentum * params.running_mean[f] + (1.0 - params.momentum) * mean[f];
        params.running_var[f] =
            params.momentum * params.running_var[f] + (1.0 - params.momentum) * var[f];
    }
    return y;
}

Tensor2D batchnorm_forward_infer(const BatchNormParams& params, const Tensor2D& x) {
    const std::size_t B = x.rows();
    const std::size_t F = x.cols();
    require_cols(x, int(params.gamma.size()), "batchnorm_forward_infer");

    Tensor2D y(B, F);
    for (std::size_t f = 0; f < F; ++f) {
        const double inv = 1.0 / std::sqrt(params.running_var[f] + params.epsilon);
        const double scale = params.gamma[f] * inv;
        const double shift = params.beta[f] - scale * params.running_mean[f];
        for (std::size_t b = 0; b < B; ++b) y(b, f) = scale * x(b, f) + shift;
    }
    return y;
}

Tensor2D batchnorm_backward(const BatchNormParams& params, const BatchNormCache& cache,
                            const Tensor2D& grad_y, BatchNormGrads& grads) {
    const std::size_t B = grad_y.rows();
    const std::size_t F = grad_y.cols();
    require_cols(grad_y, int(params.gamma.size()), "batchnorm_backward");

    std::vector<double> sum_gy(F, 0.0), sum_gy_xhat(F, 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t f = 0; f < F; ++f) {
            sum_gy[f] += grad_y(b, f);
            sum_gy_xhat[f] += grad_y(b, f) * cache.x_hat(b, f);
        }
    for (std::size_t f = 0; f < F; ++f) {
        grads.beta[f] += sum_gy[f];
        grads.gamma[f] += sum_gy_xhat[f];
    }

    Tensor2D grad_x(B, F);
    const double inv_b = 1.0 / double(B);
    for (std::size_t f = 0; f < F; ++f) {
        const double coeff = params.gamma[f] * cache.inv_std[f];
        const double mean_gy = sum_gy[f] * inv_b;
        const double mean_gy_xhat = sum_gy_xhat[f] * inv_b;
        for (std::size_t b = 0; b < B; ++b)
            grad_x(b, f) =
                coeff * (grad_y(b, f) - mean_gy - cache.x_hat(b, f) * mean_gy_xhat);
    }
    return grad_x;
}

void adam_update(AdamState& state, std::span<double> params,
                 std::span<const double> grads) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size())
        throw std::invalid_argument("adam_update: size mismatch");

    state.step_count += 1;
    const double b1 = state.beta1;
    const double b2 = state.beta2;
    const double correction1 = 1.0 - std::pow(b1, double(state.step_count));
    const double correction2 = 1.0 - std::pow(b2, double(state.step_count));

    for (std::size_t n = 0; n < params.size(); ++n) {
        const double g = grads[n];
        double& m = state.first_moment[n];
        double& v = state.second_moment[n];
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        const double m_hat = m / correction1;
        const double v_hat = v / correction2;
        params[n] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
}

// --- Mlp ---------------------------------------------------------------------

Mlp::Mlp(MlpSpec spec, RandomStream& rng) : spec_(std::move(spec)) {
    if (spec_.sizes.size() < 2)
        throw std::invalid_argument("Mlp: need at least input and output sizes");
    for (int s : spec_.sizes)
        if (s < 1) throw std::invalid_argument("Mlp: layer sizes must be >= 1");

    const int n_layers = spec_.n_layers();
    dense_.reserve(n_layers);
    for (int layer = 0; layer < n_layers; ++layer) {
        const int in = spec_.sizes[layer];
        const int out = spec_.sizes[layer + 1];
        DenseParams params;
        params.weight = Tensor2D(out, in);
        params.bias.assign(out, 0.0);
        const double scale = std::sqrt(2.0 / double(in)); // He scaling for ReLU
        for (double& w : params.weight.storage()) w = scale * rng.normal();
        dense_.push_back(std::move(params));
    }
    if (spec_.batchnorm) {
        bn_.reserve(n_layers - 1);
        for (int layer = 0; layer + 1 < n_layers; ++layer)
            bn_.emplace_back(spec_.sizes[layer + 1]);
    }
}

namespace {

Tensor2D apply_activation(Activation act, const Tensor2D& x) {
    switch (act) {
    case Activation::ReLU: return relu_forward(x);
    case Activation::ReLU6: return relu6_forward(x);
    case Activation::None: return x;
    }
    return x;
}

Tensor2D activation_backward(Activation act, const Tensor2D& pre, const Tensor2D& gy) {
    switch (act) {
    case Activation::ReLU: return relu_backward(pre, gy);
    case Activation::ReLU6: return relu6_backward(pre, gy);
    case Activation::None: return gy;
    }
    return gy;
}

} // namespace

Tensor2D Mlp::forward(const Tensor2D& x) const {
    Tensor2D h = x;
    const int n_layers = spec_.n_layers();
    for (int layer = 0; layer < n_layers; ++layer) {
        h = dense_forward(dense_[layer], h);
        if (layer + 1 < n_layers) {
            h = apply_activation(spec_.hidden_activation, h);
            if (spec_.batchnorm) h = batchnorm_forward_infer(bn_[layer], h);
        }
    }
    return h;
}

Tensor2D Mlp::forward_train(const Tensor2D& x, Cache& cache) {
    const int n_layers = spec_.n_layers();
    cache.layer_inputs.assign(n_layers, Tensor2D());
    cache.pre_act.assign(n_layers, Tensor2D());
    cache.bn.assign(spec_.batchnorm ? n_layers - 1 : 0, BatchNormCache());

    Tensor2D h = x;
    for (int layer = 0; layer < n_layers; ++layer) {
        cache.layer_inputs[layer] = h;
        h = dense_forward(dense_[layer], h);
        cache.pre_act[layer] = h;
        if (layer + 1 < n_layers) {
            h = apply_activation(spec_.hidden_activation, h);
            if (spec_.batchnorm) h = batchnorm_forward_train(bn_[layer], h, cache.bn[layer]);
        }
    }
    return h;
}

Mlp::Grads Mlp::zero_grads() const {
    Grads grads;
    grads.dense.resize(dense_.size());
    for (std::size_t layer = 0; layer < dense_.size(); ++layer) {
        grads.dense[layer].weight =
            Tensor2D(dense_[layer].weight.rows(), dense_[layer].weight.cols(), 0.0);
        grads.dense[layer].bias.assign(dense_[layer].bias.size(), 0.0);
    }
    grads.bn.resize(bn_.size());
    for (std::size_t layer = 0; layer < bn_.size(); ++layer) {
        grads.bn[layer].gamma.assign(bn_[layer].gamma.size(), 0.0);
        grads.bn[layer].beta.assign(bn_[layer].beta.size(), 0.0);
    }
    return grads;
}

Tensor2D Mlp::backward(const Cache& cache, const Tensor2D& grad_out, Grads& grads) const {
    const int n_layers = spec_.n_layers();
    Tensor2D g = grad_out;
    for (int layer = n_layers - 1; layer >= 0; --layer) {
        if (layer + 1 < n_layers) {
            if (spec_.batchnorm)
                g = batchnorm_backward(bn_[layer], cache.bn[layer], g, grads.bn[layer]);
            g = activation_backward(spec_.hidden_activation, cache.pre_act[layer], g);
        }
        g = dense_backward(dense_[layer], cache.layer_inputs[layer], g, grads.dense[layer]);
    }
    return g;
}

std::size_t Mlp::param_count() const {
    std::size_t total = 0;
    for (const auto& d : dense_) total += d.weight.size() + d.bias.size();
    for (const auto& b : bn_) total += b.gamma.size() + b.beta.size();
    return total;
}

std::vector<std::span<double>> Mlp::trainable_blocks() {
    std::vector<std::span<double>> blocks;
    for (std::size_t layer = 0; layer < dense_.size(); ++layer) {
        blocks.emplace_back(dense_[layer].weight.storage());
        blocks.emplace_back(dense_[layer].bias);
        if (layer < bn_.size()) {
            blocks.emplace_back(bn_[layer].gamma);
            blocks.emplace_back(bn_[layer].beta);
        }
    }
    return blocks;
}

std::vector<std::span<const double>> Mlp::trainable_blocks() const {
    std::vector<std::span<const double>> blocks;
    for (std::size_t layer = 0; layer < dense_.size(); ++layer) {
        blocks.emplace_back(dense_[layer].weight.storage());
        blocks.emplace_back(dense_[layer].bias);
        if (layer < bn_.size()) {
            blocks.emplace_back(bn_[layer].gamma);
            blocks.emplace_back(bn_[layer].beta);
        }
    }
    return blocks;
}

std::vector<std::span<double>> Mlp::grad_blocks(Grads& grads) const {
    std::vector<std::span<double>> blocks;
    for (std::size_t layer = 0; layer < grads.dense.size(); ++layer) {
        blocks.emplace_back(grads.dense[layer].weight.storage());
        blocks.emplace_back(grads.dense[layer].bias);
        if (layer < grads.bn.size()) {
            blocks.emplace_back(grads.bn[layer].gamma);
            blocks.emplace_back(grads.bn[layer].beta);
        }
    }
    return blocks;
}

std::vector<double> Mlp::state_vector() const {
    std::vector<double> state;
    state.reserve(state_size());
    for (std::size_t layer = 0; layer < dense_.size(); ++layer) {
        const auto& w = dense_[layer].weight.storage();
        state.insert(state.end(), w.begin(), w.end());
        state.insert(state.end(), dense_[layer].bias.begin(), dense_[layer].bias.end());
        if (layer < bn_.size()) {
            const auto& b = bn_[layer];
            state.insert(state.end(), b.gamma.begin(), b.gamma.end());
            state.insert(state.end(), b.beta.begin(), b.beta.end());
            state.insert(state.end(), b.running_mean.begin(), b.running_mean.end());
            state.insert(state.end(), b.running_var.begin(), b.running_var.end());
        }
    }
    return state;
}

void Mlp::load_state(std::span<const double> state) {
    if (state.size() != state_size())
        throw std::invalid_argument("Mlp::load_state: state size mismatch");
    std::size_t pos = 0;
    auto take = [&](std::vector<double>& dst) {
        std::copy_n(state.begin() + long(pos), dst.size(), dst.begin());
        pos += dst.size();
    };
    for (std::size_t layer = 0; layer < dense_.size(); ++layer) {
        take(dense_[layer].weight.storage());
        take(dense_[layer].bias);
        if (layer < bn_.size()) {
            take(bn_[layer].gamma);
            take(bn_[layer].beta);
            take(bn_[layer].running_mean);
            take(bn_[layer].running_var);
        }
    }
}

std::size_t Mlp::state_size() const {
    std::size_t total = param_count();
    for (const auto& b : bn_) total += b.running_mean.size() + b.running_var.size();
    return total;
}

void AdamOptimizer::step(std::vector<std::span<double>> params,
                         const std::vector<std::span<double>>& grads) {
    if (params.size() != grads.size())
        throw std::invalid_argument("AdamOptimizer::step: block count mismatch");

    std::size_t total = 0;
    for (const auto& b : params) total += b.size();
    if (total != state_.first_moment.size())
        throw std::invalid_argument("AdamOptimizer::step: parameter count mismatch");

    // Single bias-correction step across all blocks, applied block-wise
    // against one flat moment vector.
    state_.step_count += 1;
    const double correction1 = 1.0 - std::pow(state_.beta1, double(state_.step_count));
    const double correction2 = 1.0 - std::pow(state_.beta2, double(state_.step_count));
    std::size_t offset = 0;
    for (std::size_t blk = 0; blk < params.size(); ++blk) {
        auto p = params[blk];
        auto g = grads[blk];
        if (p.size() != g.size())
            throw std::invalid_argument("AdamOptimizer::step: block size mismatch");
        for (std::size_t n = 0; n < p.size(); ++n) {
            double& m = state_.first_moment[offset + n];
            double& v = state_.second_moment[offset + n];
            m = state_.beta1 * m + (1.0 - state_.beta1) * g[n];
            v = state_.beta2 * v + (1.0 - state_.beta2) * g[n] * g[n];
            const double m_hat = m / correction1;
            const double v_hat = v / correction2;
            p[n] -= state_.learning_rate * m_hat / (std::sqrt(v_hat) + state_.epsilon);
        }
        offset += p.size();
    }
}

double clip_gradient_norm(std::vector<std::span<double>> grads, double max_norm) {
    double sq = 0.0;
    for (const auto& block : grads)
        for (double g : block) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (auto& block : grads)
            for (double& g : block) g *= scale;
    }
    return norm;
}

} // namespace cfpc::nn
