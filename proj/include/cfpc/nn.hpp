// Minimal dense-network engine: fully-connected layers, ReLU/ReLU6, batch
// normalization, exact reverse-mode gradients and the Adam optimizer. Just
// enough to express and train the cooperative-learning nets; no general
// autodiff graph.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cfpc/rng.hpp"
#include "cfpc/tensor.hpp"

namespace cfpc::nn {

// --- layers -----------------------------------------------------------------

struct DenseParams {
    Tensor2D weight;          // out x in
    std::vector<double> bias; // out

    int in_dim() const { return int(weight.cols()); }
    int out_dim() const { return int(weight.rows()); }
};

struct DenseGrads {
    Tensor2D weight;
    std::vector<double> bias;
};

/// y = x W^T + b for a batch of row vectors.
Tensor2D dense_forward(const DenseParams& params, const Tensor2D& x);

/// Reverse mode: accumulates parameter gradients and returns grad wrt x.
Tensor2D dense_backward(const DenseParams& params, const Tensor2D& x,
                        const Tensor2D& grad_y, DenseGrads& grads);

Tensor2D relu_forward(const Tensor2D& x);
Tensor2D relu6_forward(const Tensor2D& x);

/// Masked gradients; the subgradient at the kinks is 0.
Tensor2D relu_backward(const Tensor2D& x, const Tensor2D& grad_y);
Tensor2D relu6_backward(const Tensor2D& x, const Tensor2D& grad_y);

struct BatchNormParams {
    std::vector<double> gamma;
    std::vector<double> beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.9;
    double epsilon = 1e-5;

    explicit BatchNormParams(int features = 0)
        : gamma(features, 1.0), beta(features, 0.0),
          running_mean(features, 0.0), running_var(features, 1.0) {}
};

struct BatchNormGrads {
    std::vector<double> gamma;
    std::vector<double> beta;
};

struct BatchNormCache {
    Tensor2D x_hat;
    std::vector<double> inv_std;
};

/// Train-mode forward: normalizes by batch statistics (population variance),
/// applies scale/shift, and updates the running statistics in place.
/// Requires batch >= 2.
Tensor2D batchnorm_forward_train(BatchNormParams& params, const Tensor2D& x,
                                 BatchNormCache& cache);

/// Inference forward: a pure affine map from the running statistics.
Tensor2D batchnorm_forward_infer(const BatchNormParams& params, const Tensor2D& x);

Tensor2D batchnorm_backward(const BatchNormParams& params, const BatchNormCache& cache,
                            const Tensor2D& grad_y, BatchNormGrads& grads);

// --- optimizer ----------------------------------------------------------------

struct AdamState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::int64_t step_count = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    explicit AdamState(std::size_t n = 0, double lr = 1e-3)
        : first_moment(n, 0.0), second_moment(n, 0.0), learning_rate(lr) {}
};

/// One bias-corrected Adam descent step over a flat parameter vector.
void adam_update(AdamState& state, std::span<double> params,
                 std::span<const double> grads);

// --- multi-layer perceptron ---------------------------------------------------

enum class Activation { None, ReLU, ReLU6 };

struct MlpSpec {
    std::vector<int> sizes; // input, hidden..., output
    bool batchnorm = true;  // after each hidden activation (dense -> act -> bn)
    Activation hidden_activation = Activation::ReLU;

    int input_dim() const { return sizes.front(); }
    int output_dim() const { return sizes.back(); }
    int n_layers() const { return int(sizes.size()) - 1; }
};

/// A stack of dense layers, hidden ones followed by activation then batch
/// norm, final one linear. Parameters are He-initialized.
class Mlp {
public:
    Mlp() = default;
    Mlp(MlpSpec spec, RandomStream& rng);

    const MlpSpec& spec() const { return spec_; }
    bool empty() const { return spec_.sizes.empty(); }

    struct Cache {
        std::vector<Tensor2D> layer_inputs; // input to each dense layer
        std::vector<Tensor2D> pre_act;      // dense outputs
        std::vector<BatchNormCache> bn;
    };

    struct Grads {
        std::vector<DenseGrads> dense;
        std::vector<BatchNormGrads> bn;
    };

    /// Inference pass: batch norm uses running statistics; pure function.
    Tensor2D forward(const Tensor2D& x) const;

    /// Training pass: batch-norm uses batch statistics and updates running
    /// stats in place.
    Tensor2D forward_train(const Tensor2D& x, Cache& cache);

    Grads zero_grads() const;

    /// Accumulates into grads; returns gradient wrt the input batch.
    Tensor2D backward(const Cache& cache, const Tensor2D& grad_out, Grads& grads) const;

    /// Number of trainable scalars (weights, biases, gamma, beta).
    std::size_t param_count() const;

    /// Trainable parameter blocks in canonical order (per layer: weight,
    /// bias, then gamma, beta when present). The same order is used for
    /// gradients, Adam state and checkpoints.
    std::vector<std::span<double>> trainable_blocks();
    std::vector<std::span<const double>> trainable_blocks() const;
    std::vector<std::span<double>> grad_blocks(Grads& grads) const;

    /// Full state (trainable blocks plus batch-norm running statistics),
    /// flattened for checkpointing.
    std::vector<double> state_vector() const;
    void load_state(std::span<const double> state);
    std::size_t state_size() const;

private:
    MlpSpec spec_;
    std::vector<DenseParams> dense_;
    std::vector<BatchNormParams> bn_;
};

/// Adam over a whole model (or several: concatenate the block lists).
class AdamOptimizer {
public:
    AdamOptimizer() = default;
    AdamOptimizer(std::size_t total_params, double learning_rate)
        : state_(total_params, learning_rate) {}

    AdamState& state() { return state_; }

    /// One descent step across matched parameter/gradient block lists.
    void step(std::vector<std::span<double>> params,
              const std::vector<std::span<double>>& grads);

private:
    AdamState state_;
};

/// Global-norm gradient clipping; returns the pre-clip norm.
double clip_gradient_norm(std::vector<std::span<double>> grads, double max_norm);

} // namespace cfpc::nn
