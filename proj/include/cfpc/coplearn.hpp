// Cooperative-learning architecture for decentralized power control: a
// parameter-shared uplink message net V, a CP aggregation net F pooled by
// averaging, and a parameter-shared decision net D whose output head makes
// every allocation feasible by construction. Includes the NCL / SCL /
// equal-power baselines and the unsupervised sum-rate training loop.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cfpc/netenv.hpp"
#include "cfpc/nn.hpp"
#include "cfpc/objective.hpp"

namespace cfpc {

enum class ClMethod { CL, NCL, SCL };

/// Map applied to the first K decision outputs to keep power ratios
/// nonnegative. Softplus keeps gradients alive near zero.
enum class RatioMap { Softplus, ReLU };

/// Ratio sums below this are treated as "allocate nothing".
inline constexpr double kRatioSumFloor = 1e-12;

struct PhiPolicy {
    enum class Kind { Fixed, Uniform };
    Kind kind = Kind::Fixed;
    double value = 0.0;

    static PhiPolicy fixed(double v) { return {Kind::Fixed, v}; }
    static PhiPolicy uniform() { return {Kind::Uniform, 0.0}; }

    double sample(RandomStream& rng) const {
        return kind == Kind::Fixed ? value : rng.uniform();
    }
    std::string to_string() const;
    static PhiPolicy parse(const std::string& text);
};

struct ClConfig {
    ClMethod method = ClMethod::CL;
    int K = 4;
    int d_U = -1; ///< uplink message length; -1 selects K, 0 disables messages
    int d_D = -1; ///< downlink message length; -1 selects K, 0 disables messages
    int hidden_depth = 4;
    int hidden_width = 0; ///< 0 selects 32 * K
    RatioMap ratio_map = RatioMap::Softplus;

    // training
    int M_train = 8;
    double P_train = 100.0;
    PhiPolicy phi_policy = PhiPolicy::uniform();
    int epochs = 1500; ///< one mini-batch update per epoch, fresh data each time
    int batch_size = 64;
    double learning_rate = 1e-3;
    double grad_clip_norm = 5.0; ///< global-norm clip; <= 0 disables
    int eval_every = 50;         ///< validation cadence in epochs; 0 disables
    int eval_samples = 256;
    GeometryConfig geometry;

    void validate() const;
    int resolved_d_U() const;
    int resolved_d_D() const;
    int resolved_width() const;
    bool has_messages() const;
    /// Decision-net input width: downlink message (CL/SCL), rho'_i, then
    /// interleaved Re/Im of h_hat_i.
    int decision_input_dim() const;
};

/// The three parameter sets. The same V and D serve every AP, so the
/// trainable parameter count is independent of M.
struct ClModel {
    ClConfig config;
    nn::Mlp message_net;  // V: K -> d_U
    nn::Mlp cp_net;       // F: d_U -> d_D
    nn::Mlp decision_net; // D: decision_input_dim -> K + 1

    static ClModel init(const ClConfig& config, RandomStream& rng);
    std::size_t param_count() const;
};

struct MessageSet {
    Tensor2D uplink;              // M x d_U
    Tensor2D latent;              // M x d_D (per-AP F outputs)
    std::vector<double> downlink; // d_D (mean of latent rows)
};

/// m_i = V(rho'_i) for every AP with the shared parameters.
Tensor2D uplink_messages(const ClModel& model, const LongTermCsi& rho, double P);

/// f = mean_i F(m_i). The per-coordinate sums are evaluated in sorted order
/// so the result is bitwise invariant under AP permutations.
std::vector<double> aggregate_downlink(const ClModel& model, const Tensor2D& uplink);

struct DecideResult {
    std::vector<double> p_i; ///< K nonnegative powers, sum == delta
    double delta = 0.0;      ///< total power actually allocated, <= P
};

/// The output head in isolation: raw decision-net outputs (K+1) to powers.
/// The first K outputs set power ratios through the nonnegative map, the
/// last one passes through the scaled ReLU6 to pick the AP's total power,
/// and the ratio scaling guarantees sum_k p(k) == delta <= P. A ratio sum
/// below kRatioSumFloor allocates nothing (delta reported as 0).
DecideResult decision_head(const ClConfig& config, std::span<const double> raw, double P);

/// Decision head applied to the decision net's output for one AP.
DecideResult decide_power(const ClModel& model, std::span<const double> downlink,
                          std::span<const double> rho_prime_i,
                          std::span<const cdouble> h_hat_i, double P);

/// End-to-end forward pass; accepts any M by construction.
PowerAllocation forward_pass(const ClModel& model, const LongTermCsi& rho,
                             const ComplexMat& h_hat, double P);

/// Hand-crafted cooperation baseline: uplink m_i = rho_i verbatim and
/// per-AP downlink f(i,k) = sqrt(P * rho(i,k) / sum_j rho(j,k)).
struct SclMessages {
    Tensor2D uplink;   // M x K
    Tensor2D downlink; // M x K, row i feeds AP i's decision net
};
SclMessages scl_messages(const LongTermCsi& rho, double P);

/// Non-cooperative decision for one AP: consumes only local CSI.
std::vector<double> ncl_forward(const ClModel& model, std::span<const double> rho_i,
                                std::span<const cdouble> h_hat_i, double P);

PowerAllocation equal_power(int M, int K, double P);

// --- training ----------------------------------------------------------------

using DeploymentSampler = std::function<LongTermCsi(RandomStream&)>;

/// Fresh uniform-disk deployments with the given geometry and dimensions.
DeploymentSampler make_disk_sampler(const GeometryConfig& geometry, int M, int K);

struct EpochStat {
    int epoch = 0;
    double batch_sum_rate = 0.0; ///< mini-batch mean objective (positive rates)
    double smoothed = 0.0;       ///< EMA of batch_sum_rate
    double grad_norm = 0.0;      ///< pre-clip global gradient norm
    std::optional<double> validation_sum_rate;
};

struct TrainTrace {
    std::vector<EpochStat> epochs;
};

struct TrainResult {
    ClModel model;
    TrainTrace trace;
};

struct ClGradients {
    nn::Mlp::Grads message;
    nn::Mlp::Grads cp;
    nn::Mlp::Grads decision;
};

/// One training-style forward/backward over a fixed batch: train-mode batch
/// norm, heads in amplitude space, exact SINR. Returns the batch mean
/// sum-rate; grads receive the gradient of the training loss (the negative
/// mean) for every trainable block.
double cl_batch_step(ClModel& model, std::span<const LongTermCsi> rhos,
                     std::span<const ChannelRealization> chans, double P,
                     ClGradients& grads);

/// Unsupervised training on the exact sum-rate objective: every mini-batch
/// draws fresh deployments, a fresh error ratio per the phi policy, and
/// fresh channel realizations; gradients flow through the SINR and all
/// component nets. Throws on divergence (non-finite loss) naming the epoch.
TrainResult train_cl(const ClConfig& config, const DeploymentSampler& sampler,
                     const RandomStream& rng);

// --- checkpoints ---------------------------------------------------------------
//
// Binary layout (little-endian): magic "CFCK", u32 version = 1,
// u64 meta_len, meta (UTF-8 JSON: method, architecture, M_train, phi policy,
// training seed, per-net layer sizes), u64 value_count, then value_count f64
// holding each net's state vector in V, F, D order (per layer: weight
// row-major, bias, then batch-norm gamma, beta, running mean, running var).

void save_checkpoint(const ClModel& model, std::uint64_t train_seed,
                     const std::filesystem::path& path);
ClModel load_checkpoint(const std::filesystem::path& path,
                        std::uint64_t* train_seed = nullptr);
std::string checkpoint_to_json(const ClModel& model, std::uint64_t train_seed);

std::string method_name(ClMethod method);
ClMethod parse_method(const std::string& name);

} // namespace cfpc
