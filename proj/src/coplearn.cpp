#include "cfpc/coplearn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace cfpc {

namespace {

double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Per-row cache of the feasibility head, enough to replay the chain rule.
struct HeadCache {
    std::vector<double> d;           // nonnegative ratios
    std::vector<double> r;           // sqrt(d / s)
    std::vector<double> dmap_deriv;  // derivative of the nonnegative map
    double s = 0.0;
    double u = 0.0; // sqrt(delta)
    double delta = 0.0;
    double delta_pre = 0.0;
    bool degenerate = false;
};

/// Forward head: raw (K+1) -> amplitudes q (K). q_k = sqrt(delta) * sqrt(d_k / s).
void head_forward(const ClConfig& cfg, std::span<const double> raw, double P,
                  HeadCache& cache, std::span<double> q) {
    const int K = cfg.K;
    cache.d.resize(K);
    cache.r.assign(K, 0.0);
    cache.dmap_deriv.resize(K);

    double s = 0.0;
    for (int k = 0; k < K; ++k) {
        double d, deriv;
        if (cfg.ratio_map == RatioMap::Softplus) {
            d = softplus(raw[k]);
            deriv = sigmoid(raw[k]);
        } else {
            d = std::max(raw[k], 0.0);
            deriv = raw[k] > 0.0 ? 1.0 : 0.0;
        }
        cache.d[k] = d;
        cache.dmap_deriv[k] = deriv;
        s += d;
    }
    cache.s = s;
    cache.delta_pre = raw[K];
    cache.delta = P * std::min(std::max(raw[K], 0.0), 6.0) / 6.0;
    cache.degenerate = s < kRatioSumFloor;

    if (cache.degenerate) {
        std::fill(q.begin(), q.end(), 0.0);
        cache.u = 0.0;
        return;
    }
    cache.u = std::sqrt(cache.delta);
    for (int k = 0; k < K; ++k) {
        cache.r[k] = std::sqrt(cache.d[k] / s);
        q[k] = cache.u * cache.r[k];
    }
}

/// Reverse head: amplitude gradients -> raw-output gradients.
void head_backward(const ClConfig& cfg, const HeadCache& cache, double P,
                   std::span<const double> grad_q, std::span<double> grad_raw) {
    const int K = cfg.K;
    std::fill(grad_raw.begin(), grad_raw.end(), 0.0);
    if (cache.degenerate) return;

    double grad_u = 0.0;
    for (int k = 0; k < K; ++k) grad_u += grad_q[k] * cache.r[k];
    if (cache.u > 0.0) {
        const double grad_delta = grad_u / (2.0 * cache.u);
        if (cache.delta_pre > 0.0 && cache.delta_pre < 6.0)
            grad_raw[K] = grad_delta * P / 6.0;
    }

    // r_k = sqrt(d_k / s):
    //   d r_k / d d_m = (1 / 2s) (delta_km / r_k - r_m)  [own term 0 at r_k = 0]
    double sum_gr_r = 0.0;
    for (int k = 0; k < K; ++k) sum_gr_r += grad_q[k] * cache.u * cache.r[k];
    const double inv_2s = 1.0 / (2.0 * cache.s);
    for (int k = 0; k < K; ++k) {
        const double grad_r = grad_q[k] * cache.u;
        const double own = cache.r[k] > 0.0 ? grad_r / cache.r[k] : 0.0;
        const double grad_d = (own - sum_gr_r) * inv_2s;
        grad_raw[k] = grad_d * cache.dmap_deriv[k];
    }
}

Tensor2D rho_prime_rows(const LongTermCsi& rho, double P) {
    const int M = rho.M();
    const int K = rho.K();
    Tensor2D out(M, K);
    for (int i = 0; i < M; ++i) {
        const auto norm = normalize_longterm(rho.rho.row(i), P);
        std::copy(norm.begin(), norm.end(), out.row(i).begin());
    }
    return out;
}

/// Column-wise mean with sorted summation, so the value is bitwise
/// independent of the row order.
std::vector<double> sorted_column_mean(const Tensor2D& rows, std::size_t row_begin,
                                       std::size_t row_end) {
    const std::size_t cols = rows.cols();
    const std::size_t n = row_end - row_begin;
    std::vector<double> mean(cols, 0.0);
    std::vector<double> column(n);
    for (std::size_t c = 0; c < cols; ++c) {
        for (std::size_t r = 0; r < n; ++r) column[r] = rows(row_begin + r, c);
        std::sort(column.begin(), column.end());
        double acc = 0.0;
        for (double v : column) acc += v;
        mean[c] = acc / double(n);
    }
    return mean;
}

void fill_decision_row(std::span<double> row, std::span<const double> downlink,
                       std::span<const double> rho_prime,
                       std::span<const cdouble> h_hat) {
    std::size_t pos = 0;
    for (double v : downlink) row[pos++] = v;
    for (double v : rho_prime) row[pos++] = v;
    for (const cdouble& h : h_hat) {
        row[pos++] = h.real();
        row[pos++] = h.imag();
    }
}

nn::MlpSpec make_net_spec(int input, int width, int depth, int output) {
    nn::MlpSpec spec;
    spec.sizes.push_back(input);
    for (int d = 0; d < depth; ++d) spec.sizes.push_back(width);
    spec.sizes.push_back(output);
    spec.batchnorm = true;
    spec.hidden_activation = nn::Activation::ReLU;
    return spec;
}

} // namespace

std::string PhiPolicy::to_string() const {
    if (kind == Kind::Uniform) return "uniform";
    char buf[40];
    std::snprintf(buf, sizeof buf, "fixed:%.17g", value);
    return buf;
}

PhiPolicy PhiPolicy::parse(const std::string& text) {
    if (text == "uniform") return uniform();
    if (text.rfind("fixed:", 0) == 0) {
        const double v = std::stod(text.substr(6));
        if (v < 0.0 || v > 1.0)
            throw std::invalid_argument("phi policy: fixed value must lie in [0, 1]");
        return fixed(v);
    }
    throw std::invalid_argument("phi policy: expected 'uniform' or 'fixed:<v>', got '" +
                                text + "'");
}

void ClConfig::validate() const {
    if (K < 1) throw std::invalid_argument("ClConfig: K must be >= 1");
    if (method == ClMethod::CL) {
        const int du = resolved_d_U();
        const int dd = resolved_d_D();
        if (du < 0 || dd < 0)
            throw std::invalid_argument("ClConfig: message lengths must be >= 0");
        if ((du == 0) != (dd == 0))
            throw std::invalid_argument(
                "ClConfig: d_U and d_D must be both zero (no messages) or both positive");
    }
    if (hidden_depth < 1) throw std::invalid_argument("ClConfig: hidden_depth must be >= 1");
    if (resolved_width() < 1) throw std::invalid_argument("ClConfig: hidden_width must be >= 1");
    if (M_train < 1) throw std::invalid_argument("ClConfig: M_train must be >= 1");
    if (P_train <= 0.0) throw std::invalid_argument("ClConfig: P_train must be > 0");
    if (epochs < 1) throw std::invalid_argument("ClConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("ClConfig: batch_size must be >= 1");
    if (batch_size * M_train < 2)
        throw std::invalid_argument("ClConfig: batch_size * M_train must be >= 2 for batch norm");
    if (learning_rate < 0.0)
        throw std::invalid_argument("ClConfig: learning_rate must be >= 0");
    if (phi_policy.kind == PhiPolicy::Kind::Fixed &&
        (phi_policy.value < 0.0 || phi_policy.value > 1.0))
        throw std::invalid_argument("ClConfig: fixed phi must lie in [0, 1]");
    if (eval_every > 0 && eval_samples < 1)
        throw std::invalid_argument("ClConfig: eval_samples must be >= 1");
    geometry.validate();
}

int ClConfig::resolved_d_U() const {
    if (method == ClMethod::NCL) return 0;
    if (method == ClMethod::SCL) return K;
    return d_U < 0 ? K : d_U;
}

int ClConfig::resolved_d_D() const {
    if (method == ClMethod::NCL) return 0;
    if (method == ClMethod::SCL) return K;
    return d_D < 0 ? K : d_D;
}

int ClConfig::resolved_width() const { return hidden_width > 0 ? hidden_width : 32 * K; }

bool ClConfig::has_messages() const {
    return method == ClMethod::CL && resolved_d_U() > 0 && resolved_d_D() > 0;
}

int ClConfig::decision_input_dim() const {
    int msg = 0;
    if (method == ClMethod::SCL)
        msg = K;
    else if (has_messages())
        msg = resolved_d_D();
    return msg + K + 2 * K;
}

ClModel ClModel::init(const ClConfig& config, RandomStream& rng) {
    config.validate();
    ClModel model;
    model.config = config;
    const int width = config.resolved_width();
    const int depth = config.hidden_depth;

    if (config.has_messages()) {
        RandomStream v_rng = rng.substream("message-net");
        RandomStream f_rng = rng.substream("cp-net");
        model.message_net =
            nn::Mlp(make_net_spec(config.K, width, depth, config.resolved_d_U()), v_rng);
        model.cp_net = nn::Mlp(
            make_net_spec(config.resolved_d_U(), width, depth, config.resolved_d_D()), f_rng);
    }
    RandomStream d_rng = rng.substream("decision-net");
    model.decision_net =
        nn::Mlp(make_net_spec(config.decision_input_dim(), width, depth, config.K + 1), d_rng);
    return model;
}

std::size_t ClModel::param_count() const {
    std::size_t total = decision_net.param_count();
    if (!message_net.empty()) total += message_net.param_count();
    if (!cp_net.empty()) total += cp_net.param_count();
    return total;
}

Tensor2D uplink_messages(const ClModel& model, const LongTermCsi& rho, double P) {
    if (rho.K() != model.config.K)
        throw std::invalid_argument("uplink_messages: rho UE dimension mismatch");
    if (!model.config.has_messages())
        return Tensor2D(rho.M(), 0); // NCL degenerate case: empty messages
    return model.message_net.forward(rho_prime_rows(rho, P));
}

std::vector<double> aggregate_downlink(const ClModel& model, const Tensor2D& uplink) {
    if (uplink.rows() < 1)
        throw std::invalid_argument("aggregate_downlink: need at least one AP row");
    if (!model.config.has_messages()) return {};
    const Tensor2D latent = model.cp_net.forward(uplink);
    return sorted_column_mean(latent, 0, latent.rows());
}

DecideResult decision_head(const ClConfig& config, std::span<const double> raw, double P) {
    if (int(raw.size()) != config.K + 1)
        throw std::invalid_argument("decision_head: raw output length must be K + 1");
    HeadCache cache;
    std::vector<double> q(config.K);
    head_forward(config, raw, P, cache, q);

    DecideResult result;
    result.p_i.assign(config.K, 0.0);
    if (!cache.degenerate) {
        for (int k = 0; k < config.K; ++k)
            result.p_i[k] = cache.delta * cache.d[k] / cache.s;
        result.delta = cache.delta;
    }
    return result;
}

DecideResult decide_power(const ClModel& model, std::span<const double> downlink,
                          std::span<const double> rho_prime_i,
                          std::span<const cdouble> h_hat_i, double P) {
    const ClConfig& cfg = model.config;
    const int K = cfg.K;
    const int msg_dim = cfg.decision_input_dim() - 3 * K;
    if (int(downlink.size()) != msg_dim)
        throw std::invalid_argument("decide_power: downlink message length mismatch");
    if (int(rho_prime_i.size()) != K || int(h_hat_i.size()) != K)
        throw std::invalid_argument("decide_power: local CSI length mismatch");

    Tensor2D input(1, cfg.decision_input_dim());
    fill_decision_row(input.row(0), downlink, rho_prime_i, h_hat_i);
    const Tensor2D raw = model.decision_net.forward(input);
    return decision_head(cfg, raw.row(0), P);
}

PowerAllocation forward_pass(const ClModel& model, const LongTermCsi& rho,
                             const ComplexMat& h_hat, double P) {
    const ClConfig& cfg = model.config;
    const int M = rho.M();
    const int K = rho.K();
    if (K != cfg.K) throw std::invalid_argument("forward_pass: UE dimension mismatch");
    if (int(h_hat.rows()) != M || int(h_hat.cols()) != K)
        throw std::invalid_argument("forward_pass: h_hat shape mismatch");

    const Tensor2D rho_prime = rho_prime_rows(rho, P);

    std::vector<double> pooled;
    Tensor2D scl_downlink;
    if (cfg.method == ClMethod::SCL) {
        scl_downlink = scl_messages(rho, P).downlink;
    } else if (cfg.has_messages()) {
        pooled = aggregate_downlink(model, model.message_net.forward(rho_prime));
    }

    Tensor2D input(M, cfg.decision_input_dim());
    for (int i = 0; i < M; ++i) {
        std::span<const double> msg;
        if (cfg.method == ClMethod::SCL)
            msg = scl_downlink.row(i);
        else if (cfg.has_messages())
            msg = pooled;
        fill_decision_row(input.row(i), msg, rho_prime.row(i), h_hat.row(i));
    }
    const Tensor2D raw = model.decision_net.forward(input);

    PowerAllocation alloc;
    alloc.p = Tensor2D(M, K, 0.0);
    HeadCache cache;
    std::vector<double> q(K);
    for (int i = 0; i < M; ++i) {
        head_forward(cfg, raw.row(i), P, cache, q);
        if (!cache.degenerate)
            for (int k = 0; k < K; ++k) alloc.p(i, k) = cache.delta * cache.d[k] / cache.s;
    }
    return alloc;
}

SclMessages scl_messages(const LongTermCsi& rho, double P) {
    const int M = rho.M();
    const int K = rho.K();
    SclMessages msgs;
    msgs.uplink = rho.rho;
    msgs.downlink = Tensor2D(M, K);
    for (int k = 0; k < K; ++k) {
        double column_sum = 0.0;
        for (int j = 0; j < M; ++j) column_sum += rho.rho(j, k);
        for (int i = 0; i < M; ++i)
            msgs.downlink(i, k) =
                column_sum > 0.0 ? std::sqrt(P * rho.rho(i, k) / column_sum) : 0.0;
    }
    return msgs;
}

std::vector<double> ncl_forward(const ClModel& model, std::span<const double> rho_i,
                                std::span<const cdouble> h_hat_i, double P) {
    if (model.config.method != ClMethod::NCL && model.config.has_messages())
        throw std::invalid_argument("ncl_forward: model was built with messages enabled");
    const auto rho_prime = normalize_longterm(rho_i, P);
    return decide_power(model, {}, rho_prime, h_hat_i, P).p_i;
}

PowerAllocation equal_power(int M, int K, double P) {
    if (M < 1 || K < 1) throw std::invalid_argument("equal_power: M, K must be >= 1");
    return PowerAllocation{Tensor2D(M, K, P / double(K))};
}

DeploymentSampler make_disk_sampler(const GeometryConfig& geometry, int M, int K) {
    return [geometry, M, K](RandomStream& rng) {
        return sample_deployment(geometry, M, K, rng);
    };
}

double cl_batch_step(ClModel& model, std::span<const LongTermCsi> rhos,
                     std::span<const ChannelRealization> chans, double P,
                     ClGradients& grads) {
    const ClConfig& config = model.config;
    const int K = config.K;
    const int B = int(rhos.size());
    if (B < 1 || chans.size() != rhos.size())
        throw std::invalid_argument("cl_batch_step: batch is empty or mismatched");
    const int M = rhos.front().M();
    for (int b = 0; b < B; ++b)
        if (rhos[b].M() != M || rhos[b].K() != K || chans[b].M() != M ||
            chans[b].K() != K)
            throw std::invalid_argument("cl_batch_step: sample shape mismatch");

    const int d_D = config.resolved_d_D();
    const bool messages = config.has_messages();
    const bool scl = config.method == ClMethod::SCL;
    const int d_in_dim = config.decision_input_dim();

    Tensor2D rho_prime(B * M, K);
    for (int b = 0; b < B; ++b) {
        const Tensor2D rp = rho_prime_rows(rhos[b], P);
        for (int i = 0; i < M; ++i)
            std::copy(rp.row(i).begin(), rp.row(i).end(),
                      rho_prime.row(std::size_t(b) * M + i).begin());
    }

    nn::Mlp::Cache v_cache, f_cache, d_cache;
    Tensor2D latent;         // (B*M) x d_D
    Tensor2D pooled(B, d_D); // per-sample downlink message
    if (messages) {
        const Tensor2D uplink = model.message_net.forward_train(rho_prime, v_cache);
        latent = model.cp_net.forward_train(uplink, f_cache);
        for (int b = 0; b < B; ++b) {
            const auto mean =
                sorted_column_mean(latent, std::size_t(b) * M, std::size_t(b + 1) * M);
            std::copy(mean.begin(), mean.end(), pooled.row(b).begin());
        }
    }

    Tensor2D d_in(B * M, d_in_dim);
    for (int b = 0; b < B; ++b) {
        Tensor2D scl_dl;
        if (scl) scl_dl = scl_messages(rhos[b], P).downlink;
        for (int i = 0; i < M; ++i) {
            std::span<const double> msg;
            if (scl)
                msg = scl_dl.row(i);
            else if (messages)
                msg = pooled.row(b);
            fill_decision_row(d_in.row(std::size_t(b) * M + i), msg,
                              rho_prime.row(std::size_t(b) * M + i),
                              chans[b].h_hat.row(i));
        }
    }

    const Tensor2D raw = model.decision_net.forward_train(d_in, d_cache);

    // Heads, exact sum-rate, and the amplitude-space gradient.
    std::vector<HeadCache> head_caches(std::size_t(B) * M);
    Tensor2D grad_raw(B * M, K + 1, 0.0);
    double batch_objective = 0.0;
    const double loss_scale = -1.0 / double(B); // minimize negative sum-rate
    Tensor2D q(M, K), grad_q;
    std::vector<double> gq_scaled(K);
    for (int b = 0; b < B; ++b) {
        for (int i = 0; i < M; ++i)
            head_forward(config, raw.row(std::size_t(b) * M + i), P,
                         head_caches[std::size_t(b) * M + i], q.row(i));
        batch_objective += sum_rate_amp_grad(chans[b], q, grad_q);
        for (int i = 0; i < M; ++i) {
            for (int k = 0; k < K; ++k) gq_scaled[k] = loss_scale * grad_q(i, k);
            head_backward(config, head_caches[std::size_t(b) * M + i], P, gq_scaled,
                          grad_raw.row(std::size_t(b) * M + i));
        }
    }
    batch_objective /= double(B);

    grads.decision = model.decision_net.zero_grads();
    const Tensor2D grad_d_in = model.decision_net.backward(d_cache, grad_raw, grads.decision);

    if (messages) {
        // Mean pooling: each latent row receives the sample's message
        // gradient divided by M.
        Tensor2D grad_latent(B * M, d_D);
        for (int b = 0; b < B; ++b) {
            for (int c = 0; c < d_D; ++c) {
                double g = 0.0;
                for (int i = 0; i < M; ++i) g += grad_d_in(std::size_t(b) * M + i, c);
                g /= double(M);
                for (int i = 0; i < M; ++i) grad_latent(std::size_t(b) * M + i, c) = g;
            }
        }
        grads.cp = model.cp_net.zero_grads();
        const Tensor2D grad_uplink = model.cp_net.backward(f_cache, grad_latent, grads.cp);
        grads.message = model.message_net.zero_grads();
        model.message_net.backward(v_cache, grad_uplink, grads.message);
    }
    return batch_objective;
}

TrainResult train_cl(const ClConfig& config, const DeploymentSampler& sampler,
                     const RandomStream& rng) {
    config.validate();
    const int K = config.K;
    const int M = config.M_train;
    const int B = config.batch_size;
    const double P = config.P_train;
    const bool messages = config.has_messages();

    RandomStream init_rng = rng.substream("init");
    ClModel model = ClModel::init(config, init_rng);

    struct ValSample {
        LongTermCsi rho;
        ChannelRealization chan;
    };
    std::vector<ValSample> validation;
    if (config.eval_every > 0) {
        validation.reserve(config.eval_samples);
        for (int n = 0; n < config.eval_samples; ++n) {
            RandomStream v_rng = rng.substream("validation", std::uint64_t(n));
            LongTermCsi v_rho = sampler(v_rng);
            const double phi = config.phi_policy.sample(v_rng);
            ChannelRealization v_chan = sample_channel(v_rho, phi, v_rng);
            validation.push_back({std::move(v_rho), std::move(v_chan)});
        }
    }

    nn::AdamOptimizer optimizer(model.param_count(), config.learning_rate);
    TrainTrace trace;
    trace.epochs.reserve(config.epochs);
    double ema = 0.0;
    bool ema_ready = false;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        // Fresh deployments, error ratio, and channels every mini-batch.
        std::vector<LongTermCsi> rhos(B);
        std::vector<ChannelRealization> chans(B);
        for (int b = 0; b < B; ++b) {
            RandomStream s_rng =
                rng.substream("train-sample", std::uint64_t(epoch) * B + b);
            rhos[b] = sampler(s_rng);
            if (rhos[b].M() != M || rhos[b].K() != K)
                throw std::invalid_argument("train_cl: sampler deployment shape mismatch");
            const double phi = config.phi_policy.sample(s_rng);
            chans[b] = sample_channel(rhos[b], phi, s_rng);
        }

        ClGradients step_grads;
        const double batch_objective = cl_batch_step(model, rhos, chans, P, step_grads);
        if (!std::isfinite(batch_objective))
            throw std::runtime_error("train_cl: diverged (non-finite objective) at epoch " +
                                     std::to_string(epoch));

        std::vector<std::span<double>> params, grads;
        if (messages) {
            for (auto s : model.message_net.trainable_blocks()) params.push_back(s);
            for (auto s : model.message_net.grad_blocks(step_grads.message))
                grads.push_back(s);
            for (auto s : model.cp_net.trainable_blocks()) params.push_back(s);
            for (auto s : model.cp_net.grad_blocks(step_grads.cp)) grads.push_back(s);
        }
        for (auto s : model.decision_net.trainable_blocks()) params.push_back(s);
        for (auto s : model.decision_net.grad_blocks(step_grads.decision))
            grads.push_back(s);

        const double max_norm = config.grad_clip_norm > 0.0
                                    ? config.grad_clip_norm
                                    : std::numeric_limits<double>::infinity();
        const double grad_norm = nn::clip_gradient_norm(grads, max_norm);
        optimizer.step(params, grads);

        ema = ema_ready ? 0.95 * ema + 0.05 * batch_objective : batch_objective;
        ema_ready = true;

        EpochStat stat;
        stat.epoch = epoch;
        stat.batch_sum_rate = batch_objective;
        stat.smoothed = ema;
        stat.grad_norm = grad_norm;
        if (config.eval_every > 0 &&
            ((epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs)) {
            double total = 0.0;
            for (const auto& v : validation) {
                const PowerAllocation p = forward_pass(model, v.rho, v.chan.h_hat, P);
                total += sum_rate(v.chan, p);
            }
            stat.validation_sum_rate = total / double(validation.size());
        }
        trace.epochs.push_back(std::move(stat));
    }

    return {std::move(model), std::move(trace)};
}

// --- checkpoints ---------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'C', 'F', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::json net_meta(const char* name, const nn::Mlp& net) {
    nlohmann::json j;
    j["name"] = name;
    j["sizes"] = net.spec().sizes;
    j["batchnorm"] = net.spec().batchnorm;
    j["activation"] = net.spec().hidden_activation == nn::Activation::ReLU ? "relu" : "other";
    return j;
}

nlohmann::json checkpoint_meta(const ClModel& model, std::uint64_t train_seed) {
    const ClConfig& cfg = model.config;
    nlohmann::json meta;
    meta["format"] = "cfpc-checkpoint";
    meta["method"] = method_name(cfg.method);
    meta["K"] = cfg.K;
    meta["d_U"] = cfg.resolved_d_U();
    meta["d_D"] = cfg.resolved_d_D();
    meta["hidden_depth"] = cfg.hidden_depth;
    meta["hidden_width"] = cfg.resolved_width();
    meta["ratio_map"] = cfg.ratio_map == RatioMap::Softplus ? "softplus" : "relu";
    meta["M_train"] = cfg.M_train;
    meta["P_train"] = cfg.P_train;
    meta["phi_policy"] = cfg.phi_policy.to_string();
    meta["seed"] = train_seed;
    meta["nets"] = nlohmann::json::array();
    if (!model.message_net.empty()) meta["nets"].push_back(net_meta("V", model.message_net));
    if (!model.cp_net.empty()) meta["nets"].push_back(net_meta("F", model.cp_net));
    meta["nets"].push_back(net_meta("D", model.decision_net));
    return meta;
}

std::vector<double> checkpoint_values(const ClModel& model) {
    std::vector<double> values;
    auto append = [&values](const nn::Mlp& net) {
        if (net.empty()) return;
        const auto state = net.state_vector();
        values.insert(values.end(), state.begin(), state.end());
    };
    append(model.message_net);
    append(model.cp_net);
    append(model.decision_net);
    return values;
}

} // namespace

std::string method_name(ClMethod method) {
    switch (method) {
    case ClMethod::CL: return "cl";
    case ClMethod::NCL: return "ncl";
    case ClMethod::SCL: return "scl";
    }
    return "cl";
}

ClMethod parse_method(const std::string& name) {
    if (name == "cl" || name == "CL") return ClMethod::CL;
    if (name == "ncl" || name == "NCL") return ClMethod::NCL;
    if (name == "scl" || name == "SCL") return ClMethod::SCL;
    throw std::invalid_argument("unknown method '" + name + "' (expected cl|ncl|scl)");
}

void save_checkpoint(const ClModel& model, std::uint64_t train_seed,
                     const std::filesystem::path& path) {
    const std::string meta = checkpoint_meta(model, train_seed).dump();
    const std::vector<double> values = checkpoint_values(model);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out.write(kCheckpointMagic, 4);
    const std::uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    const std::uint64_t meta_len = meta.size();
    out.write(reinterpret_cast<const char*>(&meta_len), sizeof meta_len);
    out.write(meta.data(), std::streamsize(meta.size()));
    const std::uint64_t count = values.size();
    out.write(reinterpret_cast<const char*>(&count), sizeof count);
    out.write(reinterpret_cast<const char*>(values.data()),
              std::streamsize(values.size() * sizeof(double)));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

ClModel load_checkpoint(const std::filesystem::path& path, std::uint64_t* train_seed) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw std::runtime_error(path.string() + ": not a cfpc checkpoint");
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    if (version != kCheckpointVersion)
        throw std::runtime_error(path.string() + ": unsupported checkpoint version");

    std::uint64_t meta_len = 0;
    in.read(reinterpret_cast<char*>(&meta_len), sizeof meta_len);
    std::string meta_text(meta_len, '\0');
    in.read(meta_text.data(), std::streamsize(meta_len));
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof count);
    std::vector<double> values(count);
    in.read(reinterpret_cast<char*>(values.data()), std::streamsize(count * sizeof(double)));
    if (!in) throw std::runtime_error(path.string() + ": truncated checkpoint");

    const nlohmann::json meta = nlohmann::json::parse(meta_text);
    ClConfig cfg;
    cfg.method = parse_method(meta.at("method").get<std::string>());
    cfg.K = meta.at("K").get<int>();
    cfg.d_U = meta.at("d_U").get<int>();
    cfg.d_D = meta.at("d_D").get<int>();
    cfg.hidden_depth = meta.at("hidden_depth").get<int>();
    cfg.hidden_width = meta.at("hidden_width").get<int>();
    cfg.ratio_map = meta.at("ratio_map").get<std::string>() == "relu" ? RatioMap::ReLU
                                                                      : RatioMap::Softplus;
    cfg.M_train = meta.at("M_train").get<int>();
    cfg.P_train = meta.at("P_train").get<double>();
    cfg.phi_policy = PhiPolicy::parse(meta.at("phi_policy").get<std::string>());
    if (train_seed) *train_seed = meta.at("seed").get<std::uint64_t>();

    RandomStream scratch(0);
    ClModel model = ClModel::init(cfg, scratch);

    std::size_t pos = 0;
    auto load_net = [&](nn::Mlp& net) {
        if (net.empty()) return;
        const std::size_t n = net.state_size();
        if (pos + n > values.size())
            throw std::runtime_error(path.string() + ": checkpoint value count mismatch");
        net.load_state(std::span<const double>(values.data() + pos, n));
        pos += n;
    };
    load_net(model.message_net);
    load_net(model.cp_net);
    load_net(model.decision_net);
    if (pos != values.size())
        throw std::runtime_error(path.string() + ": checkpoint value count mismatch");
    return model;
}

std::string checkpoint_to_json(const ClModel& model, std::uint64_t train_seed) {
    nlohmann::json j;
    j["meta"] = checkpoint_meta(model, train_seed);
    j["values"] = checkpoint_values(model);
    return j.dump(2);
}

} // namespace cfpc
