#include "cfpc/csgd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cfpc/format.hpp"

namespace cfpc {

namespace {

constexpr double kLn2 = 0.6931471805599453094172321214582;

void require_power_shape(const Tensor2D& p, int M, int K, const char* what) {
    if (int(p.rows()) != M || int(p.cols()) != K)
        throw std::invalid_argument(std::string(what) + ": power matrix shape mismatch");
}

// Amplitudes transposed to K x M so the j-contiguous factor layout streams.
void fill_amplitudes(const Tensor2D& p, std::vector<double>& qt) {
    const int M = int(p.rows());
    const int K = int(p.cols());
    qt.resize(std::size_t(K) * M);
    for (int l = 0; l < K; ++l)
        for (int j = 0; j < M; ++j) qt[std::size_t(l) * M + j] = std::sqrt(p(j, l));
}

} // namespace

void CsgdConfig::validate() const {
    if (max_iterations < 1)
        throw std::invalid_argument("CsgdConfig: max_iterations must be >= 1");
    if (batch_size < 1)
        throw std::invalid_argument("CsgdConfig: batch_size must be >= 1");
    if (tol < 0.0) throw std::invalid_argument("CsgdConfig: tol must be >= 0");
    if (stop_window < 1)
        throw std::invalid_argument("CsgdConfig: stop_window must be >= 1");
    if (power_floor_rel <= 0.0)
        throw std::invalid_argument("CsgdConfig: power_floor_rel must be > 0");
}

double CsgdConfig::resolve_alpha(double P, int K) const {
    return alpha > 0.0 ? alpha : P / double(K);
}

MiniBatch sample_minibatch(const LongTermCsi& rho, double phi, int ap,
                           int batch_size, RandomStream& rng,
                           bool include_own_estimates) {
    const int M = rho.M();
    const int K = rho.K();
    if (ap < 0 || ap >= M)
        throw std::invalid_argument("sample_minibatch: AP index out of range");
    if (batch_size < 1)
        throw std::invalid_argument("sample_minibatch: batch_size must be >= 1");
    if (phi < 0.0 || phi > 1.0)
        throw std::invalid_argument("sample_minibatch: phi must lie in [0, 1]");

    MiniBatch batch;
    batch.ap = ap;
    batch.M = M;
    batch.K = K;
    batch.samples.resize(batch_size);
    for (auto& sample : batch.samples) {
        sample.err_own.resize(K);
        for (int k = 0; k < K; ++k)
            sample.err_own[k] = rng.cgaussian(phi * rho.rho(ap, k));

        sample.h_hat_other = ComplexMat(M - 1, K);
        sample.err_other = ComplexMat(M - 1, K);
        int row = 0;
        for (int j = 0; j < M; ++j) {
            if (j == ap) continue;
            for (int k = 0; k < K; ++k) {
                sample.h_hat_other(row, k) = rng.cgaussian((1.0 - phi) * rho.rho(j, k));
                sample.err_other(row, k) = rng.cgaussian(phi * rho.rho(j, k));
            }
            ++row;
        }
        if (include_own_estimates) {
            sample.h_hat_own.resize(K);
            for (int k = 0; k < K; ++k)
                sample.h_hat_own[k] = rng.cgaussian((1.0 - phi) * rho.rho(ap, k));
        }
    }
    return batch;
}

PreparedBatch prepare_batch(const MiniBatch& batch, std::span<const cdouble> h_hat_i,
                            BeamformerReading reading) {
    const int M = batch.M;
    const int K = batch.K;
    const int ap = batch.ap;
    if (int(h_hat_i.size()) != K)
        throw std::invalid_argument("prepare_batch: h_hat_i length mismatch");

    PreparedBatch prep;
    prep.ap = ap;
    prep.M = M;
    prep.K = K;
    prep.batch_size = int(batch.samples.size());
    prep.reading = reading;
    prep.factors.resize(std::size_t(prep.batch_size) * M * K * K);

    std::vector<cdouble> g(std::size_t(M) * K); // composite channel, j-major
    std::vector<cdouble> w(std::size_t(M) * K); // beamformer phases, j-major

    for (int n = 0; n < prep.batch_size; ++n) {
        const auto& sample = batch.samples[n];
        if (reading == BeamformerReading::BatchSampled && sample.h_hat_own.empty())
            throw std::invalid_argument(
                "prepare_batch: BatchSampled reading needs a batch drawn with "
                "include_own_estimates");

        int row = 0;
        for (int j = 0; j < M; ++j) {
            if (j == ap) {
                for (int k = 0; k < K; ++k) {
                    g[std::size_t(j) * K + k] = h_hat_i[k] + sample.err_own[k];
                    const cdouble beam_src = reading == BeamformerReading::LocalKnown
                                                 ? h_hat_i[k]
                                                 : sample.h_hat_own[k];
                    w[std::size_t(j) * K + k] = beamformer_phase(beam_src);
                }
            } else {
                for (int k = 0; k < K; ++k) {
                    g[std::size_t(j) * K + k] =
                        sample.h_hat_other(row, k) + sample.err_other(row, k);
                    w[std::size_t(j) * K + k] = beamformer_phase(sample.h_hat_other(row, k));
                }
                ++row;
            }
        }

        cdouble* out = prep.factors.data() + std::size_t(n) * M * K * K;
        for (int k = 0; k < K; ++k)
            for (int l = 0; l < K; ++l)
                for (int j = 0; j < M; ++j)
                    out[(std::size_t(k) * K + l) * M + j] =
                        g[std::size_t(j) * K + k] * w[std::size_t(j) * K + l];
    }
    return prep;
}

double saa_sum_rate(const PreparedBatch& batch, const Tensor2D& p) {
    const int M = batch.M;
    const int K = batch.K;
    require_power_shape(p, M, K, "saa_sum_rate");

    // scratch reuse keeps the call cost dominated by the O(|B| M K^2) kernel
    static thread_local std::vector<double> qt;
    fill_amplitudes(p, qt);

    double total = 0.0;
    static thread_local std::vector<double> mag2;
    mag2.assign(K, 0.0);
    for (int n = 0; n < batch.batch_size; ++n) {
        const cdouble* fac = batch.sample_factors(n);
        for (int k = 0; k < K; ++k) {
            for (int l = 0; l < K; ++l) {
                const cdouble* a = fac + (std::size_t(k) * K + l) * M;
                const double* q = qt.data() + std::size_t(l) * M;
                double sre = 0.0, sim = 0.0;
                for (int j = 0; j < M; ++j) {
                    sre += a[j].real() * q[j];
                    sim += a[j].imag() * q[j];
                }
                mag2[l] = sre * sre + sim * sim;
            }
            double interf = 0.0;
            for (int l = 0; l < K; ++l)
                if (l != k) interf += mag2[l];
            total += std::log2(1.0 + mag2[k] / (1.0 + interf));
        }
    }
    return total / double(batch.batch_size);
}

double saa_sum_rate(std::span<const cdouble> h_hat_i, const MiniBatch& batch,
                    const Tensor2D& p, BeamformerReading reading) {
    return saa_sum_rate(prepare_batch(batch, h_hat_i, reading), p);
}

std::vector<double> saa_gradient(const PreparedBatch& batch, const Tensor2D& p,
                                 double power_floor) {
    const int M = batch.M;
    const int K = batch.K;
    const int ap = batch.ap;
    require_power_shape(p, M, K, "saa_gradient");
    if (power_floor <= 0.0)
        throw std::invalid_argument("saa_gradient: power_floor must be > 0");
    for (int l = 0; l < K; ++l)
        if (p(ap, l) < power_floor)
            throw std::invalid_argument(
                "saa_gradient: own-row power entry below power_floor; clamp first");

    static thread_local std::vector<double> qt;
    fill_amplitudes(p, qt);
    static thread_local std::vector<double> own_inv_sqrt;
    own_inv_sqrt.assign(K, 0.0);
    for (int l = 0; l < K; ++l) own_inv_sqrt[l] = 1.0 / qt[std::size_t(l) * M + ap];

    std::vector<double> grad(K, 0.0);
    static thread_local std::vector<cdouble> s_row, own_fac;
    s_row.assign(K, cdouble{});
    own_fac.assign(K, cdouble{});
    const double inv_batch = 1.0 / double(batch.batch_size);

    for (int n = 0; n < batch.batch_size; ++n) {
        const cdouble* fac = batch.sample_factors(n);
        for (int k = 0; k < K; ++k) {
            for (int l = 0; l < K; ++l) {
                const cdouble* a = fac + (std::size_t(k) * K + l) * M;
                const double* q = qt.data() + std::size_t(l) * M;
                double sre = 0.0, sim = 0.0;
                for (int j = 0; j < M; ++j) {
                    sre += a[j].real() * q[j];
                    sim += a[j].imag() * q[j];
                }
                s_row[l] = {sre, sim};
                own_fac[l] = a[ap];
            }
            double interf = 0.0;
            for (int l = 0; l < K; ++l)
                if (l != k) interf += std::norm(s_row[l]);
            const double denom = 1.0 + interf;
            const double gamma = std::norm(s_row[k]) / denom;
            const double base = inv_batch / ((1.0 + gamma) * kLn2 * denom);

            // d|S(k,l)|^2 / dp(ap,l) = Re(conj(a_own) S(k,l)) / sqrt(p(ap,l))
            for (int l = 0; l < K; ++l) {
                const double re_term = own_fac[l].real() * s_row[l].real() +
                                       own_fac[l].imag() * s_row[l].imag();
                const double dmag2 = re_term * own_inv_sqrt[l];
                grad[l] += (l == k) ? base * dmag2 : -base * gamma * dmag2;
            }
        }
    }
    return grad;
}

std::vector<double> saa_gradient(std::span<const cdouble> h_hat_i,
                                 const MiniBatch& batch, const Tensor2D& p,
                                 double power_floor, BeamformerReading reading) {
    return saa_gradient(prepare_batch(batch, h_hat_i, reading), p, power_floor);
}

std::vector<double> project_feasible(std::span<const double> v, double P) {
    if (v.empty()) throw std::invalid_argument("project_feasible: empty input");
    if (P < 0.0) throw std::invalid_argument("project_feasible: P must be >= 0");

    std::vector<double> out(v.size());
    double clipped_sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::max(v[i], 0.0);
        clipped_sum += out[i];
    }
    if (clipped_sum <= P) return out; // interior of the budget: clip is exact

    if (P == 0.0) {
        std::fill(out.begin(), out.end(), 0.0);
        return out;
    }

    // Budget is active: project onto { x >= 0, sum(x) = P } by the sorted
    // threshold rule.
    std::vector<double> sorted(v.begin(), v.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cumulative = 0.0;
    double theta = 0.0;
    for (std::size_t j = 0; j < sorted.size(); ++j) {
        cumulative += sorted[j];
        const double candidate = (cumulative - P) / double(j + 1);
        if (sorted[j] - candidate > 0.0)
            theta = candidate;
        else
            break;
    }
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - theta, 0.0);
    return out;
}

void csgd_step(CsgdState& state, const LongTermCsi& rho, const ComplexMat& h_hat,
               double phi, double P, const CsgdConfig& cfg, const RandomStream& rng,
               std::vector<double>* saa_values) {
    const int M = rho.M();
    const int K = rho.K();
    require_power_shape(state.p, M, K, "csgd_step");

    // Step 1 of the loop: every AP shares its p_i (accounted as M*K reals
    // per iteration per AP).
    state.exchanged_reals += std::uint64_t(M) * std::uint64_t(M) * std::uint64_t(K);

    const double floor = cfg.power_floor_rel * P;
    const double alpha0 = cfg.resolve_alpha(P, K);
    const double alpha = cfg.schedule == StepSchedule::InvSqrt
                             ? alpha0 / std::sqrt(double(state.iteration + 1))
                             : alpha0;
    const bool own_estimates = cfg.reading == BeamformerReading::BatchSampled;

    if (saa_values) saa_values->assign(M, 0.0);

    // Jacobi update: all APs evaluate at the last exchanged solution.
    Tensor2D p_next = state.p;
    for (int i = 0; i < M; ++i) {
        RandomStream ap_rng = rng.substream(
            "csgd-batch", std::uint64_t(state.iteration) * std::uint64_t(M) + i);
        const MiniBatch batch =
            sample_minibatch(rho, phi, i, cfg.batch_size, ap_rng, own_estimates);
        const PreparedBatch prep = prepare_batch(batch, h_hat.row(i), cfg.reading);

        Tensor2D p_eval = state.p;
        for (int k = 0; k < K; ++k) p_eval(i, k) = std::max(p_eval(i, k), floor);

        if (saa_values) (*saa_values)[i] = saa_sum_rate(prep, p_eval);
        const std::vector<double> grad = saa_gradient(prep, p_eval, floor);

        std::vector<double> candidate(K);
        for (int k = 0; k < K; ++k) candidate[k] = state.p(i, k) + alpha * grad[k];
        const std::vector<double> projected = project_feasible(candidate, P);
        for (int k = 0; k < K; ++k) p_next(i, k) = projected[k];
    }
    state.p = std::move(p_next);
    state.iteration += 1;
}

CsgdResult run_csgd(const LongTermCsi& rho, const ChannelRealization& chan,
                    double P, const CsgdConfig& cfg, const RandomStream& rng) {
    cfg.validate();
    const int M = rho.M();
    const int K = rho.K();
    if (chan.M() != M || chan.K() != K)
        throw std::invalid_argument("run_csgd: channel/long-term CSI shape mismatch");

    CsgdState state;
    state.p = Tensor2D(M, K, P / (2.0 * K)); // strictly interior start

    CsgdResult result;
    result.p.p = state.p;
    result.best_sum_rate = sum_rate(chan, result.p);

    std::vector<double> history;
    history.reserve(cfg.max_iterations);
    std::vector<double> saa;

    for (int t = 1; t <= cfg.max_iterations; ++t) {
        csgd_step(state, rho, chan.h_hat, chan.phi, P, cfg, rng, &saa);
        const double exact = sum_rate(chan, PowerAllocation{state.p});
        result.trace.push_back({t, exact, saa, state.exchanged_reals});
        history.push_back(exact);
        if (exact > result.best_sum_rate) {
            result.best_sum_rate = exact;
            result.p.p = state.p;
        }
        if (t > cfg.stop_window) {
            const double prev = history[std::size_t(t - 1 - cfg.stop_window)];
            if (std::abs(exact - prev) < cfg.tol * std::max(std::abs(prev), 1e-12))
                break;
        }
    }
    result.iterations = state.iteration;
    return result;
}

std::string csgd_trace_csv(const CsgdResult& result) {
    const int M = result.trace.empty() ? 0 : int(result.trace.front().saa_per_ap.size());
    std::string csv = "iteration,exact_sum_rate";
    for (int i = 0; i < M; ++i) csv += ",saa_ap" + std::to_string(i);
    csv += ",exchanged_reals\n";
    for (const auto& row : result.trace) {
        csv += std::to_string(row.iteration);
        csv += ',' + fmt_g17(row.exact_sum_rate);
        for (double v : row.saa_per_ap) csv += ',' + fmt_g17(v);
        csv += ',' + std::to_string(row.exchanged_reals);
        csv += '\n';
    }
    return csv;
}

} // namespace cfpc
