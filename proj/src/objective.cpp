#include "cfpc/objective.hpp"

#include <cmath>
#include <stdexcept>

#include "cfpc/format.hpp"

namespace cfpc {

namespace {

constexpr double kLn2 = 0.6931471805599453094172321214582;

void check_dims(const ChannelRealization& chan, const Tensor2D& p, const char* what) {
    if (p.rows() != chan.h_hat.rows() || p.cols() != chan.h_hat.cols())
        throw std::invalid_argument(std::string(what) + ": power/channel shape mismatch");
}

} // namespace

double RateReport::std_error() const {
    const std::size_t n = sample_sums.size();
    if (n < 2) return 0.0;
    double mean = 0.0;
    for (double s : sample_sums) mean += s;
    mean /= double(n);
    double ss = 0.0;
    for (double s : sample_sums) ss += (s - mean) * (s - mean);
    return std::sqrt(ss / (double(n) * double(n - 1)));
}

double sinr(const ChannelRealization& chan, const PowerAllocation& p, int k) {
    check_dims(chan, p.p, "sinr");
    const int M = chan.M();
    const int K = chan.K();
    if (k < 0 || k >= K) throw std::invalid_argument("sinr: UE index out of range");

    double signal = 0.0;
    double interference = 0.0;
    for (int l = 0; l < K; ++l) {
        cdouble s{0.0, 0.0};
        for (int i = 0; i < M; ++i) {
            const cdouble h = chan.h_hat(i, k) + chan.err(i, k);
            s += h * beamformer_phase(chan.h_hat(i, l)) * std::sqrt(p.p(i, l));
        }
        const double mag2 = std::norm(s);
        if (l == k)
            signal = mag2;
        else
            interference += mag2;
    }
    return signal / (1.0 + interference);
}

double sum_rate(const ChannelRealization& chan, const PowerAllocation& p) {
    check_dims(chan, p.p, "sum_rate");
    const int K = chan.K();
    double total = 0.0;
    for (int k = 0; k < K; ++k)
        total += std::log2(1.0 + sinr(chan, p, k));
    return total;
}

double sum_rate_amp_grad(const ChannelRealization& chan, const Tensor2D& q,
                         Tensor2D& grad_q) {
    check_dims(chan, q, "sum_rate_amp_grad");
    const int M = chan.M();
    const int K = chan.K();

    // Cache actual channels and beamformer factors once: O(MK).
    ComplexMat h(M, K), w(M, K);
    for (int i = 0; i < M; ++i) {
        for (int k = 0; k < K; ++k) {
            h(i, k) = chan.h_hat(i, k) + chan.err(i, k);
            w(i, k) = beamformer_phase(chan.h_hat(i, k));
        }
    }

    // Composite amplitudes S(k, l) = sum_i h(i,k) w(i,l) q(i,l).
    ComplexMat S(K, K);
    for (int k = 0; k < K; ++k) {
        for (int l = 0; l < K; ++l) {
            cdouble s{0.0, 0.0};
            for (int i = 0; i < M; ++i) s += h(i, k) * w(i, l) * q(i, l);
            S(k, l) = s;
        }
    }

    std::vector<double> gamma(K), denom(K);
    double rate = 0.0;
    for (int k = 0; k < K; ++k) {
        double interf = 0.0;
        for (int l = 0; l < K; ++l)
            if (l != k) interf += std::norm(S(k, l));
        denom[k] = 1.0 + interf;
        gamma[k] = std::norm(S(k, k)) / denom[k];
        rate += std::log2(1.0 + gamma[k]);
    }

    grad_q = Tensor2D(M, K, 0.0);
    for (int k = 0; k < K; ++k) {
        const double base = 1.0 / ((1.0 + gamma[k]) * kLn2 * denom[k]);
        for (int l = 0; l < K; ++l) {
            // d rate / d |S(k,l)|^2, then chain through S into q(:, l).
            const double beta = (l == k) ? base : -gamma[k] * base;
            const cdouble skl = S(k, l);
            for (int i = 0; i < M; ++i) {
                const cdouble a = h(i, k) * w(i, l);
                grad_q(i, l) += beta * 2.0 * (a.real() * skl.real() + a.imag() * skl.imag());
            }
        }
    }
    return rate;
}

RateReport ergodic_sum_rate(const LongTermCsi& rho, const PowerPolicy& policy,
                            double phi, int n_samples, const RandomStream& rng) {
    if (n_samples < 1)
        throw std::invalid_argument("ergodic_sum_rate: n_samples must be >= 1");

    const int K = rho.K();
    RateReport report;
    report.per_ue_rates.assign(K, 0.0);
    report.sample_sums.reserve(n_samples);

    for (int n = 0; n < n_samples; ++n) {
        RandomStream sample_rng = rng.substream("mc-sample", std::uint64_t(n));
        const ChannelRealization chan = sample_channel(rho, phi, sample_rng);

        PowerAllocation p;
        try {
            p = policy(rho, chan.h_hat);
        } catch (const std::exception& e) {
            throw std::runtime_error("ergodic_sum_rate: policy failed at sample " +
                                     std::to_string(n) + ": " + e.what());
        }

        double sample_sum = 0.0;
        for (int k = 0; k < K; ++k) {
            const double r = std::log2(1.0 + sinr(chan, p, k));
            report.per_ue_rates[k] += r;
            sample_sum += r;
        }
        report.sample_sums.push_back(sample_sum);
    }

    for (double& r : report.per_ue_rates) r /= double(n_samples);
    double mean = 0.0;
    for (double s : report.sample_sums) mean += s;
    report.sum_rate = mean / double(n_samples);
    report.sample_count = n_samples;
    return report;
}

Feasibility check_feasible(const PowerAllocation& p, double P, double tol) {
    if (tol < 0.0) tol = kFeasibilityRelTol * P;
    const int M = p.M();
    const int K = p.K();

    Feasibility result;
    result.feasible = true;
    result.slack.resize(M);
    for (int i = 0; i < M; ++i) {
        double row_sum = 0.0;
        for (int k = 0; k < K; ++k) {
            const double v = p.p(i, k);
            if (v < -tol) result.feasible = false;
            row_sum += v;
        }
        result.slack[i] = P - row_sum;
        if (row_sum > P + tol) result.feasible = false;
    }
    return result;
}

std::string rate_report_csv_header() {
    return "config_hash,M,K,P_dB,phi,method,mean_sum_rate,std_error,n_samples,seed";
}

std::string rate_report_csv_row(const RateReport& report, const std::string& config_hash,
                                int M, int K, double P_dB, double phi,
                                const std::string& method, std::uint64_t seed) {
    std::string row = config_hash;
    row += ',' + std::to_string(M);
    row += ',' + std::to_string(K);
    row += ',' + fmt_g17(P_dB);
    row += ',' + fmt_g17(phi);
    row += ',' + method;
    row += ',' + fmt_g17(report.sum_rate);
    row += ',' + fmt_g17(report.std_error());
    row += ',' + std::to_string(report.sample_count);
    row += ',' + std::to_string(seed);
    return row;
}

} // namespace cfpc
