// Exact per-sample SINR and sum-rate for conjugate beamforming, Monte-Carlo
// ergodic evaluation over channel draws, and power-budget feasibility checks.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cfpc/netenv.hpp"
#include "cfpc/tensor.hpp"

namespace cfpc {

/// Beamformer phase factors below this magnitude are treated as zero
/// (the AP contributes nothing on that link). Under the channel model this
/// happens with probability zero unless phi = 1.
inline constexpr double kBeamformerZeroTol = 1e-30;

/// Conjugate-beamforming phase factor conj(h_hat)/|h_hat|, zero when the
/// estimate magnitude vanishes.
inline cdouble beamformer_phase(cdouble h_hat) {
    const double mag = std::abs(h_hat);
    if (mag < kBeamformerZeroTol) return {0.0, 0.0};
    return std::conj(h_hat) / mag;
}

/// Default feasibility tolerance, relative to P.
inline constexpr double kFeasibilityRelTol = 1e-9;

/// p(i, k) is the power AP i allocates to UE k; rows must respect the
/// per-AP budget sum_k p(i, k) <= P.
struct PowerAllocation {
    Tensor2D p; // M x K, nonnegative

    int M() const { return int(p.rows()); }
    int K() const { return int(p.cols()); }
};

struct Feasibility {
    bool feasible = false;
    std::vector<double> slack; // per-AP P - sum_k p(i, k)
};

/// Monte-Carlo rate statistics. per_ue_rates are means over samples, so
/// sum_rate == sum(per_ue_rates) still holds.
struct RateReport {
    std::vector<double> per_ue_rates;
    double sum_rate = 0.0;
    int sample_count = 0;
    std::vector<double> sample_sums; // per-sample sum-rates, for paired stats

    double std_error() const;
};

/// Maps (long-term CSI, channel estimates) to a power allocation. The
/// policy never sees the estimation error.
using PowerPolicy =
    std::function<PowerAllocation(const LongTermCsi&, const ComplexMat& h_hat)>;

/// SINR of UE k under conjugate beamforming with the actual channel
/// h = h_hat + err and unit noise power.
double sinr(const ChannelRealization& chan, const PowerAllocation& p, int k);

/// sum_k log2(1 + sinr_k).
double sum_rate(const ChannelRealization& chan, const PowerAllocation& p);

/// Instantaneous sum-rate as a function of transmit amplitudes q = sqrt(p),
/// together with its analytic gradient d(sum-rate)/dq. The amplitude
/// parameterization keeps the gradient finite at zero power.
double sum_rate_amp_grad(const ChannelRealization& chan, const Tensor2D& q,
                         Tensor2D& grad_q);

/// Monte-Carlo mean of sum_rate over fresh channel draws from (rho, phi).
/// Each sample uses its own substream of rng, so the draw sequence does not
/// depend on how much randomness the policy itself consumes.
RateReport ergodic_sum_rate(const LongTermCsi& rho, const PowerPolicy& policy,
                            double phi, int n_samples, const RandomStream& rng);

/// True iff all entries >= -tol and all row sums <= P + tol.
Feasibility check_feasible(const PowerAllocation& p, double P,
                           double tol = -1.0 /* default: 1e-9 * P */);

/// Standalone CSV serialization of a rate report:
/// config_hash,M,K,P_dB,phi,method,mean_sum_rate,std_error,n_samples,seed
std::string rate_report_csv_header();
std::string rate_report_csv_row(const RateReport& report, const std::string& config_hash,
                                int M, int K, double P_dB, double phi,
                                const std::string& method, std::uint64_t seed);

} // namespace cfpc
