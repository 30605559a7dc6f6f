// Cooperative stochastic gradient descent: per-AP sample-average
// approximation of the ergodic sum-rate, its analytic gradient, Euclidean
// projection onto the per-AP power set, and the synchronized exchange loop.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cfpc/netenv.hpp"
#include "cfpc/objective.hpp"
#include "cfpc/rng.hpp"
#include "cfpc/tensor.hpp"

namespace cfpc {

/// How AP i's own beamformer factors for interfering UEs are read from the
/// SAA SINR. LocalKnown uses the AP's known local estimates everywhere
/// (the batch superscript on local terms is read as a typo); BatchSampled
/// follows the displayed equation literally and draws them per sample.
enum class BeamformerReading { LocalKnown, BatchSampled };

enum class StepSchedule { Constant, InvSqrt };

struct CsgdConfig {
    double alpha = 0.0;            ///< step size; <= 0 selects P / K
    int max_iterations = 500;      ///< L
    int batch_size = 16;           ///< |B_i|
    double tol = 1e-5;             ///< relative objective-change threshold
    int stop_window = 10;          ///< iterations between stop comparisons
    double power_floor_rel = 1e-8; ///< gradient-stability floor, relative to P
    StepSchedule schedule = StepSchedule::Constant;
    BeamformerReading reading = BeamformerReading::LocalKnown;

    void validate() const;
    double resolve_alpha(double P, int K) const;
};

/// One SAA batch sample for AP i: the AP's own estimation errors plus
/// sampled estimates/errors of all other APs. h_hat_own is populated only
/// when the batch is drawn for the BatchSampled beamformer reading.
struct MiniBatchSample {
    std::vector<cdouble> err_own;   // K
    ComplexMat h_hat_other;         // (M-1) x K, rows = other APs ascending
    ComplexMat err_other;           // (M-1) x K
    std::vector<cdouble> h_hat_own; // K, empty unless sampled
};

struct MiniBatch {
    int ap = 0;
    int M = 0;
    int K = 0;
    std::vector<MiniBatchSample> samples;
};

/// A mini-batch with conjugate-beamforming factors folded in:
/// factor(n, k, l, j) = g(j, k) * w(j, l), where g is the composite channel
/// of sample n and w the unit-modulus beamformer. saa_sum_rate and
/// saa_gradient reduce to power-weighted sums over this table, which is
/// what makes their cost O(|B| M K^2).
struct PreparedBatch {
    int ap = 0;
    int M = 0;
    int K = 0;
    int batch_size = 0;
    BeamformerReading reading = BeamformerReading::LocalKnown;
    std::vector<cdouble> factors; // [n][k][l][j], j contiguous

    const cdouble* sample_factors(int n) const {
        return factors.data() + std::size_t(n) * M * K * K;
    }
};

/// Draws batch_size independent samples from the known channel statistics.
/// AP i's own estimates are not sampled (they are known locally) unless
/// include_own_estimates is set for the literal beamformer reading.
MiniBatch sample_minibatch(const LongTermCsi& rho, double phi, int ap,
                           int batch_size, RandomStream& rng,
                           bool include_own_estimates = false);

/// Folds AP i's local estimates into the batch's beamforming factors.
PreparedBatch prepare_batch(const MiniBatch& batch, std::span<const cdouble> h_hat_i,
                            BeamformerReading reading = BeamformerReading::LocalKnown);

/// SAA of the ergodic sum-rate at power allocation p (M x K, row ap is the
/// AP's own p_i, other rows are the exchanged p_{-i}).
double saa_sum_rate(const PreparedBatch& batch, const Tensor2D& p);
double saa_sum_rate(std::span<const cdouble> h_hat_i, const MiniBatch& batch,
                    const Tensor2D& p,
                    BeamformerReading reading = BeamformerReading::LocalKnown);

/// Analytic gradient of saa_sum_rate with respect to the AP's own row p_i,
/// treating all other rows as constants. Entries of row ap below
/// power_floor are rejected; callers clamp before evaluating.
std::vector<double> saa_gradient(const PreparedBatch& batch, const Tensor2D& p,
                                 double power_floor);
std::vector<double> saa_gradient(std::span<const cdouble> h_hat_i,
                                 const MiniBatch& batch, const Tensor2D& p,
                                 double power_floor,
                                 BeamformerReading reading = BeamformerReading::LocalKnown);

/// Euclidean projection onto { x : x >= 0, sum(x) <= P }. Sort-based
/// threshold method, O(K log K), exact up to rounding.
std::vector<double> project_feasible(std::span<const double> v, double P);

/// State of the synchronized loop: the last exchanged allocation plus
/// fronthaul accounting (M*K reals per iteration per AP).
struct CsgdState {
    Tensor2D p; // M x K
    int iteration = 0;
    std::uint64_t exchanged_reals = 0;
};

/// One Jacobi iteration: every AP draws a fresh mini-batch, evaluates its
/// SAA gradient at the last exchanged solution, and updates its own row by
/// projected gradient ascent. saa_values, when non-null, receives each AP's
/// SAA objective at the pre-update point.
void csgd_step(CsgdState& state, const LongTermCsi& rho, const ComplexMat& h_hat,
               double phi, double P, const CsgdConfig& cfg, const RandomStream& rng,
               std::vector<double>* saa_values = nullptr);

struct CsgdTraceRow {
    int iteration = 0;
    double exact_sum_rate = 0.0;    // evaluated on the true realization
    std::vector<double> saa_per_ap; // M values
    std::uint64_t exchanged_reals = 0;
};

struct CsgdResult {
    PowerAllocation p;     // best-so-far feasible allocation
    double best_sum_rate = 0.0;
    int iterations = 0;
    std::vector<CsgdTraceRow> trace;
};

/// Full Algorithm-1 run on one channel realization. Updates consume only
/// the realization's estimates (and the known statistics rho, phi); the
/// true realization is used to trace the exact objective and to select the
/// best-so-far iterate. Stops after max_iterations or when the exact
/// objective's relative change over stop_window iterations falls below tol.
CsgdResult run_csgd(const LongTermCsi& rho, const ChannelRealization& chan,
                    double P, const CsgdConfig& cfg, const RandomStream& rng);

/// Trace CSV: iteration, exact sum-rate, per-AP SAA values, cumulative
/// exchanged reals.
std::string csgd_trace_csv(const CsgdResult& result);

} // namespace cfpc
