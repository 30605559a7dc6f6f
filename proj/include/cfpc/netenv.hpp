// Network environment: AP/UE deployments on a disk, distance-based long-term
// path-loss, and short-term channel realizations with LMMSE-style estimation
// error split by the error ratio phi.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "cfpc/rng.hpp"
#include "cfpc/tensor.hpp"

namespace cfpc {

struct GeometryConfig {
    double radius = 300.0; ///< deployment disk radius [m]
    double P0 = 10.0;      ///< path-loss at the reference distance
    double q0 = 30.0;      ///< reference distance [m]
    double eta = 3.0;      ///< path-loss exponent

    void validate() const;
};

struct NetworkConfig {
    int M = 0;        ///< AP count
    int K = 0;        ///< UE count
    double P = 1.0;   ///< per-AP power budget (linear; SNR in dB = 10 log10 P)
    double phi = 0.0; ///< error ratio in [0, 1]

    void validate() const;
};

/// Long-term CSI: rho(i, k) is the path-loss between AP i and UE k.
struct LongTermCsi {
    Tensor2D rho; // M x K, entries > 0

    int M() const { return int(rho.rows()); }
    int K() const { return int(rho.cols()); }
};

struct Point2D {
    double x = 0.0;
    double y = 0.0;
};

/// Deployment positions, kept only for reproducibility audits.
struct DeploymentPositions {
    std::vector<Point2D> aps;
    std::vector<Point2D> ues;
};

/// Short-term channel realization: estimates h_hat, errors err, and the
/// long-term CSI plus error ratio that generated them. The actual channel
/// is h = h_hat + err.
struct ChannelRealization {
    ComplexMat h_hat; // M x K
    ComplexMat err;   // M x K
    Tensor2D rho;     // M x K, generating long-term CSI
    double phi = 0.0;

    int M() const { return int(h_hat.rows()); }
    int K() const { return int(h_hat.cols()); }
};

/// Distance-based path-loss P0 * (q / q0)^(-eta); distances are floored at
/// 1 m so coincident positions cannot produce unbounded gains.
double path_loss(const GeometryConfig& geometry, double distance_m);

/// Draws AP and UE positions uniformly on the disk and maps pairwise
/// distances to long-term CSI. Positions are discarded unless a record is
/// requested.
LongTermCsi sample_deployment(const GeometryConfig& geometry, int M, int K,
                              RandomStream& rng,
                              DeploymentPositions* positions = nullptr);

/// Draws h_hat(i,k) ~ CN(0, (1-phi) rho) and err(i,k) ~ CN(0, phi rho),
/// independent across entries.
ChannelRealization sample_channel(const LongTermCsi& csi, double phi,
                                  RandomStream& rng);

/// Bounded input feature for one AP: rho'_k = sqrt(P) sqrt(rho_k) / sum_l sqrt(rho_l).
/// Entries lie in [0, sqrt(P)] and sum to sqrt(P). Rejects all-zero input.
std::vector<double> normalize_longterm(std::span<const double> rho_i, double P);

/// Elementwise h_hat + err.
ComplexMat reconstruct_actual(const ChannelRealization& chan);

// --- dataset serialization -------------------------------------------------
//
// Binary format (little-endian):
//   magic "CFDS", u32 version = 1, u32 kind (1 = long-term, 2 = channel),
//   u32 M, u32 K, f64 phi, u64 seed, u64 count,
//   then count records of row-major f64 arrays: rho [M*K]; channel records
//   append h_hat_re, h_hat_im, err_re, err_im [M*K each].
// The JSON form mirrors the same fields by name.

void save_longterm(const LongTermCsi& csi, std::uint64_t seed,
                   const std::filesystem::path& path);
LongTermCsi load_longterm(const std::filesystem::path& path,
                          std::uint64_t* seed = nullptr);

void save_channel(const ChannelRealization& chan, std::uint64_t seed,
                  const std::filesystem::path& path);
ChannelRealization load_channel(const std::filesystem::path& path,
                                std::uint64_t* seed = nullptr);

/// Multi-record channel test sets (every record carries its own deployment's
/// rho; phi is a dataset-level parameter).
void save_channel_dataset(std::span<const ChannelRealization> channels,
                          std::uint64_t seed, const std::filesystem::path& path);
std::vector<ChannelRealization> load_channel_dataset(const std::filesystem::path& path,
                                                     std::uint64_t* seed = nullptr);

std::string longterm_to_json(const LongTermCsi& csi, std::uint64_t seed);
std::string channel_to_json(const ChannelRealization& chan, std::uint64_t seed);

} // namespace cfpc
