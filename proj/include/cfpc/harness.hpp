// Experiment orchestration: shared-channel method evaluation, SNR / error-
// ratio sweeps, the scalability matrix, dataset generation and CSV/manifest
// emission. Within one sweep every method sees the identical test channel
// realizations, so method differences are paired.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cfpc/coplearn.hpp"
#include "cfpc/csgd.hpp"
#include "cfpc/netenv.hpp"
#include "cfpc/objective.hpp"

namespace cfpc {

struct ExperimentSpec {
    std::vector<std::string> methods; ///< "equal", "csgd", or checkpoint keys
    std::string sweep_axis;           ///< "snr_db" | "phi" | "m_test"
    std::vector<double> sweep_values;
    int M = 4; ///< test AP count (fixed unless sweeping m_test)
    int K = 4;
    double snr_db = 20.0; ///< fixed SNR when sweeping phi / m_test
    double phi = 0.1;     ///< fixed error ratio when sweeping snr / m_test
    int n_test_samples = 5000;
    std::uint64_t seed = 1;
    std::filesystem::path out_dir;
    std::map<std::string, std::filesystem::path> checkpoints; ///< method key -> file
    CsgdConfig csgd;
    GeometryConfig geometry;

    void validate() const;
    std::string config_hash() const;
};

struct ResultRow {
    std::string method;
    std::string sweep_axis;
    double sweep_value = 0.0;
    int m_train = -1; ///< -1 for methods without a trained model
    int m_test = 0;
    int k = 0;
    double snr_db = 0.0;
    double phi = 0.0;
    double mean_sum_rate = 0.0;
    double std_error = 0.0;
    int n_samples = 0;
    std::uint64_t seed = 0;
};

struct ExperimentResult {
    std::string config_hash;
    std::vector<ResultRow> rows;
    double wall_time_s = 0.0; ///< reported in the manifest, never in the CSV

    std::string to_csv() const;
    static std::string csv_header();
};

struct ScalabilityRow {
    std::string cl_key;
    int m_train = 0;
    int m_test = 0;
    int k = 0;
    double snr_db = 0.0;
    double phi = 0.0;
    double cl_mean = 0.0;
    double csgd_mean = 0.0;
    double relative = 0.0; ///< cl_mean / csgd_mean
    int n_samples = 0;
    std::uint64_t seed = 0;
};

struct ScalabilityResult {
    std::string config_hash;
    std::vector<ScalabilityRow> rows;
    double wall_time_s = 0.0;

    std::string to_csv() const;
    static std::string csv_header();
};

/// One evaluation point. channel_stream must be shared across methods for
/// paired comparisons; method_stream feeds method-internal randomness
/// (CSGD mini-batches).
struct EvalPoint {
    int M = 4;
    int K = 4;
    double P = 100.0;
    double phi = 0.1;
    int n_samples = 100;
    GeometryConfig geometry;
    CsgdConfig csgd;
};

struct MethodEvalResult {
    double mean = 0.0;
    double std_error = 0.0;
    std::vector<double> sample_sums;
};

/// Evaluates one method over n_samples fresh (deployment, channel) pairs.
/// method_key "equal" and "csgd" need no model; anything else requires one.
MethodEvalResult evaluate_point(const EvalPoint& point, const std::string& method_key,
                                const ClModel* model, const RandomStream& channel_stream,
                                const RandomStream& method_stream);

/// Paired mean difference a - b and its standard error.
struct PairedStats {
    double mean_diff = 0.0;
    double std_error = 0.0;
};
PairedStats paired_diff(const std::vector<double>& a, const std::vector<double>& b);

ExperimentResult run_snr_sweep(const ExperimentSpec& spec);
ExperimentResult run_error_ratio_sweep(const ExperimentSpec& spec);

/// Relative sum-rate (method / CSGD) for every provided CL checkpoint at
/// every m_test in sweep_values.
ScalabilityResult run_scalability_table(const ExperimentSpec& spec);

/// Writes a channel test set in the netenv format plus a JSON manifest
/// (seed, dims, phi, count, content hash). Returns the dataset path.
std::filesystem::path generate_dataset(const ExperimentSpec& spec);

/// Writes result.csv (+ manifest.json) under spec.out_dir.
std::filesystem::path write_experiment_csv(const ExperimentSpec& spec,
                                           const ExperimentResult& result,
                                           const std::string& name);
std::filesystem::path write_scalability_csv(const ExperimentSpec& spec,
                                            const ScalabilityResult& result);

/// FNV-1a content hash of a file, hex-encoded (manifest provenance).
std::string file_content_hash(const std::filesystem::path& path);

/// CLI entry point (subcommands gen-data, train, eval, sweep-snr, sweep-phi,
/// scalability, csgd-trace). Returns 0 on success, 2 on configuration
/// errors, 3 on runtime failures.
int cli_entry(int argc, const char* const* argv);

} // namespace cfpc
