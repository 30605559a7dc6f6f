#include "cfpc/harness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cfpc/format.hpp"

namespace cfpc {

namespace {

double snr_db_to_power(double snr_db) { return std::pow(10.0, snr_db / 10.0); }

std::string hash_hex(std::uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

bool is_builtin_method(const std::string& key) { return key == "equal" || key == "csgd"; }

std::map<std::string, ClModel> load_models(const ExperimentSpec& spec) {
    std::map<std::string, ClModel> models;
    for (const auto& key : spec.methods) {
        if (is_builtin_method(key)) continue;
        const auto it = spec.checkpoints.find(key);
        if (it == spec.checkpoints.end())
            throw std::runtime_error("missing checkpoint for learned method '" + key + "'");
        models.emplace(key, load_checkpoint(it->second));
    }
    return models;
}

nlohmann::json spec_to_json(const ExperimentSpec& spec) {
    nlohmann::json j;
    j["methods"] = spec.methods;
    j["sweep_axis"] = spec.sweep_axis;
    j["sweep_values"] = spec.sweep_values;
    j["M"] = spec.M;
    j["K"] = spec.K;
    j["snr_db"] = spec.snr_db;
    j["phi"] = spec.phi;
    j["n_test_samples"] = spec.n_test_samples;
    j["seed"] = spec.seed;
    j["csgd"] = {{"alpha", spec.csgd.alpha},
                 {"max_iterations", spec.csgd.max_iterations},
                 {"batch_size", spec.csgd.batch_size},
                 {"tol", spec.csgd.tol},
                 {"stop_window", spec.csgd.stop_window},
                 {"power_floor_rel", spec.csgd.power_floor_rel}};
    j["geometry"] = {{"radius", spec.geometry.radius},
                     {"P0", spec.geometry.P0},
                     {"q0", spec.geometry.q0},
                     {"eta", spec.geometry.eta}};
    std::map<std::string, std::string> ckpts;
    for (const auto& [k, v] : spec.checkpoints) ckpts[k] = v.string();
    j["checkpoints"] = ckpts;
    return j;
}

void write_manifest(const std::filesystem::path& path, nlohmann::json manifest) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << manifest.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

} // namespace

void ExperimentSpec::validate() const {
    if (methods.empty()) throw std::invalid_argument("ExperimentSpec: empty method set");
    if (sweep_values.empty())
        throw std::invalid_argument("ExperimentSpec: empty sweep axis");
    if (sweep_axis != "snr_db" && sweep_axis != "phi" && sweep_axis != "m_test")
        throw std::invalid_argument("ExperimentSpec: sweep_axis must be snr_db|phi|m_test");
    if (M < 1 || K < 1) throw std::invalid_argument("ExperimentSpec: M, K must be >= 1");
    if (n_test_samples < 1)
        throw std::invalid_argument("ExperimentSpec: n_test_samples must be >= 1");
    if (phi < 0.0 || phi > 1.0)
        throw std::invalid_argument("ExperimentSpec: phi must lie in [0, 1]");
    if (sweep_axis == "phi") {
        for (double v : sweep_values)
            if (v < 0.0 || v > 1.0)
                throw std::invalid_argument("ExperimentSpec: swept phi must lie in [0, 1]");
    }
    if (sweep_axis == "m_test") {
        for (double v : sweep_values)
            if (v < 1.0 || v != std::floor(v))
                throw std::invalid_argument(
                    "ExperimentSpec: swept m_test values must be positive integers");
    }
    geometry.validate();
}

std::string ExperimentSpec::config_hash() const {
    std::ostringstream canon;
    canon << "axis=" << sweep_axis << ";values=";
    for (double v : sweep_values) canon << fmt_g17(v) << ',';
    canon << ";methods=";
    for (const auto& m : methods) canon << m << ',';
    canon << ";M=" << M << ";K=" << K << ";snr_db=" << fmt_g17(snr_db)
          << ";phi=" << fmt_g17(phi) << ";n=" << n_test_samples << ";seed=" << seed
          << ";csgd=" << fmt_g17(csgd.alpha) << ',' << csgd.max_iterations << ','
          << csgd.batch_size << ',' << fmt_g17(csgd.tol) << ',' << csgd.stop_window << ','
          << fmt_g17(csgd.power_floor_rel)
          << ";geom=" << fmt_g17(geometry.radius) << ',' << fmt_g17(geometry.P0) << ','
          << fmt_g17(geometry.q0) << ',' << fmt_g17(geometry.eta);
    return hash_hex(detail::fnv1a64(canon.str()));
}

std::string ExperimentResult::csv_header() {
    return "config_hash,method,sweep_axis,sweep_value,m_train,m_test,k,snr_db,phi,"
           "mean_sum_rate,std_error,n_samples,seed";
}

std::string ExperimentResult::to_csv() const {
    std::string csv = csv_header() + '\n';
    for (const auto& r : rows) {
        csv += config_hash;
        csv += ',' + r.method;
        csv += ',' + r.sweep_axis;
        csv += ',' + fmt_g17(r.sweep_value);
        csv += ',' + std::to_string(r.m_train);
        csv += ',' + std::to_string(r.m_test);
        csv += ',' + std::to_string(r.k);
        csv += ',' + fmt_g17(r.snr_db);
        csv += ',' + fmt_g17(r.phi);
        csv += ',' + fmt_g17(r.mean_sum_rate);
        csv += ',' + fmt_g17(r.std_error);
        csv += ',' + std::to_string(r.n_samples);
        csv += ',' + std::to_string(r.seed);
        csv += '\n';
    }
    return csv;
}

std::string ScalabilityResult::csv_header() {
    return "config_hash,cl_key,m_train,m_test,k,snr_db,phi,cl_mean,csgd_mean,relative,"
           "n_samples,seed";
}

std::string ScalabilityResult::to_csv() const {
    std::string csv = csv_header() + '\n';
    for (const auto& r : rows) {
        csv += config_hash;
        csv += ',' + r.cl_key;
        csv += ',' + std::to_string(r.m_train);
        csv += ',' + std::to_string(r.m_test);
        csv += ',' + std::to_string(r.k);
        csv += ',' + fmt_g17(r.snr_db);
        csv += ',' + fmt_g17(r.phi);
        csv += ',' + fmt_g17(r.cl_mean);
        csv += ',' + fmt_g17(r.csgd_mean);
        csv += ',' + fmt_g17(r.relative);
        csv += ',' + std::to_string(r.n_samples);
        csv += ',' + std::to_string(r.seed);
        csv += '\n';
    }
    return csv;
}

MethodEvalResult evaluate_point(const EvalPoint& point, const std::string& method_key,
                                const ClModel* model, const RandomStream& channel_stream,
                                const RandomStream& method_stream) {
    if (!is_builtin_method(method_key) && model == nullptr)
        throw std::runtime_error("missing checkpoint for learned method '" + method_key +
                                 "'");
    if (model && model->config.K != point.K)
        throw std::invalid_argument("evaluate_point: model K does not match test K");

    MethodEvalResult result;
    result.sample_sums.resize(point.n_samples);
    for (int s = 0; s < point.n_samples; ++s) {
        RandomStream sample_rng = channel_stream.substream("test-sample", std::uint64_t(s));
        const LongTermCsi rho =
            sample_deployment(point.geometry, point.M, point.K, sample_rng);
        const ChannelRealization chan = sample_channel(rho, point.phi, sample_rng);

        PowerAllocation p;
        if (method_key == "equal") {
            p = equal_power(point.M, point.K, point.P);
        } else if (method_key == "csgd") {
            const RandomStream run_rng = method_stream.substream("sample", std::uint64_t(s));
            p = run_csgd(rho, chan, point.P, point.csgd, run_rng).p;
        } else {
            p = forward_pass(*model, rho, chan.h_hat, point.P);
        }
        result.sample_sums[s] = sum_rate(chan, p);
    }

    double mean = 0.0;
    for (double v : result.sample_sums) mean += v;
    mean /= double(point.n_samples);
    result.mean = mean;
    if (point.n_samples > 1) {
        double ss = 0.0;
        for (double v : result.sample_sums) ss += (v - mean) * (v - mean);
        result.std_error =
            std::sqrt(ss / (double(point.n_samples) * double(point.n_samples - 1)));
    }
    return result;
}

PairedStats paired_diff(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("paired_diff: size mismatch or empty");
    const std::size_t n = a.size();
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= double(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i] - mean;
        ss += d * d;
    }
    PairedStats stats;
    stats.mean_diff = mean;
    stats.std_error = n > 1 ? std::sqrt(ss / (double(n) * double(n - 1))) : 0.0;
    return stats;
}

namespace {

ExperimentResult run_sweep_impl(const ExperimentSpec& spec, const std::string& axis) {
    spec.validate();
    if (spec.sweep_axis != axis)
        throw std::invalid_argument("sweep axis mismatch: spec says '" + spec.sweep_axis +
                                    "'");
    const auto models = load_models(spec);
    const auto t0 = std::chrono::steady_clock::now();

    const RandomStream base(spec.seed);
    const RandomStream channel_stream = base.substream("testset");

    ExperimentResult result;
    result.config_hash = spec.config_hash();
    for (double value : spec.sweep_values) {
        const double snr_db = axis == "snr_db" ? value : spec.snr_db;
        const double phi = axis == "phi" ? value : spec.phi;
        EvalPoint point;
        point.M = spec.M;
        point.K = spec.K;
        point.P = snr_db_to_power(snr_db);
        point.phi = phi;
        point.n_samples = spec.n_test_samples;
        point.geometry = spec.geometry;
        point.csgd = spec.csgd;

        for (const auto& method : spec.methods) {
            const ClModel* model = nullptr;
            if (const auto it = models.find(method); it != models.end())
                model = &it->second;
            const RandomStream method_stream = base.substream("method-" + method);
            const MethodEvalResult ev =
                evaluate_point(point, method, model, channel_stream, method_stream);

            ResultRow row;
            row.method = method;
            row.sweep_axis = axis;
            row.sweep_value = value;
            row.m_train = model ? model->config.M_train : -1;
            row.m_test = spec.M;
            row.k = spec.K;
            row.snr_db = snr_db;
            row.phi = phi;
            row.mean_sum_rate = ev.mean;
            row.std_error = ev.std_error;
            row.n_samples = spec.n_test_samples;
            row.seed = spec.seed;
            result.rows.push_back(std::move(row));
        }
    }
    result.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

} // namespace

ExperimentResult run_snr_sweep(const ExperimentSpec& spec) {
    return run_sweep_impl(spec, "snr_db");
}

ExperimentResult run_error_ratio_sweep(const ExperimentSpec& spec) {
    return run_sweep_impl(spec, "phi");
}

ScalabilityResult run_scalability_table(const ExperimentSpec& spec) {
    spec.validate();
    if (spec.sweep_axis != "m_test")
        throw std::invalid_argument("run_scalability_table: sweep_axis must be m_test");
    if (spec.checkpoints.empty())
        throw std::runtime_error("run_scalability_table: no CL checkpoints provided");

    std::map<std::string, ClModel> models;
    for (const auto& [key, path] : spec.checkpoints) models.emplace(key, load_checkpoint(path));

    const auto t0 = std::chrono::steady_clock::now();
    const RandomStream base(spec.seed);
    const RandomStream channel_stream = base.substream("testset");

    ScalabilityResult result;
    result.config_hash = spec.config_hash();
    for (double value : spec.sweep_values) {
        EvalPoint point;
        point.M = int(value);
        point.K = spec.K;
        point.P = snr_db_to_power(spec.snr_db);
        point.phi = spec.phi;
        point.n_samples = spec.n_test_samples;
        point.geometry = spec.geometry;
        point.csgd = spec.csgd;

        const MethodEvalResult csgd_ev = evaluate_point(
            point, "csgd", nullptr, channel_stream, base.substream("method-csgd"));

        for (const auto& [key, model] : models) {
            const MethodEvalResult cl_ev = evaluate_point(
                point, key, &model, channel_stream, base.substream("method-" + key));
            ScalabilityRow row;
            row.cl_key = key;
            row.m_train = model.config.M_train;
            row.m_test = point.M;
            row.k = spec.K;
            row.snr_db = spec.snr_db;
            row.phi = spec.phi;
            row.cl_mean = cl_ev.mean;
            row.csgd_mean = csgd_ev.mean;
            row.relative = csgd_ev.mean != 0.0 ? cl_ev.mean / csgd_ev.mean : 0.0;
            row.n_samples = spec.n_test_samples;
            row.seed = spec.seed;
            result.rows.push_back(std::move(row));
        }
    }
    result.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

std::filesystem::path generate_dataset(const ExperimentSpec& spec) {
    if (spec.M < 1 || spec.K < 1 || spec.n_test_samples < 1)
        throw std::invalid_argument("generate_dataset: invalid dimensions");
    if (spec.phi < 0.0 || spec.phi > 1.0)
        throw std::invalid_argument("generate_dataset: phi must lie in [0, 1]");

    // Same derivation as evaluate_point, so the persisted set is exactly the
    // test set sweeps consume at matching (seed, M, K, phi).
    const RandomStream base(spec.seed);
    const RandomStream channel_stream = base.substream("testset");
    std::vector<ChannelRealization> channels;
    channels.reserve(spec.n_test_samples);
    for (int s = 0; s < spec.n_test_samples; ++s) {
        RandomStream sample_rng = channel_stream.substream("test-sample", std::uint64_t(s));
        const LongTermCsi rho =
            sample_deployment(spec.geometry, spec.M, spec.K, sample_rng);
        channels.push_back(sample_channel(rho, spec.phi, sample_rng));
    }

    std::filesystem::create_directories(spec.out_dir);
    const auto dataset_path = spec.out_dir / "dataset.cfds";
    save_channel_dataset(channels, spec.seed, dataset_path);

    nlohmann::json manifest;
    manifest["kind"] = "dataset";
    manifest["seed"] = spec.seed;
    manifest["M"] = spec.M;
    manifest["K"] = spec.K;
    manifest["phi"] = spec.phi;
    manifest["count"] = spec.n_test_samples;
    manifest["file"] = dataset_path.filename().string();
    manifest["content_hash_fnv1a64"] = file_content_hash(dataset_path);
    write_manifest(spec.out_dir / "dataset.manifest.json", std::move(manifest));
    return dataset_path;
}

std::filesystem::path write_experiment_csv(const ExperimentSpec& spec,
                                           const ExperimentResult& result,
                                           const std::string& name) {
    std::filesystem::create_directories(spec.out_dir);
    const auto csv_path = spec.out_dir / (name + ".csv");
    {
        std::ofstream out(csv_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open for writing: " + csv_path.string());
        out << result.to_csv();
        if (!out) throw std::runtime_error("write failed: " + csv_path.string());
    }
    nlohmann::json manifest;
    manifest["kind"] = "experiment";
    manifest["config_hash"] = result.config_hash;
    manifest["spec"] = spec_to_json(spec);
    manifest["rows"] = result.rows.size();
    manifest["csv"] = csv_path.filename().string();
    manifest["csv_content_hash"] = file_content_hash(csv_path);
    manifest["wall_time_s"] = result.wall_time_s;
    write_manifest(spec.out_dir / (name + ".manifest.json"), std::move(manifest));
    return csv_path;
}

std::filesystem::path write_scalability_csv(const ExperimentSpec& spec,
                                            const ScalabilityResult& result) {
    std::filesystem::create_directories(spec.out_dir);
    const auto csv_path = spec.out_dir / "scalability.csv";
    {
        std::ofstream out(csv_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open for writing: " + csv_path.string());
        out << result.to_csv();
        if (!out) throw std::runtime_error("write failed: " + csv_path.string());
    }
    nlohmann::json manifest;
    manifest["kind"] = "scalability";
    manifest["config_hash"] = result.config_hash;
    manifest["spec"] = spec_to_json(spec);
    manifest["rows"] = result.rows.size();
    manifest["csv"] = csv_path.filename().string();
    manifest["csv_content_hash"] = file_content_hash(csv_path);
    manifest["wall_time_s"] = result.wall_time_s;
    write_manifest(spec.out_dir / "scalability.manifest.json", std::move(manifest));
    return csv_path;
}

std::string file_content_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for hashing: " + path.string());
    std::uint64_t h = 0xCBF29CE484222325ULL;
    char buf[65536];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001B3ULL;
        }
        if (!in) break;
    }
    return hash_hex(h);
}

} // namespace cfpc
