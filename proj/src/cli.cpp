// Command-line front end. Configuration can come from a key=value file
// (--config) with command-line overrides; every run stamps its outputs with
// the config hash and seed.
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cfpc/coplearn.hpp"
#include "cfpc/csgd.hpp"
#include "cfpc/format.hpp"
#include "cfpc/harness.hpp"

namespace cfpc {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitRuntimeError = 3;

struct CommonOpts {
    std::uint64_t seed = 1;
    std::string out;
};

struct SweepOpts {
    std::vector<std::string> methods{"equal"};
    std::vector<std::string> checkpoint_args; // name=path
    std::vector<double> values;
    int m = 4;
    int k = 4;
    double snr_db = 20.0;
    double phi = 0.1;
    int samples = 5000;
    CsgdConfig csgd;
};

void add_csgd_options(CLI::App* cmd, CsgdConfig& cfg) {
    cmd->add_option("--csgd-alpha", cfg.alpha, "CSGD step size (<=0 selects 0.01*P/K)");
    cmd->add_option("--csgd-iters", cfg.max_iterations, "CSGD max iterations");
    cmd->add_option("--csgd-batch", cfg.batch_size, "CSGD mini-batch size");
    cmd->add_option("--csgd-tol", cfg.tol, "CSGD relative stopping tolerance");
}

std::map<std::string, std::filesystem::path>
parse_checkpoint_args(const std::vector<std::string>& args) {
    std::map<std::string, std::filesystem::path> out;
    for (const auto& arg : args) {
        const auto eq = arg.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == arg.size())
            throw std::invalid_argument("--ckpt expects name=path, got '" + arg + "'");
        out[arg.substr(0, eq)] = arg.substr(eq + 1);
    }
    return out;
}

ExperimentSpec build_spec(const SweepOpts& opts, const CommonOpts& common,
                          const std::string& axis) {
    ExperimentSpec spec;
    spec.methods = opts.methods;
    spec.sweep_axis = axis;
    spec.sweep_values = opts.values;
    spec.M = opts.m;
    spec.K = opts.k;
    spec.snr_db = opts.snr_db;
    spec.phi = opts.phi;
    spec.n_test_samples = opts.samples;
    spec.seed = common.seed;
    spec.out_dir = common.out;
    spec.checkpoints = parse_checkpoint_args(opts.checkpoint_args);
    spec.csgd = opts.csgd;
    return spec;
}

int run_train(const CommonOpts& common, ClConfig& config, const std::string& method,
              double snr_db, const std::string& phi_policy, const std::string& trace_path) {
    config.method = parse_method(method);
    config.P_train = std::pow(10.0, snr_db / 10.0);
    config.phi_policy = PhiPolicy::parse(phi_policy);
    config.validate();
    if (common.out.empty())
        throw std::invalid_argument("train: --out <checkpoint path> is required");

    const RandomStream rng(common.seed);
    const auto sampler = make_disk_sampler(config.geometry, config.M_train, config.K);
    TrainResult result = train_cl(config, sampler, rng);
    save_checkpoint(result.model, common.seed, common.out);
    std::cout << "saved checkpoint: " << common.out << " ("
              << result.model.param_count() << " parameters)\n";

    if (!trace_path.empty()) {
        std::ofstream out(trace_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open for writing: " + trace_path);
        out << "epoch,batch_sum_rate,smoothed,grad_norm,validation_sum_rate\n";
        for (const auto& e : result.trace.epochs) {
            out << e.epoch << ',' << fmt_g17(e.batch_sum_rate) << ',' << fmt_g17(e.smoothed)
                << ',' << fmt_g17(e.grad_norm) << ','
                << (e.validation_sum_rate ? fmt_g17(*e.validation_sum_rate) : "") << '\n';
        }
    }
    if (!result.trace.epochs.empty()) {
        const auto& last = result.trace.epochs.back();
        std::cout << "final smoothed objective: " << last.smoothed;
        if (last.validation_sum_rate)
            std::cout << "  validation: " << *last.validation_sum_rate;
        std::cout << '\n';
    }
    return kExitOk;
}

int run_eval(const CommonOpts& common, const std::string& ckpt, std::string method, int m,
             int k, double snr_db, double phi, int samples, const CsgdConfig& csgd) {
    const double P = std::pow(10.0, snr_db / 10.0);
    ClModel model;
    const ClModel* model_ptr = nullptr;
    if (!ckpt.empty()) {
        model = load_checkpoint(ckpt);
        model_ptr = &model;
        if (method.empty()) method = method_name(model.config.method);
        k = model.config.K;
    } else if (method.empty()) {
        throw std::invalid_argument("eval: need --ckpt or --method equal|csgd");
    } else if (method != "equal" && method != "csgd") {
        throw std::runtime_error("eval: method '" + method +
                                 "' needs a checkpoint (--ckpt)");
    }

    ExperimentSpec hash_spec;
    hash_spec.methods = {method};
    hash_spec.sweep_axis = "snr_db";
    hash_spec.sweep_values = {snr_db};
    hash_spec.M = m;
    hash_spec.K = k;
    hash_spec.snr_db = snr_db;
    hash_spec.phi = phi;
    hash_spec.n_test_samples = samples;
    hash_spec.seed = common.seed;
    hash_spec.csgd = csgd;

    EvalPoint point;
    point.M = m;
    point.K = k;
    point.P = P;
    point.phi = phi;
    point.n_samples = samples;
    point.csgd = csgd;

    const RandomStream base(common.seed);
    const MethodEvalResult ev = evaluate_point(point, method, model_ptr,
                                               base.substream("testset"),
                                               base.substream("method-" + method));

    RateReport report;
    report.sum_rate = ev.mean;
    report.sample_count = samples;
    report.sample_sums = ev.sample_sums;
    const std::string row = rate_report_csv_row(report, hash_spec.config_hash(), m, k,
                                                snr_db, phi, method, common.seed);
    if (!common.out.empty()) {
        std::ofstream out(common.out, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open for writing: " + common.out);
        out << rate_report_csv_header() << '\n' << row << '\n';
    }
    std::cout << rate_report_csv_header() << '\n' << row << '\n';
    return kExitOk;
}

int run_csgd_trace(const CommonOpts& common, int m, int k, double snr_db, double phi,
                   const CsgdConfig& csgd) {
    const double P = std::pow(10.0, snr_db / 10.0);
    RandomStream base(common.seed);
    RandomStream deploy_rng = base.substream("deployment");
    RandomStream channel_rng = base.substream("channel");
    const GeometryConfig geometry;
    const LongTermCsi rho = sample_deployment(geometry, m, k, deploy_rng);
    const ChannelRealization chan = sample_channel(rho, phi, channel_rng);
    const CsgdResult result = run_csgd(rho, chan, P, csgd, base.substream("csgd"));

    const std::string csv = csgd_trace_csv(result);
    if (!common.out.empty()) {
        std::ofstream out(common.out, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open for writing: " + common.out);
        out << csv;
        std::cout << "wrote " << result.trace.size() << " iterations to " << common.out
                  << '\n';
    } else {
        std::cout << csv;
    }
    std::cout << "best exact sum-rate: " << fmt_g17(result.best_sum_rate) << " after "
              << result.iterations << " iterations\n";
    return kExitOk;
}

} // namespace

int cli_entry(int argc, const char* const* argv) {
    CLI::App app{"cell-free massive MIMO decentralized power control lab"};
    app.require_subcommand(1);
    app.fallthrough(); // --seed/--out may follow the subcommand name
    app.set_config("--config", "", "key=value configuration file; flags override it");

    CommonOpts common;
    app.add_option("--seed", common.seed, "master seed for all random streams");
    app.add_option("--out", common.out, "output path (file or directory per subcommand)");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a channel test set + manifest");
    int gen_m = 4, gen_k = 4, gen_samples = 1000;
    double gen_phi = 0.1;
    gen->add_option("--m", gen_m, "AP count");
    gen->add_option("--k", gen_k, "UE count");
    gen->add_option("--phi", gen_phi, "error ratio");
    gen->add_option("--samples", gen_samples, "number of records");

    // train
    auto* train = app.add_subcommand("train", "train a power-control model");
    ClConfig train_cfg;
    train_cfg.eval_every = 0;
    std::string train_method = "cl", train_phi_policy = "uniform", train_trace;
    double train_snr_db = 20.0;
    train->add_option("--method", train_method, "cl | ncl | scl");
    train->add_option("--k", train_cfg.K, "UE count");
    train->add_option("--m-train", train_cfg.M_train, "AP count during training");
    train->add_option("--snr-db", train_snr_db, "training SNR in dB (P = 10^(dB/10))");
    train->add_option("--phi-policy", train_phi_policy, "uniform | fixed:<value>");
    train->add_option("--epochs", train_cfg.epochs, "mini-batch updates");
    train->add_option("--batch", train_cfg.batch_size, "mini-batch size");
    train->add_option("--lr", train_cfg.learning_rate, "Adam learning rate");
    train->add_option("--width", train_cfg.hidden_width, "hidden width (0 selects 32K)");
    train->add_option("--depth", train_cfg.hidden_depth, "hidden layers per net");
    train->add_option("--d-u", train_cfg.d_U, "uplink message length (-1 selects K)");
    train->add_option("--d-d", train_cfg.d_D, "downlink message length (-1 selects K)");
    train->add_option("--eval-every", train_cfg.eval_every,
                      "validation cadence in epochs (0 disables)");
    train->add_option("--eval-samples", train_cfg.eval_samples, "validation set size");
    train->add_option("--trace", train_trace, "write per-epoch training trace CSV here");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate one method at one point");
    std::string eval_ckpt, eval_method;
    int eval_m = 4, eval_k = 4, eval_samples = 1000;
    double eval_snr = 20.0, eval_phi = 0.1;
    CsgdConfig eval_csgd;
    eval->add_option("--ckpt", eval_ckpt, "checkpoint path for learned methods");
    eval->add_option("--method", eval_method, "equal | csgd (or inferred from --ckpt)");
    eval->add_option("--m,--m-test", eval_m, "test AP count");
    eval->add_option("--k", eval_k, "UE count (learned methods use the checkpoint's K)");
    eval->add_option("--snr-db", eval_snr, "SNR in dB");
    eval->add_option("--phi", eval_phi, "error ratio");
    eval->add_option("--samples", eval_samples, "test samples");
    add_csgd_options(eval, eval_csgd);

    // sweep-snr / sweep-phi / scalability
    SweepOpts snr_opts, phi_opts, scal_opts;
    auto* sweep_snr = app.add_subcommand("sweep-snr", "average sum-rate versus SNR");
    sweep_snr->add_option("--method,--methods", snr_opts.methods, "method keys")->delimiter(',');
    sweep_snr->add_option("--ckpt", snr_opts.checkpoint_args, "name=path (repeatable)");
    sweep_snr->add_option("--values", snr_opts.values, "SNR points in dB")->delimiter(',');
    sweep_snr->add_option("--m,--m-test", snr_opts.m, "test AP count");
    sweep_snr->add_option("--k", snr_opts.k, "UE count");
    sweep_snr->add_option("--phi", snr_opts.phi, "error ratio");
    sweep_snr->add_option("--samples", snr_opts.samples, "test samples per point");
    add_csgd_options(sweep_snr, snr_opts.csgd);

    auto* sweep_phi = app.add_subcommand("sweep-phi", "average sum-rate versus error ratio");
    sweep_phi->add_option("--method,--methods", phi_opts.methods, "method keys")->delimiter(',');
    sweep_phi->add_option("--ckpt", phi_opts.checkpoint_args, "name=path (repeatable)");
    sweep_phi->add_option("--values", phi_opts.values, "error-ratio points")->delimiter(',');
    sweep_phi->add_option("--m,--m-test", phi_opts.m, "test AP count");
    sweep_phi->add_option("--k", phi_opts.k, "UE count");
    sweep_phi->add_option("--snr-db", phi_opts.snr_db, "SNR in dB");
    sweep_phi->add_option("--samples", phi_opts.samples, "test samples per point");
    add_csgd_options(sweep_phi, phi_opts.csgd);

    auto* scal = app.add_subcommand("scalability", "relative sum-rate vs CSGD across m_test");
    scal->add_option("--ckpt", scal_opts.checkpoint_args, "name=path (repeatable)");
    scal->add_option("--values,--m-test", scal_opts.values, "m_test values")->delimiter(',');
    scal->add_option("--k", scal_opts.k, "UE count");
    scal->add_option("--snr-db", scal_opts.snr_db, "SNR in dB");
    scal->add_option("--phi", scal_opts.phi, "error ratio");
    scal->add_option("--samples", scal_opts.samples, "test samples per cell");
    add_csgd_options(scal, scal_opts.csgd);

    // csgd-trace
    auto* trace = app.add_subcommand("csgd-trace", "run CSGD once and dump its trace");
    int trace_m = 4, trace_k = 4;
    double trace_snr = 20.0, trace_phi = 0.1;
    CsgdConfig trace_csgd;
    trace->add_option("--m", trace_m, "AP count");
    trace->add_option("--k", trace_k, "UE count");
    trace->add_option("--snr-db", trace_snr, "SNR in dB");
    trace->add_option("--phi", trace_phi, "error ratio");
    add_csgd_options(trace, trace_csgd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    try {
        if (gen->parsed()) {
            ExperimentSpec spec;
            spec.M = gen_m;
            spec.K = gen_k;
            spec.phi = gen_phi;
            spec.n_test_samples = gen_samples;
            spec.seed = common.seed;
            if (common.out.empty())
                throw std::invalid_argument("gen-data: --out <directory> is required");
            spec.out_dir = common.out;
            const auto path = generate_dataset(spec);
            std::cout << "wrote " << gen_samples << " records to " << path << '\n';
            return kExitOk;
        }
        if (train->parsed())
            return run_train(common, train_cfg, train_method, train_snr_db,
                             train_phi_policy, train_trace);
        if (eval->parsed())
            return run_eval(common, eval_ckpt, eval_method, eval_m, eval_k, eval_snr,
                            eval_phi, eval_samples, eval_csgd);
        if (sweep_snr->parsed()) {
            auto spec = build_spec(snr_opts, common, "snr_db");
            const auto result = run_snr_sweep(spec);
            const auto path = write_experiment_csv(spec, result, "sweep_snr");
            std::cout << "wrote " << result.rows.size() << " rows to " << path << '\n';
            return kExitOk;
        }
        if (sweep_phi->parsed()) {
            auto spec = build_spec(phi_opts, common, "phi");
            const auto result = run_error_ratio_sweep(spec);
            const auto path = write_experiment_csv(spec, result, "sweep_phi");
            std::cout << "wrote " << result.rows.size() << " rows to " << path << '\n';
            return kExitOk;
        }
        if (scal->parsed()) {
            scal_opts.methods = {"csgd"}; // denominator; CL keys come from --ckpt
            auto spec = build_spec(scal_opts, common, "m_test");
            const auto result = run_scalability_table(spec);
            const auto path = write_scalability_csv(spec, result);
            std::cout << "wrote " << result.rows.size() << " rows to " << path << '\n';
            return kExitOk;
        }
        if (trace->parsed())
            return run_csgd_trace(common, trace_m, trace_k, trace_snr, trace_phi,
                                  trace_csgd);
        throw std::invalid_argument("no subcommand given");
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntimeError;
    }
}

} // namespace cfpc
