// tsa: train, verify and inspect transferable semantic augmentation runs.
//
//   tsa train    [flags]   metrics.csv, model.txt, boundary.csv (2-D inputs)
//   tsa verify   [flags]   verify.csv and verify_report.txt
//   tsa bias     [flags]   bias.csv
//   tsa sweep    [flags]   sweep.csv
//   tsa boundary [flags]   boundary.csv (from --model, or a fresh run)
//
// Training flags share names with the config-file keys; a flag given on the
// command line wins over the same key in --config.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tsa/config.hpp"
#include "tsa/errors.hpp"
#include "tsa/oracle.hpp"
#include "tsa/runner.hpp"

namespace fs = std::filesystem;
using namespace tsa;

namespace {

struct CommonOptions {
    std::map<std::string, std::string> flags;  // key -> raw value, only flags given
    std::string config_path;
    std::string data_path;
    std::string out_dir = ".";
};

const char* const kTrainKeys[][2] = {
    {"lambda0", "final augmentation strength"},
    {"beta", "weight of the mutual-information term"},
    {"iters", "total iterations T"},
    {"batch-size", "per-domain batch size B"},
    {"lr", "learning rate"},
    {"momentum", "SGD momentum"},
    {"seed", "random seed"},
    {"estimator", "class statistics estimator: memory|iterative"},
    {"rho", "fraction of target data used for training, in (0, 1]"},
    {"hidden", "extractor widths, comma separated; the last is the feature size"},
    {"stats-refresh", "re-estimate class statistics every k iterations"},
    {"eval-interval", "iterations between metrics rows"},
};

void add_common(CLI::App* cmd, CommonOptions& opts, bool training) {
    if (training) {
        for (const auto& [key, help] : kTrainKeys) {
            auto* o = cmd->add_option_function<std::string>(
                std::string("--") + key, [&opts, k = std::string(key)](const std::string& v) { opts.flags[k] = v; },
                help);
            if (std::string(key) == "estimator") o->check(CLI::IsMember({"memory", "iterative"}));
        }
        cmd->add_option("--config", opts.config_path, "flat key=value config file")->check(CLI::ExistingFile);
        cmd->add_option("--data", opts.data_path,
                        "CSV with source and target rows (default: rotated two-moons from --seed)")
            ->check(CLI::ExistingFile);
    }
    cmd->add_option("--out", opts.out_dir, "output directory");
}

TrainConfig resolve_config(const CommonOptions& opts) {
    TrainConfig c;
    if (!opts.config_path.empty()) apply_key_values(c, load_key_values(opts.config_path));
    apply_key_values(c, opts.flags);
    c.validate();
    return c;
}

DomainPair resolve_data(const CommonOptions& opts, const TrainConfig& c) {
    if (opts.data_path.empty()) return make_two_moons_task(c.seed);
    auto task = load_csv(opts.data_path);
    if (!task.source) throw ConfigError(opts.data_path + ": no source rows");
    if (!task.target) throw ConfigError(opts.data_path + ": no target rows");
    return {std::move(*task.source), std::move(*task.target)};
}

fs::path prepare_out(const CommonOptions& opts) {
    const fs::path out(opts.out_dir);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
    return out;
}

int run_train(const CommonOptions& opts) {
    const auto cfg = resolve_config(opts);
    const auto data = resolve_data(opts, cfg);
    const auto out = prepare_out(opts);
    const auto result = train(data.source, data.target, cfg);
    write_text(out / "metrics.csv", metrics_csv(result.metrics));
    save_model(result.model, out / "model.txt");
    write_text(out / "config.txt", serialize_config(cfg));
    if (result.model.input_dim() == 2) dump_boundary(result.model, Bounds{}, 101, 91, out / "boundary.csv");

    const auto& last = result.metrics.back();
    std::printf("iter %zu  loss %.6g  src_acc %.4f  tgt_acc %.4f\n", last.iter, last.loss_total, last.src_acc,
                last.tgt_acc);
    return 0;
}

struct VerifyOptions {
    std::size_t instances = 100;
    std::size_t draws = 100000;
    std::uint64_t seed = 0;
    std::size_t audit_networks = 20;
};

int run_verify(const CommonOptions& opts, const VerifyOptions& v) {
    const auto out = prepare_out(opts);
    Rng rng(v.seed);
    const double lambdas[] = {0.1, 0.25, 1.0};

    std::string csv = "instance_id,lambda,l_inf,mc_value,mc_stderr,margin,holds\n";
    std::size_t held = 0;
    double worst_equality = 0.0;
    for (std::size_t i = 0; i < v.instances; ++i) {
        auto inst = random_instance(rng, 5, 8, 8, lambdas[i % 3]);
        const auto r = verify_bound(inst, v.draws, rng);
        held += r.holds;
        csv += std::to_string(i) + "," + format_double(inst.lambda) + "," + format_double(r.l_inf) + "," +
               format_double(r.mc.value) + "," + format_double(r.mc.std_error) + "," + format_double(r.margin) +
               "," + (r.holds ? "1" : "0") + "\n";
        inst.lambda = 0.0;
        worst_equality = std::max(worst_equality, std::abs(verify_bound(inst, 1, rng).margin));
    }
    write_text(out / "verify.csv", csv);

    double worst_mgf = 0.0;
    for (double a : {-1.0, -0.5, 0.5, 1.0})
        for (double sigma : {0.5, 1.0, 2.0}) worst_mgf = std::max(worst_mgf, mgf_check(a, 0.3, sigma, 1000000, rng));

    double worst_grad = 0.0;
    for (std::size_t i = 0; i < v.audit_networks; ++i) {
        const auto c = random_audit_case(rng, 32);
        worst_grad = std::max(worst_grad, audit_network_gradients(c, AuditedLoss::surrogate, 1e-5).max_relative_error);
        worst_grad =
            std::max(worst_grad, audit_network_gradients(c, AuditedLoss::mutual_information, 1e-5).max_relative_error);
    }

    const bool ok = held == v.instances && worst_equality <= 1e-12 && worst_mgf <= 0.01 && worst_grad <= 1e-6;
    std::string report;
    report += "bound: " + std::to_string(held) + "/" + std::to_string(v.instances) +
              " instances satisfy mc <= l_inf + 3 se (M = " + std::to_string(v.draws) + ")\n";
    report += "lambda = 0 equality: max |margin| = " + format_double(worst_equality) + "\n";
    report += "mgf identity: max relative error = " + format_double(worst_mgf) + " at M = 1000000\n";
    report += "gradient audit: max relative error = " + format_double(worst_grad) + " over " +
              std::to_string(v.audit_networks) + " networks\n";
    report += std::string("result: ") + (ok ? "ok" : "FAILED") + "\n";
    write_text(out / "verify_report.txt", report);
    std::fputs(report.c_str(), stdout);
    if (!ok) {
        std::fprintf(stderr, "tsa: error: verification failed, see %s\n", (out / "verify_report.txt").c_str());
        return 2;
    }
    return 0;
}

int run_bias(const CommonOptions& opts) {
    const auto cfg = resolve_config(opts);
    const auto data = resolve_data(opts, cfg);
    const auto out = prepare_out(opts);
    const auto rows = bias_experiment(data.source, data.target, cfg);
    write_text(out / "bias.csv", bias_csv(rows));
    std::printf("%zu epochs measured\n", rows.size());
    return 0;
}

int run_sweep(const CommonOptions& opts, const std::vector<double>& rhos) {
    const auto cfg = resolve_config(opts);
    const auto data = resolve_data(opts, cfg);
    const auto out = prepare_out(opts);
    const auto rows = rho_sweep(data.source, data.target, cfg, rhos);
    write_text(out / "sweep.csv", sweep_csv(rows));
    for (const auto& r : rows) std::printf("rho %.3g  target_accuracy %.4f\n", r.rho, r.target_accuracy);
    return 0;
}

struct BoundaryOptions {
    std::string model_path;
    std::vector<double> bounds{-2.0, 3.0, -2.0, 2.5};
    std::vector<std::size_t> resolution{101, 91};
};

int run_boundary(const CommonOptions& opts, const BoundaryOptions& b) {
    ModelParams model;
    if (!b.model_path.empty()) {
        model = load_model(b.model_path);
    } else {
        const auto cfg = resolve_config(opts);
        const auto data = resolve_data(opts, cfg);
        model = train(data.source, data.target, cfg).model;
    }
    const auto out = prepare_out(opts);
    const Bounds bounds{b.bounds[0], b.bounds[1], b.bounds[2], b.bounds[3]};
    dump_boundary(model, bounds, b.resolution[0], b.resolution[1], out / "boundary.csv");
    std::printf("%zu grid points\n", b.resolution[0] * b.resolution[1]);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"transferable semantic augmentation"};
    app.require_subcommand(1);

    CommonOptions train_opts;
    auto* train_cmd = app.add_subcommand("train", "train a model, write metrics.csv and a checkpoint");
    add_common(train_cmd, train_opts, true);

    CommonOptions verify_opts;
    VerifyOptions verify;
    auto* verify_cmd = app.add_subcommand("verify", "run the oracle suite, write verify.csv");
    add_common(verify_cmd, verify_opts, false);
    verify_cmd->add_option("--instances", verify.instances, "random bound instances")->check(CLI::PositiveNumber);
    verify_cmd->add_option("--draws", verify.draws, "Monte-Carlo draws per instance")->check(CLI::PositiveNumber);
    verify_cmd->add_option("--seed", verify.seed, "random seed");
    verify_cmd->add_option("--networks", verify.audit_networks, "networks in the gradient audit");

    CommonOptions bias_opts;
    auto* bias_cmd = app.add_subcommand("bias", "compare estimators against the ideal, write bias.csv");
    add_common(bias_cmd, bias_opts, true);

    CommonOptions sweep_opts;
    std::vector<double> rhos{0.2, 0.4, 0.6, 0.8, 1.0};
    auto* sweep_cmd = app.add_subcommand("sweep", "train once per target fraction, write sweep.csv");
    add_common(sweep_cmd, sweep_opts, true);
    sweep_cmd->add_option("--rhos", rhos, "target fractions")->delimiter(',')->check(CLI::Range(1e-12, 1.0));

    CommonOptions boundary_opts;
    BoundaryOptions boundary;
    auto* boundary_cmd = app.add_subcommand("boundary", "write the decision boundary grid, boundary.csv");
    add_common(boundary_cmd, boundary_opts, true);
    boundary_cmd->add_option("--model", boundary.model_path, "checkpoint to plot instead of training")
        ->check(CLI::ExistingFile);
    boundary_cmd->add_option("--bounds", boundary.bounds, "xmin,xmax,ymin,ymax")->delimiter(',')->expected(4);
    boundary_cmd->add_option("--resolution", boundary.resolution, "nx,ny")->delimiter(',')->expected(2);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "tsa: error: %s\n", e.what());
        return 1;
    }

    try {
        if (*train_cmd) return run_train(train_opts);
        if (*verify_cmd) return run_verify(verify_opts, verify);
        if (*bias_cmd) return run_bias(bias_opts);
        if (*sweep_cmd) return run_sweep(sweep_opts, rhos);
        if (*boundary_cmd) return run_boundary(boundary_opts, boundary);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "tsa: error: %s\n", e.what());
        return 1;
    }
    return 1;
}
