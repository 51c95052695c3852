#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "specroute/presets.hpp"
#include "specroute/theory.hpp"

// Command-line front end: run experiment presets, calibrate the partition
// constant, print the closed-form predictions, and spot-check stored rows.

namespace {

void add_common_flags(CLI::App* cmd, specroute::RunOptions& opts) {
    cmd->add_option("--seeds", opts.seeds, "replicate count (0 = preset default)");
    cmd->add_option("--n", opts.n, "chain length override (0 = preset default)");
    cmd->add_option("--m", opts.m, "ensemble size override (0 = preset default)");
    cmd->add_option("--threads", opts.threads, "worker threads (0 = all cores)");
    cmd->add_option("--out-dir", opts.out_dir, "output directory (default: results)");
    cmd->add_option("--master-seed", opts.master_seed, "top-level seed (default: 1)");
}

int do_calibrate(const specroute::RunOptions& opts, int t_mix, long n, long m, int cal_seeds) {
    using namespace specroute;
    WitnessParams wp = rate_separation_params();
    const auto rep = calibrate_c(wp, t_mix, n, m, cal_seeds, opts.master_seed);

    std::cout << "calibrated c = " << format_double(rep.c) << " from mean lambda2 "
              << format_double(rep.lambda2_mean) << " over " << cal_seeds << " chains\n";
    std::cout << "held-out check: P_hat = " << rep.p_hat_check << " (target " << t_mix << ")\n";
    if (!rep.monotone_ok)
        std::cout << "warning: lambda2 did not shrink when n doubled; the gap estimate is "
                     "drifting the wrong way, treat c as suspect\n";

    std::filesystem::create_directories(opts.out_dir);
    const auto path = std::filesystem::path(opts.out_dir) / "calibration.ini";
    std::ofstream out(path);
    if (!out) {
        std::cerr << "cannot write " << path.string() << "\n";
        return 1;
    }
    out << "route_c=" << format_double(rep.c) << '\n';
    out << "t_mix_known=" << t_mix << '\n';
    out << "lambda2_mean=" << format_double(rep.lambda2_mean) << '\n';
    out << "p_hat_check=" << rep.p_hat_check << '\n';
    out << "monotone_ok=" << (rep.monotone_ok ? 1 : 0) << '\n';
    out << "master_seed=" << opts.master_seed << '\n';
    std::cout << "persisted to " << path.string() << "\n";
    return rep.monotone_ok ? 0 : 3;
}

int do_predict(long n, int t_mix, int d0, double lambda, double delta) {
    using namespace specroute;
    std::cout << "closed-form predictions at n=" << n << ", t_mix=" << t_mix << ", d0=" << d0
              << "\n\n";

    KlSpec spec;
    spec.n = n;
    spec.lambda = lambda >= 0 ? lambda : 1.0 - 1.0 / static_cast<double>(t_mix);
    spec.d0 = d0;
    spec.delta_mu.assign(static_cast<std::size_t>(d0), delta / std::sqrt(static_cast<double>(d0)));
    std::cout << "trajectory KL (mean-shift delta=" << delta
              << "): " << format_double(kl_trajectory_closed(spec)) << "\n";

    const auto lecam = lecam_separation(n, t_mix, 1.0);
    std::cout << "two-point separation: delta=" << format_double(lecam.delta)
              << ", KL=" << format_double(lecam.kl)
              << ", risk floor=" << format_double(lecam.risk_floor) << "\n";

    const auto fano = fano_budget(n, t_mix, d0, lecam.delta);
    std::cout << "multi-hypothesis bound: at delta=" << format_double(lecam.delta) << " -> "
              << format_double(fano.bound) << "; maximized " << format_double(fano.bound_star)
              << " at delta=" << format_double(fano.delta_star) << "\n";

    const double t = static_cast<double>(t_mix);
    std::cout << "pairwise covariance scale t_mix^2/n: " << format_double(t * t / n) << "\n";
    std::cout << "uniform excess-risk scale sqrt(t_mix/n): " << format_double(std::sqrt(t / n))
              << "\n";
    std::cout << "routed excess-risk scale sqrt(1/n) + t_mix/n: "
              << format_double(std::sqrt(1.0 / n) + t / n) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adaptive spectral routing experiment harness"};
    app.require_subcommand(1);

    specroute::RunOptions opts;

    auto* cmd_run = app.add_subcommand("run", "execute a named preset");
    std::string preset;
    cmd_run->add_option("preset", preset, "preset name (see `list`)")->required();
    add_common_flags(cmd_run, opts);
    bool slow = false;
    cmd_run->add_flag("--slow", slow, "enable the long-running presets");

    auto* cmd_list = app.add_subcommand("list", "list available presets");

    auto* cmd_cal = app.add_subcommand("calibrate", "fit the partition constant c on a witness");
    int cal_t_mix = 10;
    long cal_n = 20000, cal_m = 50;
    int cal_seeds = 3;
    cmd_cal->add_option("--t-mix", cal_t_mix, "known mixing time of the calibration chains");
    cmd_cal->add_option("--n", cal_n, "calibration chain length");
    cmd_cal->add_option("--m", cal_m, "ensemble size cap for P_hat");
    cmd_cal->add_option("--cal-seeds", cal_seeds, "number of calibration chains");
    cmd_cal->add_option("--out-dir", opts.out_dir, "where calibration.ini lands");
    cmd_cal->add_option("--master-seed", opts.master_seed, "top-level seed");

    auto* cmd_pred = app.add_subcommand("predict", "print closed-form rate/covariance predictions");
    long pred_n = 20000;
    int pred_t = 10, pred_d0 = 4;
    double pred_lambda = -1.0, pred_delta = 1.0;
    cmd_pred->add_option("--n", pred_n, "chain length");
    cmd_pred->add_option("--t-mix", pred_t, "mixing time");
    cmd_pred->add_option("--d0", pred_d0, "feature dimension");
    cmd_pred->add_option("--lambda", pred_lambda, "AR coefficient (default 1 - 1/t_mix)");
    cmd_pred->add_option("--delta", pred_delta, "mean-shift magnitude for the KL line");

    auto* cmd_ver = app.add_subcommand("verify", "recompute one stored CSV row and diff it");
    std::string ver_preset;
    long ver_row = -1;
    cmd_ver->add_option("preset", ver_preset, "preset whose cells CSV to check")->required();
    cmd_ver->add_option("--row", ver_row, "row index (default: deterministic sample)");
    add_common_flags(cmd_ver, opts);

    CLI11_PARSE(app, argc, argv);

    opts.slow = slow;
    specroute::apply_env_overrides(opts);

    try {
        if (cmd_list->parsed()) {
            specroute::list_presets(std::cout);
            return 0;
        }
        if (cmd_run->parsed()) return specroute::run_preset(preset, opts, std::cout);
        if (cmd_cal->parsed()) return do_calibrate(opts, cal_t_mix, cal_n, cal_m, cal_seeds);
        if (cmd_pred->parsed()) return do_predict(pred_n, pred_t, pred_d0, pred_lambda, pred_delta);
        if (cmd_ver->parsed()) return specroute::verify_preset(ver_preset, opts, ver_row, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
