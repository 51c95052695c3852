#pragma once

#include <cstdlib>
#include <fstream>
#include <filesystem>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "specroute/csvio.hpp"
#include "specroute/harness.hpp"

namespace specroute {

// Preset plumbing: each preset resolves a parameter bundle from defaults plus
// CLI/env overrides, runs the matching harness driver, and writes two CSVs
// (per-cell and summary). The resolved bundle is hashed into every row so a
// later `verify` can prove it is recomputing under the same configuration.

struct RunOptions {
    int seeds = 0;       // 0 keeps the preset default
    long n = 0;
    long m = 0;
    int threads = 0;     // 0 means one worker per hardware thread
    std::string out_dir = "results";
    std::uint64_t master_seed = 1;
    bool slow = false;   // opt-in for the long-running presets
};

namespace detail {

inline bool env_flag_set(const char* key) {
    const char* v = std::getenv(key);
    return v && *v && std::string(v) != "0";
}

inline void env_int(const char* key, long& slot) {
    if (const char* v = std::getenv(key)) {
        char* end = nullptr;
        const long parsed = std::strtol(v, &end, 10);
        if (end && *end == '\0') slot = parsed;
    }
}

}  // namespace detail

// Environment overrides sit between compiled defaults and explicit CLI flags:
// flags the user typed win, untouched fields fall back to SPECROUTE_* if set.
inline void apply_env_overrides(RunOptions& opts) {
    long v;
    if (opts.seeds == 0) { v = 0; detail::env_int("SPECROUTE_SEEDS", v); opts.seeds = static_cast<int>(v); }
    if (opts.n == 0) detail::env_int("SPECROUTE_N", opts.n);
    if (opts.m == 0) detail::env_int("SPECROUTE_M", opts.m);
    if (opts.threads == 0) { v = 0; detail::env_int("SPECROUTE_THREADS", v); opts.threads = static_cast<int>(v); }
    if (opts.out_dir == "results") {
        if (const char* d = std::getenv("SPECROUTE_OUT_DIR"); d && *d) opts.out_dir = d;
    }
    if (opts.master_seed == 1) {
        if (const char* s = std::getenv("SPECROUTE_MASTER_SEED")) {
            char* end = nullptr;
            const unsigned long long parsed = std::strtoull(s, &end, 10);
            if (end && *end == '\0') opts.master_seed = parsed;
        }
    }
    if (!opts.slow) opts.slow = detail::env_flag_set("SPECROUTE_RUN_SLOW");
}

namespace detail {

using ConfigMap = std::map<std::string, std::string>;

inline std::string canonical_config(const ConfigMap& config) {
    std::string out;
    for (const auto& [k, vv] : config) {
        out += k;
        out += '=';
        out += vv;
        out += '\n';
    }
    return out;
}

inline std::string config_digest(const ConfigMap& config) {
    return content_hash(canonical_config(config));
}

inline void write_config_ini(const std::filesystem::path& path, const ConfigMap& config) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write config to " + path.string());
    out << canonical_config(config);
    out << "hash=" << config_digest(config) << '\n';
}

inline std::string fmt(double x) { return format_double(x); }
inline std::string fmt(long x) { return std::to_string(x); }
inline std::string fmt(int x) { return std::to_string(x); }
inline std::string fmt(std::uint64_t x) { return std::to_string(x); }

inline void print_table(std::ostream& out, const std::vector<std::string>& headers,
                        const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width(headers.size());
    for (std::size_t j = 0; j < headers.size(); ++j) width[j] = headers[j].size();
    for (const auto& r : rows)
        for (std::size_t j = 0; j < r.size(); ++j) width[j] = std::max(width[j], r[j].size());
    auto line = [&](const std::vector<std::string>& r) {
        out << "  ";
        for (std::size_t j = 0; j < r.size(); ++j)
            out << std::left << std::setw(static_cast<int>(width[j]) + 2) << r[j];
        out << '\n';
    };
    line(headers);
    std::vector<std::string> rule;
    for (std::size_t j = 0; j < headers.size(); ++j) rule.push_back(std::string(width[j], '-'));
    line(rule);
    for (const auto& r : rows) line(r);
}

inline std::string learner_tag(const BaseLearnerSpec& spec) {
    if (spec.kind == LearnerKind::LinearRidge) return "ridge reg=" + fmt(spec.reg);
    return "tree depth=" + fmt(spec.max_depth) + " min_leaf=" + fmt(spec.min_leaf);
}

inline void describe_witness(ConfigMap& config, const WitnessParams& wp) {
    config["d0"] = fmt(wp.d0);
    config["delta"] = fmt(wp.delta);
    config["eta_std"] = fmt(wp.eta_std);
    config["learner"] = learner_tag(wp.learner);
    config["knn_k"] = fmt(wp.knn_k);
    config["route_c"] = fmt(wp.route_c);
    config["topology"] = wp.topology == Topology::Lattice2D ? "lattice2d" : "path1d";
    config["graph"] = wp.topology == Topology::Lattice2D ? "grid"
                      : wp.graph_union                   ? "time+knn"
                                                         : "knn";
    config["draw_size"] = wp.subsample_size > 0   ? fmt(wp.subsample_size)
                          : wp.subsample_size < 0 ? std::string("n")
                                                  : std::string("n/m");
}

}  // namespace detail

// ------------------------------------------------- resolved preset setups ----

// Run and verify both go through these resolvers, so a verified row is
// recomputed under exactly the bundle that produced it (hash-checked).

struct RatesSetup {
    WitnessParams wp;
    std::vector<int> t_grid;
    long n = 0, m = 0, n_eval = 0;
    int seeds = 0;
    std::uint64_t tag = 0;
    detail::ConfigMap config;
    std::string digest;
};

inline RatesSetup resolve_rates_ar1(const RunOptions& opts) {
    RatesSetup s;
    s.wp = rate_separation_params();
    s.t_grid = {1, 10, 50};
    s.n = opts.n > 0 ? opts.n : 20000;
    s.m = opts.m > 0 ? opts.m : 50;
    s.seeds = opts.seeds > 0 ? opts.seeds : 10;
    s.n_eval = 200000;
    s.tag = 0x52415445;
    detail::describe_witness(s.config, s.wp);
    s.config["preset"] = "rates-ar1";
    s.config["n"] = detail::fmt(s.n);
    s.config["m"] = detail::fmt(s.m);
    s.config["seeds"] = detail::fmt(s.seeds);
    s.config["n_eval"] = detail::fmt(s.n_eval);
    s.config["t_grid"] = "1,10,50";
    s.config["master_seed"] = detail::fmt(opts.master_seed);
    s.digest = detail::config_digest(s.config);
    return s;
}

inline RatesSetup resolve_lattice_2d(const RunOptions& opts) {
    RatesSetup s;
    s.wp = rate_separation_params();
    s.wp.topology = Topology::Lattice2D;
    s.t_grid = {8};
    long side = 64;
    if (opts.n > 0) side = static_cast<long>(std::llround(std::sqrt(static_cast<double>(opts.n))));
    s.n = side * side;
    s.m = opts.m > 0 ? opts.m : 50;
    s.seeds = opts.seeds > 0 ? opts.seeds : 10;
    s.n_eval = (2 * side) * (2 * side);
    s.tag = 0x4c415432;
    detail::describe_witness(s.config, s.wp);
    s.config["preset"] = "lattice-2d";
    s.config["side"] = detail::fmt(side);
    s.config["n"] = detail::fmt(s.n);
    s.config["m"] = detail::fmt(s.m);
    s.config["seeds"] = detail::fmt(s.seeds);
    s.config["n_eval"] = detail::fmt(s.n_eval);
    s.config["t_grid"] = "8";
    s.config["master_seed"] = detail::fmt(opts.master_seed);
    s.digest = detail::config_digest(s.config);
    return s;
}

struct AblateSetup {
    WitnessParams wp;
    int t_mix = 50;
    std::vector<int> p_grid;
    long n = 0, m = 0, n_eval = 0;
    int seeds = 0;
    detail::ConfigMap config;
    std::string digest;
};

inline AblateSetup resolve_ablate_p(const RunOptions& opts) {
    AblateSetup s;
    s.wp = rate_separation_params();
    s.p_grid = {1, 5, 10, 50, 100};
    s.n = opts.n > 0 ? opts.n : 20000;
    s.m = opts.m > 0 ? opts.m : 100;
    s.seeds = opts.seeds > 0 ? opts.seeds : 10;
    s.n_eval = 200000;
    detail::describe_witness(s.config, s.wp);
    s.config["preset"] = "ablate-p";
    s.config["t_mix"] = detail::fmt(s.t_mix);
    s.config["p_grid"] = "1,5,10,50,100";
    s.config["n"] = detail::fmt(s.n);
    s.config["m"] = detail::fmt(s.m);
    s.config["seeds"] = detail::fmt(s.seeds);
    s.config["n_eval"] = detail::fmt(s.n_eval);
    s.config["master_seed"] = detail::fmt(opts.master_seed);
    s.digest = detail::config_digest(s.config);
    return s;
}

struct ConcSetup {
    WitnessParams wp;
    int t_mix = 10;
    std::vector<long> n_grid;
    long n_ref = 0;
    int seeds = 0;
    detail::ConfigMap config;
    std::string digest;
};

inline ConcSetup resolve_spectral_conc(const RunOptions& opts) {
    ConcSetup s;
    s.wp = rate_separation_params();
    const long n_max = opts.n > 0 ? opts.n : 32768;
    for (long nn = 1024; nn <= n_max; nn *= 2) s.n_grid.push_back(nn);
    if (s.n_grid.empty()) s.n_grid.push_back(n_max);
    s.n_ref = 4 * s.n_grid.back();
    s.seeds = opts.seeds > 0 ? opts.seeds : 20;
    detail::describe_witness(s.config, s.wp);
    s.config["preset"] = "spectral-conc";
    s.config["t_mix"] = detail::fmt(s.t_mix);
    s.config["n_max"] = detail::fmt(s.n_grid.back());
    s.config["n_ref"] = detail::fmt(s.n_ref);
    s.config["seeds"] = detail::fmt(s.seeds);
    s.config["master_seed"] = detail::fmt(opts.master_seed);
    s.digest = detail::config_digest(s.config);
    return s;
}

// baseline suite plus the adaptive routed scheme, for the given mixing time
inline std::vector<SchemeSpec> full_suite(int t_mix) {
    auto schemes = baseline_suite(t_mix);
    SchemeSpec spec;
    spec.kind = SchemeKind::SpectralRoute;
    schemes.push_back(spec);
    return schemes;
}

// verify needs to rebuild a SchemeSpec from the name column of a CSV row
inline SchemeSpec scheme_from_name(const std::string& name, int t_mix) {
    for (const auto& ss : full_suite(t_mix))
        if (scheme_name(ss) == name) return ss;
    if (name.rfind("spectral-p", 0) == 0) {
        SchemeSpec ss;
        ss.kind = SchemeKind::SpectralRoute;
        ss.forced_p = std::stoi(name.substr(10));
        return ss;
    }
    throw ArgumentError("unknown scheme name: " + name);
}

// --------------------------------------------------------- preset runners ----

struct PresetContext {
    RunOptions opts;
    std::string name;
    std::filesystem::path dir;
    std::ostream* out = nullptr;
    ThreadPool* pool = nullptr;

    std::string cells_path() const { return (dir / (name + "_cells.csv")).string(); }
    std::string summary_path() const { return (dir / (name + "_summary.csv")).string(); }
    std::string config_path() const { return (dir / (name + "_config.ini")).string(); }
};

namespace detail {

inline void emit_rates_outputs(PresetContext& ctx, const RatesSetup& setup,
                               const std::vector<RatesReport>& reports) {
    write_config_ini(ctx.config_path(), setup.config);
    CsvWriter cells(ctx.cells_path(),
                    {"preset", "config", "scheme", "t_mix", "seed", "excess", "se", "p_hat",
                     "lambda2_hat"});
    for (const auto& rep : reports)
        for (const auto& c : rep.cells)
            cells.row({ctx.name, setup.digest, rep.scheme_names[static_cast<std::size_t>(c.scheme_idx)],
                       fmt(c.t_mix), fmt(c.seed), fmt(c.excess), fmt(c.se), fmt(c.p_hat),
                       fmt(c.lambda2_hat)});
    cells.close();

    // one series per scheme name across the merged t grid
    std::vector<std::string> names;
    for (const auto& ss : full_suite(setup.t_grid.front())) names.push_back(scheme_name(ss));
    std::map<std::string, std::vector<std::pair<double, double>>> series;  // name -> (t, mean)
    CsvWriter summary(ctx.summary_path(),
                      {"preset", "config", "scheme", "t_mix", "mean_excess", "se", "slope"});
    std::vector<std::vector<std::string>> table;
    for (const auto& name : names) {
        for (std::size_t ri = 0; ri < reports.size(); ++ri) {
            const auto& rep = reports[ri];
            for (std::size_t si = 0; si < rep.series.size(); ++si) {
                if (rep.scheme_names[si] != name) continue;
                series[name].emplace_back(static_cast<double>(rep.t_grid.front()),
                                          std::max(rep.series[si].mean_excess.front(), 1e-7));
                summary.row({ctx.name, setup.digest, name, fmt(rep.t_grid.front()),
                             fmt(rep.series[si].mean_excess.front()), fmt(rep.series[si].se.front()),
                             ""});
                table.push_back({name, fmt(rep.t_grid.front()),
                                 fmt(rep.series[si].mean_excess.front()),
                                 fmt(rep.series[si].se.front())});
            }
        }
        const auto& pts = series[name];
        double slope = 0.0;
        if (pts.size() >= 3) slope = rate_slope(pts);
        else if (pts.size() == 2)
            slope = detail::two_point_slope(pts[0].first, pts[0].second, pts[1].first, pts[1].second);
        if (pts.size() >= 2) {
            summary.row({ctx.name, setup.digest, name, "slope", "", "", fmt(slope)});
            table.push_back({name, "slope", fmt(slope), ""});
        }
    }
    summary.close();
    print_table(*ctx.out, {"scheme", "t_mix", "mean_excess", "se"}, table);
}

}  // namespace detail

inline int run_rates_ar1(PresetContext& ctx) {
    const auto setup = resolve_rates_ar1(ctx.opts);
    std::vector<RatesReport> reports;
    for (int t : setup.t_grid)
        reports.push_back(run_rate_separation(setup.wp, full_suite(t), {t}, setup.n, setup.m,
                                              setup.seeds, setup.n_eval, ctx.opts.master_seed,
                                              *ctx.pool, setup.tag));
    detail::emit_rates_outputs(ctx, setup, reports);

    // headline comparison at the largest mixing time
    const auto& last = reports.back();
    double uni = 0.0, spec = 0.0;
    for (std::size_t si = 0; si < last.series.size(); ++si) {
        if (last.scheme_names[si] == "uniform") uni = last.series[si].mean_excess.front();
        if (last.scheme_names[si] == "spectral-adaptive") spec = last.series[si].mean_excess.front();
    }
    *ctx.out << "\n  uniform / spectral excess at t_mix=" << setup.t_grid.back() << ": "
             << format_double(uni / std::max(spec, 1e-12)) << "x\n";
    return 0;
}

inline int run_lattice_2d(PresetContext& ctx) {
    const auto setup = resolve_lattice_2d(ctx.opts);
    std::vector<RatesReport> reports;
    reports.push_back(run_rate_separation(setup.wp, full_suite(setup.t_grid.front()),
                                          setup.t_grid, setup.n, setup.m, setup.seeds,
                                          setup.n_eval, ctx.opts.master_seed, *ctx.pool,
                                          setup.tag));
    detail::emit_rates_outputs(ctx, setup, reports);

    const auto& rep = reports.front();
    double best_base = 1e300;
    std::string best_name;
    double spec = 0.0;
    for (std::size_t si = 0; si < rep.series.size(); ++si) {
        const double v = rep.series[si].mean_excess.front();
        if (rep.scheme_names[si] == "spectral-adaptive") spec = v;
        else if (v < best_base) { best_base = v; best_name = rep.scheme_names[si]; }
    }
    *ctx.out << "\n  best 1D baseline: " << best_name << " at " << format_double(best_base)
             << "; routed: " << format_double(spec) << "; relative win "
             << format_double((best_base - spec) / best_base) << "\n";
    return 0;
}

inline int run_cov_mechanism(PresetContext& ctx) {
    WitnessParams wp = covariance_params();
    const long n = ctx.opts.n > 0 ? ctx.opts.n : 20000;
    const long m = ctx.opts.m > 0 ? ctx.opts.m : 50;
    const int seeds = ctx.opts.seeds > 0 ? ctx.opts.seeds : 30;
    const std::vector<int> t_grid{10, 50};

    detail::ConfigMap config;
    detail::describe_witness(config, wp);
    config["preset"] = "cov-mechanism";
    config["n"] = detail::fmt(n);
    config["m"] = detail::fmt(m);
    config["seeds"] = detail::fmt(seeds);
    config["t_grid"] = "10,50";
    config["master_seed"] = detail::fmt(ctx.opts.master_seed);
    const std::string digest = detail::config_digest(config);
    detail::write_config_ini(ctx.config_path(), config);

    const auto rep = run_cov_mechanism(wp, t_grid, n, m, seeds, ctx.opts.master_seed, *ctx.pool);

    CsvWriter cells(ctx.cells_path(),
                    {"preset", "config", "scheme", "t_mix", "cov_joint", "cov_joint_se",
                     "cov_conditional", "theory_t2_over_n", "ratio", "n_eval", "seeds"});
    std::vector<std::vector<std::string>> table;
    for (const auto& c : rep.cells) {
        cells.row({ctx.name, digest, c.scheme, detail::fmt(c.t_mix), detail::fmt(c.rep.cov_joint),
                   detail::fmt(c.rep.cov_joint_se), detail::fmt(c.rep.cov_conditional),
                   detail::fmt(c.theory), detail::fmt(c.ratio), detail::fmt(c.rep.n_eval),
                   detail::fmt(c.rep.seeds_used)});
        table.push_back({c.scheme, detail::fmt(c.t_mix), detail::fmt(c.rep.cov_joint),
                         detail::fmt(c.theory), detail::fmt(c.ratio)});
    }
    cells.close();

    CsvWriter summary(ctx.summary_path(), {"preset", "config", "key", "value"});
    summary.row({ctx.name, digest, "uniform_loglog_slope", detail::fmt(rep.slope_uniform)});
    summary.row({ctx.name, digest, "spectral_over_uniform_at_t50",
                 detail::fmt(rep.spectral_over_uniform_hi)});
    summary.close();

    detail::print_table(*ctx.out, {"scheme", "t_mix", "cov_joint", "t^2/n", "ratio"}, table);
    *ctx.out << "\n  uniform log-log slope: " << format_double(rep.slope_uniform)
             << "; spectral/uniform cov at t_mix=50: "
             << format_double(rep.spectral_over_uniform_hi) << "\n";
    return 0;
}

inline int run_ablate_p(PresetContext& ctx) {
    const auto setup = resolve_ablate_p(ctx.opts);
    detail::write_config_ini(ctx.config_path(), setup.config);
    const auto rep = run_partition_ablation(setup.wp, setup.t_mix, setup.p_grid, setup.n,
                                            setup.m, setup.seeds, setup.n_eval,
                                            ctx.opts.master_seed, *ctx.pool);

    CsvWriter cells(ctx.cells_path(),
                    {"preset", "config", "arm", "forced_p", "seed", "excess", "p_used",
                     "lambda2_hat"});
    for (const auto& c : rep.cells) {
        const std::string arm = c.forced_p == 0 ? "adaptive" : "p=" + std::to_string(c.forced_p);
        cells.row({ctx.name, setup.digest, arm, detail::fmt(c.forced_p), detail::fmt(c.seed),
                   detail::fmt(c.excess), detail::fmt(c.p_used), detail::fmt(c.lambda2_hat)});
    }
    cells.close();

    CsvWriter summary(ctx.summary_path(),
                      {"preset", "config", "arm", "mean_excess", "se", "mean_p_used"});
    std::vector<std::vector<std::string>> table;
    for (const auto& r : rep.rows) {
        summary.row({ctx.name, setup.digest, r.label, detail::fmt(r.mean_excess), detail::fmt(r.se),
                     detail::fmt(r.mean_p_used)});
        table.push_back({r.label, detail::fmt(r.mean_excess), detail::fmt(r.se),
                         detail::fmt(r.mean_p_used)});
    }
    summary.close();

    detail::print_table(*ctx.out, {"arm", "mean_excess", "se", "mean_p_used"}, table);
    *ctx.out << "\n  best fixed: " << rep.best_fixed_label << " at "
             << format_double(rep.best_fixed) << "; adaptive/best = "
             << format_double(rep.adaptive / std::max(rep.best_fixed, 1e-12)) << "; p1/best = "
             << format_double(rep.p1 / std::max(rep.best_fixed, 1e-12)) << "\n";
    return 0;
}

inline int run_spectral_conc(PresetContext& ctx) {
    const auto setup = resolve_spectral_conc(ctx.opts);
    detail::write_config_ini(ctx.config_path(), setup.config);
    const auto rep = run_spectral_concentration(setup.wp, setup.t_mix, setup.n_grid, setup.n_ref,
                                                setup.seeds, ctx.opts.master_seed, *ctx.pool);

    CsvWriter cells(ctx.cells_path(),
                    {"preset", "config", "seed", "n", "lambda2", "ref_lambda2", "abs_err"});
    for (const auto& c : rep.cells)
        cells.row({ctx.name, setup.digest, detail::fmt(c.seed), detail::fmt(c.n),
                   detail::fmt(c.lambda2),
                   detail::fmt(rep.ref_lambda2[static_cast<std::size_t>(c.seed)]),
                   detail::fmt(c.err)});
    cells.close();

    CsvWriter summary(ctx.summary_path(), {"preset", "config", "n", "mean_abs_err", "slope"});
    std::vector<std::vector<std::string>> table;
    for (std::size_t ni = 0; ni < rep.n_grid.size(); ++ni) {
        summary.row({ctx.name, setup.digest, detail::fmt(rep.n_grid[ni]),
                     detail::fmt(rep.mean_abs_err[ni]), ""});
        table.push_back({detail::fmt(rep.n_grid[ni]), detail::fmt(rep.mean_abs_err[ni])});
    }
    summary.row({ctx.name, setup.digest, "slope", "", detail::fmt(rep.slope)});
    summary.close();

    detail::print_table(*ctx.out, {"n", "mean_abs_err"}, table);
    *ctx.out << "\n  log-log slope of |lambda2(n) - lambda2(" << rep.n_ref
             << ")| vs n: " << format_double(rep.slope) << "\n";
    return 0;
}

inline int run_nystrom_fidelity(PresetContext& ctx) {
    WitnessParams wp = rate_separation_params();
    const int t_mix = 10;
    const long n_fid = ctx.opts.n > 0 ? ctx.opts.n : 10000;
    const long n_speed = 10 * n_fid;
    const int seeds = ctx.opts.seeds > 0 ? ctx.opts.seeds : 10;
    const int top_k = 64;

    detail::ConfigMap config;
    detail::describe_witness(config, wp);
    config["preset"] = "nystrom-fidelity";
    config["t_mix"] = detail::fmt(t_mix);
    config["n_fidelity"] = detail::fmt(n_fid);
    config["n_speed"] = detail::fmt(n_speed);
    config["seeds"] = detail::fmt(seeds);
    config["reff_top_k"] = detail::fmt(top_k);
    config["master_seed"] = detail::fmt(ctx.opts.master_seed);
    const std::string digest = detail::config_digest(config);
    detail::write_config_ini(ctx.config_path(), config);

    const auto rep = run_nystrom_study(wp, t_mix, n_fid, seeds, n_speed, top_k,
                                       ctx.opts.master_seed, *ctx.pool);

    CsvWriter cells(ctx.cells_path(),
                    {"preset", "config", "seed", "exact", "exact_half", "nystrom", "abs_err",
                     "fluctuation_band"});
    for (const auto& c : rep.cells)
        cells.row({ctx.name, digest, detail::fmt(c.seed), detail::fmt(c.exact),
                   detail::fmt(c.exact_half), detail::fmt(c.nystrom), detail::fmt(c.err),
                   detail::fmt(c.band)});
    cells.close();

    CsvWriter summary(ctx.summary_path(), {"preset", "config", "key", "value"});
    summary.row({ctx.name, digest, "landmarks", detail::fmt(rep.landmarks)});
    summary.row({ctx.name, digest, "mean_abs_err", detail::fmt(rep.mean_err)});
    summary.row({ctx.name, digest, "mean_fluctuation_band", detail::fmt(rep.mean_band)});
    summary.row({ctx.name, digest, "fidelity_within_band", rep.fidelity_ok ? "1" : "0"});
    summary.row({ctx.name, digest, "exact_seconds", detail::fmt(rep.exact_seconds)});
    summary.row({ctx.name, digest, "nystrom_seconds", detail::fmt(rep.nystrom_seconds)});
    summary.row({ctx.name, digest, "speed_ratio", detail::fmt(rep.speed_ratio)});
    for (std::size_t i = 0; i < rep.reff_n.size(); ++i)
        summary.row({ctx.name, digest, "reff_n" + std::to_string(rep.reff_n[i]),
                     detail::fmt(rep.reff[i])});
    summary.row({ctx.name, digest, "reff_rel_increase", detail::fmt(rep.reff_rel_increase)});
    summary.close();

    *ctx.out << "  landmarks: " << rep.landmarks << ", mean |err| " << format_double(rep.mean_err)
             << " vs band " << format_double(rep.mean_band)
             << (rep.fidelity_ok ? " (within band)\n" : " (OUTSIDE band)\n");
    *ctx.out << "  exact " << format_double(rep.exact_seconds) << "s vs sketch "
             << format_double(rep.nystrom_seconds) << "s at n=" << n_speed << " ("
             << format_double(rep.speed_ratio) << "x)\n";
    *ctx.out << "  effective rank:";
    for (std::size_t i = 0; i < rep.reff_n.size(); ++i)
        *ctx.out << " n=" << rep.reff_n[i] << " -> " << format_double(rep.reff[i]);
    *ctx.out << " (rel increase " << format_double(rep.reff_rel_increase) << ")\n";
    return 0;
}

inline int run_replay_lfa(PresetContext& ctx) {
    const long n_buffer = ctx.opts.n > 0 ? ctx.opts.n : 4096;
    const long m = ctx.opts.m > 0 ? ctx.opts.m : 16;
    const int seeds = ctx.opts.seeds > 0 ? ctx.opts.seeds : 48;
    const int t_lo = 10, t_hi = 50;
    const int feat_dim = 32;
    const double route_c = 0.25;

    detail::ConfigMap config;
    config["preset"] = "replay-lfa";
    config["n_buffer"] = detail::fmt(n_buffer);
    config["m"] = detail::fmt(m);
    config["seeds"] = detail::fmt(seeds);
    config["t_lo"] = detail::fmt(t_lo);
    config["t_hi"] = detail::fmt(t_hi);
    config["feat_dim"] = detail::fmt(feat_dim);
    config["route_c"] = detail::fmt(route_c);
    config["master_seed"] = detail::fmt(ctx.opts.master_seed);
    const std::string digest = detail::config_digest(config);
    detail::write_config_ini(ctx.config_path(), config);

    const auto study = run_replay_study(n_buffer, t_lo, t_hi, m, feat_dim, seeds, route_c,
                                        ctx.opts.master_seed);

    CsvWriter cells(ctx.cells_path(),
                    {"preset", "config", "scheme", "t_mix", "var_wbar", "target_var",
                     "target_var_drop", "lambda2_hat", "p_hat", "seeds"});
    auto arm_row = [&](const char* scheme, int t, const ReplayVarianceReport& r) {
        cells.row({ctx.name, digest, scheme, detail::fmt(t), detail::fmt(r.var_wbar),
                   detail::fmt(r.target_var), detail::fmt(r.target_var_drop),
                   detail::fmt(r.lambda2_hat), detail::fmt(r.p_hat), detail::fmt(r.seeds_used)});
    };
    arm_row("uniform", t_lo, study.uni_lo);
    arm_row("uniform", t_hi, study.uni_hi);
    arm_row("spectral", t_hi, study.spec_hi);
    cells.close();

    CsvWriter summary(ctx.summary_path(), {"preset", "config", "key", "value"});
    summary.row({ctx.name, digest, "var_ratio_t50_over_t10", detail::fmt(study.var_ratio)});
    summary.row({ctx.name, digest, "target_var_drop_t50", detail::fmt(study.spec_hi.target_var_drop)});
    summary.row({ctx.name, digest, "p_hat_t50", detail::fmt(study.spec_hi.p_hat)});
    summary.close();

    *ctx.out << "  uniform var(wbar): t_mix=" << t_lo << " -> "
             << format_double(study.uni_lo.var_wbar) << ", t_mix=" << t_hi << " -> "
             << format_double(study.uni_hi.var_wbar) << " (ratio "
             << format_double(study.var_ratio) << ")\n";
    *ctx.out << "  routed target-variance drop at t_mix=" << t_hi << ": "
             << format_double(study.spec_hi.target_var_drop) << " with P_hat = "
             << study.spec_hi.p_hat << "\n";
    return 0;
}

inline int run_table1_slow(PresetContext& ctx) {
    if (!ctx.opts.slow) {
        *ctx.out << "table1-slow is opt-in: rerun with SPECROUTE_RUN_SLOW=1 (hours at one core).\n";
        return 0;
    }
    WitnessParams wp = rate_separation_params();
    const long n = ctx.opts.n > 0 ? ctx.opts.n : 50000;
    const long m = ctx.opts.m > 0 ? ctx.opts.m : 100;
    const int seeds = ctx.opts.seeds > 0 ? ctx.opts.seeds : 5;
    const int t_mix = 50;
    const long n_eval = 200000;

    detail::ConfigMap config;
    detail::describe_witness(config, wp);
    config["preset"] = "table1-slow";
    config["n"] = detail::fmt(n);
    config["m"] = detail::fmt(m);
    config["seeds"] = detail::fmt(seeds);
    config["t_mix"] = detail::fmt(t_mix);
    config["n_eval"] = detail::fmt(n_eval);
    config["master_seed"] = detail::fmt(ctx.opts.master_seed);
    const std::string digest = detail::config_digest(config);
    detail::write_config_ini(ctx.config_path(), config);

    std::vector<SchemeSpec> schemes;
    schemes.push_back({SchemeKind::Uniform});
    SchemeSpec spec;
    spec.kind = SchemeKind::SpectralRoute;
    schemes.push_back(spec);
    const auto rep = run_rate_separation(wp, schemes, {t_mix}, n, m, seeds, n_eval,
                                         ctx.opts.master_seed, *ctx.pool, 0x54423153);

    CsvWriter cells(ctx.cells_path(),
                    {"preset", "config", "scheme", "t_mix", "seed", "excess", "se", "p_hat",
                     "lambda2_hat"});
    for (const auto& c : rep.cells)
        cells.row({ctx.name, digest, rep.scheme_names[static_cast<std::size_t>(c.scheme_idx)],
                   detail::fmt(c.t_mix), detail::fmt(c.seed), detail::fmt(c.excess),
                   detail::fmt(c.se), detail::fmt(c.p_hat), detail::fmt(c.lambda2_hat)});
    cells.close();

    const double target_uniform = 0.228, target_spectral = 0.046, tol = 0.05;
    CsvWriter summary(ctx.summary_path(),
                      {"preset", "config", "scheme", "mean_excess", "target", "within_tol"});
    std::vector<std::vector<std::string>> table;
    for (std::size_t si = 0; si < rep.series.size(); ++si) {
        const double mean = rep.series[si].mean_excess.front();
        const double target = rep.scheme_names[si] == "uniform" ? target_uniform : target_spectral;
        const bool ok = std::abs(mean - target) <= tol;
        summary.row({ctx.name, digest, rep.scheme_names[si], detail::fmt(mean),
                     detail::fmt(target), ok ? "1" : "0"});
        table.push_back({rep.scheme_names[si], detail::fmt(mean), detail::fmt(target),
                         ok ? "yes" : "NO"});
    }
    summary.close();
    detail::print_table(*ctx.out, {"scheme", "mean_excess", "target", "within 0.05"}, table);
    return 0;
}

// --------------------------------------------------------------- registry ----

struct PresetEntry {
    const char* name;
    const char* summary;
    int (*fn)(PresetContext&);
};

inline const std::vector<PresetEntry>& preset_registry() {
    static const std::vector<PresetEntry> entries{
        {"rates-ar1", "excess risk vs t_mix for every scheme on the AR(1) witness", &run_rates_ar1},
        {"cov-mechanism", "pairwise margin covariance against the t^2/n prediction",
         &run_cov_mechanism},
        {"ablate-p", "risk across fixed partition counts vs the adaptive choice", &run_ablate_p},
        {"spectral-conc", "lambda2 drift vs sample size on one growing chain", &run_spectral_conc},
        {"nystrom-fidelity", "sketched vs exact lambda2, timing, and rank plateau",
         &run_nystrom_fidelity},
        {"replay-lfa", "fitted-value weight variance under uniform vs routed replay",
         &run_replay_lfa},
        {"lattice-2d", "routed scheme vs 1D-linearized baselines on the lattice field",
         &run_lattice_2d},
        {"table1-slow", "full-scale uniform/routed risk pair (opt-in, hours)", &run_table1_slow},
    };
    return entries;
}

inline void list_presets(std::ostream& out) {
    out << "available presets:\n";
    for (const auto& e : preset_registry())
        out << "  " << std::left << std::setw(18) << e.name << e.summary << "\n";
}

inline int run_preset(const std::string& name, const RunOptions& opts, std::ostream& out) {
    const PresetEntry* entry = nullptr;
    for (const auto& e : preset_registry())
        if (name == e.name) entry = &e;
    if (!entry) {
        out << "unknown preset '" << name << "'\n";
        list_presets(out);
        return 2;
    }

    PresetContext ctx;
    ctx.opts = opts;
    ctx.name = name;
    ctx.dir = opts.out_dir;
    ctx.out = &out;
    std::filesystem::create_directories(ctx.dir);

    int n_threads = opts.threads;
    if (n_threads < 1) n_threads = static_cast<int>(std::thread::hardware_concurrency());
    if (n_threads < 1) n_threads = 1;
    ThreadPool pool(n_threads);
    ctx.pool = &pool;

    const auto t0 = std::chrono::steady_clock::now();
    try {
        const int status = entry->fn(ctx);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out << "\npreset " << name << " finished in " << format_double(secs) << "s, outputs in "
            << ctx.dir.string() << "/\n";
        return status;
    } catch (const std::exception& e) {
        // leave a marker next to whatever partial CSVs survived
        write_marker((ctx.dir / (name + ".partial")).string(),
                     std::string("preset aborted: ") + e.what());
        out << "preset " << name << " aborted: " << e.what() << "\n";
        return 1;
    }
}

// ------------------------------------------------------------------ verify ----

namespace detail {

inline long sample_row(const std::string& digest, long n_rows) {
    // deterministic pick, but spread across the table as the config changes
    const std::uint64_t h = std::strtoull(digest.substr(0, 15).c_str(), nullptr, 16);
    return static_cast<long>(h % static_cast<std::uint64_t>(n_rows));
}

inline int diff_fields(std::ostream& out, const std::vector<std::string>& names,
                       const std::vector<std::string>& stored,
                       const std::vector<std::string>& fresh) {
    bool ok = true;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (stored[i] == fresh[i]) continue;
        ok = false;
        out << "  MISMATCH " << names[i] << ": stored " << stored[i] << ", recomputed " << fresh[i]
            << "\n";
    }
    if (ok) out << "  row matches: recomputed values identical\n";
    return ok ? 0 : 1;
}

}  // namespace detail

// Recomputes one stored CSV row from scratch and diffs the formatted values.
// Presets whose cells aggregate across seeds (cov-mechanism, replay-lfa,
// nystrom timing) have no per-row recomputation cheaper than a full rerun and
// are rejected up front.
inline int verify_preset(const std::string& name, const RunOptions& opts, long row_index,
                         std::ostream& out) {
    PresetContext ctx;
    ctx.opts = opts;
    ctx.name = name;
    ctx.dir = opts.out_dir;
    const auto cells_file = ctx.cells_path();
    if (!std::filesystem::exists(cells_file)) {
        out << "no cells file at " << cells_file << "; run the preset first\n";
        return 2;
    }

    const bool rates_like = name == "rates-ar1" || name == "lattice-2d" || name == "table1-slow";
    if (!rates_like && name != "ablate-p" && name != "spectral-conc") {
        out << "verify supports per-seed presets only (rates-ar1, lattice-2d, table1-slow, "
               "ablate-p, spectral-conc); '"
            << name << "' rows aggregate across seeds\n";
        return 2;
    }

    const auto table = read_csv(cells_file);
    if (table.rows.empty()) {
        out << "cells file is empty\n";
        return 2;
    }

    RatesSetup rates;
    AblateSetup ablate;
    ConcSetup conc;
    std::string digest;
    if (name == "rates-ar1") { rates = resolve_rates_ar1(opts); digest = rates.digest; }
    else if (name == "lattice-2d") { rates = resolve_lattice_2d(opts); digest = rates.digest; }
    else if (name == "table1-slow") {
        out << "table1-slow rows follow the rates-ar1 schema; verify them by rerunning the "
               "preset (hours)\n";
        return 2;
    } else if (name == "ablate-p") { ablate = resolve_ablate_p(opts); digest = ablate.digest; }
    else { conc = resolve_spectral_conc(opts); digest = conc.digest; }

    const long n_rows = static_cast<long>(table.rows.size());
    const long row = row_index >= 0 ? row_index : detail::sample_row(digest, n_rows);
    if (row >= n_rows) {
        out << "row " << row << " out of range (have " << n_rows << ")\n";
        return 2;
    }
    const auto& r = table.rows[static_cast<std::size_t>(row)];
    const std::string stored_digest = r[table.col("config")];
    if (stored_digest != digest) {
        out << "config hash mismatch: stored " << stored_digest << ", current options resolve to "
            << digest << "; rerun verify with the options used for the run\n";
        return 2;
    }
    out << "verifying " << name << " row " << row << " of " << n_rows << "\n";

    if (rates_like) {
        const std::string scheme = r[table.col("scheme")];
        const int t_mix = std::stoi(r[table.col("t_mix")]);
        const int seed = std::stoi(r[table.col("seed")]);
        const auto ss = scheme_from_name(scheme, t_mix);
        const auto cell = compute_rate_cell(rates.wp, ss, t_mix, rates.n, rates.m, seed,
                                            rates.n_eval, opts.master_seed, rates.tag);
        return detail::diff_fields(
            out, {"excess", "se", "p_hat", "lambda2_hat"},
            {r[table.col("excess")], r[table.col("se")], r[table.col("p_hat")],
             r[table.col("lambda2_hat")]},
            {format_double(cell.excess), format_double(cell.se), std::to_string(cell.p_hat),
             format_double(cell.lambda2_hat)});
    }
    if (name == "ablate-p") {
        const int forced_p = std::stoi(r[table.col("forced_p")]);
        const int seed = std::stoi(r[table.col("seed")]);
        const auto cell = compute_ablation_cell(ablate.wp, ablate.t_mix, forced_p, ablate.n,
                                                ablate.m, seed, ablate.n_eval, opts.master_seed);
        return detail::diff_fields(
            out, {"excess", "p_used", "lambda2_hat"},
            {r[table.col("excess")], r[table.col("p_used")], r[table.col("lambda2_hat")]},
            {format_double(cell.excess), std::to_string(cell.p_used),
             format_double(cell.lambda2_hat)});
    }
    // spectral-conc: regenerate the seed's chain and both eigensolves
    const int seed = std::stoi(r[table.col("seed")]);
    const long nn = std::stol(r[table.col("n")]);
    const auto cfg = witness_chain(conc.wp, conc.t_mix, conc.n_ref,
                                   derive_seed(opts.master_seed,
                                               {0x434f4e43, static_cast<std::uint64_t>(seed), 1}));
    const auto full = generate(cfg);
    const double ref = lambda2_of_prefix(full, conc.wp, conc.n_ref);
    const double lam = lambda2_of_prefix(full, conc.wp, nn);
    return detail::diff_fields(out, {"lambda2", "ref_lambda2", "abs_err"},
                               {r[table.col("lambda2")], r[table.col("ref_lambda2")],
                                r[table.col("abs_err")]},
                               {format_double(lam), format_double(ref),
                                format_double(std::abs(lam - ref))});
}

}  // namespace specroute
