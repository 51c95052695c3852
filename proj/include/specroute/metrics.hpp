#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "specroute/chain.hpp"
#include "specroute/ensemble.hpp"
#include "specroute/errors.hpp"
#include "specroute/threadpool.hpp"

namespace specroute {

struct MetricsReport {
    double excess_risk = 0.0;
    double excess_risk_se = 0.0;
    double pairwise_cov = 0.0;
    std::vector<double> autocov;
    double variance_functional = 0.0;
    long n_eval = 0;
    int seeds_used = 0;
};

using MarginFn = std::function<double(const double*)>;

// error event is y * h(x) <= 0: a tied vote counts as an error either way
inline std::pair<double, double> empirical_risk(const Trajectory& eval, const MarginFn& h) {
    const long n = eval.n();
    if (n < 1) throw ArgumentError("empirical_risk: empty evaluation set");
    long wrong = 0;
    for (long t = 0; t < n; ++t)
        if (static_cast<double>(eval.y[static_cast<std::size_t>(t)]) * h(eval.row(t)) <= 0.0) ++wrong;
    const double p = static_cast<double>(wrong) / static_cast<double>(n);
    const double se = std::sqrt(std::max(p * (1.0 - p), 1e-12) / static_cast<double>(n));
    return {p, se};
}

inline std::pair<double, double> excess_risk(const EnsembleModel& model, const Trajectory& eval,
                                             double bayes) {
    if (model.d0 != eval.d0())
        throw ArgumentError("excess_risk: model and evaluation dimensions disagree");
    auto [risk, se] = empirical_risk(eval, [&](const double* x) { return margin(model, x); });
    return {risk - bayes, se};
}

// paired difference against a reference rule on the same points; the shared
// evaluation noise cancels, which matters when the excess is far below the
// Bayes risk itself
inline std::pair<double, double> excess_risk_paired(const EnsembleModel& model,
                                                    const Trajectory& eval,
                                                    const MarginFn& reference) {
    if (model.d0 != eval.d0())
        throw ArgumentError("excess_risk_paired: model and evaluation dimensions disagree");
    const long n = eval.n();
    if (n < 1) throw ArgumentError("excess_risk_paired: empty evaluation set");
    long diff_sum = 0, diff_sq = 0;
    for (long t = 0; t < n; ++t) {
        const double y = eval.y[static_cast<std::size_t>(t)];
        const int e_model = y * margin(model, eval.row(t)) <= 0.0 ? 1 : 0;
        const int e_ref = y * reference(eval.row(t)) <= 0.0 ? 1 : 0;
        const int d = e_model - e_ref;
        diff_sum += d;
        diff_sq += d * d;
    }
    const double mean = static_cast<double>(diff_sum) / static_cast<double>(n);
    const double var = static_cast<double>(diff_sq) / static_cast<double>(n) - mean * mean;
    return {mean, std::sqrt(std::max(var, 0.0) / static_cast<double>(n))};
}

inline std::vector<double> margin_autocov(const Trajectory& traj, const MarginFn& h, long k_max,
                                          bool centered = false) {
    const long n = traj.n();
    if (k_max < 0 || k_max >= (n + 1) / 2)
        throw ArgumentError("margin_autocov: need 0 <= k_max < n/2");
    std::vector<double> M(static_cast<std::size_t>(n));
    for (long t = 0; t < n; ++t)
        M[static_cast<std::size_t>(t)] = static_cast<double>(traj.y[static_cast<std::size_t>(t)]) * h(traj.row(t));
    double mbar = 0.0;
    if (centered) {
        for (double v : M) mbar += v;
        mbar /= static_cast<double>(n);
    }
    std::vector<double> gamma(static_cast<std::size_t>(k_max) + 1, 0.0);
    for (long k = 0; k <= k_max; ++k) {
        double acc = 0.0;
        for (long t = 0; t + k < n; ++t)
            acc += (M[static_cast<std::size_t>(t)] - mbar) * (M[static_cast<std::size_t>(t + k)] - mbar);
        gamma[static_cast<std::size_t>(k)] = acc / static_cast<double>(n - k);
    }
    return gamma;
}

// long-run variance with Bartlett-style tapering; always centered, since the
// population quantity it estimates is a sum of covariances
inline double variance_functional(const Trajectory& traj, const MarginFn& h, long truncation_lag) {
    const long n = traj.n();
    if (truncation_lag < 0 || truncation_lag >= n)
        throw ArgumentError("variance_functional: need 0 <= truncation_lag < n");
    const long k_max = std::min(truncation_lag, (n - 1) / 2 - 1 > 0 ? (n - 1) / 2 - 1 : 0);
    auto gamma = margin_autocov(traj, h, k_max, true);
    double v = gamma[0];
    for (long k = 1; k <= k_max; ++k)
        v += 2.0 * (1.0 - static_cast<double>(k) / static_cast<double>(n)) * gamma[static_cast<std::size_t>(k)];
    return v;
}

inline double rate_slope(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 3) throw ArgumentError("rate_slope: need at least 3 points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [t, r] : points) {
        if (!(t > 0) || !(r > 0)) throw ArgumentError("rate_slope: inputs must be positive");
        const double lx = std::log(t), ly = std::log(r);
        sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
    }
    const auto k = static_cast<double>(points.size());
    const double denom = k * sxx - sx * sx;
    if (std::fabs(denom) < 1e-12) throw ArgumentError("rate_slope: degenerate abscissae");
    return (k * sxy - sx * sy) / denom;
}

// Per-seed pipeline for the pairwise margin covariance: the caller supplies
// how to realize a subsample set on a given chain (uniform, blocks, routed,
// ...), and this routine owns the train/evaluate/covariance bookkeeping.
// V_j is a scalar per learner per seed (evaluation-set average of y*h_j(x)),
// and the covariance is taken across seeds, i.e. jointly over chain draw and
// bootstrap randomness.
struct PairwiseCovReport {
    double cov_joint = 0.0;         // across seeds, averaged over learner pairs
    double cov_joint_se = 0.0;      // delete-one jackknife over seeds
    double cov_conditional = 0.0;   // within-seed across learners, averaged
    long n_eval = 0;
    int seeds_used = 0;
};

using SchemeRealizer = std::function<SubsampleSet(const Trajectory&, long m, std::uint64_t seed)>;

inline PairwiseCovReport pairwise_margin_cov(const ChainConfig& config,
                                             const SchemeRealizer& realize,
                                             const BaseLearnerSpec& spec, int n_seeds, long m,
                                             long n_eval, std::uint64_t master_seed = 1,
                                             ThreadPool* pool = nullptr) {
    if (n_seeds < 2) throw ArgumentError("pairwise_margin_cov: need n_seeds >= 2");
    if (m < 2) throw ArgumentError("pairwise_margin_cov: need m >= 2");
    if (n_eval < 1) throw ArgumentError("pairwise_margin_cov: need n_eval >= 1");

    std::vector<std::vector<double>> V(static_cast<std::size_t>(n_seeds));
    std::vector<double> cond(static_cast<std::size_t>(n_seeds), 0.0);
    auto run_seed = [&](long s_idx) {
        const int s = static_cast<int>(s_idx);
        ChainConfig train_cfg = config;
        train_cfg.seed = derive_seed(master_seed, {0x636f76, static_cast<std::uint64_t>(s), 1});
        const Trajectory traj = generate(train_cfg);
        ChainConfig eval_cfg = config;
        eval_cfg.n = n_eval;
        eval_cfg.side = 0;
        eval_cfg.topology = Topology::Path1D;
        // score margins on independent stationary draws (t_mix = 1 is i.i.d.),
        // otherwise eval-chain autocorrelation leaks into every pair covariance
        eval_cfg.t_mix = 1;
        eval_cfg.seed = derive_seed(master_seed, {0x636f76, static_cast<std::uint64_t>(s), 2});
        const Trajectory eval = generate(eval_cfg);

        const auto subs = realize(traj, m, derive_seed(master_seed, {0x636f76, static_cast<std::uint64_t>(s), 3}));
        const auto model = train(traj, subs, spec);

        auto& v = V[static_cast<std::size_t>(s)];
        v.resize(static_cast<std::size_t>(m), 0.0);
        for (long j = 0; j < m; ++j) {
            const auto& lr = model.learners[static_cast<std::size_t>(j)];
            double acc = 0.0;
            for (long t = 0; t < n_eval; ++t)
                acc += static_cast<double>(eval.y[static_cast<std::size_t>(t)]) * lr.predict(eval.row(t));
            v[static_cast<std::size_t>(j)] = acc / static_cast<double>(n_eval);
        }
        // chain-conditional covariance: across exchangeable learners within the seed
        double vbar = 0.0;
        for (double x : v) vbar += x;
        vbar /= static_cast<double>(m);
        double pair_acc = 0.0;
        for (long j = 0; j < m; ++j)
            for (long l = j + 1; l < m; ++l)
                pair_acc += (v[static_cast<std::size_t>(j)] - vbar) * (v[static_cast<std::size_t>(l)] - vbar);
        cond[static_cast<std::size_t>(s)] = pair_acc / (0.5 * static_cast<double>(m) * static_cast<double>(m - 1));
    };
    if (pool)
        pool->parallel_for(n_seeds, run_seed);
    else
        for (long s = 0; s < n_seeds; ++s) run_seed(s);
    double cond_acc = 0.0;
    for (double x : cond) cond_acc += x;

    // joint covariance across seeds for each pair, then a pair average (the
    // sums over seeds make this O(seeds * m^2) without storing pair series)
    auto pair_cov_mean = [&](const std::vector<int>& use) {
        const auto S = static_cast<double>(use.size());
        std::vector<double> mean(static_cast<std::size_t>(m), 0.0);
        for (int s : use)
            for (long j = 0; j < m; ++j) mean[static_cast<std::size_t>(j)] += V[static_cast<std::size_t>(s)][static_cast<std::size_t>(j)];
        for (auto& x : mean) x /= S;
        double acc = 0.0;
        for (int s : use) {
            double vsum = 0.0;
            for (long j = 0; j < m; ++j) vsum += V[static_cast<std::size_t>(s)][static_cast<std::size_t>(j)] - mean[static_cast<std::size_t>(j)];
            double vsq = 0.0;
            for (long j = 0; j < m; ++j) {
                const double d = V[static_cast<std::size_t>(s)][static_cast<std::size_t>(j)] - mean[static_cast<std::size_t>(j)];
                vsq += d * d;
            }
            acc += vsum * vsum - vsq;  // sum over ordered pairs j != l
        }
        return acc / S / (static_cast<double>(m) * static_cast<double>(m - 1));
    };

    std::vector<int> all(static_cast<std::size_t>(n_seeds));
    for (int s = 0; s < n_seeds; ++s) all[static_cast<std::size_t>(s)] = s;
    PairwiseCovReport rep;
    rep.cov_joint = pair_cov_mean(all);
    rep.cov_conditional = cond_acc / static_cast<double>(n_seeds);
    rep.n_eval = n_eval;
    rep.seeds_used = n_seeds;

    // jackknife
    double jk_mean = 0.0;
    std::vector<double> jk(static_cast<std::size_t>(n_seeds));
    for (int drop = 0; drop < n_seeds; ++drop) {
        std::vector<int> use;
        use.reserve(static_cast<std::size_t>(n_seeds) - 1);
        for (int s = 0; s < n_seeds; ++s)
            if (s != drop) use.push_back(s);
        jk[static_cast<std::size_t>(drop)] = pair_cov_mean(use);
        jk_mean += jk[static_cast<std::size_t>(drop)];
    }
    jk_mean /= static_cast<double>(n_seeds);
    double jk_var = 0.0;
    for (double x : jk) jk_var += (x - jk_mean) * (x - jk_mean);
    rep.cov_joint_se = std::sqrt(jk_var * static_cast<double>(n_seeds - 1) / static_cast<double>(n_seeds));
    return rep;
}

}  // namespace specroute
