#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <fstream>
#include <string>
#include <vector>

#include "specroute/chain.hpp"
#include "specroute/depgraph.hpp"
#include "specroute/errors.hpp"
#include "specroute/resampling.hpp"
#include "specroute/rng.hpp"
#include "specroute/spectral.hpp"

namespace specroute {

// Policy-evaluation testbed: a random walk on the 2-torus whose step size
// controls the mixing time, with per-action blocks of bounded Fourier state
// features. Everything the LFA corollary assumes holds by construction:
// features bounded by 1, block-diagonal second moment bounded away from 0.
struct ReplayConfig {
    long n_buffer = 4096;
    int t_mix = 10;
    int feat_dim = 32;           // must be a multiple of n_actions
    double gamma_discount = 0.9;
    long m = 16;
    std::vector<double> target_weights;  // w_old, frozen; empty = zeros
    std::uint64_t seed = 1;
    double reward_noise = 0.05;

    static constexpr int n_actions = 4;

    void validate() const {
        if (n_buffer < 8) throw ArgumentError("ReplayConfig: n_buffer too small");
        if (t_mix < 1) throw ArgumentError("ReplayConfig: t_mix must be >= 1");
        if (feat_dim < 2 * n_actions || feat_dim % n_actions != 0)
            throw ArgumentError("ReplayConfig: feat_dim must be a multiple of 4, >= 8");
        if (!(gamma_discount >= 0.0) || gamma_discount >= 1.0)
            throw ArgumentError("ReplayConfig: gamma_discount must lie in [0, 1)");
        if (m < 2) throw ArgumentError("ReplayConfig: m must be >= 2");
    }

    int fourier_count() const { return feat_dim / n_actions; }
};

struct ReplayBuffer {
    ReplayConfig config;
    std::vector<double> states;   // (n_buffer + 1) x 2, row-major; row t is s_t
    std::vector<int> actions;     // length n_buffer
    std::vector<double> rewards;  // length n_buffer
    double feature_bound = 0.0;   // recorded B
    double sigma_min = 0.0;       // empirical min eigenvalue of Sigma-hat
    double sigma_max = 0.0;

    long n() const { return config.n_buffer; }
    const double* state(long t) const { return states.data() + 2 * t; }
};

namespace detail {

// fixed low-frequency lattice, enumerated small |k|^2 first
inline std::vector<std::pair<int, int>> fourier_freqs(int count) {
    std::vector<std::pair<int, int>> freqs;
    for (int radius = 0; static_cast<int>(freqs.size()) < count && radius <= 8; ++radius)
        for (int a = -radius; a <= radius && static_cast<int>(freqs.size()) < count; ++a)
            for (int b = -radius; b <= radius && static_cast<int>(freqs.size()) < count; ++b) {
                if (std::max(std::abs(a), std::abs(b)) != radius) continue;
                if (a < 0 || (a == 0 && b < 0)) continue;  // one per +/- pair
                freqs.emplace_back(a, b);
            }
    if (static_cast<int>(freqs.size()) < count)
        throw ArgumentError("fourier_freqs: feat_dim too large for the frequency lattice");
    return freqs;
}

// state block: (1/sqrt(q)) [1, cos(2 pi <k_2, s>), cos(2 pi <k_3, s>), ...]
inline void fourier_block(const std::vector<std::pair<int, int>>& freqs, const double* s,
                          double* out) {
    const auto q = static_cast<int>(freqs.size());
    const double scale = 1.0 / std::sqrt(static_cast<double>(q));
    for (int k = 0; k < q; ++k) {
        const auto [a, b] = freqs[static_cast<std::size_t>(k)];
        out[k] = (a == 0 && b == 0)
                     ? scale
                     : scale * std::cos(6.283185307179586 * (a * s[0] + b * s[1]));
    }
}

inline void solve_spd(std::vector<double>& A, std::vector<double>& b, int d) {
    // in-place lower Cholesky then two triangular solves
    for (int a = 0; a < d; ++a) {
        double diag = A[static_cast<std::size_t>(a) * d + a];
        for (int k = 0; k < a; ++k) {
            const double l = A[static_cast<std::size_t>(a) * d + k];
            diag -= l * l;
        }
        if (diag <= 0) throw ConvergenceError("solve_spd: matrix not positive definite", diag);
        const double da = std::sqrt(diag);
        A[static_cast<std::size_t>(a) * d + a] = da;
        for (int i = a + 1; i < d; ++i) {
            double acc = A[static_cast<std::size_t>(i) * d + a];
            for (int k = 0; k < a; ++k)
                acc -= A[static_cast<std::size_t>(i) * d + k] * A[static_cast<std::size_t>(a) * d + k];
            A[static_cast<std::size_t>(i) * d + a] = acc / da;
        }
    }
    for (int i = 0; i < d; ++i) {
        for (int k = 0; k < i; ++k) b[static_cast<std::size_t>(i)] -= A[static_cast<std::size_t>(i) * d + k] * b[static_cast<std::size_t>(k)];
        b[static_cast<std::size_t>(i)] /= A[static_cast<std::size_t>(i) * d + i];
    }
    for (int i = d - 1; i >= 0; --i) {
        for (int k = i + 1; k < d; ++k) b[static_cast<std::size_t>(i)] -= A[static_cast<std::size_t>(k) * d + i] * b[static_cast<std::size_t>(k)];
        b[static_cast<std::size_t>(i)] /= A[static_cast<std::size_t>(i) * d + i];
    }
}

// smallest/largest eigenvalue of a small SPD matrix via inverse/power iteration
inline std::pair<double, double> spd_eig_range(std::vector<double> A, int d) {
    std::vector<double> v(static_cast<std::size_t>(d), 1.0);
    double lam_max = 0.0;
    for (int it = 0; it < 200; ++it) {
        std::vector<double> w(static_cast<std::size_t>(d), 0.0);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) w[static_cast<std::size_t>(i)] += A[static_cast<std::size_t>(i) * d + j] * v[static_cast<std::size_t>(j)];
        double nrm = 0.0;
        for (double x : w) nrm += x * x;
        nrm = std::sqrt(nrm);
        lam_max = nrm;
        for (int i = 0; i < d; ++i) v[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(i)] / nrm;
    }
    // deflate-free bound for the bottom: power-iterate lam_max*I - A
    std::vector<double> u(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) u[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(static_cast<double>(d) + static_cast<double>(i));
    double mu = 0.0;
    for (int it = 0; it < 400; ++it) {
        std::vector<double> w(static_cast<std::size_t>(d), 0.0);
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) w[static_cast<std::size_t>(i)] -= A[static_cast<std::size_t>(i) * d + j] * u[static_cast<std::size_t>(j)];
            w[static_cast<std::size_t>(i)] += lam_max * 1.0001 * u[static_cast<std::size_t>(i)];
        }
        double nrm = 0.0;
        for (double x : w) nrm += x * x;
        nrm = std::sqrt(nrm);
        mu = nrm;
        for (int i = 0; i < d; ++i) u[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(i)] / nrm;
    }
    return {lam_max * 1.0001 - mu, lam_max};
}

}  // namespace detail

// phi(s, a): the Fourier block of s placed in action a's slot, zeros elsewhere
inline void replay_features(const ReplayConfig& cfg, const double* s, int action, double* out) {
    const int q = cfg.fourier_count();
    static thread_local std::vector<std::pair<int, int>> freqs;
    static thread_local int freqs_for = -1;
    if (freqs_for != q) {
        freqs = detail::fourier_freqs(q);
        freqs_for = q;
    }
    std::fill(out, out + cfg.feat_dim, 0.0);
    detail::fourier_block(freqs, s, out + static_cast<std::ptrdiff_t>(action) * q);
}

inline ReplayBuffer fill_buffer(const ReplayConfig& cfg) {
    cfg.validate();
    ReplayBuffer buf;
    buf.config = cfg;
    const long n = cfg.n_buffer;
    buf.states.resize(2 * static_cast<std::size_t>(n + 1));
    buf.actions.resize(static_cast<std::size_t>(n));
    buf.rewards.resize(static_cast<std::size_t>(n));

    Rng rng(derive_seed(cfg.seed, {0x7265706c, 1}));
    buf.states[0] = rng.next_double();
    buf.states[1] = rng.next_double();

    // per-axis step variance sized so the integrated autocorrelation time of
    // the slowest Fourier mode lands near t_mix: rho = (t-1)/(t+1),
    // sigma^2 = -ln(rho)/(2 pi^2), and the walk contributes 0.75 step^2
    double step = 0.0;
    if (cfg.t_mix > 1) {
        const double rho = (static_cast<double>(cfg.t_mix) - 1.0) / (static_cast<double>(cfg.t_mix) + 1.0);
        const double sigma2 = -std::log(rho) / (2.0 * 9.869604401089358);
        step = std::sqrt(sigma2 / 0.75);
    }
    static const double dirs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    auto wrap = [](double x) { return x - std::floor(x); };

    for (long t = 0; t < n; ++t) {
        const int a = static_cast<int>(rng.next_below(ReplayConfig::n_actions));
        buf.actions[static_cast<std::size_t>(t)] = a;
        const double* s = buf.state(t);
        double nx, ny;
        if (cfg.t_mix == 1) {
            nx = rng.next_double();       // fully mixed in one step
            ny = rng.next_double();
        } else {
            nx = wrap(s[0] + step * (dirs[a][0] + 0.5 * rng.next_normal()));
            ny = wrap(s[1] + step * (dirs[a][1] + 0.5 * rng.next_normal()));
        }
        buf.states[2 * static_cast<std::size_t>(t + 1)] = nx;
        buf.states[2 * static_cast<std::size_t>(t + 1) + 1] = ny;
        buf.rewards[static_cast<std::size_t>(t)] =
            std::cos(6.283185307179586 * s[0]) + 0.5 * std::sin(6.283185307179586 * (s[0] + s[1])) +
            cfg.reward_noise * rng.next_normal();
    }

    // empirical feature second moment over the realized (s, a) pairs
    const int d = cfg.feat_dim;
    std::vector<double> sigma(static_cast<std::size_t>(d) * d, 0.0);
    std::vector<double> phi(static_cast<std::size_t>(d));
    double bound = 0.0;
    for (long t = 0; t < n; ++t) {
        replay_features(cfg, buf.state(t), buf.actions[static_cast<std::size_t>(t)], phi.data());
        double nrm2 = 0.0;
        for (int i = 0; i < d; ++i) {
            nrm2 += phi[static_cast<std::size_t>(i)] * phi[static_cast<std::size_t>(i)];
            for (int j = 0; j < d; ++j)
                sigma[static_cast<std::size_t>(i) * d + j] += phi[static_cast<std::size_t>(i)] * phi[static_cast<std::size_t>(j)];
        }
        bound = std::max(bound, std::sqrt(nrm2));
    }
    for (auto& x : sigma) x /= static_cast<double>(n);
    buf.feature_bound = bound;
    auto [lo, hi] = detail::spd_eig_range(sigma, d);
    buf.sigma_min = lo;
    buf.sigma_max = hi;
    if (!(lo > 0) || lo < 1e-3 * hi)
        throw DataError("fill_buffer: feature conditioning gate failed (min eig too small)");
    return buf;
}

inline std::vector<double> compute_targets(const ReplayBuffer& buf,
                                           const std::vector<double>& w_old,
                                           double gamma_discount) {
    const auto& cfg = buf.config;
    if (!w_old.empty() && static_cast<int>(w_old.size()) != cfg.feat_dim)
        throw ArgumentError("compute_targets: w_old has wrong dimension");
    const int q = cfg.fourier_count();
    std::vector<double> y(buf.rewards);
    if (w_old.empty() || gamma_discount == 0.0) return y;

    auto freqs = detail::fourier_freqs(q);
    std::vector<double> block(static_cast<std::size_t>(q));
    for (long t = 0; t < buf.n(); ++t) {
        detail::fourier_block(freqs, buf.state(t + 1), block.data());
        double best = -1e300;
        for (int a = 0; a < ReplayConfig::n_actions; ++a) {
            double v = 0.0;
            for (int k = 0; k < q; ++k)
                v += block[static_cast<std::size_t>(k)] * w_old[static_cast<std::size_t>(a) * q + static_cast<std::size_t>(k)];
            best = std::max(best, v);
        }
        y[static_cast<std::size_t>(t)] += gamma_discount * best;
    }
    return y;
}

// w = (Sigma_hat + eps I)^{-1} (1/|S|) Phi^T y over the index multiset
inline std::vector<double> lfa_solve(const ReplayBuffer& buf, const std::vector<long>& indices,
                                     const std::vector<double>& targets) {
    const auto& cfg = buf.config;
    const int d = cfg.feat_dim;
    if (static_cast<long>(indices.size()) < d)
        throw ArgumentError("lfa_solve: need at least feat_dim indices");
    if (static_cast<long>(targets.size()) != buf.n())
        throw ArgumentError("lfa_solve: targets length mismatch");

    std::vector<double> G(static_cast<std::size_t>(d) * d, 0.0);
    std::vector<double> b(static_cast<std::size_t>(d), 0.0);
    std::vector<double> phi(static_cast<std::size_t>(d));
    for (long i : indices) {
        const double yt = targets[static_cast<std::size_t>(i)];
        if (std::isnan(yt)) throw DataError("lfa_solve: NaN target");
        replay_features(cfg, buf.state(i), buf.actions[static_cast<std::size_t>(i)], phi.data());
        for (int a = 0; a < d; ++a) {
            b[static_cast<std::size_t>(a)] += phi[static_cast<std::size_t>(a)] * yt;
            for (int c = 0; c < d; ++c)
                G[static_cast<std::size_t>(a) * d + c] += phi[static_cast<std::size_t>(a)] * phi[static_cast<std::size_t>(c)];
        }
    }
    const double inv_cnt = 1.0 / static_cast<double>(indices.size());
    for (auto& x : G) x *= inv_cnt;
    for (auto& x : b) x *= inv_cnt;
    double trace = 0.0;
    for (int a = 0; a < d; ++a) trace += G[static_cast<std::size_t>(a) * d + a];
    const double eps = 1e-6 * trace / static_cast<double>(d);
    for (int a = 0; a < d; ++a) G[static_cast<std::size_t>(a) * d + a] += eps;
    detail::solve_spd(G, b, d);
    return b;
}

struct ReplayVarianceReport {
    double var_wbar = 0.0;         // trace of the seed covariance of mean weights
    double target_var = 0.0;       // per-batch Bellman target variance, averaged
    double target_var_drop = 0.0;  // relative drop vs the uniform arm (routed runs)
    double lambda2_hat = 0.0;      // last routed plan's gap estimate
    int p_hat = 0;
    int seeds_used = 0;
    std::vector<double> resketch_lambda2;  // gap estimates at growth checkpoints
};

namespace detail {

// The walk lives on a torus; raw coordinates put the two sides of the wrap
// seam far apart in Euclidean distance and can split the k-NN graph. The
// chordal embedding (cos, sin per axis) makes nearby-on-torus mean
// nearby-in-feature, so the graph follows the actual walk geometry.
inline Trajectory torus_embedded(const ReplayBuffer& buf, long n_prefix) {
    Trajectory fake;
    fake.config.n = n_prefix;
    fake.config.d0 = 4;
    fake.x.resize(static_cast<std::size_t>(4 * n_prefix));
    for (long t = 0; t < n_prefix; ++t) {
        const double* s = buf.state(t);
        const double ax = 6.283185307179586 * s[0], ay = 6.283185307179586 * s[1];
        double* row = fake.x.data() + 4 * t;
        row[0] = std::cos(ax);
        row[1] = std::sin(ax);
        row[2] = std::cos(ay);
        row[3] = std::sin(ay);
    }
    fake.y.assign(static_cast<std::size_t>(n_prefix), 1);
    return fake;
}

inline SpectralPlan routed_plan_for_buffer(const ReplayBuffer& buf, double route_c, long m,
                                           std::vector<double>* resketch_log) {
    GraphRecipe recipe;
    recipe.mode = FeatureKnn{10};

    // periodic re-sketch: the gap estimate is refreshed while the buffer
    // grows; only the final full-buffer plan routes learners
    if (resketch_log) {
        resketch_log->clear();
        for (int part = 1; part <= 3; ++part) {
            const long n_part = buf.n() * part / 4;
            const auto prefix = torus_embedded(buf, n_part);
            try {
                const auto g = build_graph(prefix, recipe);
                auto [lam, vec] = fiedler_pair(g, 1e-7, 3000);
                (void)vec;
                resketch_log->push_back(lam);
            } catch (const StructuralError&) {
                // a short walk segment may not cover enough of the torus yet;
                // the log is diagnostic, so record the hole and move on
                resketch_log->push_back(std::numeric_limits<double>::quiet_NaN());
            }
        }
    }

    const auto g = build_graph(torus_embedded(buf, buf.n()), recipe);
    RouteConfig rc;
    rc.tol = 1e-7;
    rc.max_iter = 3000;
    return route_partitions(g, static_cast<int>(m), route_c, rc);
}

}  // namespace detail

inline ReplayVarianceReport ensemble_weight_variance(const ReplayConfig& cfg, SchemeKind scheme,
                                                     int n_seeds, double route_c = 0.25) {
    cfg.validate();
    if (n_seeds < 2) throw ArgumentError("ensemble_weight_variance: need >= 2 seeds");
    if (scheme != SchemeKind::Uniform && scheme != SchemeKind::SpectralRoute)
        throw ArgumentError("ensemble_weight_variance: scheme must be Uniform or SpectralRoute");

    const int d = cfg.feat_dim;
    const long batch = std::max<long>(d, cfg.n_buffer / cfg.m);

    auto run_arm = [&](SchemeKind arm, ReplayVarianceReport& rep) {
        std::vector<double> wbar_sum(static_cast<std::size_t>(d), 0.0);
        std::vector<double> wbar_sq(static_cast<std::size_t>(d), 0.0);
        double tv_acc = 0.0;
        for (int s = 0; s < n_seeds; ++s) {
            ReplayConfig c2 = cfg;
            c2.seed = derive_seed(cfg.seed, {0x76617277, static_cast<std::uint64_t>(s)});
            const auto buf = fill_buffer(c2);
            const auto targets = compute_targets(buf, cfg.target_weights, cfg.gamma_discount);

            SubsampleSet subs;
            if (arm == SchemeKind::Uniform) {
                subs = draw_uniform(buf.n(), cfg.m, batch, derive_seed(c2.seed, {5}));
            } else {
                std::vector<double>* log_ptr = (s == 0) ? &rep.resketch_lambda2 : nullptr;
                const auto plan = detail::routed_plan_for_buffer(buf, route_c, cfg.m, log_ptr);
                rep.lambda2_hat = plan.lambda2_hat;
                rep.p_hat = plan.p_hat;
                subs = draw_spectral_routed(plan, cfg.m, derive_seed(c2.seed, {5}));
            }

            std::vector<double> wbar(static_cast<std::size_t>(d), 0.0);
            for (const auto& idx : subs.per_learner) {
                const auto w = lfa_solve(buf, idx, targets);
                for (int k = 0; k < d; ++k) wbar[static_cast<std::size_t>(k)] += w[static_cast<std::size_t>(k)];
                double mean = 0.0, sq = 0.0;
                for (long i : idx) {
                    mean += targets[static_cast<std::size_t>(i)];
                    sq += targets[static_cast<std::size_t>(i)] * targets[static_cast<std::size_t>(i)];
                }
                mean /= static_cast<double>(idx.size());
                tv_acc += sq / static_cast<double>(idx.size()) - mean * mean;
            }
            for (int k = 0; k < d; ++k) {
                wbar[static_cast<std::size_t>(k)] /= static_cast<double>(cfg.m);
                wbar_sum[static_cast<std::size_t>(k)] += wbar[static_cast<std::size_t>(k)];
                wbar_sq[static_cast<std::size_t>(k)] += wbar[static_cast<std::size_t>(k)] * wbar[static_cast<std::size_t>(k)];
            }
        }
        double trace_var = 0.0;
        for (int k = 0; k < d; ++k) {
            const double mean = wbar_sum[static_cast<std::size_t>(k)] / static_cast<double>(n_seeds);
            trace_var += wbar_sq[static_cast<std::size_t>(k)] / static_cast<double>(n_seeds) - mean * mean;
        }
        rep.var_wbar = trace_var * static_cast<double>(n_seeds) / static_cast<double>(n_seeds - 1);
        rep.target_var = tv_acc / static_cast<double>(n_seeds) / static_cast<double>(cfg.m);
        rep.seeds_used = n_seeds;
    };

    ReplayVarianceReport rep;
    run_arm(scheme, rep);
    if (scheme == SchemeKind::SpectralRoute) {
        ReplayVarianceReport uni;
        run_arm(SchemeKind::Uniform, uni);
        if (uni.target_var > 0)
            rep.target_var_drop = (uni.target_var - rep.target_var) / uni.target_var;
    }
    return rep;
}

inline void save_buffer(const ReplayBuffer& buf, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("save_buffer: cannot open " + path);
    const char magic[8] = {'S', 'R', 'B', 'U', 'F', '0', '1', '\n'};
    os.write(magic, 8);
    auto put = [&](std::int64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); };
    put(buf.n());
    put(buf.config.feat_dim);
    put(buf.config.t_mix);
    os.write(reinterpret_cast<const char*>(buf.states.data()),
             static_cast<std::streamsize>(buf.states.size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(buf.actions.data()),
             static_cast<std::streamsize>(buf.actions.size() * sizeof(int)));
    os.write(reinterpret_cast<const char*>(buf.rewards.data()),
             static_cast<std::streamsize>(buf.rewards.size() * sizeof(double)));
    if (!os) throw IoError("save_buffer: write failed for " + path);
}

}  // namespace specroute
