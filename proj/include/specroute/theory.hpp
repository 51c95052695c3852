#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "specroute/errors.hpp"

namespace specroute {

// Inputs for the trajectory divergence between two mean-shifted copies of the
// same AR(1) witness. delta_mu is the per-step mean difference by coordinate;
// drift_nu adds a linearly growing component (nu/n)*t to every coordinate.
struct KlSpec {
    long n = 1;
    double lambda = 0.0;
    int d0 = 1;
    std::vector<double> delta_mu;
    double drift_nu = 0.0;

    void validate() const {
        if (n < 1) throw ArgumentError("KlSpec: n must be >= 1");
        if (!(lambda >= 0.0) || lambda >= 1.0)
            throw ArgumentError("KlSpec: lambda must lie in [0, 1)");
        if (d0 < 1 || static_cast<long>(delta_mu.size()) != d0)
            throw ArgumentError("KlSpec: delta_mu must have length d0");
    }
};

// 1' Sigma_T^{-1} 1 for the AR(1) autocovariance Toeplitz matrix, from the
// tridiagonal precision (endpoints 1/(1-l^2), interior (1+l^2)/(1-l^2),
// off-diagonal -l/(1-l^2)): summing rows telescopes to this rational form.
inline double ar1_quadratic_ones(long n, double lambda) {
    return (static_cast<double>(n) * (1.0 - lambda) + 2.0 * lambda) / (1.0 + lambda);
}

inline double kl_trajectory_closed(const KlSpec& spec) {
    spec.validate();
    double norm2 = 0.0;
    for (double d : spec.delta_mu) norm2 += d * d;
    if (spec.n == 1) return 0.5 * norm2;  // single draw, unit variance
    return 0.5 * norm2 * ar1_quadratic_ones(spec.n, spec.lambda);
}

// Brute-force counterpart: build Sigma_T entrywise, Cholesky-solve against
// the stacked mean-difference profile. The coordinate sum uses the Kronecker
// structure (Sigma = Sigma_T x I), so only the n x n block is ever formed.
inline double kl_trajectory_dense(const KlSpec& spec) {
    spec.validate();
    if (spec.n * spec.d0 > 512)
        throw ArgumentError("kl_trajectory_dense: n*d0 must be <= 512");
    const long n = spec.n;
    std::vector<double> S(static_cast<std::size_t>(n) * n);
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < n; ++j)
            S[static_cast<std::size_t>(i) * n + j] = std::pow(spec.lambda, std::abs(i - j));

    // in-place lower Cholesky
    for (long a = 0; a < n; ++a) {
        double diag = S[static_cast<std::size_t>(a) * n + a];
        for (long k = 0; k < a; ++k) {
            const double l = S[static_cast<std::size_t>(a) * n + k];
            diag -= l * l;
        }
        if (diag <= 0) throw ConvergenceError("kl_trajectory_dense: covariance not PD", diag);
        const double da = std::sqrt(diag);
        S[static_cast<std::size_t>(a) * n + a] = da;
        for (long i = a + 1; i < n; ++i) {
            double acc = S[static_cast<std::size_t>(i) * n + a];
            for (long k = 0; k < a; ++k)
                acc -= S[static_cast<std::size_t>(i) * n + k] * S[static_cast<std::size_t>(a) * n + k];
            S[static_cast<std::size_t>(i) * n + a] = acc / da;
        }
    }
    auto quad_form = [&](const std::vector<double>& v) {
        // v' Sigma^{-1} v = ||L^{-1} v||^2
        std::vector<double> z(v);
        for (long i = 0; i < n; ++i) {
            for (long k = 0; k < i; ++k) z[static_cast<std::size_t>(i)] -= S[static_cast<std::size_t>(i) * n + k] * z[static_cast<std::size_t>(k)];
            z[static_cast<std::size_t>(i)] /= S[static_cast<std::size_t>(i) * n + i];
        }
        double q = 0.0;
        for (double x : z) q += x * x;
        return q;
    };

    double kl = 0.0;
    std::vector<double> profile(static_cast<std::size_t>(n));
    for (int k = 0; k < spec.d0; ++k) {
        for (long t = 0; t < n; ++t)
            profile[static_cast<std::size_t>(t)] =
                spec.delta_mu[static_cast<std::size_t>(k)] +
                spec.drift_nu / static_cast<double>(n) * static_cast<double>(t);
        kl += 0.5 * quad_form(profile);
    }
    return kl;
}

struct LecamReport {
    double delta = 0.0;       // two-point separation
    double kl = 0.0;
    double risk_floor = 0.0;  // testing risk lower bound in [0, 1/2]
};

inline LecamReport lecam_separation(long n, int t_mix, double var_rho, double c0 = 1.0) {
    if (n < 1 || t_mix < 1) throw ArgumentError("lecam_separation: n and t_mix must be >= 1");
    if (!(var_rho > 0)) throw ArgumentError("lecam_separation: var_rho must be positive");
    LecamReport rep;
    rep.delta = c0 * static_cast<double>(t_mix) / std::sqrt(static_cast<double>(n));
    rep.kl = rep.delta * rep.delta / (2.0 * var_rho);
    const double floor = 0.5 * (1.0 - std::sqrt(rep.kl / 2.0));
    rep.risk_floor = std::min(0.5, std::max(0.0, floor));
    return rep;
}

struct FanoReport {
    double bound = 0.0;       // value at the requested delta
    double delta_star = 0.0;  // grid maximizer
    double bound_star = 0.0;
};

// c1*delta*(1 - (c2*(n/t_mix)*delta^2 + log 2)/(d0/8)), with the maximizer
// located on a grid wide enough to bracket the analytic optimum
inline FanoReport fano_budget(long n, int t_mix, int d0, double delta, double c1 = 1.0,
                              double c2 = 1.0, double c3 = 1.0) {
    if (n < 1 || t_mix < 1 || d0 < 1)
        throw ArgumentError("fano_budget: n, t_mix, d0 must be >= 1");
    const double a = c2 * static_cast<double>(n) / static_cast<double>(t_mix);
    const double cap = static_cast<double>(d0) / 8.0;
    auto value = [&](double dlt) { return c1 * dlt * (1.0 - (a * dlt * dlt + std::log(2.0)) / cap); };

    FanoReport rep;
    rep.bound = value(delta);
    const double scale = c3 * std::sqrt(static_cast<double>(t_mix) / static_cast<double>(n));
    const double hi = 4.0 * scale;
    const int grid = 4096;
    for (int i = 1; i <= grid; ++i) {
        const double d = hi * static_cast<double>(i) / static_cast<double>(grid);
        const double v = value(d);
        if (v > rep.bound_star) {
            rep.bound_star = v;
            rep.delta_star = d;
        }
    }
    return rep;
}

}  // namespace specroute
