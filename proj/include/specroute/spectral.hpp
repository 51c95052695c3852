#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "specroute/depgraph.hpp"
#include "specroute/errors.hpp"
#include "specroute/rng.hpp"

namespace specroute {

enum class FiedlerMethod { ExactLanczos, Nystrom };

struct SpectralPlan {
    double lambda2_hat = 0.0;
    std::vector<double> fiedler;        // global Fiedler vector, unit norm
    int p_hat = 1;
    std::vector<std::int32_t> assignment;
    std::int64_t cut_count = 0;
    int fallback_splits = 0;            // disconnected-subgraph component splits
    FiedlerMethod method = FiedlerMethod::ExactLanczos;
    int landmarks = 0;                  // used when method == Nystrom
};

struct NystromSketch {
    std::vector<std::int64_t> landmarks;
    std::vector<double> c_block;        // n x rank, column-major
    std::vector<double> w_ll;           // rank x rank, column-major
    std::int64_t rank = 0;
    double ridge_eps = 0.0;
};

struct RouteConfig {
    FiedlerMethod method = FiedlerMethod::ExactLanczos;
    int landmarks = 0;                  // Nystrom only; 0 means ceil(10*(log n)^2)
    std::uint64_t seed = 0;
    bool split_by_sign = false;         // comparison mode; default is median split
    double tol = 1e-9;
    int max_iter = 4000;
    int forced_p = 0;                   // >0 pins the partition count (ablation grids)
};

namespace detail {

// y = D^{-1/2} W D^{-1/2} x  (the affinity operator; spectrum in [-1, 1])
inline void affinity_matvec(const DependencyGraph& g, const double* x, double* y) {
    const auto n = g.n_nodes;
    for (std::int64_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::int64_t e = g.adj_offsets[i]; e < g.adj_offsets[i + 1]; ++e) {
            const auto j = g.adj[e];
            acc += g.inv_sqrt_deg[j] * x[j];
        }
        y[i] = g.inv_sqrt_deg[i] * acc;
    }
}

// Eigenvalues and eigenvectors of a symmetric tridiagonal matrix by the
// implicit QL method (classic tql2). diag/off are overwritten; z starts as
// identity and ends holding eigenvectors in columns. Values come out ascending.
inline void tridiag_eig(std::vector<double>& diag, std::vector<double>& off,
                        std::vector<double>& z, int jn) {
    z.assign(static_cast<std::size_t>(jn) * jn, 0.0);
    for (int i = 0; i < jn; ++i) z[static_cast<std::size_t>(i) * jn + i] = 1.0;
    if (jn == 1) return;
    off.resize(static_cast<std::size_t>(jn));
    off[static_cast<std::size_t>(jn) - 1] = 0.0;
    for (int l = 0; l < jn; ++l) {
        int iter = 0;
        int mm;
        do {
            for (mm = l; mm < jn - 1; ++mm) {
                double dd = std::fabs(diag[mm]) + std::fabs(diag[mm + 1]);
                if (std::fabs(off[mm]) <= 1e-300 + 2.3e-16 * dd) break;
            }
            if (mm != l) {
                if (++iter > 50) throw ConvergenceError("tridiagonal QL did not converge", 0.0);
                double g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
                double r = std::hypot(g, 1.0);
                g = diag[mm] - diag[l] + off[l] / (g + (g >= 0 ? std::fabs(r) : -std::fabs(r)));
                double s = 1.0, c = 1.0, p = 0.0;
                bool underflow = false;
                for (int i = mm - 1; i >= l; --i) {
                    double f = s * off[i], b = c * off[i];
                    r = std::hypot(f, g);
                    off[i + 1] = r;
                    if (r == 0.0) { diag[i + 1] -= p; off[mm] = 0.0; underflow = true; break; }
                    s = f / r; c = g / r;
                    g = diag[i + 1] - p;
                    r = (diag[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    diag[i + 1] = g + p;
                    g = c * r - b;
                    for (int k = 0; k < jn; ++k) {
                        const std::size_t ki1 = static_cast<std::size_t>(i + 1) * jn + k;
                        const std::size_t ki = static_cast<std::size_t>(i) * jn + k;
                        f = z[ki1];
                        z[ki1] = s * z[ki] + c * f;
                        z[ki] = c * z[ki] - s * f;
                    }
                }
                if (underflow) continue;
                diag[l] -= p; off[l] = g; off[mm] = 0.0;
            }
        } while (mm != l);
    }
    // sort ascending, carrying eigenvectors
    std::vector<int> order(static_cast<std::size_t>(jn));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return diag[a] < diag[b]; });
    std::vector<double> d2(static_cast<std::size_t>(jn));
    std::vector<double> z2(z.size());
    for (int c = 0; c < jn; ++c) {
        d2[c] = diag[order[c]];
        std::copy_n(z.begin() + static_cast<std::size_t>(order[c]) * jn, jn,
                    z2.begin() + static_cast<std::size_t>(c) * jn);
    }
    diag.swap(d2);
    z.swap(z2);
}

// Cyclic Jacobi eigensolver for a dense symmetric matrix (column-major).
// Good enough for the sketch-sized problems this file creates (rank <= ~256).
inline void jacobi_eigh(std::vector<double>& a, int n, std::vector<double>& vals,
                        std::vector<double>& vecs) {
    vecs.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) vecs[static_cast<std::size_t>(i) * n + i] = 1.0;
    auto at = [&](int r, int c) -> double& { return a[static_cast<std::size_t>(c) * n + r]; };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double offnorm = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) offnorm += at(p, q) * at(p, q);
        if (offnorm < 1e-28 * static_cast<double>(n) * n) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = at(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const std::size_t kp = static_cast<std::size_t>(p) * n + k;
                    const std::size_t kq = static_cast<std::size_t>(q) * n + k;
                    const double vkp = vecs[kp], vkq = vecs[kq];
                    vecs[kp] = c * vkp - s * vkq;
                    vecs[kq] = s * vkp + c * vkq;
                }
            }
        }
    }
    vals.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) vals[i] = at(i, i);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int x, int y) { return vals[x] < vals[y]; });
    std::vector<double> v2(static_cast<std::size_t>(n));
    std::vector<double> e2(vecs.size());
    for (int c = 0; c < n; ++c) {
        v2[c] = vals[order[c]];
        std::copy_n(vecs.begin() + static_cast<std::size_t>(order[c]) * n, n,
                    e2.begin() + static_cast<std::size_t>(c) * n);
    }
    vals.swap(v2);
    vecs.swap(e2);
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline void sign_normalize(std::vector<double>& v) {
    const double scale = norm(v);
    for (double x : v)
        if (std::fabs(x) > 1e-12 * scale) {
            if (x < 0)
                for (double& y : v) y = -y;
            return;
        }
}

// deterministic start vector, decorrelated across indices and attempts
inline std::vector<double> seeded_vector(std::int64_t n, std::uint64_t salt) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        std::uint64_t s = 0x9e3779b97f4a7c15ULL ^ (salt * 0x100000001b3ULL) ^
                          static_cast<std::uint64_t>(i);
        v[static_cast<std::size_t>(i)] = 2.0 * (static_cast<double>(splitmix64(s) >> 11) *
                                                 0x1.0p-53) - 1.0;
    }
    return v;
}

}  // namespace detail

// Second-smallest eigenpair of the normalized Laplacian, by Lanczos on the
// deflated operator A = L_tilde + 3*u*u^T where u = D^{1/2}1 normalized. The
// known null vector is shifted well above the rest of the spectrum (which
// lives in [0, 2]), so the smallest eigenvalue of A is exactly lambda2 and
// plain smallest-pair Lanczos applies. Full reorthogonalization (CGS2) keeps
// the growing basis clean; n is desk-scale so the O(n*J^2) cost is acceptable.
inline std::pair<double, std::vector<double>> fiedler_pair(const DependencyGraph& g,
                                                           double tol = 1e-9,
                                                           int max_iter = 4000) {
    if (!(tol > 0)) throw ArgumentError("fiedler_pair: tol must be positive");
    const std::int64_t n = g.n_nodes;
    if (n < 2) throw ArgumentError("fiedler_pair: need at least 2 nodes");
    if (!is_connected(g)) throw StructuralError("fiedler_pair: graph is disconnected");

    std::vector<double> u(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i)
        u[static_cast<std::size_t>(i)] = std::sqrt(static_cast<double>(g.degrees[i]));
    const double un = detail::norm(u);
    for (double& x : u) x /= un;

    auto apply_A = [&](const std::vector<double>& x, std::vector<double>& y) {
        laplacian_matvec_into(g, x.data(), y.data());
        const double proj = detail::dot(u, x);
        for (std::int64_t i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] += 3.0 * proj * u[static_cast<std::size_t>(i)];
    };

    const int basis_cap = static_cast<int>(std::min<std::int64_t>(n, max_iter));
    std::vector<std::vector<double>> basis;
    basis.reserve(static_cast<std::size_t>(std::min(basis_cap, 512)));
    std::vector<double> alpha, beta;

    auto reorth = [&](std::vector<double>& w) {
        for (int pass = 0; pass < 2; ++pass) {
            const double pu = detail::dot(u, w);
            for (std::int64_t i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] -= pu * u[static_cast<std::size_t>(i)];
            for (const auto& vb : basis) {
                const double p = detail::dot(vb, w);
                for (std::int64_t i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] -= p * vb[static_cast<std::size_t>(i)];
            }
        }
    };

    std::vector<double> v = detail::seeded_vector(n, 1);
    reorth(v);
    double vn = detail::norm(v);
    if (vn < 1e-14) throw ConvergenceError("fiedler_pair: degenerate start vector", 1.0);
    for (double& x : v) x /= vn;
    basis.push_back(v);

    std::vector<double> w(static_cast<std::size_t>(n));
    std::vector<double> ritz, zmat, offcopy;
    double last_residual = std::numeric_limits<double>::infinity();
    int fresh = 2;
    int next_check = 10;  // tridiagonal solves get pricey late; widen the cadence

    for (int j = 0; j < basis_cap; ++j) {
        apply_A(basis.back(), w);
        const double a = detail::dot(basis.back(), w);
        alpha.push_back(a);
        reorth(w);
        double b = detail::norm(w);

        const int jn = static_cast<int>(alpha.size());
        const bool exhausted = (jn >= basis_cap) || (jn >= n - 1);
        bool check_now = exhausted || jn >= next_check || b < 1e-13;
        if (jn >= next_check) next_check = jn + std::max(10, jn / 5);
        double est = std::numeric_limits<double>::infinity();
        if (check_now && jn >= 1) {
            ritz = alpha;
            offcopy = beta;
            detail::tridiag_eig(ritz, offcopy, zmat, jn);
            est = b * std::fabs(zmat[static_cast<std::size_t>(jn) - 1]);  // bottom pair
            if (est <= 0.5 * tol || exhausted || b < 1e-13) {
                std::vector<double> cand(static_cast<std::size_t>(n), 0.0);
                for (int t = 0; t < jn; ++t) {
                    const double coef = zmat[static_cast<std::size_t>(t)];
                    const auto& vb = basis[static_cast<std::size_t>(t)];
                    for (std::int64_t i = 0; i < n; ++i) cand[static_cast<std::size_t>(i)] += coef * vb[static_cast<std::size_t>(i)];
                }
                const double cn = detail::norm(cand);
                for (double& x : cand) x /= cn;
                std::vector<double> res(static_cast<std::size_t>(n));
                laplacian_matvec_into(g, cand.data(), res.data());
                const double lam = ritz[0];
                for (std::int64_t i = 0; i < n; ++i) res[static_cast<std::size_t>(i)] -= lam * cand[static_cast<std::size_t>(i)];
                last_residual = detail::norm(res);
                if (last_residual <= tol) {
                    detail::sign_normalize(cand);
                    return {lam, cand};
                }
                if (exhausted)
                    throw ConvergenceError("fiedler_pair: basis exhausted before reaching tol",
                                           last_residual);
            }
        }

        if (b < 1e-13) {
            // invariant subspace that does not yet contain the bottom pair:
            // inject a fresh deterministic direction and continue
            w = detail::seeded_vector(n, static_cast<std::uint64_t>(fresh++));
            reorth(w);
            b = detail::norm(w);
            if (b < 1e-13)
                throw ConvergenceError("fiedler_pair: no directions left to explore",
                                       last_residual);
        }
        beta.push_back(b);
        for (double& x : w) x /= b;
        basis.push_back(w);
    }
    throw ConvergenceError("fiedler_pair: max_iter reached", last_residual);
}

// Landmark-sketched Fiedler pair. The classical submatrix Nystrom collapses
// on sparse unweighted k-NN graphs (landmark-landmark blocks are mostly
// empty), so the sketch instead smooths landmark indicators through q passes
// of (S + I), compresses them to `rank` mixed columns, and eigensolves the
// shifted affinity in that basis: for the exact operator, eig(S + I) in a
// captured invariant subspace reproduces lambda2 = 2 - mu2 exactly. Work is
// O(nnz*q*rank + n*rank^2), inside the O(l^2 n) budget.
inline std::tuple<double, std::vector<double>, NystromSketch>
nystrom_fiedler(const DependencyGraph& g, std::int64_t l, std::uint64_t seed,
                int q_passes = 16, std::int64_t rank_cap = 256) {
    const std::int64_t n = g.n_nodes;
    if (l < 2 || l > n) throw ArgumentError("nystrom_fiedler: need 2 <= l <= n");
    if (!is_connected(g)) throw StructuralError("nystrom_fiedler: graph is disconnected");

    Rng rng(derive_seed(seed, {0x4e59, static_cast<std::uint64_t>(l)}));

    // distinct landmarks by partial Fisher-Yates
    std::vector<std::int64_t> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    for (std::int64_t i = 0; i < l; ++i) {
        const std::int64_t j = i + static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(n - i)));
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    std::vector<std::int64_t> landmarks(pool.begin(), pool.begin() + l);
    std::sort(landmarks.begin(), landmarks.end());

    const std::int64_t r = std::min(l, rank_cap);
    std::vector<double> B(static_cast<std::size_t>(n) * r, 0.0);
    for (std::int64_t i = 0; i < l; ++i)
        for (std::int64_t c = 0; c < r; ++c)
            B[static_cast<std::size_t>(c) * n + landmarks[static_cast<std::size_t>(i)]] += rng.next_normal();

    std::vector<double> tmp(static_cast<std::size_t>(n));
    for (int pass = 0; pass < q_passes; ++pass) {
        for (std::int64_t c = 0; c < r; ++c) {
            double* col = B.data() + static_cast<std::size_t>(c) * n;
            detail::affinity_matvec(g, col, tmp.data());
            for (std::int64_t i = 0; i < n; ++i) col[i] += tmp[i];
        }
    }

    // modified Gram-Schmidt; drop columns that collapse
    std::vector<double> Q;
    Q.reserve(B.size());
    std::int64_t rq = 0;
    for (std::int64_t c = 0; c < r; ++c) {
        std::vector<double> col(B.begin() + static_cast<std::size_t>(c) * n,
                                B.begin() + static_cast<std::size_t>(c + 1) * n);
        for (std::int64_t k = 0; k < rq; ++k) {
            const double* qk = Q.data() + static_cast<std::size_t>(k) * n;
            double p = 0.0;
            for (std::int64_t i = 0; i < n; ++i) p += qk[i] * col[static_cast<std::size_t>(i)];
            for (std::int64_t i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] -= p * qk[i];
        }
        const double cn = detail::norm(col);
        if (cn > 1e-10) {
            for (double& x : col) x /= cn;
            Q.insert(Q.end(), col.begin(), col.end());
            ++rq;
        }
    }
    if (rq < 2) throw ConvergenceError("nystrom_fiedler: sketch basis collapsed", 1.0);

    // C = (S + I) Q, W = Q^T C
    std::vector<double> C(static_cast<std::size_t>(n) * rq);
    for (std::int64_t c = 0; c < rq; ++c) {
        const double* qc = Q.data() + static_cast<std::size_t>(c) * n;
        double* cc = C.data() + static_cast<std::size_t>(c) * n;
        detail::affinity_matvec(g, qc, cc);
        for (std::int64_t i = 0; i < n; ++i) cc[i] += qc[i];
    }
    std::vector<double> W(static_cast<std::size_t>(rq) * rq);
    for (std::int64_t a = 0; a < rq; ++a)
        for (std::int64_t b = a; b < rq; ++b) {
            double s = 0.0;
            const double* qa = Q.data() + static_cast<std::size_t>(a) * n;
            const double* cb = C.data() + static_cast<std::size_t>(b) * n;
            for (std::int64_t i = 0; i < n; ++i) s += qa[i] * cb[i];
            W[static_cast<std::size_t>(b) * rq + a] = s;
            W[static_cast<std::size_t>(a) * rq + b] = s;
        }

    double trace = 0.0;
    for (std::int64_t a = 0; a < rq; ++a) trace += W[static_cast<std::size_t>(a) * rq + a];
    const double eps = 1e-8 * trace / static_cast<double>(l);
    NystromSketch sketch;
    sketch.landmarks = landmarks;
    sketch.c_block = C;
    sketch.w_ll = W;
    sketch.rank = rq;
    sketch.ridge_eps = eps;

    std::vector<double> Wr = W;
    for (std::int64_t a = 0; a < rq; ++a) Wr[static_cast<std::size_t>(a) * rq + a] += eps;
    std::vector<double> ev, U;
    detail::jacobi_eigh(Wr, static_cast<int>(rq), ev, U);
    const double evmax = std::max(ev.back(), 1e-300);

    std::vector<std::int64_t> keep;
    for (std::int64_t c = 0; c < rq; ++c)
        if (ev[static_cast<std::size_t>(c)] > evmax * 1e-12) keep.push_back(c);
    const auto kept = static_cast<std::int64_t>(keep.size());
    if (kept < 2) throw ConvergenceError("nystrom_fiedler: surrogate rank < 2", 1.0);

    // The whitened surrogate is Z Z^T with Z = C U W^{-1/2}; its nonzero
    // eigenvalues are those of M = Z^T Z, assembled from G = C^T C without
    // materializing the n x rank Z.
    std::vector<double> G(static_cast<std::size_t>(rq) * rq);
    for (std::int64_t a = 0; a < rq; ++a)
        for (std::int64_t b = a; b < rq; ++b) {
            double s = 0.0;
            const double* ca = C.data() + static_cast<std::size_t>(a) * n;
            const double* cb = C.data() + static_cast<std::size_t>(b) * n;
            for (std::int64_t i = 0; i < n; ++i) s += ca[i] * cb[i];
            G[static_cast<std::size_t>(b) * rq + a] = s;
            G[static_cast<std::size_t>(a) * rq + b] = s;
        }
    std::vector<double> GU(static_cast<std::size_t>(rq) * kept, 0.0);  // G * U_keep
    for (std::int64_t b = 0; b < kept; ++b) {
        const double* ub = U.data() + static_cast<std::size_t>(keep[static_cast<std::size_t>(b)]) * rq;
        double* out = GU.data() + static_cast<std::size_t>(b) * rq;
        for (std::int64_t t = 0; t < rq; ++t) {
            const double coef = ub[t];
            if (coef == 0.0) continue;
            const double* gcol = G.data() + static_cast<std::size_t>(t) * rq;
            for (std::int64_t a = 0; a < rq; ++a) out[a] += coef * gcol[a];
        }
    }
    std::vector<double> M(static_cast<std::size_t>(kept) * kept);
    for (std::int64_t a = 0; a < kept; ++a) {
        const double inva = 1.0 / std::sqrt(ev[static_cast<std::size_t>(keep[static_cast<std::size_t>(a)])]);
        const double* ua = U.data() + static_cast<std::size_t>(keep[static_cast<std::size_t>(a)]) * rq;
        for (std::int64_t b = a; b < kept; ++b) {
            const double invb = 1.0 / std::sqrt(ev[static_cast<std::size_t>(keep[static_cast<std::size_t>(b)])]);
            const double* gub = GU.data() + static_cast<std::size_t>(b) * rq;
            double s = 0.0;
            for (std::int64_t t = 0; t < rq; ++t) s += ua[t] * gub[t];
            s *= inva * invb;
            M[static_cast<std::size_t>(b) * kept + a] = s;
            M[static_cast<std::size_t>(a) * kept + b] = s;
        }
    }
    std::vector<double> mu, Y;
    detail::jacobi_eigh(M, static_cast<int>(kept), mu, Y);
    // mu ascending; the top value tracks the deflated direction (2), second
    // from the top carries lambda2
    const std::int64_t i2 = kept - 2;
    const double lambda2 = 2.0 - mu[static_cast<std::size_t>(i2)];

    // v2 = C * (U_keep * W^{-1/2} * y2)
    std::vector<double> coef(static_cast<std::size_t>(rq), 0.0);
    for (std::int64_t a = 0; a < kept; ++a) {
        const double inva = 1.0 / std::sqrt(ev[static_cast<std::size_t>(keep[static_cast<std::size_t>(a)])]);
        const double ya = Y[static_cast<std::size_t>(i2) * kept + a] * inva;
        const double* ua = U.data() + static_cast<std::size_t>(keep[static_cast<std::size_t>(a)]) * rq;
        for (std::int64_t t = 0; t < rq; ++t) coef[static_cast<std::size_t>(t)] += ya * ua[t];
    }
    std::vector<double> v2(static_cast<std::size_t>(n), 0.0);
    for (std::int64_t t = 0; t < rq; ++t) {
        const double ct = coef[static_cast<std::size_t>(t)];
        if (ct == 0.0) continue;
        const double* cc = C.data() + static_cast<std::size_t>(t) * n;
        for (std::int64_t i = 0; i < n; ++i) v2[static_cast<std::size_t>(i)] += ct * cc[i];
    }
    std::vector<double> u(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i)
        u[static_cast<std::size_t>(i)] = std::sqrt(static_cast<double>(g.degrees[i]));
    const double un = detail::norm(u);
    for (double& x : u) x /= un;
    const double pu = detail::dot(u, v2);
    for (std::int64_t i = 0; i < n; ++i) v2[static_cast<std::size_t>(i)] -= pu * u[static_cast<std::size_t>(i)];
    const double vn = detail::norm(v2);
    if (vn < 1e-12) throw ConvergenceError("nystrom_fiedler: Fiedler direction lost", 1.0);
    for (double& x : v2) x /= vn;
    detail::sign_normalize(v2);
    return {lambda2, std::move(v2), std::move(sketch)};
}

// Sum of the positive leading affinity eigenvalues over the largest one.
// Negative tail is discarded: the unweighted graph affinity is not PSD, and
// rank talk only makes sense for the nonnegative part.
inline double effective_rank(const DependencyGraph& g, int top_k) {
    const std::int64_t n = g.n_nodes;
    if (top_k < 1 || top_k > n) throw ArgumentError("effective_rank: need 1 <= top_k <= n");

    // plain Lanczos on S for the top of the spectrum; the extra basis width
    // matters because the leading affinity eigenvalues cluster near 1
    const int cap = static_cast<int>(std::min<std::int64_t>(n, std::max(4 * top_k + 40, 80)));
    std::vector<std::vector<double>> basis;
    std::vector<double> alpha, beta;
    std::vector<double> v = detail::seeded_vector(n, 77);
    double vn = detail::norm(v);
    for (double& x : v) x /= vn;
    basis.push_back(v);
    std::vector<double> w(static_cast<std::size_t>(n));
    std::vector<double> ritz, zmat, offcopy;

    for (int j = 0; j < cap; ++j) {
        detail::affinity_matvec(g, basis.back().data(), w.data());
        alpha.push_back(detail::dot(basis.back(), w));
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& vb : basis) {
                const double p = detail::dot(vb, w);
                for (std::int64_t i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] -= p * vb[static_cast<std::size_t>(i)];
            }
        const double b = detail::norm(w);
        const int jn = static_cast<int>(alpha.size());
        if (b < 1e-13 || jn >= cap || jn >= n) break;
        beta.push_back(b);
        for (double& x : w) x /= b;
        basis.push_back(w);
    }
    const int jn = static_cast<int>(alpha.size());
    ritz = alpha;
    offcopy = beta;
    detail::tridiag_eig(ritz, offcopy, zmat, jn);
    // ascending; take the top_k largest
    double lam1 = ritz[static_cast<std::size_t>(jn) - 1];
    if (lam1 <= 0) return 0.0;
    double s = 0.0;
    for (int t = 0; t < std::min(top_k, jn); ++t) {
        const double lam = ritz[static_cast<std::size_t>(jn) - 1 - t];
        if (lam > 0) s += lam;
    }
    return s / lam1;
}

namespace detail {

struct SubgraphView {
    DependencyGraph graph;
    std::vector<std::int64_t> to_parent;
};

inline SubgraphView induced_subgraph(const DependencyGraph& g,
                                     const std::vector<std::int64_t>& nodes) {
    SubgraphView out;
    out.to_parent = nodes;
    std::vector<std::int64_t> inv(static_cast<std::size_t>(g.n_nodes), -1);
    for (std::size_t k = 0; k < nodes.size(); ++k) inv[static_cast<std::size_t>(nodes[k])] = static_cast<std::int64_t>(k);
    out.graph.n_nodes = static_cast<std::int64_t>(nodes.size());
    for (std::int64_t i : nodes)
        for (std::int64_t e = g.adj_offsets[i]; e < g.adj_offsets[i + 1]; ++e) {
            const std::int64_t j = g.adj[e];
            if (j > i && inv[static_cast<std::size_t>(j)] >= 0)
                out.graph.edges.emplace_back(inv[static_cast<std::size_t>(i)], inv[static_cast<std::size_t>(j)]);
        }
    out.graph.finalize();
    return out;
}

inline std::vector<std::vector<std::int64_t>> component_lists(const DependencyGraph& g) {
    std::vector<std::int64_t> label(static_cast<std::size_t>(g.n_nodes), -1);
    std::vector<std::vector<std::int64_t>> comps;
    std::vector<std::int64_t> stack;
    for (std::int64_t s = 0; s < g.n_nodes; ++s) {
        if (label[static_cast<std::size_t>(s)] >= 0) continue;
        const auto id = static_cast<std::int64_t>(comps.size());
        comps.emplace_back();
        stack.push_back(s);
        label[static_cast<std::size_t>(s)] = id;
        while (!stack.empty()) {
            const std::int64_t i = stack.back();
            stack.pop_back();
            comps[static_cast<std::size_t>(id)].push_back(i);
            for (std::int64_t e = g.adj_offsets[i]; e < g.adj_offsets[i + 1]; ++e) {
                const std::int64_t j = g.adj[e];
                if (label[static_cast<std::size_t>(j)] < 0) {
                    label[static_cast<std::size_t>(j)] = id;
                    stack.push_back(j);
                }
            }
        }
    }
    return comps;
}

}  // namespace detail

// Algorithm: global Fiedler pair -> P_hat = min(ceil(c/lambda2), m) -> recursive
// balanced bisection, always splitting the largest current part at the median
// of its freshly computed local Fiedler values. Disconnected parts split by
// connected components instead (counted in fallback_splits). This entry point
// takes the pair precomputed so callers can reuse one eigensolve across
// several partition-count choices; route_partitions below bundles the solve.
inline SpectralPlan route_partitions_from(const DependencyGraph& g, double lambda2_hat,
                                          std::vector<double> fiedler, int m, double c,
                                          const RouteConfig& cfg = {}) {
    if (m < 1) throw ArgumentError("route_partitions: m must be >= 1");
    if (!(c > 0)) throw ArgumentError("route_partitions: c must be positive");
    const std::int64_t n = g.n_nodes;

    SpectralPlan plan;
    plan.method = cfg.method;
    plan.lambda2_hat = lambda2_hat;
    plan.fiedler = std::move(fiedler);

    int p_hat = m;
    if (plan.lambda2_hat > 0) {
        const double raw = std::ceil(c / plan.lambda2_hat);
        p_hat = raw >= static_cast<double>(m) ? m : static_cast<int>(raw);
    }
    p_hat = std::max(1, std::min<int>(p_hat, static_cast<int>(n)));
    if (cfg.forced_p > 0)
        p_hat = std::max(1, std::min({cfg.forced_p, m, static_cast<int>(n)}));
    plan.p_hat = p_hat;
    plan.assignment.assign(static_cast<std::size_t>(n), 0);
    if (p_hat == 1) {
        plan.cut_count = 0;
        return plan;
    }

    struct Part {
        std::vector<std::int64_t> nodes;   // parent ids
        std::vector<double> fiedler;       // local harmonic values, aligned with nodes
    };
    // splits order nodes by the harmonic coordinate D^{-1/2} v2 (the sweep
    // coordinate); the raw eigenvector dips at low-degree boundary nodes and
    // would misplace them near a cut
    std::vector<Part> parts;
    {
        Part root;
        root.nodes.resize(static_cast<std::size_t>(n));
        std::iota(root.nodes.begin(), root.nodes.end(), 0);
        root.fiedler.resize(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i)
            root.fiedler[static_cast<std::size_t>(i)] =
                plan.fiedler[static_cast<std::size_t>(i)] * g.inv_sqrt_deg[static_cast<std::size_t>(i)];
        parts.push_back(std::move(root));
    }

    auto fiedler_of = [&](const detail::SubgraphView& sub) -> std::vector<double> {
        auto [lam, vec] = fiedler_pair(sub.graph, cfg.tol, cfg.max_iter);
        (void)lam;
        for (std::size_t i = 0; i < vec.size(); ++i) vec[i] *= sub.graph.inv_sqrt_deg[i];
        return vec;
    };

    while (static_cast<int>(parts.size()) < p_hat) {
        std::size_t largest = 0;
        for (std::size_t i = 1; i < parts.size(); ++i)
            if (parts[i].nodes.size() > parts[largest].nodes.size()) largest = i;
        if (parts[largest].nodes.size() < 4) break;  // splitting would leave a one-node cell

        Part cur = std::move(parts[largest]);
        parts.erase(parts.begin() + static_cast<std::ptrdiff_t>(largest));

        auto sub = detail::induced_subgraph(g, cur.nodes);
        std::vector<std::vector<std::int64_t>> halves;
        if (!is_connected(sub.graph)) {
            ++plan.fallback_splits;
            auto comps = detail::component_lists(sub.graph);
            std::sort(comps.begin(), comps.end(),
                      [](const auto& a, const auto& b) { return a.size() > b.size(); });
            std::vector<std::int64_t> first, rest;
            for (std::size_t ci = 0; ci < comps.size(); ++ci)
                for (std::int64_t local : comps[ci])
                    (ci == 0 ? first : rest).push_back(cur.nodes[static_cast<std::size_t>(local)]);
            halves.push_back(std::move(first));
            halves.push_back(std::move(rest));
        } else {
            std::vector<double> local = cur.fiedler;
            if (local.size() != cur.nodes.size()) local = fiedler_of(sub);
            std::vector<std::size_t> order(cur.nodes.size());
            std::iota(order.begin(), order.end(), 0);
            if (cfg.split_by_sign) {
                std::vector<std::int64_t> neg, pos;
                for (std::size_t k = 0; k < cur.nodes.size(); ++k)
                    (local[k] < 0 ? neg : pos).push_back(cur.nodes[k]);
                if (neg.empty() || pos.empty()) {
                    // degenerate sign pattern; fall through to a median split
                    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                        if (local[a] != local[b]) return local[a] < local[b];
                        return cur.nodes[a] < cur.nodes[b];
                    });
                    const std::size_t half = (cur.nodes.size() + 1) / 2;
                    neg.clear(); pos.clear();
                    for (std::size_t k = 0; k < cur.nodes.size(); ++k)
                        (k < half ? neg : pos).push_back(cur.nodes[order[k]]);
                }
                halves.push_back(std::move(neg));
                halves.push_back(std::move(pos));
            } else {
                std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                    if (local[a] != local[b]) return local[a] < local[b];
                    return cur.nodes[a] < cur.nodes[b];
                });
                const std::size_t half = (cur.nodes.size() + 1) / 2;
                std::vector<std::int64_t> lo, hi;
                for (std::size_t k = 0; k < cur.nodes.size(); ++k)
                    (k < half ? lo : hi).push_back(cur.nodes[order[k]]);
                halves.push_back(std::move(lo));
                halves.push_back(std::move(hi));
            }
        }
        // the component fallback can strand a near-empty side (one isolated
        // node, say); every cell must hold at least two samples to seed a
        // bootstrap, so borrow from the other side before committing
        for (int side = 0; side < 2; ++side) {
            auto& small = halves[static_cast<std::size_t>(side)];
            auto& big = halves[static_cast<std::size_t>(1 - side)];
            while (small.size() < 2 && big.size() > 2) {
                small.push_back(big.back());
                big.pop_back();
            }
        }
        for (auto& h : halves) {
            Part p;
            std::sort(h.begin(), h.end());
            p.nodes = std::move(h);
            // local fiedler recomputed lazily next time this part is split
            parts.push_back(std::move(p));
        }
    }

    for (std::size_t pid = 0; pid < parts.size(); ++pid)
        for (std::int64_t node : parts[pid].nodes)
            plan.assignment[static_cast<std::size_t>(node)] = static_cast<std::int32_t>(pid);
    plan.p_hat = static_cast<int>(parts.size());

    plan.cut_count = cut_edges(g, plan.assignment);
    return plan;
}

inline SpectralPlan route_partitions(const DependencyGraph& g, int m, double c,
                                     const RouteConfig& cfg = {}) {
    const std::int64_t n = g.n_nodes;
    double lam = 0.0;
    std::vector<double> vec;
    int landmarks = 0;
    if (cfg.method == FiedlerMethod::Nystrom) {
        std::int64_t l = cfg.landmarks;
        if (l <= 0) {
            const double ln = std::log(std::max<double>(static_cast<double>(n), 2.0));
            l = std::min<std::int64_t>(n, static_cast<std::int64_t>(std::ceil(10.0 * ln * ln)));
        }
        auto [lam_n, vec_n, sketch] = nystrom_fiedler(g, l, cfg.seed);
        lam = lam_n;
        vec = std::move(vec_n);
        landmarks = static_cast<int>(l);
    } else {
        auto [lam_e, vec_e] = fiedler_pair(g, cfg.tol, cfg.max_iter);
        lam = lam_e;
        vec = std::move(vec_e);
    }
    SpectralPlan plan = route_partitions_from(g, lam, std::move(vec), m, c, cfg);
    plan.landmarks = landmarks;
    return plan;
}

inline std::string plan_to_csv(const SpectralPlan& plan) {
    std::ostringstream os;
    os << "index,partition,fiedler_value\n";
    os.precision(17);
    for (std::size_t i = 0; i < plan.assignment.size(); ++i)
        os << i << ',' << plan.assignment[i] << ',' << plan.fiedler[i] << '\n';
    return os.str();
}

inline std::string plan_summary_json(const SpectralPlan& plan, std::uint64_t seed = 0) {
    std::ostringstream os;
    os.precision(17);
    os << "{\"lambda2_hat\":" << plan.lambda2_hat << ",\"p_hat\":" << plan.p_hat
       << ",\"cut_count\":" << plan.cut_count << ",\"fallback_splits\":" << plan.fallback_splits
       << ",\"method\":\"" << (plan.method == FiedlerMethod::Nystrom ? "nystrom" : "exact_lanczos")
       << "\",\"seed\":" << seed << "}";
    return os.str();
}

}  // namespace specroute
