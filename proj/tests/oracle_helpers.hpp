#pragma once

// Independent reference implementations for the test suite. Everything here
// goes through Eigen dense linear algebra or plain quadrature, deliberately
// sharing no code path with the library's own solvers.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "specroute/depgraph.hpp"

namespace oracle {

// Dense normalized-Laplacian eigendecomposition. Returns all eigenvalues
// ascending plus the eigenvector for the second-smallest.
struct DenseSpectrum {
    std::vector<double> eigenvalues;
    std::vector<double> fiedler;
};

inline DenseSpectrum dense_fiedler(const specroute::DependencyGraph& g) {
    const auto n = static_cast<Eigen::Index>(g.n_nodes);
    Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(n, n);
    for (const auto& [i, j] : g.edges) {
        adj(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
        adj(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = 1.0;
    }
    Eigen::VectorXd deg = adj.rowwise().sum();
    Eigen::VectorXd dinv = deg.cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd lap = Eigen::MatrixXd::Identity(n, n) - dinv.asDiagonal() * adj * dinv.asDiagonal();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lap);
    DenseSpectrum out;
    out.eigenvalues.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + n);
    const Eigen::VectorXd v = solver.eigenvectors().col(1);
    out.fiedler.assign(v.data(), v.data() + n);
    return out;
}

// Gauss quadrature for the label-noise Bayes risk: the oracle rule errs with
// probability Phi(-|s| / eta) at score s, and s is Gaussian under the chain's
// stationary law. Simpson on +-10 standard deviations is plenty at double
// precision for these smooth integrands.
inline double bayes_risk_quadrature(double delta, double eta_std, int d0) {
    const double mean = delta * std::sqrt(static_cast<double>(d0));
    const double sd = std::sqrt(static_cast<double>(d0));
    auto phi = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
    const int steps = 4000;
    const double lo = mean - 10.0 * sd, hi = mean + 10.0 * sd;
    const double h = (hi - lo) / steps;
    double acc = 0.0;
    for (int i = 0; i <= steps; ++i) {
        const double s = lo + h * i;
        const double dens = std::exp(-0.5 * (s - mean) * (s - mean) / (sd * sd)) /
                            (sd * std::sqrt(2.0 * 3.14159265358979323846));
        const double err = phi(-std::abs(s) / eta_std);
        const double w = (i == 0 || i == steps) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        acc += w * dens * err;
    }
    return acc * h / 3.0;
}

// chi-square goodness-of-fit against given expected counts, with the p-value
// from the Wilson-Hilferty cube-root normal approximation
inline double chi_square_stat(const std::vector<double>& observed,
                              const std::vector<double>& expected) {
    double stat = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        const double diff = observed[i] - expected[i];
        stat += diff * diff / expected[i];
    }
    return stat;
}

inline double chi_square_pvalue(double stat, int dof) {
    const double k = static_cast<double>(dof);
    const double z = (std::cbrt(stat / k) - (1.0 - 2.0 / (9.0 * k))) / std::sqrt(2.0 / (9.0 * k));
    return 0.5 * std::erfc(z / std::sqrt(2.0));
}

// exhaustive k-nearest-neighbour sets, squared Euclidean, index tiebreak
inline std::vector<std::vector<long>> brute_force_knn(const std::vector<double>& x, long n, int d,
                                                      int k) {
    std::vector<std::vector<long>> out(static_cast<std::size_t>(n));
    std::vector<std::pair<double, long>> dist(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        for (long j = 0; j < n; ++j) {
            double sq = 0.0;
            for (int c = 0; c < d; ++c) {
                const double diff = x[static_cast<std::size_t>(i * d + c)] -
                                    x[static_cast<std::size_t>(j * d + c)];
                sq += diff * diff;
            }
            dist[static_cast<std::size_t>(j)] = {sq, j};
        }
        dist[static_cast<std::size_t>(i)].first = std::numeric_limits<double>::infinity();
        std::sort(dist.begin(), dist.end());
        for (int c = 0; c < k; ++c) out[static_cast<std::size_t>(i)].push_back(dist[static_cast<std::size_t>(c)].second);
    }
    return out;
}

// random connected graph for eigensolver cross-checks: a spanning path plus
// extra random edges, deduplicated
inline specroute::DependencyGraph random_connected_graph(long n, double extra_edge_rate,
                                                         unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<long> ndist(0, n - 1);

    std::vector<std::pair<long, long>> edges;
    for (long i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1});
    const long extra = static_cast<long>(extra_edge_rate * static_cast<double>(n));
    for (long e = 0; e < extra; ++e) {
        long a = ndist(rng), b = ndist(rng);
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        edges.push_back({a, b});
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    specroute::DependencyGraph g;
    g.n_nodes = n;
    g.edges = std::move(edges);
    g.finalize();
    return g;
}

}  // namespace oracle
