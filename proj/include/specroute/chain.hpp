#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "specroute/errors.hpp"
#include "specroute/rng.hpp"

namespace specroute {

// Synthetic dependent data: a Gaussian AR(1) feature chain with a fixed
// mean shift along a sign direction v and noisy linear labels, plus a 2D
// lattice variant with the same label model. The autoregression coefficient
// is tied to the requested mixing scale by lambda = 1 - 1/t_mix, so t_mix=1
// degenerates to i.i.d. draws.

enum class Topology { Path1D, Lattice2D };

struct ChainConfig {
    int t_mix = 1;
    int d0 = 1;
    long n = 2;
    double delta = 0.0;          // mean-shift magnitude, ||mu_v|| = delta
    std::vector<int> v;          // direction, entries in {-1,+1}; empty = all +1
    double eta_std = 1.0;        // label noise sd
    double drift_nu = 0.0;       // total accumulated drift; 0 = stationary
    Topology topology = Topology::Path1D;
    long side = 0;               // Lattice2D grid side, side*side == n
    std::uint64_t seed = 1;

    double lambda() const { return 1.0 - 1.0 / static_cast<double>(t_mix); }

    std::vector<int> direction() const {
        if (v.empty()) return std::vector<int>(static_cast<size_t>(d0), 1);
        return v;
    }

    void validate() const {
        if (t_mix < 1) throw ConfigError("t_mix must be >= 1");
        if (d0 < 1) throw ConfigError("d0 must be >= 1");
        if (n < 2) throw ConfigError("n must be >= 2");
        if (eta_std <= 0.0) throw ConfigError("eta_std must be > 0");
        if (delta < 0.0) throw ConfigError("delta must be >= 0");
        if (drift_nu < 0.0) throw ConfigError("drift_nu must be >= 0");
        if (!v.empty()) {
            if (static_cast<int>(v.size()) != d0)
                throw ConfigError("direction vector length must equal d0");
            for (int c : v)
                if (c != 1 && c != -1)
                    throw ConfigError("direction entries must be +1 or -1");
        }
        if (topology == Topology::Lattice2D && side * side != n)
            throw ConfigError("Lattice2D requires side^2 == n");
    }
};

struct Trajectory {
    std::vector<double> x;   // row-major n x d0
    std::vector<int8_t> y;   // labels, +1 / -1
    ChainConfig config;

    long n() const { return config.n; }
    int d0() const { return config.d0; }
    const double* row(long t) const { return x.data() + t * config.d0; }
};

inline int sign_pm(double z) { return z >= 0.0 ? 1 : -1; }

namespace detail {

inline void attach_labels(Trajectory& traj, Rng& rng) {
    const auto& cfg = traj.config;
    const auto dir = cfg.direction();
    traj.y.resize(static_cast<size_t>(cfg.n));
    for (long t = 0; t < cfg.n; ++t) {
        const double* xt = traj.row(t);
        double score = 0.0;
        for (int j = 0; j < cfg.d0; ++j) score += dir[j] * xt[j];
        traj.y[static_cast<size_t>(t)] =
            static_cast<int8_t>(sign_pm(score + cfg.eta_std * rng.next_normal()));
    }
}

} // namespace detail

inline Trajectory generate_ar1(const ChainConfig& config) {
    config.validate();
    if (config.topology != Topology::Path1D)
        throw ConfigError("generate_ar1 requires Path1D topology");

    const long n = config.n;
    const int d = config.d0;
    const double lam = config.lambda();
    const double innov = std::sqrt(1.0 - lam * lam);
    const auto dir = config.direction();
    const double vnorm = std::sqrt(static_cast<double>(d));

    Trajectory traj;
    traj.config = config;
    traj.x.resize(static_cast<size_t>(n) * d);

    Rng rng(config.seed);
    std::vector<double> xi(static_cast<size_t>(d));
    for (int j = 0; j < d; ++j) xi[j] = rng.next_normal();  // stationary start

    for (long t = 0; t < n; ++t) {
        if (t > 0)
            for (int j = 0; j < d; ++j)
                xi[j] = lam * xi[j] + innov * rng.next_normal();
        const double drift = config.drift_nu / static_cast<double>(n) * t;
        double* xt = traj.x.data() + t * d;
        for (int j = 0; j < d; ++j)
            xt[j] = config.delta * dir[j] / vnorm + drift + xi[j];
    }
    detail::attach_labels(traj, rng);
    return traj;
}

// Lattice field: separable conditional autoregression, one AR(1) sweep along
// rows and one along columns with the same coefficient lambda = 1 - 1/t_mix.
// The resulting latent covariance is lambda^{|di|} * lambda^{|dj|}, so the
// per-axis correlation length is t_mix cells and t_mix=1 decouples the field.
inline Trajectory generate_lattice(const ChainConfig& config) {
    config.validate();
    if (config.topology != Topology::Lattice2D)
        throw ConfigError("generate_lattice requires Lattice2D topology");

    const long side = config.side;
    const int d = config.d0;
    const double lam = config.lambda();
    const double innov = std::sqrt(1.0 - lam * lam);
    const auto dir = config.direction();
    const double vnorm = std::sqrt(static_cast<double>(d));

    Trajectory traj;
    traj.config = config;
    traj.x.resize(static_cast<size_t>(config.n) * d);

    Rng rng(config.seed);
    // Row sweep: each grid row is an independent stationary AR(1) in the
    // column index. Column sweep then couples the rows coordinatewise.
    std::vector<double> field(static_cast<size_t>(config.n) * d);
    for (long i = 0; i < side; ++i) {
        double* row0 = field.data() + i * side * d;
        for (int j = 0; j < d; ++j) row0[j] = rng.next_normal();
        for (long c = 1; c < side; ++c) {
            double* cur = field.data() + (i * side + c) * d;
            const double* prev = field.data() + (i * side + c - 1) * d;
            for (int j = 0; j < d; ++j)
                cur[j] = lam * prev[j] + innov * rng.next_normal();
        }
    }
    for (long c = 0; c < side; ++c) {
        for (long i = 1; i < side; ++i) {
            double* cur = field.data() + (i * side + c) * d;
            const double* up = field.data() + ((i - 1) * side + c) * d;
            for (int j = 0; j < d; ++j)
                cur[j] = lam * up[j] + innov * cur[j];
        }
    }
    for (long idx = 0; idx < config.n; ++idx) {
        double* xt = traj.x.data() + idx * d;
        const double* f = field.data() + idx * d;
        for (int j = 0; j < d; ++j)
            xt[j] = config.delta * dir[j] / vnorm + f[j];
    }
    detail::attach_labels(traj, rng);
    return traj;
}

inline Trajectory generate(const ChainConfig& config) {
    return config.topology == Topology::Path1D ? generate_ar1(config)
                                               : generate_lattice(config);
}

// Standard normal CDF.
inline double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

// Monte-Carlo Bayes risk under the stationary law. Conditional on the score
// s = <v,X>, the label flips the Bayes prediction with probability
// Phi(-|s|/eta), so we average that flip probability over stationary draws
// of X; this keeps the estimator unbiased while removing the label-noise
// component of the Monte-Carlo variance.
inline std::pair<double, double> bayes_risk_oracle(const ChainConfig& config,
                                                   long mc_draws) {
    config.validate();
    if (mc_draws < 10000) throw ArgumentError("bayes_risk_oracle needs mc_draws >= 1e4");
    Rng rng(derive_seed(config.seed, {0xBA1E5u}));
    const double mean = config.delta * std::sqrt(static_cast<double>(config.d0));
    const double sd = std::sqrt(static_cast<double>(config.d0));
    double sum = 0.0, sumsq = 0.0;
    for (long i = 0; i < mc_draws; ++i) {
        const double s = mean + sd * rng.next_normal();
        const double p = normal_cdf(-std::fabs(s) / config.eta_std);
        sum += p;
        sumsq += p * p;
    }
    const double est = sum / static_cast<double>(mc_draws);
    const double var = std::max(0.0, sumsq / static_cast<double>(mc_draws) - est * est);
    const double se = std::sqrt(var / static_cast<double>(mc_draws));
    return {est, se};
}

// ---- persistence ----
// Columnar binary: a text header of key-value lines terminated by a blank
// line, then n*d0 little-endian doubles, then n int8 labels.

inline void save_trajectory(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for write: " + path);
    const auto& c = traj.config;
    std::ostringstream head;
    head << "format=specroute-traj-v1\n"
         << "n=" << c.n << "\nd0=" << c.d0 << "\nt_mix=" << c.t_mix
         << "\ndelta=" << c.delta << "\neta_std=" << c.eta_std
         << "\ndrift_nu=" << c.drift_nu << "\nseed=" << c.seed
         << "\ntopology=" << (c.topology == Topology::Path1D ? "path1d" : "lattice2d")
         << "\nside=" << c.side << "\nv=";
    for (int b : c.direction()) head << (b > 0 ? '+' : '-');
    head << "\n\n";
    const std::string h = head.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    out.write(reinterpret_cast<const char*>(traj.x.data()),
              static_cast<std::streamsize>(traj.x.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(traj.y.data()),
              static_cast<std::streamsize>(traj.y.size()));
    if (!out) throw IoError("write failed: " + path);
}

inline Trajectory load_trajectory(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    ChainConfig cfg;
    std::string line;
    bool tagged = false;
    while (std::getline(in, line) && !line.empty()) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("malformed header line: " + line);
        const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "format") tagged = (val == "specroute-traj-v1");
        else if (key == "n") cfg.n = std::stol(val);
        else if (key == "d0") cfg.d0 = std::stoi(val);
        else if (key == "t_mix") cfg.t_mix = std::stoi(val);
        else if (key == "delta") cfg.delta = std::stod(val);
        else if (key == "eta_std") cfg.eta_std = std::stod(val);
        else if (key == "drift_nu") cfg.drift_nu = std::stod(val);
        else if (key == "seed") cfg.seed = std::stoull(val);
        else if (key == "side") cfg.side = std::stol(val);
        else if (key == "topology")
            cfg.topology = (val == "lattice2d") ? Topology::Lattice2D : Topology::Path1D;
        else if (key == "v") {
            cfg.v.clear();
            for (char ch : val) cfg.v.push_back(ch == '-' ? -1 : 1);
        }
    }
    if (!tagged) throw IoError("not a trajectory file: " + path);
    Trajectory traj;
    traj.config = cfg;
    traj.x.resize(static_cast<size_t>(cfg.n) * cfg.d0);
    traj.y.resize(static_cast<size_t>(cfg.n));
    in.read(reinterpret_cast<char*>(traj.x.data()),
            static_cast<std::streamsize>(traj.x.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(traj.y.data()),
            static_cast<std::streamsize>(traj.y.size()));
    if (!in) throw IoError("truncated trajectory file: " + path);
    return traj;
}

inline void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for write: " + path);
    out << "t";
    for (int j = 0; j < traj.d0(); ++j) out << ",x" << j;
    out << ",y\n";
    for (long t = 0; t < traj.n(); ++t) {
        out << t;
        const double* xt = traj.row(t);
        for (int j = 0; j < traj.d0(); ++j) out << ',' << xt[j];
        out << ',' << static_cast<int>(traj.y[static_cast<size_t>(t)]) << '\n';
    }
}

} // namespace specroute
