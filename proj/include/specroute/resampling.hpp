#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "specroute/errors.hpp"
#include "specroute/rng.hpp"
#include "specroute/spectral.hpp"

namespace specroute {

enum class SchemeKind {
    Uniform,
    LagThin,
    TmixThin,
    StationaryBoot,
    CircularBB,
    OracleBB,
    SpectralRoute,
};

struct ResamplingScheme {
    SchemeKind kind = SchemeKind::Uniform;
    long subsample_size = 0;      // expected per-learner size, typically n/m
    std::uint64_t seed = 0;
    long stride = 2;              // LagThin / TmixThin
    double mean_block = 1.0;      // StationaryBoot
    long block_len = 1;           // CircularBB / OracleBB
    const SpectralPlan* plan = nullptr;  // SpectralRoute
};

struct SubsampleSet {
    std::vector<std::vector<long>> per_learner;  // sorted multisets
    ResamplingScheme scheme;
    bool degenerate = false;      // e.g. thinning left a single-index pool
};

namespace detail {

// per-learner streams depend only on (seed, scheme tag, learner id), so
// reordering learners permutes outputs without changing them
inline Rng learner_rng(std::uint64_t seed, std::uint64_t tag, long j) {
    return Rng(derive_seed(seed, {tag, static_cast<std::uint64_t>(j)}));
}

inline void validate_nm(long n, long m, long size) {
    if (n < 1) throw ArgumentError("resampling: n must be >= 1");
    if (m < 1) throw ArgumentError("resampling: m must be >= 1");
    if (size < 1) throw ArgumentError("resampling: size must be >= 1");
}

}  // namespace detail

inline SubsampleSet draw_uniform(long n, long m, long size, std::uint64_t seed) {
    detail::validate_nm(n, m, size);
    SubsampleSet out;
    out.scheme.kind = SchemeKind::Uniform;
    out.scheme.subsample_size = size;
    out.scheme.seed = seed;
    out.per_learner.resize(static_cast<std::size_t>(m));
    for (long j = 0; j < m; ++j) {
        auto rng = detail::learner_rng(seed, 0x756e6966, j);
        auto& idx = out.per_learner[static_cast<std::size_t>(j)];
        idx.resize(static_cast<std::size_t>(size));
        for (long t = 0; t < size; ++t)
            idx[static_cast<std::size_t>(t)] = static_cast<long>(rng.next_below(static_cast<std::uint64_t>(n)));
        std::sort(idx.begin(), idx.end());
    }
    return out;
}

// geometric-length blocks, uniform circular starts, truncated at size
inline SubsampleSet draw_stationary_bootstrap(long n, long m, long size, double mean_block,
                                              std::uint64_t seed) {
    detail::validate_nm(n, m, size);
    if (!(mean_block >= 1.0))
        throw ArgumentError("draw_stationary_bootstrap: mean_block must be >= 1");
    SubsampleSet out;
    out.scheme.kind = SchemeKind::StationaryBoot;
    out.scheme.subsample_size = size;
    out.scheme.seed = seed;
    out.scheme.mean_block = mean_block;
    out.per_learner.resize(static_cast<std::size_t>(m));
    const double p = 1.0 / mean_block;
    for (long j = 0; j < m; ++j) {
        auto rng = detail::learner_rng(seed, 0x73626f6f, j);
        auto& idx = out.per_learner[static_cast<std::size_t>(j)];
        idx.reserve(static_cast<std::size_t>(size));
        while (static_cast<long>(idx.size()) < size) {
            const long start = static_cast<long>(rng.next_below(static_cast<std::uint64_t>(n)));
            long len = static_cast<long>(rng.next_geometric(p));
            len = std::min<long>(len, size - static_cast<long>(idx.size()));
            for (long t = 0; t < len; ++t) idx.push_back((start + t) % n);
        }
        std::sort(idx.begin(), idx.end());
    }
    return out;
}

inline SubsampleSet draw_circular_block(long n, long m, long size, long block_len,
                                        std::uint64_t seed) {
    detail::validate_nm(n, m, size);
    if (block_len < 1) throw ArgumentError("draw_circular_block: block_len must be >= 1");
    SubsampleSet out;
    out.scheme.kind = SchemeKind::CircularBB;
    out.scheme.subsample_size = size;
    out.scheme.seed = seed;
    out.scheme.block_len = block_len;
    out.per_learner.resize(static_cast<std::size_t>(m));
    for (long j = 0; j < m; ++j) {
        auto rng = detail::learner_rng(seed, 0x63626273, j);
        auto& idx = out.per_learner[static_cast<std::size_t>(j)];
        idx.reserve(static_cast<std::size_t>(size));
        while (static_cast<long>(idx.size()) < size) {
            const long start = static_cast<long>(rng.next_below(static_cast<std::uint64_t>(n)));
            const long len = std::min<long>(block_len, size - static_cast<long>(idx.size()));
            for (long t = 0; t < len; ++t) idx.push_back((start + t) % n);
        }
        std::sort(idx.begin(), idx.end());
    }
    return out;
}

// whole contiguous blocks sampled with replacement (or dealt out disjointly);
// block count chosen so the expected index total is closest to `size`
inline SubsampleSet draw_block_bagging(long n, long m, long block_len, std::uint64_t seed,
                                       bool disjoint = false, long size = 0) {
    if (block_len < 1 || block_len > n)
        throw ArgumentError("draw_block_bagging: need 1 <= block_len <= n");
    if (size <= 0) size = std::max<long>(1, n / m);
    detail::validate_nm(n, m, size);

    const long n_blocks = (n + block_len - 1) / block_len;
    SubsampleSet out;
    out.scheme.kind = SchemeKind::OracleBB;
    out.scheme.subsample_size = size;
    out.scheme.seed = seed;
    out.scheme.block_len = block_len;
    out.per_learner.resize(static_cast<std::size_t>(m));

    auto emit_block = [&](std::vector<long>& idx, long b) {
        const long lo = b * block_len;
        const long hi = std::min(lo + block_len, n);
        for (long i = lo; i < hi; ++i) idx.push_back(i);
    };

    if (disjoint) {
        // deal a shuffled block order around the learners
        Rng rng(derive_seed(seed, {0x6f626267, 1}));
        std::vector<long> order(static_cast<std::size_t>(n_blocks));
        std::iota(order.begin(), order.end(), 0);
        for (long i = n_blocks - 1; i > 0; --i) {
            const long j = static_cast<long>(rng.next_below(static_cast<std::uint64_t>(i + 1)));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }
        for (long b = 0; b < n_blocks; ++b)
            emit_block(out.per_learner[static_cast<std::size_t>(b % m)], order[static_cast<std::size_t>(b)]);
        for (auto& idx : out.per_learner) std::sort(idx.begin(), idx.end());
        return out;
    }

    const long draws = std::max<long>(1, (2 * size + block_len) / (2 * block_len));
    for (long j = 0; j < m; ++j) {
        auto rng = detail::learner_rng(seed, 0x6f626267, j);
        auto& idx = out.per_learner[static_cast<std::size_t>(j)];
        idx.reserve(static_cast<std::size_t>(draws * block_len));
        for (long t = 0; t < draws; ++t)
            emit_block(idx, static_cast<long>(rng.next_below(static_cast<std::uint64_t>(n_blocks))));
        std::sort(idx.begin(), idx.end());
    }
    return out;
}

// keep every stride-th index, then bootstrap learners from the thinned pool;
// shrinking the pool is the point of this baseline, not a bug
inline SubsampleSet draw_thinned(long n, long m, long stride, std::uint64_t seed,
                                 long size = 0) {
    if (stride < 1) throw ArgumentError("draw_thinned: stride must be >= 1");
    if (n < 1 || m < 1) throw ArgumentError("draw_thinned: n and m must be >= 1");
    std::vector<long> pool;
    for (long i = 0; i < n; i += stride) pool.push_back(i);
    const long pool_n = static_cast<long>(pool.size());
    if (size <= 0) size = pool_n;

    SubsampleSet out;
    out.scheme.kind = SchemeKind::LagThin;
    out.scheme.subsample_size = size;
    out.scheme.seed = seed;
    out.scheme.stride = stride;
    out.degenerate = pool_n < 2;
    out.per_learner.resize(static_cast<std::size_t>(m));
    for (long j = 0; j < m; ++j) {
        auto rng = detail::learner_rng(seed, 0x7468696e, j);
        auto& idx = out.per_learner[static_cast<std::size_t>(j)];
        idx.resize(static_cast<std::size_t>(size));
        for (long t = 0; t < size; ++t)
            idx[static_cast<std::size_t>(t)] = pool[static_cast<std::size_t>(rng.next_below(static_cast<std::uint64_t>(pool_n)))];
        std::sort(idx.begin(), idx.end());
    }
    return out;
}

// floor(m/P) learners per partition, remainder dealt to the largest parts;
// each learner bootstraps to its own partition's full size
inline SubsampleSet draw_spectral_routed(const SpectralPlan& plan, long m, std::uint64_t seed) {
    if (m < 1) throw ArgumentError("draw_spectral_routed: m must be >= 1");
    const long p_hat = plan.p_hat;
    if (p_hat < 1 || p_hat > m)
        throw ArgumentError("draw_spectral_routed: need 1 <= p_hat <= m");

    std::vector<std::vector<long>> cells(static_cast<std::size_t>(p_hat));
    for (std::size_t i = 0; i < plan.assignment.size(); ++i)
        cells[static_cast<std::size_t>(plan.assignment[i])].push_back(static_cast<long>(i));
    for (const auto& cell : cells)
        if (cell.size() < 2)
            throw StructuralError("draw_spectral_routed: partition has fewer than 2 samples");

    // learner counts: base everywhere, one extra for the largest remainder parts
    std::vector<long> counts(static_cast<std::size_t>(p_hat), m / p_hat);
    long extra = m % p_hat;
    if (extra > 0) {
        std::vector<long> order(static_cast<std::size_t>(p_hat));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](long a, long b) {
            if (cells[static_cast<std::size_t>(a)].size() != cells[static_cast<std::size_t>(b)].size())
                return cells[static_cast<std::size_t>(a)].size() > cells[static_cast<std::size_t>(b)].size();
            return a < b;
        });
        for (long e = 0; e < extra; ++e) ++counts[static_cast<std::size_t>(order[static_cast<std::size_t>(e)])];
    }

    SubsampleSet out;
    out.scheme.kind = SchemeKind::SpectralRoute;
    out.scheme.seed = seed;
    out.scheme.plan = &plan;
    out.per_learner.reserve(static_cast<std::size_t>(m));
    long j = 0;
    for (long p = 0; p < p_hat; ++p) {
        const auto& cell = cells[static_cast<std::size_t>(p)];
        const auto cell_n = static_cast<std::uint64_t>(cell.size());
        for (long r = 0; r < counts[static_cast<std::size_t>(p)]; ++r, ++j) {
            auto rng = detail::learner_rng(seed, 0x726f7574, j);
            std::vector<long> idx(cell.size());
            for (auto& v : idx) v = cell[static_cast<std::size_t>(rng.next_below(cell_n))];
            std::sort(idx.begin(), idx.end());
            out.per_learner.push_back(std::move(idx));
        }
    }
    out.scheme.subsample_size = static_cast<long>(plan.assignment.size());
    return out;
}

}  // namespace specroute
