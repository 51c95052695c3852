#pragma once

#include <cmath>
#include <cstdint>
#include <array>
#include <limits>

namespace specroute {

// Counter-free splittable RNG. xoshiro256++ core seeded through splitmix64,
// so any number of independent per-learner / per-cell streams can be derived
// from a master seed without coordination. Everything here is deliberately
// self-contained: std::normal_distribution is not bit-stable across standard
// library implementations, and frozen test values require that the same seed
// yields the same trajectory on every platform.

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Hash a list of stream coordinates (cell index, seed index, learner id, ...)
// into a single sub-seed. Order-sensitive by construction.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = master;
    splitmix64(s);
    for (std::uint64_t p : path) {
        s ^= p + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
        splitmix64(s);
    }
    return splitmix64(s);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0x853c49e6748fea9bULL) { reseed(seed); }

    void reseed(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
        cached_normal_valid_ = false;
    }

    // Derive an independent child stream; used for per-learner randomness.
    Rng split(std::uint64_t tag) const {
        std::uint64_t mix = state_[0] ^ (state_[2] * 0xda942042e4dd58b5ULL);
        return Rng(derive_seed(mix, {tag}));
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0, 1), 53-bit mantissa.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform on (0, 1]; safe as a log() argument.
    double next_double_pos() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    // Lemire's nearly-divisionless bounded integer draw on [0, bound).
    std::uint64_t next_below(std::uint64_t bound) {
        auto mul = [this, bound] {
            return static_cast<unsigned __int128>(next_u64()) * bound;
        };
        unsigned __int128 m = mul();
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < bound) {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (lo < threshold) {
                m = mul();
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    // Standard normal via Box-Muller; second deviate cached.
    double next_normal() {
        if (cached_normal_valid_) {
            cached_normal_valid_ = false;
            return cached_normal_;
        }
        const double u1 = next_double_pos();
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        cached_normal_ = r * std::sin(theta);
        cached_normal_valid_ = true;
        return r * std::cos(theta);
    }

    // Geometric on {1, 2, ...} with success probability p, mean 1/p.
    std::uint64_t next_geometric(double p) {
        if (p >= 1.0) return 1;
        const double draw = std::floor(std::log(next_double_pos()) / std::log1p(-p));
        if (draw >= static_cast<double>(std::numeric_limits<std::int64_t>::max()))
            return std::numeric_limits<std::int64_t>::max();
        return static_cast<std::uint64_t>(draw) + 1;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::array<std::uint64_t, 4> state_{};
    double cached_normal_ = 0.0;
    bool cached_normal_valid_ = false;
};

} // namespace specroute
