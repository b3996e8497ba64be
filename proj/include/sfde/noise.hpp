#pragma once

#include <sfde/errors.hpp>
#include <sfde/regimes.hpp>

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>

namespace sfde {

// ---------------------------------------------------------------------------
// Counter-based randomness (Philox 4x32-10, Salmon et al. 2011).  Every
// variate is a pure function of (key, counter), so trajectories are
// reproducible and independent of evaluation order or thread count.
//
// Stream layout, fixed by this library and documented in the README:
//   key     = (seed_lo32, seed_hi32)
//   counter = (index_lo32, index_hi32, sample, domain)
// where `index` enumerates variates within one sample's stream and `domain`
// separates Gaussian pairs (0) from regime uniforms (1).
// ---------------------------------------------------------------------------

namespace detail {

inline void philox_round(std::array<std::uint32_t, 4>& ctr, std::array<std::uint32_t, 2>& key) {
    const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += 0x9E3779B9u;
    key[1] += 0xBB67AE85u;
}

inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) philox_round(ctr, key);
    return ctr;
}

inline std::uint64_t join64(std::uint32_t lo, std::uint32_t hi) {
    return (std::uint64_t{hi} << 32) | lo;
}

} // namespace detail

/// Seed mixing for deriving independent sub-streams from one master seed.
inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    /// Uniform in [0, 1) from one Philox block.
    double uniform(std::uint32_t sample, std::uint64_t index, std::uint32_t domain) const {
        const auto r = block(sample, index, domain);
        return static_cast<double>(detail::join64(r[0], r[1]) >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; consecutive indices 2g, 2g+1 share
    /// one block (pair g), so each variate is addressable individually.
    double normal(std::uint32_t sample, std::uint64_t index, std::uint32_t domain) const {
        const auto r = block(sample, index >> 1, domain);
        // u1 in (0, 1] keeps the log finite; u2 in [0, 1).
        const double u1 = static_cast<double>((detail::join64(r[0], r[1]) >> 11) + 1) * 0x1.0p-53;
        const double u2 = static_cast<double>(detail::join64(r[2], r[3]) >> 11) * 0x1.0p-53;
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        return (index & 1) ? radius * std::sin(angle) : radius * std::cos(angle);
    }

private:
    std::array<std::uint32_t, 4> block(std::uint32_t sample, std::uint64_t index,
                                       std::uint32_t domain) const {
        return detail::philox4x32(
            {static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), sample, domain},
            {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)});
    }

    std::uint64_t seed_;
};

/// Per-sample uniform stream for regime sampling.
class RegimeUniforms final : public UniformStream {
public:
    RegimeUniforms(std::uint64_t regime_seed, std::uint32_t sample)
        : rng_(regime_seed), sample_(sample) {}

    double uniform(std::uint64_t step) const override { return rng_.uniform(sample_, step, 1); }

private:
    CounterRng rng_;
    std::uint32_t sample_;
};

// ---------------------------------------------------------------------------
// Brownian increments.  Increments are always generated on the finest
// configured grid; coarser resolutions are exact partial sums of the same
// stream, so runs at different step sizes share one Brownian path.
// ---------------------------------------------------------------------------

class NoiseSource {
public:
    NoiseSource(std::uint64_t noise_seed, int brownian_dim, int k1_fine)
        : rng_(noise_seed), m_(brownian_dim), k1_fine_(k1_fine) {
        if (brownian_dim < 1) throw ConfigError("Brownian dimension must be >= 1");
        if (k1_fine < 1) throw ConfigError("finest grid must have k1 >= 1");
    }

    int brownian_dim() const { return m_; }
    int k1_fine() const { return k1_fine_; }
    double dt_fine() const { return 1.0 / static_cast<double>(k1_fine_); }

    /// m x n matrix of N(0, dt_fine) increments for one sample.
    Eigen::MatrixXd fine_increments(std::uint32_t sample, long n_steps) const {
        Eigen::MatrixXd inc(m_, n_steps);
        const double scale = std::sqrt(dt_fine());
        for (long j = 0; j < n_steps; ++j)
            for (int d = 0; d < m_; ++d)
                inc(d, j) = scale * rng_.normal(sample, static_cast<std::uint64_t>(j) * m_ + d, 0);
        return inc;
    }

    /// Aggregates fine increments to a coarser dyadic level: column j of the
    /// result is the exact sum of fine columns [j*level, (j+1)*level).
    static Eigen::MatrixXd coarse_increments(const Eigen::MatrixXd& fine, int level) {
        if (level < 1 || (level & (level - 1)) != 0)
            throw NonDyadicError("coarsening level " + std::to_string(level) + " is not a power of two");
        if (fine.cols() % level != 0)
            throw NonDyadicError("fine step count " + std::to_string(fine.cols()) +
                                 " is not divisible by level " + std::to_string(level));
        if (level == 1) return fine;
        const Eigen::Index n = fine.cols() / level;
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(fine.rows(), n);
        for (Eigen::Index j = 0; j < n; ++j)
            for (int i = 0; i < level; ++i) out.col(j) += fine.col(j * level + i);
        return out;
    }

private:
    CounterRng rng_;
    int m_;
    int k1_fine_;
};

} // namespace sfde
