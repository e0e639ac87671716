#pragma once

#include <cstdint>
#include <random>

namespace stabinv {

using Rng = std::mt19937_64;

// Independent stream for item `index` of a run seeded with `seed`.
// Streams depend only on (seed, stream, index), never on scheduling.
inline Rng make_stream(std::uint64_t seed, std::uint64_t index, std::uint64_t stream = 0)
{
    std::seed_seq seq{
        static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
        static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
        static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

inline double uniform(Rng& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double standard_normal(Rng& rng)
{
    return std::normal_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace stabinv
