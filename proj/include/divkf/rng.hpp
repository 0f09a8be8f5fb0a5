#pragma once

#include <cstdint>
#include <random>

namespace divkf {

/// All stochastic operations take an explicit generator; there is no ambient
/// randomness anywhere in the library.
using Rng = std::mt19937_64;

/// SplitMix64 mixing step.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives an independent stream seed from a master seed and a path of
/// indices (scenario id, sweep point, trial, ...). Used for the harness
/// seeding discipline: trial k sees seed = split(master, scenario, k).
template <typename... Ids>
std::uint64_t split_seed(std::uint64_t master, Ids... ids) {
    std::uint64_t s = mix64(master);
    ((s = mix64(s ^ static_cast<std::uint64_t>(ids))), ...);
    return s;
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

} // namespace divkf
