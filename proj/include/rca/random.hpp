// SPDX-License-Identifier: Apache-2.0
//
// Deterministic random helpers. Standard-library distributions are
// implementation-defined, so sampling is done from raw engine output to keep
// seeded runs byte-identical across toolchains.

#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

namespace rca::rng {

// Stream derivation for independent sub-generators from one user seed.
inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t stream_tag) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream_tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(std::mt19937_64& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

inline double uniform_in(std::mt19937_64& gen, double lo, double hi) {
    return lo + (hi - lo) * uniform_unit(gen);
}

// Circularly-symmetric complex Gaussian with unit total variance.
inline std::complex<double> standard_complex_gaussian(std::mt19937_64& gen) {
    const double u1 = uniform_unit(gen);
    const double u2 = uniform_unit(gen);
    const double radius = std::sqrt(-std::log1p(-u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
}

} // namespace rca::rng
