#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace prseg {

// All randomness flows through an explicit engine passed by the caller.
// Distribution transforms are hand-rolled so that a given seed produces
// the same stream on every platform (std:: distributions are
// implementation-defined).
using Rng = std::mt19937_64;

inline Rng seeded(std::uint64_t seed) { return Rng(seed); }

// splitmix64 finalizer; used to derive independent streams (per image,
// per split) from one master seed.
inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a + 0x9E3779B97F4A7C15ull * (b + 1);
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}

// Uniform in the open interval (0, 1).
inline double uniform01(Rng& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

// Inclusive range [lo, hi].
inline int uniform_int(Rng& rng, int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(rng() % span);
}

// Standard normal via Box-Muller; the sine half is discarded so one call
// consumes exactly two engine words.
inline double normal(Rng& rng) {
    const double u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline double gumbel(Rng& rng) {
    return -std::log(-std::log(uniform01(rng)));
}

}  // namespace prseg
