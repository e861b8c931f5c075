// Counter-based normal sampling: every increment is a pure function of
// (seed, path, step, component), so ensembles are reproducible bit-for-bit
// for any evaluation order or thread count.
#pragma once

#include <cmath>
#include <cstdint>

namespace mvbsde {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix4(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                          std::uint64_t c) {
    std::uint64_t h = splitmix64(seed ^ 0xA24BAED4963EE407ULL);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ (b + 0x9552FB43C9D59A7FULL));
    h = splitmix64(h ^ (c + 0x71C72D1F5E39F2A1ULL));
    return h;
}

// uniform in (0,1]: never returns 0, so log() below is safe
inline double to_unit(std::uint64_t h) {
    return (static_cast<double>(h >> 11) + 1.0) * (1.0 / 9007199254740992.0);
}

}  // namespace detail

// Standard normal draw for Brownian increment (path, step, component).
inline double normal_sample(std::uint64_t seed, std::uint64_t path, std::uint64_t step,
                            std::uint64_t component) {
    const std::uint64_t key = (step << 20) ^ component;
    const double u1 = detail::to_unit(detail::mix4(seed, path, key, 0x1ULL));
    const double u2 = detail::to_unit(detail::mix4(seed, path, key, 0x2ULL));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

// Auxiliary uniform stream (test-sample generation, grid scans).
inline double uniform_sample(std::uint64_t seed, std::uint64_t idx, std::uint64_t slot = 0) {
    return detail::to_unit(detail::mix4(seed, idx, slot, 0x3ULL));
}

}  // namespace mvbsde
