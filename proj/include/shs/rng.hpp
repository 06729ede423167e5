#pragma once

#include <cmath>
#include <cstdint>

// Counter-based random streams. Every draw is a pure function of its key, so
// results do not depend on call order and parallel producers stay reproducible.

namespace shs::rng {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives a stream key from two components.
inline std::uint64_t combine(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ (b + kGolden + (a << 6) + (a >> 2)));
}

inline std::uint64_t combine(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return combine(combine(a, b), c);
}

inline std::uint64_t combine(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
    return combine(combine(a, b, c), d);
}

/// Maps a hash to a double in the open interval (0, 1).
inline double to_unit(std::uint64_t h) {
    return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

inline double uniform(std::uint64_t key) { return to_unit(splitmix64(key)); }

/// One standard-normal deviate per key (Box-Muller, cosine branch).
inline double gaussian(std::uint64_t key) {
    const std::uint64_t h1 = splitmix64(key);
    const std::uint64_t h2 = splitmix64(h1 ^ kGolden);
    const double u1 = to_unit(h1);
    const double u2 = to_unit(h2);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

/// Unbiased draw from {0, ..., m-1}.
inline std::uint64_t bounded(std::uint64_t key, std::uint64_t m) {
    const std::uint64_t reject_below = (0 - m) % m; // 2^64 mod m
    for (std::uint64_t attempt = 0;; ++attempt) {
        const std::uint64_t h = splitmix64(combine(key, attempt));
        if (h >= reject_below) return h % m;
    }
}

// Stream tags keep independent consumers of one user seed from colliding.
inline constexpr std::uint64_t kStreamNoise = 0x01;
inline constexpr std::uint64_t kStreamSwitching = 0x02;
inline constexpr std::uint64_t kStreamDataset = 0x03;
inline constexpr std::uint64_t kStreamSplit = 0x04;
inline constexpr std::uint64_t kStreamPlacement = 0x05;

} // namespace shs::rng
