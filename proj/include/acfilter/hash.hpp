#pragma once

#include <cstdint>
#include <cmath>
#include <string_view>

namespace acfilter {

// Deterministic 64-bit mixing (splitmix64 finalizer). All randomness in the
// library is derived from these mixers so that results are independent of
// event arrival order, sharding, and platform.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    return mix64(mix64(a) ^ (b + 0x9e3779b97f4a7c15ULL));
}

template <typename... Rest>
std::uint64_t mix64(std::uint64_t a, std::uint64_t b, Rest... rest) {
    return mix64(mix64(a, b), static_cast<std::uint64_t>(rest)...);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Uniform in [0, 1) from a hash value, 53-bit resolution.
inline double unit_from_hash(std::uint64_t h) {
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller from two hash values.
// unit_from_hash(a) lands in [0,1); 1-u keeps the log argument in (0,1].
inline double normal_from_hash(std::uint64_t a, std::uint64_t b) {
    const double u1 = 1.0 - unit_from_hash(a);
    const double u2 = unit_from_hash(b);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

// Small counter-based RNG; cheap to seed per event.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    double uniform() { return unit_from_hash(next()); }

    double normal() {
        const std::uint64_t a = next();
        const std::uint64_t b = next();
        return normal_from_hash(a, b);
    }

    // Uniform integer in [0, n); n must be > 0.
    std::uint64_t below(std::uint64_t n) { return next() % n; }

private:
    std::uint64_t state_;
};

}  // namespace acfilter
