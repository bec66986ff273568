#pragma once

#include <cstdint>

// Seeded deterministic random streams. All randomness in the project flows
// through this generator so results are bit-stable across platforms and
// worker counts; std::random distributions are implementation-defined and
// are not used anywhere.

namespace qualproj::rng {

// splitmix64 (Steele, Lea, Flood 2014). Advances `state` and returns the
// next 64-bit output.
constexpr std::uint64_t next_u64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derives a child seed from (seed, key). Used to key independent streams
// per projector, per replicate, per row; counter-based so any worker can
// regenerate a stream without shared sequential state.
constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t key) noexcept {
    std::uint64_t s = seed ^ (key * 0xd2b74407b1ce6e93ULL + 0x9e3779b97f4a7c15ULL);
    return next_u64(s);
}

class Stream {
public:
    explicit constexpr Stream(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t next() noexcept { return next_u64(state_); }

    // Uniform on [0, 1), 53-bit resolution.
    constexpr double next_unit() noexcept {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // Uniform on [lo, hi).
    constexpr double next_in(double lo, double hi) noexcept {
        return lo + (hi - lo) * next_unit();
    }

private:
    std::uint64_t state_;
};

// FNV-1a, used for artifact fingerprints (cache validation, not crypto).
constexpr std::uint64_t fnv1a(const void* data, std::size_t n,
                              std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace qualproj::rng
