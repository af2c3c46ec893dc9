#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace switchgen {

// Stable 64-bit FNV-1a. Used instead of std::hash so that seed derivation is
// identical across builds and standard libraries.
inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// splitmix64 finalizer.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Folds a list of parts into one substream seed. Every random draw in the
// pipeline is keyed this way: master seed, query id hash, then role-specific
// salts and indices, so results do not depend on scheduling order.
inline uint64_t seed_chain(std::initializer_list<uint64_t> parts) {
    uint64_t h = 0x6a09e667f3bcc908ULL;
    for (uint64_t p : parts) h = mix64(h ^ p);
    return h;
}

inline std::mt19937_64 make_rng(std::initializer_list<uint64_t> parts) {
    return std::mt19937_64(seed_chain(parts));
}

// Canonical double in [0, 1). Avoids uniform_real_distribution, whose output
// is not pinned down by the standard.
inline double next_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Salts for the independent random substreams of one run.
namespace substream {
inline constexpr uint64_t kSwitchDecision = 0xA11CE000;
inline constexpr uint64_t kRequestSeed    = 0x5EED0000;
inline constexpr uint64_t kTraceSample    = 0x7EACE000;
inline constexpr uint64_t kRollout        = 0xC0117000;
inline constexpr uint64_t kCapFraction    = 0xCAB00000;
}  // namespace substream

}  // namespace switchgen
