#pragma once

#include <cstdint>
#include <random>

namespace alkd {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent seed for a named stream (e.g. "masking at step k"), so any
/// step can be replayed without replaying the ones before it.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
    return splitmix64(splitmix64(splitmix64(seed) ^ stream) + index);
}

/// Stream tags for derive_seed.
enum : std::uint64_t {
    kStreamInit = 1,
    kStreamShuffle = 2,
    kStreamMask = 3,
    kStreamDropout = 4,
    kStreamHead = 5,
    kStreamSynth = 6,
    kStreamAnchor = 7,
};

}  // namespace alkd
