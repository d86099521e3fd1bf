#pragma once

#include <cstdint>
#include <random>

namespace conerisk {

/// splitmix64 step; used to derive independent per-task seeds from one
/// master seed so that parallel fan-out cannot reorder random streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(master ^ splitmix64(index + 1));
}

inline std::mt19937_64 rng_for(std::uint64_t master, std::uint64_t index) {
    return std::mt19937_64(derive_seed(master, index));
}

}  // namespace conerisk
