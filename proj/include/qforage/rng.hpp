#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace qforage {

using Rng = std::mt19937_64;

// Child seed for a named stream: splitmix64(root ^ fnv1a(name)).
std::uint64_t stream_seed(std::uint64_t root, std::string_view name);

inline Rng make_stream(std::uint64_t root, std::string_view name) {
    return Rng(stream_seed(root, name));
}

// Uniform in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double standard_normal(Rng& rng);

}  // namespace qforage
