#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace icpvi::detail {

// std::uniform_int_distribution is implementation-defined, so sampling goes
// through this rejection draw to keep seeded runs identical across platforms.
inline std::uint64_t bounded_rand(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
        const std::uint64_t r = rng();
        if (r >= threshold) return r % n;
    }
}

template <typename T>
inline void shuffle(std::vector<T>& values, std::mt19937_64& rng) {
    for (std::size_t i = values.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(bounded_rand(rng, i));
        std::swap(values[i - 1], values[j]);
    }
}

} // namespace icpvi::detail
