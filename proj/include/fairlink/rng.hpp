#pragma once

#include <cstdint>
#include <random>

namespace fairlink {

// Every random draw descends from one 64-bit root seed. Each purpose gets its
// own engine so that, for example, changing how many negatives are drawn never
// shifts the parameter initialization.
enum class Stream : std::uint32_t {
    sbm = 1,
    split = 2,
    init = 3,
    negatives = 4,
    pairs = 5,
    noise = 6,
};

using Rng = std::mt19937_64;

// Engine for (root seed, purpose, sub-index). The sub-index separates e.g. restarts.
inline Rng make_rng(std::uint64_t root, Stream purpose, std::uint64_t sub = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(root), static_cast<std::uint32_t>(root >> 32),
                      static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(sub),
                      static_cast<std::uint32_t>(sub >> 32)};
    return Rng(seq);
}

}  // namespace fairlink
