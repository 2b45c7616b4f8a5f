#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace beliefnet {

using Rng = std::mt19937_64;

/// Engine keyed by a base seed and any number of string keys, so every
/// (respondent, topic, purpose) cell gets its own reproducible stream that
/// does not depend on evaluation order.
template <typename... Keys>
Rng keyed_rng(std::uint64_t seed, const Keys&... keys) {
    std::vector<std::uint32_t> material{static_cast<std::uint32_t>(seed),
                                        static_cast<std::uint32_t>(seed >> 32)};
    auto add = [&](std::string_view key) {
        material.push_back(static_cast<std::uint32_t>(key.size()));
        for (unsigned char c : key) material.push_back(c);
    };
    (add(std::string_view(keys)), ...);
    std::seed_seq seq(material.begin(), material.end());
    return Rng(seq);
}

}  // namespace beliefnet
