#pragma once

#include <cstdint>
#include <vector>

#include "fairlink/config.hpp"
#include "fairlink/graph.hpp"

namespace fairlink {

// Stochastic block model with Gaussian features whose mean depends on the group.
struct SbmConfig {
    std::size_t n_nodes = 300;
    std::vector<std::size_t> group_sizes{150, 150};
    double p_intra = 0.1;
    double p_inter = 0.01;
    std::size_t feature_dim = 16;
    double feature_signal = 1.0;
    std::uint64_t seed = 7;

    void validate() const;
    // Keys: n_nodes, group_sizes, p_intra, p_inter, feature_dim, feature_signal, seed.
    static SbmConfig from_keys(const KeyValues& kv);
    KeyValues to_keys() const;
};

// Nodes are laid out group by group in the configured order. Features have unit
// variance; group k of K has mean feature_signal * (k/(K-1) - 1/2) on every
// dimension, i.e. -/+ feature_signal/2 for two groups.
//
// Draws are made on a canonical layout (groups sorted by size, descending,
// stable), so reordering the groups produces a relabeled copy of the same graph.
Graph generate_sbm(const SbmConfig& cfg);

}  // namespace fairlink
