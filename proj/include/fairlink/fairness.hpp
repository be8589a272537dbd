#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fairlink/expr.hpp"
#include "fairlink/graph.hpp"
#include "fairlink/rng.hpp"

namespace fairlink {

// Ordered node pairs (u != v) split by whether the endpoints share a group.
struct PairBatch {
    std::vector<Edge> intra;
    std::vector<Edge> inter;
    std::uint64_t seed = 0;
};

// m_per_side pairs drawn uniformly with replacement from each of the intra- and
// inter-group populations of ordered pairs. Requires at least two groups.
PairBatch sample_pairs(std::span<const int> sensitive, std::size_t m_per_side, Rng& rng);
PairBatch sample_pairs(const Graph& g, std::size_t m_per_side, std::uint64_t seed);

// |mean(intra) - mean(inter)| as a differentiable expression over two column vectors.
ad::Expr fairness_loss(const ad::Expr& probs_intra, const ad::Expr& probs_inter);

// 100 * |mean prob over intra pairs - mean prob over inter pairs|.
double delta_dp(std::span<const double> probs, std::span<const Edge> pairs, std::span<const int> sensitive);
// Same gap restricted to true edges; `pos_edges` are the scored positives.
double delta_eo(std::span<const double> probs, std::span<const Edge> pos_edges, std::span<const int> sensitive);

}  // namespace fairlink
