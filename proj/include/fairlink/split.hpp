#pragma once

#include <cstdint>
#include <filesystem>
#include <unordered_set>
#include <vector>

#include "fairlink/graph.hpp"
#include "fairlink/rng.hpp"

namespace fairlink {

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

// Positive edges partitioned three ways plus disjoint negative (non-edge) pairs.
struct EdgeSplit {
    std::vector<Edge> train_pos, val_pos, test_pos;
    std::vector<Edge> train_neg, val_neg, test_neg;
    std::uint64_t seed = 0;
};

// Seeded shuffle of E; val/test sizes are floor(ratio * |E|), the remainder
// goes to train. Each negative list holds round(neg_ratio * |positives|)
// distinct non-edges, drawn uniformly without replacement across all lists.
EdgeSplit split_edges(const Graph& g, SplitRatios ratios, double neg_ratio, std::uint64_t seed);

void save_split(const EdgeSplit& split, const std::filesystem::path& dir);
EdgeSplit load_split(const std::filesystem::path& dir);

// Set of canonical node pairs, for membership tests while sampling.
class PairSet {
public:
    explicit PairSet(std::size_t n_nodes) : n_(n_nodes) {}
    PairSet(std::size_t n_nodes, const std::vector<Edge>& edges);
    bool insert(std::size_t a, std::size_t b) { return set_.insert(key(a, b)).second; }
    bool contains(std::size_t a, std::size_t b) const { return set_.count(key(a, b)) > 0; }
    std::size_t size() const noexcept { return set_.size(); }

private:
    std::uint64_t key(std::size_t a, std::size_t b) const {
        const Edge e = canonical(a, b);
        return static_cast<std::uint64_t>(e.u) * n_ + e.v;
    }
    std::size_t n_;
    std::unordered_set<std::uint64_t> set_;
};

// `count` distinct canonical pairs u != v, none in `excluded`, uniformly at random.
std::vector<Edge> sample_non_edges(std::size_t n_nodes, const PairSet& excluded, std::size_t count, Rng& rng);

}  // namespace fairlink
