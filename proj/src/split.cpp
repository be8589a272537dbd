#include "fairlink/split.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "fairlink/config.hpp"
#include "fairlink/errors.hpp"

namespace fairlink {

PairSet::PairSet(std::size_t n_nodes, const std::vector<Edge>& edges) : n_(n_nodes) {
    set_.reserve(edges.size() * 2);
    for (const auto& e : edges) insert(e.u, e.v);
}

std::vector<Edge> sample_non_edges(std::size_t n_nodes, const PairSet& excluded, std::size_t count, Rng& rng) {
    const std::size_t total = n_nodes * (n_nodes - 1) / 2;
    const std::size_t available = total - std::min(total, excluded.size());
    if (count > available) {
        throw ValidationError("insufficient non-edges: need " + std::to_string(count) + ", only " +
                              std::to_string(available) + " available");
    }
    std::vector<Edge> out;
    out.reserve(count);
    if (count == 0) return out;

    if (count * 4 <= available) {
        std::uniform_int_distribution<std::size_t> pick(0, n_nodes - 1);
        PairSet taken(n_nodes);
        while (out.size() < count) {
            const std::size_t a = pick(rng), b = pick(rng);
            if (a == b || excluded.contains(a, b) || !taken.insert(a, b)) continue;
            out.push_back(canonical(a, b));
        }
        return out;
    }

    // Dense regime: enumerate and shuffle.
    std::vector<Edge> pool;
    pool.reserve(available);
    for (std::size_t a = 0; a < n_nodes; ++a) {
        for (std::size_t b = a + 1; b < n_nodes; ++b) {
            if (!excluded.contains(a, b)) pool.push_back({a, b});
        }
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(count);
    return pool;
}

EdgeSplit split_edges(const Graph& g, SplitRatios ratios, double neg_ratio, std::uint64_t seed) {
    if (!(ratios.train > 0 && ratios.val > 0 && ratios.test > 0)) {
        throw ValidationError("split ratios must all be positive");
    }
    if (std::fabs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
        throw ValidationError("split ratios must sum to 1");
    }
    if (!(neg_ratio > 0)) throw ValidationError("neg_ratio must be positive");

    Rng rng = make_rng(seed, Stream::split);
    std::vector<Edge> edges = g.edges();
    std::shuffle(edges.begin(), edges.end(), rng);

    const std::size_t m = edges.size();
    const auto n_val = static_cast<std::size_t>(std::floor(ratios.val * static_cast<double>(m)));
    const auto n_test = static_cast<std::size_t>(std::floor(ratios.test * static_cast<double>(m)));
    const std::size_t n_train = m - n_val - n_test;

    EdgeSplit split;
    split.seed = seed;
    split.train_pos.assign(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.val_pos.assign(edges.begin() + static_cast<std::ptrdiff_t>(n_train),
                         edges.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    split.test_pos.assign(edges.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), edges.end());

    auto neg_count = [&](std::size_t pos) {
        return static_cast<std::size_t>(std::llround(neg_ratio * static_cast<double>(pos)));
    };
    const std::size_t c_train = neg_count(n_train), c_val = neg_count(n_val), c_test = neg_count(n_test);
    const PairSet existing(g.n_nodes(), g.edges());
    auto negatives = sample_non_edges(g.n_nodes(), existing, c_train + c_val + c_test, rng);
    split.train_neg.assign(negatives.begin(), negatives.begin() + static_cast<std::ptrdiff_t>(c_train));
    split.val_neg.assign(negatives.begin() + static_cast<std::ptrdiff_t>(c_train),
                         negatives.begin() + static_cast<std::ptrdiff_t>(c_train + c_val));
    split.test_neg.assign(negatives.begin() + static_cast<std::ptrdiff_t>(c_train + c_val), negatives.end());
    return split;
}

void save_split(const EdgeSplit& split, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_edge_file(dir / "train_pos.tsv", split.train_pos);
    write_edge_file(dir / "val_pos.tsv", split.val_pos);
    write_edge_file(dir / "test_pos.tsv", split.test_pos);
    write_edge_file(dir / "train_neg.tsv", split.train_neg);
    write_edge_file(dir / "val_neg.tsv", split.val_neg);
    write_edge_file(dir / "test_neg.tsv", split.test_neg);
    KeyValues meta;
    meta.set("seed", std::to_string(split.seed));
    meta.save(dir / "split.meta");
}

EdgeSplit load_split(const std::filesystem::path& dir) {
    EdgeSplit split;
    auto read = [&](const char* name) {
        auto edges = read_edge_file(dir / name);
        for (auto& e : edges) e = canonical(e.u, e.v);
        return edges;
    };
    split.train_pos = read("train_pos.tsv");
    split.val_pos = read("val_pos.tsv");
    split.test_pos = read("test_pos.tsv");
    split.train_neg = read("train_neg.tsv");
    split.val_neg = read("val_neg.tsv");
    split.test_neg = read("test_neg.tsv");
    const auto meta = KeyValues::load(dir / "split.meta");
    meta.require_known({"seed"}, "split.meta");
    split.seed = meta.get_u64("seed");
    return split;
}

}  // namespace fairlink
