#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fairlink/tensor.hpp"

namespace fairlink {

struct Edge {
    std::size_t u = 0;
    std::size_t v = 0;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Canonical orientation u < v.
inline Edge canonical(std::size_t a, std::size_t b) { return a < b ? Edge{a, b} : Edge{b, a}; }

// Undirected attributed graph with one categorical sensitive attribute per node.
// Immutable once built; the constructor canonicalizes and validates.
class Graph {
public:
    Graph() = default;
    // Edges may come in either orientation and with duplicates; they are stored
    // sorted, deduplicated and with u < v. Self-loops, out-of-range endpoints,
    // non-finite features and gaps in the group ids are rejected.
    Graph(std::size_t n_nodes, std::vector<Edge> edges, Tensor features, std::vector<int> sensitive);

    std::size_t n_nodes() const noexcept { return n_nodes_; }
    std::size_t feature_dim() const noexcept { return features_.cols(); }
    std::size_t group_count() const noexcept { return group_count_; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    const Tensor& features() const noexcept { return features_; }
    const std::vector<int>& sensitive() const noexcept { return sensitive_; }

    bool has_edge(std::size_t a, std::size_t b) const;
    std::vector<std::size_t> group_sizes() const;
    // Minority group by node count; ties resolve to the smaller id.
    int protected_group() const;
    bool same_group(std::size_t a, std::size_t b) const { return sensitive_[a] == sensitive_[b]; }

    // FNV-1a over the canonical text serialization.
    std::uint64_t checksum() const;

private:
    std::size_t n_nodes_ = 0;
    std::vector<Edge> edges_;
    Tensor features_;
    std::vector<int> sensitive_;
    std::size_t group_count_ = 0;
};

// Dense symmetric 0/1 adjacency of an edge list (N <= 5000).
Tensor dense_adjacency(std::size_t n_nodes, const std::vector<Edge>& edges);

// Text formats: edges as "u<TAB>v" per line ('#' comments allowed), features as
// headerless CSV (row i = node i), sensitive ids one integer per line.
Graph load_graph(const std::filesystem::path& edge_path, const std::filesystem::path& feature_path,
                 const std::filesystem::path& sensitive_path);
// Writes edges.tsv, features.csv, sensitive.csv into `dir`.
void save_graph(const Graph& g, const std::filesystem::path& dir);
Graph load_graph_dir(const std::filesystem::path& dir);

std::vector<Edge> read_edge_file(const std::filesystem::path& path);
void write_edge_file(const std::filesystem::path& path, const std::vector<Edge>& edges);
Tensor read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const std::filesystem::path& path, const Tensor& m);
std::vector<int> read_int_lines(const std::filesystem::path& path);

// Round-trip exact decimal form of a double.
std::string format_double(double v);

}  // namespace fairlink
