#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fairlink/checkpoint.hpp"
#include "fairlink/config.hpp"
#include "fairlink/graph.hpp"
#include "fairlink/rng.hpp"
#include "fairlink/tensor.hpp"

namespace fairlink {

// Link generator m(u,v) = w2 . relu(W1 [x_u ; x_v] + b1) + b2.
// W1 is 2D x H (rows 0..D-1 act on x_u, rows D..2D-1 on x_v), b1 is 1 x H,
// w2 is H x 1, b2 is 1 x 1.
struct PsiParams {
    Tensor w1, b1, w2, b2;

    std::size_t input_dim() const { return w1.rows() / 2; }
    std::size_t hidden() const { return w1.cols(); }
    void validate(std::size_t feature_dim) const;
    std::vector<Tensor*> tensors() { return {&w1, &b1, &w2, &b2}; }
    std::vector<Tensor> values() const { return {w1, b1, w2, b2}; }
};

// Weights and biases uniform in +/- 1/sqrt(fan_in).
PsiParams init_psi(std::size_t feature_dim, std::size_t hidden, Rng& rng);

Checkpoint to_checkpoint(const PsiParams& psi);
PsiParams psi_from_checkpoint(const Checkpoint& c);

// a[u,v] = sigmoid((m(u,v) + m(v,u)) / 2) for u != v, zero diagonal.
Tensor soft_adjacency(const Tensor& x, const PsiParams& psi);

struct GeneratorGrad {
    Tensor dx;
    PsiParams dpsi;
};

// Pulls an upstream gradient G = dL/da (N x N, any symmetry) back to x and psi.
// `a` must be soft_adjacency(x, psi). Costs O(N^2 H) time and O(N H) memory.
GeneratorGrad soft_adjacency_vjp(const Tensor& x, const PsiParams& psi, const Tensor& a, const Tensor& upstream);

struct SyntheticGraph {
    Tensor x_f;
    PsiParams psi;
    std::vector<int> sensitive;

    Tensor a_f() const { return soft_adjacency(x_f, psi); }
};

enum class ExportMode { weighted, sparsified };
std::string to_string(ExportMode mode);
ExportMode parse_export_mode(const std::string& name);

// What a downstream predictor trains on. The adjacency is dense: soft weights
// in weighted mode, 0/1 in sparsified mode (with `edges` listing the kept pairs).
struct SyntheticArtifact {
    ExportMode mode = ExportMode::weighted;
    Tensor adjacency;
    Tensor features;
    std::vector<int> sensitive;
    std::vector<Edge> edges;
    PsiParams psi;
    KeyValues meta;
};

// Sparsified mode keeps the `target_edge_count` largest off-diagonal entries,
// preferring the lexicographically smaller (u,v) among equal weights.
SyntheticArtifact export_synthetic(const SyntheticGraph& sg, ExportMode mode,
                                   std::optional<std::size_t> target_edge_count = std::nullopt);

// Directory layout: features.csv, sensitive.csv, psi.bin, artifact.meta and
// either adjacency.csv (weighted) or edges.tsv (sparsified).
void save_artifact(const SyntheticArtifact& art, const std::filesystem::path& dir);
SyntheticArtifact load_artifact(const std::filesystem::path& dir);

}  // namespace fairlink
