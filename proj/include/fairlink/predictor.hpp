#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairlink/checkpoint.hpp"
#include "fairlink/expr.hpp"
#include "fairlink/graph.hpp"
#include "fairlink/rng.hpp"
#include "fairlink/split.hpp"
#include "fairlink/tensor.hpp"

namespace fairlink {

enum class Architecture { sage, gcn, mlp };

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& name);

// Encoder weights. GCN and MLP hold {W1 (D x H1), W2 (H1 x H)}; SAGE holds
// {W1_self, W1_neighbor (D x H1), W2_self, W2_neighbor (H1 x H)}. No biases.
struct PredictorParams {
    Architecture arch = Architecture::sage;
    std::vector<Tensor> weights;

    std::size_t input_dim() const { return weights.front().rows(); }
    std::size_t embed_dim() const { return weights.back().cols(); }
    void validate(std::size_t feature_dim) const;
};

// Uniform in +/- sqrt(6 / (fan_in + fan_out)) for every weight.
PredictorParams init_params(Architecture arch, std::size_t input_dim, std::size_t hidden, std::size_t embed, Rng& rng);

Checkpoint to_checkpoint(const PredictorParams& p);
PredictorParams from_checkpoint(const Checkpoint& c);

// Message-passing operator derived from a symmetric adjacency with entries in [0,1]:
// GCN uses D^-1/2 (A + I) D^-1/2 with weighted degrees, SAGE the weighted neighbor
// mean (row-normalized A), MLP none (returns an empty expression).
ad::Expr propagation(Architecture arch, const ad::Expr& adjacency);

// Z = encoder(weights; propagation, features). `weights` must follow PredictorParams order.
ad::Expr encode(Architecture arch, std::span<const ad::Expr> weights, const ad::Expr& prop, const ad::Expr& x);

// Dot-product scores z_u . z_v for each pair, as an n_pairs x 1 expression.
ad::Expr pair_logits(const ad::Expr& z, std::span<const Edge> pairs);

// sigmoid(z_u . z_v) per pair.
std::vector<double> link_prob(const Tensor& z, std::span<const Edge> pairs);

// Mean binary cross-entropy with the sigmoid clamped to [1e-12, 1 - 1e-12].
// Positives carry label 1 and negatives label 0 unless soft labels are given,
// in which case they align with pos followed by neg.
ad::Expr link_loss(const ad::Expr& z, std::span<const Edge> pos, std::span<const Edge> neg,
                   std::optional<std::span<const double>> soft_labels = std::nullopt);

// Encoder inputs: dense symmetric adjacency (0/1 or soft) and node features.
struct EncoderInput {
    Tensor adjacency;
    Tensor features;
};

// What the predictor is trained to reproduce. With hard supervision the
// negatives are redrawn every epoch from pairs outside `positives`; with soft
// supervision `pairs` and `labels` are used as given.
struct Supervision {
    std::vector<Edge> positives;
    double neg_ratio = 1.0;
    std::vector<Edge> soft_pairs;
    std::vector<double> soft_labels;

    bool is_soft() const noexcept { return !soft_pairs.empty(); }
};

struct TrainOptions {
    Architecture arch = Architecture::sage;
    std::size_t epochs = 200;
    double lr = 0.01;
    // Coefficient of the L2 penalty weight_decay * sum ||W||^2.
    double weight_decay = 0.0;
    std::size_t hidden = 64;
    std::size_t embed = 32;
    std::uint64_t seed = 0;
};

struct TrainResult {
    PredictorParams params;
    std::vector<double> loss_history;
};

// Full-batch Adam on the link loss. Deterministic for a given seed.
TrainResult train_predictor(const EncoderInput& input, const Supervision& sup, const TrainOptions& opts);

// Embeddings of a trained predictor.
Tensor embed(const PredictorParams& params, const EncoderInput& input);

}  // namespace fairlink
