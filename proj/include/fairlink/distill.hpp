#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fairlink/config.hpp"
#include "fairlink/expr.hpp"
#include "fairlink/fairness.hpp"
#include "fairlink/graph.hpp"
#include "fairlink/predictor.hpp"
#include "fairlink/split.hpp"
#include "fairlink/synthetic.hpp"

namespace fairlink {

struct DistillConfig {
    double alpha = 0.5;
    double beta = 0.01;
    double gamma = 1.0;
    std::size_t t_total = 200;
    std::size_t tau1 = 10;
    std::size_t tau2 = 10;
    std::size_t restarts = 5;
    double inner_lr = 0.01;
    double outer_lr_x = 1e-2;
    double outer_lr_psi = 1e-3;
    std::size_t m_pairs = 1000;
    std::size_t hidden = 64;
    std::size_t embed = 32;
    std::size_t psi_hidden = 128;
    double neg_ratio = 1.0;
    std::uint64_t seed = 7;

    void validate() const;
    // Missing keys keep their defaults; unknown keys are rejected.
    static DistillConfig from_keys(const KeyValues& kv);
    KeyValues to_keys() const;
};

// Sum over tensors of (1 - cos(a_i, b_i)) + gamma * ||a_i - b_i||. A cosine term
// is 0 when both tensors are zero and 1 when exactly one is.
ad::Expr grad_distance(std::span<const ad::Expr> grad_a, std::span<const ad::Expr> grad_b, double gamma);

// One outer evaluation: theta fixed, the real-graph gradient fixed, the
// synthetic graph (x_f, psi) variable.
struct OuterProblem {
    Architecture arch = Architecture::sage;
    std::vector<Tensor> theta;
    std::vector<Tensor> real_grad;  // d L(G) / d theta
    std::vector<Edge> positives;
    std::vector<Edge> negatives;
    PairBatch pairs;  // unused when alpha == 0
    double alpha = 0.0;
    double gamma = 1.0;
};

struct OuterValue {
    double util = 0.0;
    double fair = 0.0;
    double objective = 0.0;
    Tensor a_f;
    Tensor dx;      // total derivative, including the path through a_f
    PsiParams dpsi;
};

// theta-gradient of the link loss on (adjacency, x) for the given pairs.
std::vector<Tensor> link_loss_grad(Architecture arch, std::span<const Tensor> theta, const Tensor& adjacency,
                                   const Tensor& x, std::span<const Edge> pos, std::span<const Edge> neg);

// L_util + alpha * L_fair and, when `with_grad`, its derivatives w.r.t. x_f and psi.
// `a_f`, when given, must equal soft_adjacency(x_f, psi).
OuterValue outer_objective(const OuterProblem& prob, const Tensor& x_f, const PsiParams& psi, bool with_grad,
                           const Tensor* a_f = nullptr);

struct EpochRecord {
    std::size_t restart = 0;
    std::size_t epoch = 0;
    bool x_phase = true;
    double util = 0.0;
    double fair = 0.0;
};

struct DistillResult {
    SyntheticGraph graph;
    std::vector<EpochRecord> history;
    std::vector<std::size_t> x_updates;    // per restart
    std::vector<std::size_t> psi_updates;  // per restart
};

using DistillProgress = std::function<void(const EpochRecord&)>;

// Gradient matching plus the dyadic fairness penalty, alternating tau1 epochs
// on x_f with tau2 epochs on psi, over `restarts` sequential inner trajectories.
DistillResult distill(const Graph& g, const EdgeSplit& split, Architecture arch, const DistillConfig& cfg,
                      const DistillProgress& progress = {});

}  // namespace fairlink
