#include "fairlink/predictor.hpp"

#include <cmath>
#include <random>

#include "fairlink/errors.hpp"
#include "fairlink/optim.hpp"

namespace fairlink {

namespace {

constexpr double kProbFloor = 1e-12;

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor t(fan_in, fan_out);
    for (auto& v : t.values()) v = u(rng);
    return t;
}

std::size_t weight_count(Architecture arch) { return arch == Architecture::sage ? 4 : 2; }

}  // namespace

std::string to_string(Architecture arch) {
    switch (arch) {
        case Architecture::sage: return "sage";
        case Architecture::gcn: return "gcn";
        case Architecture::mlp: return "mlp";
    }
    return "?";
}

Architecture parse_architecture(const std::string& name) {
    if (name == "sage") return Architecture::sage;
    if (name == "gcn") return Architecture::gcn;
    if (name == "mlp") return Architecture::mlp;
    throw ValidationError("unknown architecture '" + name + "' (expected sage, gcn or mlp)");
}

void PredictorParams::validate(std::size_t feature_dim) const {
    if (weights.size() != weight_count(arch)) {
        throw ValidationError(to_string(arch) + " expects " + std::to_string(weight_count(arch)) + " weight tensors");
    }
    const std::size_t hidden = weights[0].cols();
    const std::size_t embed = weights.back().cols();
    for (std::size_t k = 0; k < weights.size(); ++k) {
        const bool first_layer = arch == Architecture::sage ? k < 2 : k == 0;
        const std::size_t rows = first_layer ? feature_dim : hidden;
        const std::size_t cols = first_layer ? hidden : embed;
        if (weights[k].rows() != rows || weights[k].cols() != cols) {
            throw ValidationError("weight " + std::to_string(k) + " has shape " + weights[k].shape_string() +
                                  ", expected (" + std::to_string(rows) + "x" + std::to_string(cols) + ")");
        }
        if (!weights[k].all_finite()) throw ValidationError("weight " + std::to_string(k) + " is not finite");
    }
}

PredictorParams init_params(Architecture arch, std::size_t input_dim, std::size_t hidden, std::size_t embed, Rng& rng) {
    PredictorParams p;
    p.arch = arch;
    if (arch == Architecture::sage) {
        p.weights.push_back(glorot(input_dim, hidden, rng));
        p.weights.push_back(glorot(input_dim, hidden, rng));
        p.weights.push_back(glorot(hidden, embed, rng));
        p.weights.push_back(glorot(hidden, embed, rng));
    } else {
        p.weights.push_back(glorot(input_dim, hidden, rng));
        p.weights.push_back(glorot(hidden, embed, rng));
    }
    return p;
}

Checkpoint to_checkpoint(const PredictorParams& p) { return {to_string(p.arch), p.weights}; }

PredictorParams from_checkpoint(const Checkpoint& c) {
    PredictorParams p;
    p.arch = parse_architecture(c.tag);
    p.weights = c.tensors;
    if (p.weights.empty()) throw ValidationError("checkpoint holds no tensors");
    p.validate(p.weights[0].rows());
    return p;
}

ad::Expr propagation(Architecture arch, const ad::Expr& adjacency) {
    const std::size_t n = adjacency.rows();
    if (adjacency.cols() != n) throw ValidationError("adjacency must be square, got " + adjacency.value().shape_string());
    switch (arch) {
        case Architecture::gcn: {
            ad::Expr with_loops = adjacency + ad::constant(Tensor::identity(n));
            ad::Expr inv_sqrt_deg = ad::power(ad::rowsum(with_loops), -0.5);
            return ad::scale_cols(ad::scale_rows(with_loops, inv_sqrt_deg), inv_sqrt_deg);
        }
        case Architecture::sage:
            return ad::row_normalize(adjacency);
        case Architecture::mlp:
            return {};
    }
    return {};
}

ad::Expr encode(Architecture arch, std::span<const ad::Expr> w, const ad::Expr& prop, const ad::Expr& x) {
    if (w.size() != weight_count(arch)) throw ValidationError("encode: wrong number of weight tensors");
    if (arch != Architecture::mlp) {
        if (!prop.valid()) throw ValidationError("encode: missing propagation matrix");
        if (prop.rows() != x.rows()) {
            throw ValidationError("encode: adjacency has " + std::to_string(prop.rows()) + " nodes, features " +
                                  std::to_string(x.rows()));
        }
    }
    switch (arch) {
        case Architecture::gcn: {
            ad::Expr h = ad::relu(ad::matmul(prop, ad::matmul(x, w[0])));
            return ad::matmul(prop, ad::matmul(h, w[1]));
        }
        case Architecture::sage: {
            ad::Expr h = ad::relu(ad::matmul(x, w[0]) + ad::matmul(ad::matmul(prop, x), w[1]));
            return ad::matmul(h, w[2]) + ad::matmul(ad::matmul(prop, h), w[3]);
        }
        case Architecture::mlp:
            return ad::matmul(ad::relu(ad::matmul(x, w[0])), w[1]);
    }
    throw ValidationError("encode: unknown architecture");
}

ad::Expr pair_logits(const ad::Expr& z, std::span<const Edge> pairs) {
    std::vector<std::size_t> us, vs;
    us.reserve(pairs.size());
    vs.reserve(pairs.size());
    for (const auto& e : pairs) {
        us.push_back(e.u);
        vs.push_back(e.v);
    }
    return ad::rowsum(ad::gather_rows(z, std::move(us)) * ad::gather_rows(z, std::move(vs)));
}

std::vector<double> link_prob(const Tensor& z, std::span<const Edge> pairs) {
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& e : pairs) {
        if (e.u >= z.rows() || e.v >= z.rows()) throw ValidationError("link_prob: node index out of range");
        double s = 0.0;
        for (std::size_t h = 0; h < z.cols(); ++h) s += z(e.u, h) * z(e.v, h);
        out.push_back(s >= 0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s)));
    }
    return out;
}

ad::Expr link_loss(const ad::Expr& z, std::span<const Edge> pos, std::span<const Edge> neg,
                   std::optional<std::span<const double>> soft_labels) {
    if (!soft_labels && (pos.empty() || neg.empty())) throw ValidationError("link_loss: empty pair list");
    std::vector<Edge> pairs(pos.begin(), pos.end());
    pairs.insert(pairs.end(), neg.begin(), neg.end());
    if (pairs.empty()) throw ValidationError("link_loss: empty pair list");

    Tensor y(pairs.size(), 1);
    if (soft_labels) {
        if (soft_labels->size() != pairs.size()) throw ValidationError("link_loss: soft labels do not align with pairs");
        for (std::size_t i = 0; i < pairs.size(); ++i) y[i] = (*soft_labels)[i];
    } else {
        for (std::size_t i = 0; i < pos.size(); ++i) y[i] = 1.0;
    }
    Tensor not_y(pairs.size(), 1);
    for (std::size_t i = 0; i < y.size(); ++i) not_y[i] = 1.0 - y[i];

    ad::Expr p = ad::clamp(ad::sigmoid(pair_logits(z, pairs)), kProbFloor, 1.0 - kProbFloor);
    ad::Expr ll = ad::constant(std::move(y)) * ad::log(p) + ad::constant(std::move(not_y)) * ad::log(ad::add_scalar(-p, 1.0));
    return -ad::mean(ll);
}

TrainResult train_predictor(const EncoderInput& input, const Supervision& sup, const TrainOptions& opts) {
    if (opts.epochs < 1) throw ValidationError("train_predictor: epochs must be >= 1");
    const std::size_t n = input.features.rows();
    if (input.adjacency.rows() != n || input.adjacency.cols() != n) {
        throw ValidationError("train_predictor: adjacency " + input.adjacency.shape_string() + " does not match " +
                              std::to_string(n) + " nodes");
    }
    if (!input.features.all_finite() || !input.adjacency.all_finite()) {
        throw ValidationError("train_predictor: non-finite encoder input");
    }
    if (sup.is_soft()) {
        if (sup.soft_labels.size() != sup.soft_pairs.size()) throw ValidationError("soft labels do not align with pairs");
    } else if (sup.positives.empty()) {
        throw ValidationError("train_predictor: no positive pairs");
    }

    Rng init_rng = make_rng(opts.seed, Stream::init);
    Rng neg_rng = make_rng(opts.seed, Stream::negatives);
    TrainResult result;
    result.params = init_params(opts.arch, input.features.cols(), opts.hidden, opts.embed, init_rng);

    const ad::Expr prop = propagation(opts.arch, ad::constant(input.adjacency));
    const ad::Expr x = ad::constant(input.features);
    const PairSet excluded(n, sup.positives);
    const auto n_neg = static_cast<std::size_t>(std::llround(sup.neg_ratio * static_cast<double>(sup.positives.size())));
    Adam adam(opts.lr);

    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        std::vector<ad::Expr> w;
        for (std::size_t k = 0; k < result.params.weights.size(); ++k) {
            w.push_back(ad::leaf(result.params.weights[k], "w" + std::to_string(k)));
        }
        const ad::Expr z = encode(opts.arch, w, prop, x);
        ad::Expr loss;
        if (sup.is_soft()) {
            loss = link_loss(z, sup.soft_pairs, {}, std::span<const double>(sup.soft_labels));
        } else {
            const auto negatives = sample_non_edges(n, excluded, n_neg, neg_rng);
            loss = link_loss(z, sup.positives, negatives);
        }
        double total = loss.value().item();
        for (const auto& t : result.params.weights) {
            for (double v : t.values()) total += opts.weight_decay * v * v;
        }
        if (!std::isfinite(total)) {
            throw RuntimeFailure("training diverged: non-finite loss at epoch " + std::to_string(epoch));
        }
        result.loss_history.push_back(total);

        auto grads = ad::grad_values(loss, w);
        std::vector<Tensor*> targets;
        for (std::size_t k = 0; k < grads.size(); ++k) {
            for (std::size_t i = 0; i < grads[k].size(); ++i) grads[k][i] += 2.0 * opts.weight_decay * result.params.weights[k][i];
            targets.push_back(&result.params.weights[k]);
        }
        adam.step(targets, grads);
    }
    return result;
}

Tensor embed(const PredictorParams& params, const EncoderInput& input) {
    params.validate(input.features.cols());
    std::vector<ad::Expr> w;
    for (const auto& t : params.weights) w.push_back(ad::constant(t));
    const ad::Expr prop = params.arch == Architecture::mlp ? ad::Expr() : propagation(params.arch, ad::constant(input.adjacency));
    return encode(params.arch, w, prop, ad::constant(input.features)).value();
}

}  // namespace fairlink
