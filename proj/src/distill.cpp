#include "fairlink/distill.hpp"

#include <cmath>
#include <random>

#include "fairlink/errors.hpp"
#include "fairlink/optim.hpp"

namespace fairlink {

namespace {

constexpr std::uint64_t kPsiInitStream = 1u << 20;

double norm2(const Tensor& t) {
    double s = 0.0;
    for (double v : t.values()) s += v * v;
    return std::sqrt(s);
}

void check_soft_adjacency(const Tensor& a, std::size_t restart, std::size_t epoch) {
    for (std::size_t u = 0; u < a.rows(); ++u) {
        if (a(u, u) != 0.0) {
            throw RuntimeFailure("a_f has a non-zero diagonal at restart " + std::to_string(restart) + " epoch " +
                                 std::to_string(epoch));
        }
        for (std::size_t v = u + 1; v < a.cols(); ++v) {
            const double w = a(u, v);
            if (!(w > 0.0 && w < 1.0) || w != a(v, u)) {
                throw RuntimeFailure("a_f left (0,1) or lost symmetry at restart " + std::to_string(restart) + " epoch " +
                                     std::to_string(epoch));
            }
        }
    }
}

std::vector<ad::Expr> theta_leaves(std::span<const Tensor> theta) {
    std::vector<ad::Expr> w;
    for (std::size_t k = 0; k < theta.size(); ++k) w.push_back(ad::leaf(theta[k], "theta" + std::to_string(k)));
    return w;
}

}  // namespace

void DistillConfig::validate() const {
    for (auto [v, name] : {std::pair{alpha, "alpha"}, {beta, "beta"}, {gamma, "gamma"}, {neg_ratio, "neg_ratio"}}) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(std::string("distill: ") + name + " must be >= 0");
    }
    if (!(neg_ratio > 0.0)) throw ValidationError("distill: neg_ratio must be > 0");
    for (auto [v, name] : {std::pair{inner_lr, "inner_lr"}, {outer_lr_x, "outer_lr_x"}, {outer_lr_psi, "outer_lr_psi"}}) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string("distill: ") + name + " must be > 0");
    }
    if (t_total < 1) throw ValidationError("distill: t_total must be >= 1");
    if (tau1 < 1 || tau2 < 1) throw ValidationError("distill: tau1 and tau2 must be >= 1");
    if (restarts < 1) throw ValidationError("distill: restarts must be >= 1");
    if (m_pairs < 1) throw ValidationError("distill: m_pairs must be >= 1");
    if (hidden < 1 || embed < 1 || psi_hidden < 1) throw ValidationError("distill: widths must be >= 1");
}

DistillConfig DistillConfig::from_keys(const KeyValues& kv) {
    kv.require_known({"alpha", "beta", "gamma", "t_total", "tau1", "tau2", "restarts", "inner_lr", "outer_lr_x",
                      "outer_lr_psi", "m_pairs", "hidden", "embed", "psi_hidden", "neg_ratio", "seed"},
                     "distill");
    DistillConfig c;
    auto count = [&kv](const char* key, std::size_t fallback) {
        const std::int64_t v = kv.get_int(key, static_cast<std::int64_t>(fallback));
        if (v < 0) throw ValidationError(std::string("distill: ") + key + " must be non-negative");
        return static_cast<std::size_t>(v);
    };
    c.alpha = kv.get_double("alpha", c.alpha);
    c.beta = kv.get_double("beta", c.beta);
    c.gamma = kv.get_double("gamma", c.gamma);
    c.t_total = count("t_total", c.t_total);
    c.tau1 = count("tau1", c.tau1);
    c.tau2 = count("tau2", c.tau2);
    c.restarts = count("restarts", c.restarts);
    c.inner_lr = kv.get_double("inner_lr", c.inner_lr);
    c.outer_lr_x = kv.get_double("outer_lr_x", c.outer_lr_x);
    c.outer_lr_psi = kv.get_double("outer_lr_psi", c.outer_lr_psi);
    c.m_pairs = count("m_pairs", c.m_pairs);
    c.hidden = count("hidden", c.hidden);
    c.embed = count("embed", c.embed);
    c.psi_hidden = count("psi_hidden", c.psi_hidden);
    c.neg_ratio = kv.get_double("neg_ratio", c.neg_ratio);
    c.seed = kv.get_u64("seed", c.seed);
    c.validate();
    return c;
}

KeyValues DistillConfig::to_keys() const {
    KeyValues kv;
    kv.set("alpha", format_double(alpha));
    kv.set("beta", format_double(beta));
    kv.set("gamma", format_double(gamma));
    kv.set("t_total", std::to_string(t_total));
    kv.set("tau1", std::to_string(tau1));
    kv.set("tau2", std::to_string(tau2));
    kv.set("restarts", std::to_string(restarts));
    kv.set("inner_lr", format_double(inner_lr));
    kv.set("outer_lr_x", format_double(outer_lr_x));
    kv.set("outer_lr_psi", format_double(outer_lr_psi));
    kv.set("m_pairs", std::to_string(m_pairs));
    kv.set("hidden", std::to_string(hidden));
    kv.set("embed", std::to_string(embed));
    kv.set("psi_hidden", std::to_string(psi_hidden));
    kv.set("neg_ratio", format_double(neg_ratio));
    kv.set("seed", std::to_string(seed));
    return kv;
}

ad::Expr grad_distance(std::span<const ad::Expr> grad_a, std::span<const ad::Expr> grad_b, double gamma) {
    if (grad_a.size() != grad_b.size()) {
        throw ValidationError("grad_distance: " + std::to_string(grad_a.size()) + " vs " + std::to_string(grad_b.size()) +
                              " gradient tensors");
    }
    if (!(gamma >= 0.0)) throw ValidationError("grad_distance: gamma must be >= 0");
    ad::Expr total = ad::constant_scalar(0.0);
    for (std::size_t i = 0; i < grad_a.size(); ++i) {
        const ad::Expr& a = grad_a[i];
        const ad::Expr& b = grad_b[i];
        if (!a.value().same_shape(b.value())) {
            throw ValidationError("grad_distance: tensor " + std::to_string(i) + " has shapes " +
                                  a.value().shape_string() + " and " + b.value().shape_string());
        }
        const double na = norm2(a.value()), nb = norm2(b.value());
        if (na > 0.0 && nb > 0.0) {
            // 1 - cos(a, b) written as ||a/|a| - b/|b|||^2 / 2, which cannot round below zero.
            auto unit = [](const ad::Expr& t) {
                return t * ad::broadcast(ad::power(ad::l2norm(t), -1.0), t.rows(), t.cols());
            };
            const ad::Expr gap = unit(a) - unit(b);
            total = total + ad::scale(ad::dot(gap, gap), 0.5);
        } else if ((na > 0.0) != (nb > 0.0)) {
            total = ad::add_scalar(total, 1.0);
        }
        if (gamma > 0.0) {
            ad::Expr diff = a - b;
            // At a == b the norm has no derivative; its subgradient 0 is used.
            if (norm2(diff.value()) > 0.0) total = total + ad::scale(ad::l2norm(diff), gamma);
        }
    }
    return total;
}

std::vector<Tensor> link_loss_grad(Architecture arch, std::span<const Tensor> theta, const Tensor& adjacency,
                                   const Tensor& x, std::span<const Edge> pos, std::span<const Edge> neg) {
    const auto w = theta_leaves(theta);
    const ad::Expr prop = arch == Architecture::mlp ? ad::Expr() : propagation(arch, ad::constant(adjacency));
    return ad::grad_values(link_loss(encode(arch, w, prop, ad::constant(x)), pos, neg), w);
}

OuterValue outer_objective(const OuterProblem& prob, const Tensor& x_f, const PsiParams& psi, bool with_grad,
                           const Tensor* a_f) {
    if (prob.theta.size() != prob.real_grad.size()) throw ValidationError("outer_objective: theta/gradient mismatch");
    OuterValue out;
    out.a_f = a_f ? *a_f : soft_adjacency(x_f, psi);

    const auto w = theta_leaves(prob.theta);
    const ad::Expr a = ad::leaf(out.a_f, "a_f");
    const ad::Expr x = ad::leaf(x_f, "x_f");
    const ad::Expr z = encode(prob.arch, w, propagation(prob.arch, a), x);
    const auto synthetic_grad = ad::grad(link_loss(z, prob.positives, prob.negatives), w);
    std::vector<ad::Expr> real_grad;
    for (const auto& t : prob.real_grad) real_grad.push_back(ad::constant(t));

    ad::Expr objective = grad_distance(real_grad, synthetic_grad, prob.gamma);
    out.util = objective.value().item();
    if (prob.alpha > 0.0) {
        const ad::Expr fair = fairness_loss(ad::sigmoid(pair_logits(z, prob.pairs.intra)),
                                            ad::sigmoid(pair_logits(z, prob.pairs.inter)));
        out.fair = fair.value().item();
        objective = objective + ad::scale(fair, prob.alpha);
    }
    out.objective = objective.value().item();
    if (!with_grad) return out;

    const std::vector<ad::Expr> wrt{a, x};
    auto g = ad::meta_grad(objective, wrt);
    GeneratorGrad chain = soft_adjacency_vjp(x_f, psi, out.a_f, g[0]);
    out.dx = std::move(g[1]);
    for (std::size_t i = 0; i < out.dx.size(); ++i) out.dx[i] += chain.dx[i];
    out.dpsi = std::move(chain.dpsi);
    return out;
}

DistillResult distill(const Graph& g, const EdgeSplit& split, Architecture arch, const DistillConfig& cfg,
                      const DistillProgress& progress) {
    cfg.validate();
    if (g.group_count() < 2) throw ValidationError("distill: no inter-group pairs (graph has one group)");
    if (split.train_pos.empty()) throw ValidationError("distill: split has no training edges");
    const std::size_t n = g.n_nodes(), d = g.feature_dim();

    DistillResult result;
    result.graph.sensitive = g.sensitive();

    // x_f = X + N(0, (0.01 * std(X))^2)
    double mean = 0.0, var = 0.0;
    for (double v : g.features().values()) mean += v;
    mean /= static_cast<double>(g.features().size());
    for (double v : g.features().values()) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(g.features().size()));
    Rng noise_rng = make_rng(cfg.seed, Stream::noise);
    std::normal_distribution<double> noise(0.0, 0.01 * sd);
    result.graph.x_f = g.features();
    for (auto& v : result.graph.x_f.values()) v += sd > 0.0 ? noise(noise_rng) : 0.0;
    Rng psi_rng = make_rng(cfg.seed, Stream::init, kPsiInitStream);
    result.graph.psi = init_psi(d, cfg.psi_hidden, psi_rng);

    Tensor& x_f = result.graph.x_f;
    PsiParams& psi = result.graph.psi;
    const Tensor real_adjacency = dense_adjacency(n, split.train_pos);
    const PairSet excluded(n, split.train_pos);
    const auto n_neg = static_cast<std::size_t>(std::llround(cfg.neg_ratio * static_cast<double>(split.train_pos.size())));
    Rng neg_rng = make_rng(cfg.seed, Stream::negatives);
    Rng pair_rng = make_rng(cfg.seed, Stream::pairs);
    Adam adam_x(cfg.outer_lr_x), adam_psi(cfg.outer_lr_psi);
    const std::size_t block = cfg.tau1 + cfg.tau2;
    Tensor a_cur = soft_adjacency(x_f, psi);

    for (std::size_t r = 0; r < cfg.restarts; ++r) {
        Rng theta_rng = make_rng(cfg.seed, Stream::init, r);
        PredictorParams theta = init_params(arch, d, cfg.hidden, cfg.embed, theta_rng);
        Adam inner(cfg.inner_lr);
        result.x_updates.push_back(0);
        result.psi_updates.push_back(0);

        for (std::size_t t = 0; t < cfg.t_total; ++t) {
            const bool x_phase = t % block < cfg.tau1;
            OuterProblem prob;
            prob.arch = arch;
            prob.theta = theta.weights;
            prob.positives = split.train_pos;
            prob.negatives = sample_non_edges(n, excluded, n_neg, neg_rng);
            prob.alpha = cfg.alpha;
            prob.gamma = cfg.gamma;
            prob.real_grad = link_loss_grad(arch, theta.weights, real_adjacency, g.features(), prob.positives,
                                            prob.negatives);
            if (cfg.alpha > 0.0) prob.pairs = sample_pairs(g.sensitive(), cfg.m_pairs, pair_rng);

            OuterValue ov = outer_objective(prob, x_f, psi, true, &a_cur);
            if (t % block == 0) check_soft_adjacency(ov.a_f, r, t);
            if (!std::isfinite(ov.objective)) {
                throw RuntimeFailure("distill diverged: non-finite objective at restart " + std::to_string(r) +
                                     " epoch " + std::to_string(t));
            }
            if (x_phase) {
                adam_x.step({&x_f}, {ov.dx});
                ++result.x_updates.back();
            } else {
                adam_psi.step(psi.tensors(), ov.dpsi.values());
                ++result.psi_updates.back();
            }
            EpochRecord rec{r, t, x_phase, ov.util, ov.fair};
            result.history.push_back(rec);
            if (progress) progress(rec);

            // Inner step on L(G_f) with the L2 term beta * ||theta||^2.
            a_cur = soft_adjacency(x_f, psi);
            auto inner_grad = link_loss_grad(arch, theta.weights, a_cur, x_f, prob.positives, prob.negatives);
            std::vector<Tensor*> targets;
            for (std::size_t k = 0; k < inner_grad.size(); ++k) {
                for (std::size_t i = 0; i < inner_grad[k].size(); ++i) {
                    inner_grad[k][i] += 2.0 * cfg.beta * theta.weights[k][i];
                }
                targets.push_back(&theta.weights[k]);
            }
            inner.step(targets, inner_grad);
            for (const auto& w : theta.weights) {
                if (!w.all_finite()) {
                    throw RuntimeFailure("distill diverged: non-finite theta at restart " + std::to_string(r) +
                                         " epoch " + std::to_string(t));
                }
            }
        }
    }
    if (!x_f.all_finite()) throw RuntimeFailure("distill produced non-finite x_f");
    return result;
}

}  // namespace fairlink
