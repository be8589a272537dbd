#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include <unistd.h>

#include "doctest.h"
#include "fairlink/distill.hpp"
#include "fairlink/errors.hpp"
#include "fairlink/sbm.hpp"
#include "fd_oracle.hpp"

using namespace fairlink;
using fairlink::testing::random_tensor;
using fairlink::testing::rel_error;
namespace fs = std::filesystem;

namespace {

PsiParams random_psi(std::mt19937_64& rng, std::size_t d, std::size_t h) {
    return {random_tensor(rng, 2 * d, h), random_tensor(rng, 1, h), random_tensor(rng, h, 1), random_tensor(rng, 1, 1)};
}

double weighted_sum(const Tensor& a, const Tensor& g) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * g[i];
    return s;
}

// Central differences of a scalar function of one tensor, perturbing in place.
template <class F>
Tensor numeric_grad(Tensor& t, F f, double h) {
    Tensor out(t.rows(), t.cols());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double orig = t[i];
        t[i] = orig + h;
        const double up = f();
        t[i] = orig - h;
        const double down = f();
        t[i] = orig;
        out[i] = (up - down) / (2.0 * h);
    }
    return out;
}

Graph small_sbm(std::size_t n, std::uint64_t seed) {
    SbmConfig cfg;
    cfg.n_nodes = n;
    cfg.group_sizes = {n / 2, n - n / 2};
    cfg.p_intra = 0.3;
    cfg.p_inter = 0.03;
    cfg.feature_dim = 4;
    cfg.seed = seed;
    return generate_sbm(cfg);
}

DistillConfig tiny_config() {
    DistillConfig c;
    c.t_total = 4;
    c.tau1 = 1;
    c.tau2 = 1;
    c.restarts = 1;
    c.hidden = 8;
    c.embed = 4;
    c.psi_hidden = 8;
    c.m_pairs = 50;
    return c;
}

ad::Expr col(std::vector<double> v) { return ad::constant(Tensor::column(v)); }

}  // namespace

TEST_CASE("soft_adjacency: zero output layer gives one half everywhere") {
    std::mt19937_64 rng(1);
    PsiParams psi = random_psi(rng, 3, 5);
    psi.w2 = Tensor(5, 1);
    psi.b2 = Tensor(1, 1);
    Tensor a = soft_adjacency(random_tensor(rng, 6, 3), psi);
    for (std::size_t u = 0; u < 6; ++u) {
        for (std::size_t v = 0; v < 6; ++v) CHECK(a(u, v) == (u == v ? 0.0 : 0.5));
    }
}

TEST_CASE("soft_adjacency: symmetric with zero diagonal and entries in (0,1)") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor a = soft_adjacency(random_tensor(rng, 15, 4), random_psi(rng, 4, 9));
        for (std::size_t u = 0; u < 15; ++u) {
            CHECK(a(u, u) == 0.0);
            for (std::size_t v = 0; v < 15; ++v) {
                CHECK(a(u, v) == a(v, u));
                if (u != v) CHECK((a(u, v) > 0.0 && a(u, v) < 1.0));
            }
        }
    }
}

TEST_CASE("soft_adjacency: three nodes with a one-unit perceptron") {
    // D = 1, H = 1: m(u,v) = w2 * relu(a x_u + b x_v + b1) + b2.
    const double wa = 0.8, wb = -0.3, b1 = 0.1, w2 = 1.7, b2 = -0.4;
    PsiParams psi{Tensor::from_rows({{wa}, {wb}}), Tensor::scalar(b1), Tensor::scalar(w2), Tensor::scalar(b2)};
    const std::vector<double> x{1.0, -2.0, 0.5};
    auto m = [&](double xu, double xv) { return w2 * std::max(0.0, wa * xu + wb * xv + b1) + b2; };
    Tensor a = soft_adjacency(Tensor::column(x), psi);
    for (std::size_t u = 0; u < 3; ++u) {
        for (std::size_t v = 0; v < 3; ++v) {
            if (u == v) continue;
            const double expected = 1.0 / (1.0 + std::exp(-(m(x[u], x[v]) + m(x[v], x[u])) / 2.0));
            CHECK(a(u, v) == doctest::Approx(expected).epsilon(1e-15));
        }
    }
}

TEST_CASE("soft_adjacency_vjp: matches finite differences") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 4; ++trial) {
        const std::size_t n = 9, d = 3, h = 6;
        Tensor x = random_tensor(rng, n, d);
        PsiParams psi = random_psi(rng, d, h);
        const Tensor g = random_tensor(rng, n, n);  // deliberately not symmetric
        const GeneratorGrad vjp = soft_adjacency_vjp(x, psi, soft_adjacency(x, psi), g);
        auto f = [&] { return weighted_sum(soft_adjacency(x, psi), g); };
        CHECK(rel_error(vjp.dx, numeric_grad(x, f, 1e-6)) < 1e-7);
        CHECK(rel_error(vjp.dpsi.w1, numeric_grad(psi.w1, f, 1e-6)) < 1e-7);
        CHECK(rel_error(vjp.dpsi.b1, numeric_grad(psi.b1, f, 1e-6)) < 1e-7);
        CHECK(rel_error(vjp.dpsi.w2, numeric_grad(psi.w2, f, 1e-6)) < 1e-7);
        CHECK(rel_error(vjp.dpsi.b2, numeric_grad(psi.b2, f, 1e-6)) < 1e-7);
    }
}

TEST_CASE("grad_distance: worked values") {
    const std::vector<ad::Expr> a{col({1.0, 0.0})}, b{col({0.0, 1.0})};
    CHECK(grad_distance(a, b, 1.0).value().item() == doctest::Approx(1.0 + std::sqrt(2.0)).epsilon(1e-15));
    const std::vector<ad::Expr> c{col({0.3, -2.0, 1.1}), col({4.0})};
    CHECK(grad_distance(c, c, 1.0).value().item() == 0.0);

    std::mt19937_64 rng(4);
    const Tensor u = random_tensor(rng, 5, 1), v = random_tensor(rng, 5, 1);
    double dot = 0, nu = 0, nv = 0;
    for (std::size_t i = 0; i < 5; ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    const std::vector<ad::Expr> eu{ad::constant(u)}, ev{ad::constant(v)};
    CHECK(grad_distance(eu, ev, 0.0).value().item() ==
          doctest::Approx(1.0 - dot / std::sqrt(nu * nv)).epsilon(1e-14));
}

TEST_CASE("grad_distance: zero-norm rule and mismatches") {
    const std::vector<ad::Expr> zero{col({0.0, 0.0})}, one{col({0.0, 2.0})};
    CHECK(grad_distance(zero, zero, 0.0).value().item() == 0.0);
    CHECK(grad_distance(zero, one, 0.0).value().item() == 1.0);
    CHECK(grad_distance(one, zero, 1.0).value().item() == doctest::Approx(3.0).epsilon(1e-15));
    const std::vector<ad::Expr> two{col({0.0, 2.0}), col({1.0})};
    CHECK_THROWS_AS(grad_distance(one, two, 1.0), ValidationError);
    const std::vector<ad::Expr> wide{col({0.0, 2.0, 3.0})};
    CHECK_THROWS_AS(grad_distance(one, wide, 1.0), ValidationError);
}

TEST_CASE("grad_distance: non-negative, zero only for identical gradients") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<ad::Expr> a, b;
        for (int k = 0; k < 3; ++k) {
            a.push_back(ad::constant(random_tensor(rng, 2 + k, 2)));
            b.push_back(ad::constant(random_tensor(rng, 2 + k, 2)));
        }
        CHECK(grad_distance(a, b, 0.0).value().item() >= 0.0);
        CHECK(grad_distance(a, b, 0.7).value().item() > 0.0);
        CHECK(grad_distance(a, a, 0.7).value().item() == 0.0);
    }
}

TEST_CASE("outer objective: meta-gradient matches finite differences") {
    std::mt19937_64 rng(6);
    int instance = 0;
    for (auto arch : {Architecture::sage, Architecture::gcn, Architecture::mlp}) {
        for (double alpha : {0.0, 0.5}) {
            for (double gamma : {0.0, 1.0}) {
                const std::size_t n = 10 + static_cast<std::size_t>(instance % 3) * 5, d = 3;
                ++instance;
                std::vector<int> s(n);
                for (std::size_t i = 0; i < n; ++i) s[i] = static_cast<int>(i % 2);
                OuterProblem prob;
                prob.arch = arch;
                prob.alpha = alpha;
                prob.gamma = gamma;
                Rng init = make_rng(static_cast<std::uint64_t>(instance), Stream::init);
                prob.theta = init_params(arch, d, 6, 4, init).weights;
                std::uniform_int_distribution<std::size_t> node(0, n - 1);
                while (prob.positives.size() < 12) {
                    const std::size_t u = node(rng), v = node(rng);
                    if (u != v) prob.positives.push_back({u, v});
                }
                while (prob.negatives.size() < 12) {
                    const std::size_t u = node(rng), v = node(rng);
                    if (u != v) prob.negatives.push_back({u, v});
                }
                Tensor x = random_tensor(rng, n, d);
                Tensor real_adj = soft_adjacency(random_tensor(rng, n, d), random_psi(rng, d, 5));
                prob.real_grad = link_loss_grad(arch, prob.theta, real_adj, x, prob.positives, prob.negatives);
                Rng pair_rng = make_rng(static_cast<std::uint64_t>(instance), Stream::pairs);
                prob.pairs = sample_pairs(s, 15, pair_rng);

                Tensor x_f = x;
                PsiParams psi = random_psi(rng, d, 5);
                for (auto& v : x_f.values()) v += std::normal_distribution<double>(0.0, 0.3)(rng);
                const OuterValue ov = outer_objective(prob, x_f, psi, true);
                auto f = [&] { return outer_objective(prob, x_f, psi, false).objective; };
                INFO(to_string(arch), " alpha ", alpha, " gamma ", gamma, " objective ", ov.objective);
                CHECK(rel_error(ov.dx, numeric_grad(x_f, f, 1e-5)) <= 1e-4);
                CHECK(rel_error(ov.dpsi.w1, numeric_grad(psi.w1, f, 1e-5)) <= 1e-4);
                CHECK(rel_error(ov.dpsi.b1, numeric_grad(psi.b1, f, 1e-5)) <= 1e-4);
                CHECK(rel_error(ov.dpsi.w2, numeric_grad(psi.w2, f, 1e-5)) <= 1e-4);
                CHECK(rel_error(ov.dpsi.b2, numeric_grad(psi.b2, f, 1e-5)) <= 1e-4);
            }
        }
    }
}

TEST_CASE("distill: config keys") {
    DistillConfig c;
    c.alpha = 1.5;
    c.tau1 = 3;
    c.seed = 99;
    const DistillConfig r = DistillConfig::from_keys(c.to_keys());
    CHECK(r.to_keys().serialize() == c.to_keys().serialize());
    KeyValues kv;
    kv.set("alhpa", "1");
    CHECK_THROWS_AS(DistillConfig::from_keys(kv), ValidationError);
    kv = KeyValues();
    kv.set("tau1", "0");
    CHECK_THROWS_AS(DistillConfig::from_keys(kv), ValidationError);
    kv = KeyValues();
    kv.set("beta", "-1");
    CHECK_THROWS_AS(DistillConfig::from_keys(kv), ValidationError);
}

TEST_CASE("distill: one group is rejected") {
    const std::size_t n = 10;
    std::vector<Edge> edges;
    for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1});
    Graph g(n, edges, Tensor(n, 2, 1.0), std::vector<int>(n, 0));
    EdgeSplit split = split_edges(g, {0.6, 0.2, 0.2}, 1.0, 1);
    CHECK_THROWS_WITH_AS(distill(g, split, Architecture::sage, tiny_config()), doctest::Contains("no inter-group pairs"),
                         ValidationError);
}

TEST_CASE("distill: bitwise deterministic for a fixed seed") {
    const Graph g = small_sbm(30, 2);
    const EdgeSplit split = split_edges(g, {}, 1.0, 2);
    DistillConfig c = tiny_config();
    c.alpha = 0.0;
    c.gamma = 0.0;
    const auto a = distill(g, split, Architecture::sage, c);
    const auto b = distill(g, split, Architecture::sage, c);
    CHECK(a.graph.x_f == b.graph.x_f);
    CHECK(a.graph.psi.w1 == b.graph.psi.w1);
    c.seed += 1;
    CHECK_FALSE(distill(g, split, Architecture::sage, c).graph.x_f == a.graph.x_f);
}

TEST_CASE("distill: alternation schedule accounting") {
    const Graph g = small_sbm(24, 3);
    const EdgeSplit split = split_edges(g, {}, 1.0, 3);
    DistillConfig c = tiny_config();
    c.t_total = 2;
    c.restarts = 3;
    const auto r = distill(g, split, Architecture::gcn, c);
    CHECK(r.x_updates == std::vector<std::size_t>{1, 1, 1});
    CHECK(r.psi_updates == std::vector<std::size_t>{1, 1, 1});
    CHECK(r.history.size() == 6);

    c.t_total = 7;
    c.tau1 = 2;
    c.tau2 = 3;
    c.restarts = 1;
    const auto s = distill(g, split, Architecture::gcn, c);
    CHECK(s.x_updates == std::vector<std::size_t>{4});  // epochs 0,1,5,6
    CHECK(s.psi_updates == std::vector<std::size_t>{3});
}

TEST_CASE("distill: soft adjacency stays symmetric and in range") {
    const Graph g = small_sbm(30, 4);
    const EdgeSplit split = split_edges(g, {}, 1.0, 4);
    DistillConfig c = tiny_config();
    c.t_total = 12;
    c.tau1 = 3;
    c.tau2 = 3;
    c.outer_lr_psi = 0.05;
    const auto r = distill(g, split, Architecture::sage, c);
    const Tensor a = r.graph.a_f();
    for (std::size_t u = 0; u < a.rows(); ++u) {
        CHECK(a(u, u) == 0.0);
        for (std::size_t v = u + 1; v < a.cols(); ++v) {
            CHECK(a(u, v) == a(v, u));
            CHECK((a(u, v) > 0.0 && a(u, v) < 1.0));
        }
    }
    CHECK(r.graph.sensitive == g.sensitive());
}

TEST_CASE("distill: gradient matching makes progress on SBM-100") {
    double first = 0.0, last = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SbmConfig sc;
        sc.n_nodes = 100;
        sc.group_sizes = {50, 50};
        sc.seed = seed;
        const Graph g = generate_sbm(sc);
        const EdgeSplit split = split_edges(g, {}, 1.0, seed);
        DistillConfig c;
        c.alpha = 0.0;
        c.t_total = 60;
        c.restarts = 1;
        c.seed = seed;
        const auto r = distill(g, split, Architecture::sage, c);
        const std::size_t tenth = r.history.size() / 10;
        for (std::size_t i = 0; i < tenth; ++i) {
            first += r.history[i].util;
            last += r.history[r.history.size() - 1 - i].util;
        }
    }
    INFO("first-tenth mean ", first / 30, " last-tenth mean ", last / 30);
    CHECK(last < first);
}

TEST_CASE("export_synthetic: sparsified top-k, ties and bounds") {
    std::mt19937_64 rng(7);
    SyntheticGraph sg{random_tensor(rng, 8, 3), random_psi(rng, 3, 4), std::vector<int>{0, 1, 0, 1, 0, 1, 0, 1}};
    const auto art = export_synthetic(sg, ExportMode::sparsified, 11);
    CHECK(art.edges.size() == 11);
    const Tensor a = sg.a_f();
    double kept_min = 1.0, dropped_max = 0.0;
    for (std::size_t u = 0; u < 8; ++u) {
        for (std::size_t v = u + 1; v < 8; ++v) {
            const bool kept = art.adjacency(u, v) == 1.0;
            if (kept) kept_min = std::min(kept_min, a(u, v));
            else dropped_max = std::max(dropped_max, a(u, v));
        }
    }
    CHECK(kept_min >= dropped_max);
    CHECK_THROWS_AS(export_synthetic(sg, ExportMode::sparsified, 29), ValidationError);
    CHECK_NOTHROW(export_synthetic(sg, ExportMode::sparsified, 28));

    sg.psi.w2 = Tensor(4, 1);  // every entry ties at 0.5
    const auto tied = export_synthetic(sg, ExportMode::sparsified, 3);
    CHECK(tied.edges == std::vector<Edge>{{0, 1}, {0, 2}, {0, 3}});
}

TEST_CASE("artifact: save and load both modes") {
    const fs::path dir = fs::temp_directory_path() / ("fairlink_artifact_" + std::to_string(::getpid()));
    std::mt19937_64 rng(8);
    SyntheticGraph sg{random_tensor(rng, 7, 2), random_psi(rng, 2, 3), std::vector<int>{0, 0, 1, 1, 0, 1, 1}};

    auto weighted = export_synthetic(sg, ExportMode::weighted);
    weighted.meta.set("architecture", "sage");
    save_artifact(weighted, dir / "w");
    const auto w = load_artifact(dir / "w");
    CHECK(w.mode == ExportMode::weighted);
    CHECK(rel_error(w.adjacency, sg.a_f()) <= 1e-15);
    CHECK(w.features == sg.x_f);
    CHECK(w.sensitive == sg.sensitive);
    CHECK(w.psi.w1 == sg.psi.w1);
    CHECK(w.meta.get_string("architecture") == "sage");

    const auto sparse = export_synthetic(sg, ExportMode::sparsified, 9);
    save_artifact(sparse, dir / "s");
    const auto s = load_artifact(dir / "s");
    CHECK(s.mode == ExportMode::sparsified);
    CHECK(s.edges == sparse.edges);
    CHECK(s.adjacency == sparse.adjacency);
    fs::remove_all(dir);
}
