// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Pass criterion numbers as arguments to run a
// subset, e.g. `acceptance 1 2 3`.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "../unit/fd_oracle.hpp"
#include "fairlink/cli.hpp"
#include "fairlink/distill.hpp"
#include "fairlink/errors.hpp"
#include "fairlink/eval.hpp"
#include "fairlink/fairness.hpp"
#include "fairlink/metrics.hpp"
#include "fairlink/sbm.hpp"

using namespace fairlink;
using fairlink::testing::fd_gradient;
using fairlink::testing::random_tensor;
using fairlink::testing::rel_error;
namespace fs = std::filesystem;

namespace {

// Tolerances and thresholds.
constexpr double kThetaGradTol = 1e-6;
constexpr double kMetaGradTol = 1e-4;
constexpr double kOracleTol = 1e-12;
constexpr double kDpRatioMax = 0.5;
constexpr double kAucRatioMin = 0.9;
constexpr double kF1RatioMin = 0.9;
constexpr double kCrossDpRatioMax = 0.7;

// Distillation settings for the SBM-300 experiment. alpha lies above the
// {0.1, ..., 2.5} grid because the utility term sums one distance per weight
// tensor; gamma = 0 keeps only the scale-free cosine part of the distance.
DistillConfig experiment_config(std::uint64_t seed) {
    DistillConfig c;
    c.alpha = 10.0;
    c.gamma = 0.0;
    c.seed = seed;
    return c;
}

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

// ---------------------------------------------------------------------------

Tensor symmetric_soft(std::mt19937_64& rng, std::size_t n) {
    Tensor a = random_tensor(rng, n, n, 0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        a(i, i) = 0.0;
        for (std::size_t j = 0; j < i; ++j) a(i, j) = a(j, i);
    }
    return a;
}

std::vector<Edge> random_pairs(std::mt19937_64& rng, std::size_t n, std::size_t count) {
    std::uniform_int_distribution<std::size_t> node(0, n - 1);
    std::vector<Edge> out;
    while (out.size() < count) {
        const std::size_t u = node(rng), v = node(rng);
        if (u != v) out.push_back({u, v});
    }
    return out;
}

Verdict theta_gradients() {
    std::mt19937_64 rng(101);
    double worst = 0.0;
    std::size_t checks = 0;
    for (int inst = 0; inst < 20; ++inst) {
        const std::size_t n = 5 + rng() % 26, d = 2 + rng() % 5;
        const Tensor adj = symmetric_soft(rng, n);
        const Tensor x = random_tensor(rng, n, d);
        const auto pos = random_pairs(rng, n, 3 + rng() % 15);
        const auto neg = random_pairs(rng, n, 3 + rng() % 15);
        for (auto arch : {Architecture::sage, Architecture::gcn, Architecture::mlp}) {
            Rng init = make_rng(static_cast<std::uint64_t>(inst), Stream::init);
            const PredictorParams p = init_params(arch, d, 4 + rng() % 5, 3 + rng() % 4, init);
            std::vector<ad::Expr> w;
            for (std::size_t k = 0; k < p.weights.size(); ++k) w.push_back(ad::leaf(p.weights[k], "w" + std::to_string(k)));
            const ad::Expr loss = link_loss(encode(arch, w, propagation(arch, ad::constant(adj)), ad::constant(x)), pos, neg);
            const auto g = ad::grad_values(loss, w);
            for (std::size_t k = 0; k < w.size(); ++k) {
                worst = std::max(worst, rel_error(g[k], fd_gradient(loss, w[k], 1e-5)));
                ++checks;
            }
        }
    }
    return {worst <= kThetaGradTol, std::to_string(checks) + " weight tensors over 20 instances x 3 encoders, max rel err " +
                                        fmt("%.2e", worst) + " (tol " + fmt("%.0e", kThetaGradTol) + ")"};
}

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

Verdict meta_gradients() {
    std::mt19937_64 rng(202);
    double worst = 0.0;
    int instances = 0;
    for (auto arch : {Architecture::sage, Architecture::gcn, Architecture::mlp}) {
        for (double alpha : {0.0, 0.5}) {
            for (double gamma : {0.0, 1.0}) {
                const std::size_t n = 8 + rng() % 13, d = 2 + rng() % 3, h = 3 + rng() % 4;
                ++instances;
                std::vector<int> s(n);
                for (std::size_t i = 0; i < n; ++i) s[i] = static_cast<int>(rng() % 2);
                s[0] = 0;
                s[1] = 1;
                OuterProblem prob;
                prob.arch = arch;
                prob.alpha = alpha;
                prob.gamma = gamma;
                Rng init = make_rng(static_cast<std::uint64_t>(instances), Stream::init);
                prob.theta = init_params(arch, d, 5, 4, init).weights;
                prob.positives = random_pairs(rng, n, 10);
                prob.negatives = random_pairs(rng, n, 10);
                const Tensor x = random_tensor(rng, n, d);
                const PsiParams real_psi{random_tensor(rng, 2 * d, h), random_tensor(rng, 1, h), random_tensor(rng, h, 1),
                                         random_tensor(rng, 1, 1)};
                prob.real_grad = link_loss_grad(arch, prob.theta, soft_adjacency(x, real_psi), x, prob.positives,
                                                prob.negatives);
                Rng pair_rng = make_rng(static_cast<std::uint64_t>(instances), Stream::pairs);
                prob.pairs = sample_pairs(s, 12, pair_rng);

                Tensor x_f = x;
                for (auto& v : x_f.values()) v += std::normal_distribution<double>(0.0, 0.3)(rng);
                PsiParams psi{random_tensor(rng, 2 * d, h), random_tensor(rng, 1, h), random_tensor(rng, h, 1),
                              random_tensor(rng, 1, 1)};
                const OuterValue ov = outer_objective(prob, x_f, psi, true);
                auto f = [&] { return outer_objective(prob, x_f, psi, false).objective; };
                worst = std::max(worst, rel_error(ov.dx, numeric_grad(x_f, f, 1e-5)));
                worst = std::max(worst, rel_error(ov.dpsi.w1, numeric_grad(psi.w1, f, 1e-5)));
                worst = std::max(worst, rel_error(ov.dpsi.b1, numeric_grad(psi.b1, f, 1e-5)));
                worst = std::max(worst, rel_error(ov.dpsi.w2, numeric_grad(psi.w2, f, 1e-5)));
                worst = std::max(worst, rel_error(ov.dpsi.b2, numeric_grad(psi.b2, f, 1e-5)));
            }
        }
    }
    return {worst <= kMetaGradTol, std::to_string(instances) + " instances (3 encoders, alpha {0,0.5}, gamma {0,1}), " +
                                       "max rel err over x_f and psi " + fmt("%.2e", worst) + " (tol " +
                                       fmt("%.0e", kMetaGradTol) + ")"};
}

// Reference implementations: direct double loops over the definitions.
double naive_gap(const std::vector<double>& p, const std::vector<Edge>& pairs, const std::vector<int>& s) {
    double a = 0, b = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (s[pairs[i].u] == s[pairs[i].v]) {
            a += p[i];
            na += 1;
        } else {
            b += p[i];
            nb += 1;
        }
    }
    return 100.0 * std::fabs(a / na - b / nb);
}

double naive_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
    double score = 0;
    for (double p : pos) {
        for (double q : neg) score += p > q ? 1.0 : (p == q ? 0.5 : 0.0);
    }
    return 100.0 * score / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

double naive_f1(const std::vector<double>& p, const std::vector<int>& y) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const bool hit = p[i] >= 0.5;
        tp += hit && y[i] == 1;
        fp += hit && y[i] == 0;
        fn += !hit && y[i] == 1;
    }
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    return precision + recall > 0 ? 100.0 * 2 * precision * recall / (precision + recall) : 0.0;
}

Verdict metric_oracles() {
    std::mt19937_64 rng(303);
    double worst = 0.0;
    int trials = 0;
    for (; trials < 500; ++trials) {
        const std::size_t n = 4 + rng() % 30;
        std::vector<int> s(n);
        for (std::size_t i = 0; i < n; ++i) s[i] = static_cast<int>(rng() % 3);
        s[0] = s[2] = 0;
        s[1] = 1;
        const std::size_t n_pairs = 2 + rng() % 199;
        std::vector<Edge> pairs{{0, 2}, {0, 1}};
        const auto extra = random_pairs(rng, n, n_pairs - 2);
        pairs.insert(pairs.end(), extra.begin(), extra.end());
        std::vector<double> p(n_pairs);
        std::vector<int> y(n_pairs);
        for (std::size_t i = 0; i < n_pairs; ++i) {
            p[i] = trials % 2 ? static_cast<double>(rng() % 21) / 20.0 : std::uniform_real_distribution<double>(0, 1)(rng);
            y[i] = static_cast<int>(rng() % 2);
        }
        y[0] = 1;
        y[1] = 0;
        std::vector<double> pos, neg;
        for (std::size_t i = 0; i < n_pairs; ++i) (y[i] ? pos : neg).push_back(p[i]);
        worst = std::max(worst, std::fabs(delta_dp(p, pairs, s) - naive_gap(p, pairs, s)));
        worst = std::max(worst, std::fabs(delta_eo(p, pairs, s) - naive_gap(p, pairs, s)));
        worst = std::max(worst, std::fabs(auc(pos, neg) - naive_auc(pos, neg)));
        worst = std::max(worst, std::fabs(f1(p, y) - naive_f1(p, y)));
    }

    auto col = [](std::vector<double> v) { return ad::constant(Tensor::column(v)); };
    const std::vector<ad::Expr> ga{col({1.0, 0.0})}, gb{col({0.0, 1.0})};
    const double orth = grad_distance(ga, gb, 1.0).value().item();
    const double auc_hand = auc(std::vector<double>{0.9, 0.4}, std::vector<double>{0.6, 0.1});
    const double fair_hand = fairness_loss(col({0.9, 0.7}), col({0.5, 0.4, 0.6})).value().item();
    const double hand_err = std::max({std::fabs(orth - (1.0 + std::sqrt(2.0))), std::fabs(auc_hand - 75.0),
                                      std::fabs(fair_hand - 0.3)});
    worst = std::max(worst, hand_err);
    return {worst <= kOracleTol, std::to_string(trials) + " random cases up to 200 pairs plus hand cases (distance " +
                                     fmt("%.15f", orth) + ", AUC " + fmt("%.1f", auc_hand) + ", L_fair " +
                                     fmt("%.15f", fair_hand) + "), max abs err " + fmt("%.2e", worst) + " (tol " +
                                     fmt("%.0e", kOracleTol) + ")"};
}

// ---------------------------------------------------------------------------

struct ExperimentMeans {
    double sage_orig_f1 = 0, sage_orig_auc = 0, sage_orig_dp = 0;
    double sage_art_f1 = 0, sage_art_auc = 0, sage_art_dp = 0;
    double gcn_orig_dp = 0, gcn_art_dp = 0;
    double seconds = 0;
};

// SBM-300 (150/150, p_intra 0.1, p_inter 0.01, signal 1) with a fixed graph and
// split; each of 5 seeds distills a SAGE artifact and trains SAGE and GCN
// predictors on the original and on the artifact.
const ExperimentMeans& experiment() {
    static const ExperimentMeans means = [] {
        const auto t0 = std::chrono::steady_clock::now();
        SbmConfig sc;
        sc.n_nodes = 300;
        sc.group_sizes = {150, 150};
        sc.p_intra = 0.1;
        sc.p_inter = 0.01;
        sc.feature_signal = 1.0;
        sc.seed = 7;
        const Graph g = generate_sbm(sc);
        const EdgeSplit split = split_edges(g, {}, 1.0, 7);
        const TrainingSubstrate orig = original_substrate(g, split);
        ExperimentMeans m;
        const int seeds = 5;
        for (int i = 0; i < seeds; ++i) {
            const std::uint64_t seed = 7 + static_cast<std::uint64_t>(i);
            const DistillResult res = distill(g, split, Architecture::sage, experiment_config(seed));
            SyntheticArtifact art = export_synthetic(res.graph, ExportMode::weighted);
            art.meta.set("architecture", "sage");
            const TrainingSubstrate synth = artifact_substrate(art);
            const auto so = evaluate(orig, split, g.sensitive(), Architecture::sage, seed);
            const auto sa = evaluate(synth, split, g.sensitive(), Architecture::sage, seed);
            const auto go = evaluate(orig, split, g.sensitive(), Architecture::gcn, seed);
            const auto ga = evaluate(synth, split, g.sensitive(), Architecture::gcn, seed);
            std::printf("  seed %llu: SAGE orig f1 %.2f auc %.2f dp %.2f | artifact f1 %.2f auc %.2f dp %.2f | "
                        "GCN dp orig %.2f artifact %.2f\n",
                        static_cast<unsigned long long>(seed), so.f1, so.auc, so.delta_dp, sa.f1, sa.auc, sa.delta_dp,
                        go.delta_dp, ga.delta_dp);
            std::fflush(stdout);
            m.sage_orig_f1 += so.f1 / seeds;
            m.sage_orig_auc += so.auc / seeds;
            m.sage_orig_dp += so.delta_dp / seeds;
            m.sage_art_f1 += sa.f1 / seeds;
            m.sage_art_auc += sa.auc / seeds;
            m.sage_art_dp += sa.delta_dp / seeds;
            m.gcn_orig_dp += go.delta_dp / seeds;
            m.gcn_art_dp += ga.delta_dp / seeds;
        }
        m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return m;
    }();
    return means;
}

Verdict fairness_effect() {
    const auto& m = experiment();
    const double dp_ratio = m.sage_art_dp / m.sage_orig_dp, auc_ratio = m.sage_art_auc / m.sage_orig_auc;
    return {dp_ratio <= kDpRatioMax && auc_ratio >= kAucRatioMin,
            "SAGE 5-seed mean dDP " + fmt("%.2f", m.sage_art_dp) + " vs " + fmt("%.2f", m.sage_orig_dp) + " (ratio " +
                fmt("%.3f", dp_ratio) + ", max " + fmt("%.2f", kDpRatioMax) + "), AUC " + fmt("%.2f", m.sage_art_auc) +
                " vs " + fmt("%.2f", m.sage_orig_auc) + " (ratio " + fmt("%.3f", auc_ratio) + ", min " +
                fmt("%.2f", kAucRatioMin) + "), experiment " + fmt("%.0f", m.seconds) + " s"};
}

Verdict utility_retention() {
    const auto& m = experiment();
    const double ratio = m.sage_art_f1 / m.sage_orig_f1;
    return {ratio >= kF1RatioMin, "SAGE 5-seed mean F1 " + fmt("%.2f", m.sage_art_f1) + " vs " +
                                      fmt("%.2f", m.sage_orig_f1) + " (ratio " + fmt("%.3f", ratio) + ", min " +
                                      fmt("%.2f", kF1RatioMin) + ")"};
}

Verdict cross_architecture() {
    const auto& m = experiment();
    const double ratio = m.gcn_art_dp / m.gcn_orig_dp;
    return {ratio <= kCrossDpRatioMax, "SAGE-distilled artifact under GCN: 5-seed mean dDP " + fmt("%.2f", m.gcn_art_dp) +
                                           " vs plain GCN " + fmt("%.2f", m.gcn_orig_dp) + " (ratio " +
                                           fmt("%.3f", ratio) + ", max " + fmt("%.2f", kCrossDpRatioMax) + ")"};
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw RuntimeFailure("cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void must_run(std::vector<std::string> args) {
    args.insert(args.begin(), "fairlink");
    std::ostringstream out, err;
    if (cli::run(args, out, err) != 0) throw RuntimeFailure("cli " + args[1] + " failed: " + err.str());
}

Verdict cli_determinism() {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path root = fs::temp_directory_path() / ("fairlink_accept_" + std::to_string(::getpid()));
    fs::remove_all(root);
    std::vector<std::string> metrics;
    for (const std::string run : {"a", "b"}) {
        const fs::path d = root / run;
        const std::string g = (d / "graph").string(), s = (d / "split").string(), art = (d / "artifact").string();
        must_run({"gen-sbm", "--n_nodes", "100", "--group_sizes", "50,50", "--seed", "7", "--out", g});
        must_run({"split", "--graph", g, "--seed", "7", "--out", s});
        must_run({"distill", "--graph", g, "--split", s, "--seed", "7", "--out", art});
        must_run({"eval", "--graph", g, "--split", s, "--seed", "7", "--out", (d / "eval_orig").string()});
        must_run({"sweep", "--graph", g, "--split", s, "--artifact", art, "--seed", "7", "--out",
                  (d / "eval_art").string()});
        must_run({"report", "--metrics", (d / "eval_orig/metrics.jsonl").string() + "," + (d / "eval_art/metrics.jsonl").string(),
                  "--out", (d / "report").string()});
        metrics.push_back(slurp(d / "eval_orig/metrics.jsonl") + slurp(d / "eval_art/metrics.jsonl"));
    }
    fs::remove_all(root);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto lines = std::count(metrics[0].begin(), metrics[0].end(), '\n');
    return {metrics[0] == metrics[1] && lines > 0,
            "gen-sbm -> split -> distill -> eval/sweep -> report on SBM-100 seed 7 twice: " + std::to_string(lines) +
                " metric lines, " + (metrics[0] == metrics[1] ? "byte-identical" : "DIFFERENT") + ", " +
                fmt("%.0f", secs) + " s"};
}

// ---------------------------------------------------------------------------

template <class E, class F>
bool raises(F f) {
    try {
        f();
    } catch (const E&) {
        return true;
    } catch (...) {
        return false;
    }
    return false;
}

Verdict degenerate_inputs() {
    std::vector<std::string> failures;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    };

    // One sensitive group.
    SbmConfig one;
    one.n_nodes = 20;
    one.group_sizes = {20};
    one.p_intra = 0.3;
    one.p_inter = 0.0;
    one.feature_dim = 3;
    const Graph single = generate_sbm(one);
    expect(raises<ValidationError>([&] { sample_pairs(single, 10, 1); }), "sample_pairs on K=1");
    expect(raises<ValidationError>([&] {
               DistillConfig c;
               c.t_total = 2;
               c.restarts = 1;
               distill(single, split_edges(single, {}, 1.0, 1), Architecture::sage, c);
           }),
           "distill on K=1");

    // A predictor with zero weights scores every pair 0.5.
    const std::size_t n = 10;
    std::vector<int> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = static_cast<int>(i % 2);
    std::vector<Edge> pairs;
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = u + 1; v < n; ++v) pairs.push_back({u, v});
    }
    Rng init = make_rng(1, Stream::init);
    PredictorParams zero = init_params(Architecture::sage, 3, 4, 2, init);
    for (auto& w : zero.weights) w = Tensor(w.rows(), w.cols());
    std::mt19937_64 rng(9);
    const EncoderInput in{symmetric_soft(rng, n), random_tensor(rng, n, 3)};
    const auto probs = link_prob(embed(zero, in), pairs);
    expect(delta_dp(probs, pairs, s) == 0.0, "constant predictor dDP");
    expect(delta_eo(probs, pairs, s) == 0.0, "constant predictor dEO");
    std::vector<double> intra, inter;
    for (std::size_t i = 0; i < pairs.size(); ++i) (s[pairs[i].u] == s[pairs[i].v] ? intra : inter).push_back(probs[i]);
    expect(fairness_loss(ad::constant(Tensor::column(intra)), ad::constant(Tensor::column(inter))).value().item() == 0.0,
           "constant predictor L_fair");

    // Empty pair lists.
    const std::vector<Edge> none;
    const std::vector<double> empty;
    expect(raises<ValidationError>([&] { link_loss(ad::constant(Tensor(4, 2)), none, none); }), "link_loss empty");
    expect(raises<ValidationError>([&] { auc(empty, std::vector<double>{0.5}); }), "auc empty");
    expect(raises<ValidationError>([&] { delta_dp(empty, none, s); }), "delta_dp empty");
    expect(raises<ValidationError>([&] { delta_eo(empty, none, s); }), "delta_eo empty");
    expect(raises<ValidationError>([&] { fairness_loss(ad::constant(Tensor(0, 1)), ad::constant(Tensor(2, 1, 0.5))); }),
           "fairness_loss empty");
    expect(raises<ValidationError>([&] {
               Supervision sup;
               train_predictor(in, sup, TrainOptions{});
           }),
           "train_predictor without positives");

    // Self-loops, in memory and on disk.
    expect(raises<ValidationError>([&] { Graph(3, {{1, 1}}, Tensor(3, 1), {0, 1, 0}); }), "self-loop edge");
    const fs::path loops = fs::temp_directory_path() / ("fairlink_loops_" + std::to_string(::getpid()) + ".tsv");
    {
        std::ofstream f(loops);
        f << "0\t1\n2\t2\n";
    }
    expect(raises<ValidationError>([&] { read_edge_file(loops); }), "self-loop in edge file");
    fs::remove(loops);

    std::string detail = "K=1 pairs/distill, constant predictor dDP/dEO/L_fair, 6 empty-input cases, 2 self-loop cases";
    if (!failures.empty()) {
        detail += "; failed:";
        for (const auto& f : failures) detail += " [" + f + "]";
    }
    return {failures.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"gradient correctness", theta_gradients},
        {"meta-gradient correctness", meta_gradients},
        {"metric oracles", metric_oracles},
        {"fairness effect", fairness_effect},
        {"utility retention", utility_retention},
        {"cross-architecture generalization", cross_architecture},
        {"CLI determinism", cli_determinism},
        {"degenerate inputs", degenerate_inputs},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!wanted.empty() && !wanted.count(id)) continue;
        Verdict v;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("criterion %d %s: %s - %s [%.1f s]\n", id, criteria[i].first.c_str(), v.pass ? "PASS" : "FAIL",
                    v.detail.c_str(), secs);
        std::fflush(stdout);
        failed += v.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
