#include "fairlink/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "fairlink/errors.hpp"

namespace fairlink {

namespace {

double sigmoid(double t) { return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }

Tensor uniform(std::size_t r, std::size_t c, double bound, Rng& rng) {
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor t(r, c);
    for (auto& v : t.values()) v = u(rng);
    return t;
}

// P = X W1[:D] + b1 and Q = X W1[D:], so the hidden pre-activation of (u,v) is P_u + Q_v.
void project(const Tensor& x, const PsiParams& psi, Tensor& p, Tensor& q) {
    const std::size_t d = x.cols(), h = psi.hidden();
    Tensor top(d, h), bottom(d, h);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t k = 0; k < h; ++k) {
            top(i, k) = psi.w1(i, k);
            bottom(i, k) = psi.w1(d + i, k);
        }
    }
    p = matmul(x, top);
    q = matmul(x, bottom);
    for (std::size_t u = 0; u < p.rows(); ++u) {
        for (std::size_t k = 0; k < h; ++k) p(u, k) += psi.b1[k];
    }
}

}  // namespace

void PsiParams::validate(std::size_t feature_dim) const {
    const std::size_t h = w1.cols();
    if (w1.rows() != 2 * feature_dim || h == 0) {
        throw ValidationError("psi W1 has shape " + w1.shape_string() + ", expected (" + std::to_string(2 * feature_dim) +
                              "xH)");
    }
    if (b1.rows() != 1 || b1.cols() != h) throw ValidationError("psi b1 has shape " + b1.shape_string());
    if (w2.rows() != h || w2.cols() != 1) throw ValidationError("psi w2 has shape " + w2.shape_string());
    if (b2.rows() != 1 || b2.cols() != 1) throw ValidationError("psi b2 has shape " + b2.shape_string());
    for (const auto* t : {&w1, &b1, &w2, &b2}) {
        if (!t->all_finite()) throw ValidationError("psi contains non-finite values");
    }
}

PsiParams init_psi(std::size_t feature_dim, std::size_t hidden, Rng& rng) {
    if (feature_dim == 0 || hidden == 0) throw ValidationError("init_psi: dimensions must be positive");
    const double b_in = 1.0 / std::sqrt(static_cast<double>(2 * feature_dim));
    const double b_hidden = 1.0 / std::sqrt(static_cast<double>(hidden));
    PsiParams psi;
    psi.w1 = uniform(2 * feature_dim, hidden, b_in, rng);
    psi.b1 = uniform(1, hidden, b_in, rng);
    psi.w2 = uniform(hidden, 1, b_hidden, rng);
    psi.b2 = uniform(1, 1, b_hidden, rng);
    return psi;
}

Checkpoint to_checkpoint(const PsiParams& psi) { return {"psi", psi.values()}; }

PsiParams psi_from_checkpoint(const Checkpoint& c) {
    if (c.tag != "psi") throw ValidationError("checkpoint tag '" + c.tag + "' is not psi");
    if (c.tensors.size() != 4) throw ValidationError("psi checkpoint must hold 4 tensors");
    PsiParams psi{c.tensors[0], c.tensors[1], c.tensors[2], c.tensors[3]};
    psi.validate(psi.input_dim());
    return psi;
}

Tensor soft_adjacency(const Tensor& x, const PsiParams& psi) {
    psi.validate(x.cols());
    const std::size_t n = x.rows(), h = psi.hidden();
    Tensor p, q;
    project(x, psi, p, q);
    const double* w2 = psi.w2.data().data();
    Tensor m(n, n);
    for (std::size_t u = 0; u < n; ++u) {
        const double* pu = p.data().data() + u * h;
        for (std::size_t v = 0; v < n; ++v) {
            const double* qv = q.data().data() + v * h;
            double s = 0.0;
            for (std::size_t k = 0; k < h; ++k) s += w2[k] * std::max(pu[k] + qv[k], 0.0);
            m(u, v) = s;
        }
    }
    const double b2 = psi.b2.item();
    Tensor a(n, n);
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = u + 1; v < n; ++v) {
            const double val = sigmoid(0.5 * (m(u, v) + m(v, u)) + b2);
            a(u, v) = val;
            a(v, u) = val;
        }
    }
    return a;
}

GeneratorGrad soft_adjacency_vjp(const Tensor& x, const PsiParams& psi, const Tensor& a, const Tensor& upstream) {
    psi.validate(x.cols());
    const std::size_t n = x.rows(), d = x.cols(), h = psi.hidden();
    if (a.rows() != n || a.cols() != n || upstream.rows() != n || upstream.cols() != n) {
        throw ValidationError("soft_adjacency_vjp: expected " + std::to_string(n) + "x" + std::to_string(n) + " inputs");
    }
    // dL/dm(u,v): m(u,v) enters a[u,v] and a[v,u] through the same symmetric logit.
    Tensor gm(n, n);
    double db2 = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = 0; v < n; ++v) {
            if (u == v) continue;
            const double s = a(u, v);
            const double g = 0.5 * (upstream(u, v) + upstream(v, u)) * s * (1.0 - s);
            gm(u, v) = g;
            db2 += g;
        }
    }

    Tensor p, q;
    project(x, psi, p, q);
    Tensor dp(n, h), dq(n, h), dw2(h, 1);
    const double* __restrict__ w2 = psi.w2.data().data();
    double* __restrict__ gw = dw2.values().data();
    for (std::size_t u = 0; u < n; ++u) {
        const double* __restrict__ pu = p.data().data() + u * h;
        double* __restrict__ dpu = dp.values().data() + u * h;
        for (std::size_t v = 0; v < n; ++v) {
            const double g = gm(u, v);
            if (g == 0.0) continue;
            const double* __restrict__ qv = q.data().data() + v * h;
            double* __restrict__ dqv = dq.values().data() + v * h;
            for (std::size_t k = 0; k < h; ++k) {
                const double pre = pu[k] + qv[k];
                const double active = pre > 0.0 ? g : 0.0;
                gw[k] += active * pre;
                dpu[k] += active * w2[k];
                dqv[k] += active * w2[k];
            }
        }
    }

    GeneratorGrad out;
    out.dpsi.w1 = Tensor(2 * d, h);
    out.dpsi.b1 = Tensor(1, h);
    out.dpsi.w2 = std::move(dw2);
    out.dpsi.b2 = Tensor::scalar(db2);
    const Tensor xt = transpose(x);
    const Tensor dtop = matmul(xt, dp), dbottom = matmul(xt, dq);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t k = 0; k < h; ++k) {
            out.dpsi.w1(i, k) = dtop(i, k);
            out.dpsi.w1(d + i, k) = dbottom(i, k);
        }
    }
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t k = 0; k < h; ++k) out.dpsi.b1[k] += dp(u, k);
    }
    Tensor top(d, h), bottom(d, h);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t k = 0; k < h; ++k) {
            top(i, k) = psi.w1(i, k);
            bottom(i, k) = psi.w1(d + i, k);
        }
    }
    out.dx = matmul(dp, transpose(top));
    const Tensor from_q = matmul(dq, transpose(bottom));
    for (std::size_t i = 0; i < out.dx.size(); ++i) out.dx[i] += from_q[i];
    return out;
}

std::string to_string(ExportMode mode) { return mode == ExportMode::weighted ? "weighted" : "sparsified"; }

ExportMode parse_export_mode(const std::string& name) {
    if (name == "weighted") return ExportMode::weighted;
    if (name == "sparsified") return ExportMode::sparsified;
    throw ValidationError("unknown export mode '" + name + "' (expected weighted or sparsified)");
}

SyntheticArtifact export_synthetic(const SyntheticGraph& sg, ExportMode mode, std::optional<std::size_t> target_edge_count) {
    const std::size_t n = sg.x_f.rows();
    if (sg.sensitive.size() != n) throw ValidationError("synthetic graph: sensitive vector does not match x_f");
    SyntheticArtifact art;
    art.mode = mode;
    art.features = sg.x_f;
    art.sensitive = sg.sensitive;
    art.psi = sg.psi;
    Tensor a = sg.a_f();
    if (mode == ExportMode::weighted) {
        if (target_edge_count) throw ValidationError("target_edge_count applies to sparsified export only");
        art.adjacency = std::move(a);
        return art;
    }

    const std::size_t max_edges = n * (n - 1) / 2;
    if (!target_edge_count) throw ValidationError("sparsified export needs a target edge count");
    if (*target_edge_count > max_edges) {
        throw ValidationError("target_edge_count " + std::to_string(*target_edge_count) + " exceeds N(N-1)/2 = " +
                              std::to_string(max_edges));
    }
    std::vector<Edge> pairs;
    pairs.reserve(max_edges);
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = u + 1; v < n; ++v) pairs.push_back({u, v});
    }
    const std::size_t k = *target_edge_count;
    std::partial_sort(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(k), pairs.end(),
                      [&a](const Edge& l, const Edge& r) {
                          const double wl = a(l.u, l.v), wr = a(r.u, r.v);
                          if (wl != wr) return wl > wr;
                          return l < r;
                      });
    pairs.resize(k);
    std::sort(pairs.begin(), pairs.end());
    art.adjacency = dense_adjacency(n, pairs);
    art.edges = std::move(pairs);
    return art;
}

void save_artifact(const SyntheticArtifact& art, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_matrix_csv(dir / "features.csv", art.features);
    {
        std::ofstream out(dir / "sensitive.csv", std::ios::binary | std::ios::trunc);
        if (!out) throw RuntimeFailure("cannot write " + (dir / "sensitive.csv").string());
        for (int s : art.sensitive) out << s << '\n';
    }
    save_checkpoint(dir / "psi.bin", to_checkpoint(art.psi));
    if (art.mode == ExportMode::weighted) {
        write_matrix_csv(dir / "adjacency.csv", art.adjacency);
    } else {
        write_edge_file(dir / "edges.tsv", art.edges);
    }
    KeyValues meta = art.meta;
    meta.set("mode", to_string(art.mode));
    meta.set("n_nodes", std::to_string(art.features.rows()));
    meta.save(dir / "artifact.meta");
}

SyntheticArtifact load_artifact(const std::filesystem::path& dir) {
    SyntheticArtifact art;
    art.meta = KeyValues::load(dir / "artifact.meta");
    art.mode = parse_export_mode(art.meta.get_string("mode"));
    art.features = read_matrix_csv(dir / "features.csv");
    art.sensitive = read_int_lines(dir / "sensitive.csv");
    art.psi = psi_from_checkpoint(load_checkpoint(dir / "psi.bin"));
    const std::size_t n = art.features.rows();
    if (art.sensitive.size() != n) throw ValidationError(dir.string() + ": sensitive.csv does not match features.csv");
    if (art.mode == ExportMode::weighted) {
        art.adjacency = read_matrix_csv(dir / "adjacency.csv");
        if (art.adjacency.rows() != n || art.adjacency.cols() != n) {
            throw ValidationError(dir.string() + ": adjacency.csv is " + art.adjacency.shape_string() + " for " +
                                  std::to_string(n) + " nodes");
        }
        for (std::size_t u = 0; u < n; ++u) {
            for (std::size_t v = 0; v < n; ++v) {
                const double w = art.adjacency(u, v);
                if (w < 0.0 || w > 1.0 || w != art.adjacency(v, u) || (u == v && w != 0.0)) {
                    throw ValidationError(dir.string() + ": adjacency.csv must be symmetric in [0,1] with zero diagonal");
                }
            }
        }
    } else {
        Graph g(n, read_edge_file(dir / "edges.tsv"), art.features, std::vector<int>(n, 0));
        art.edges = g.edges();
        art.adjacency = dense_adjacency(n, art.edges);
    }
    return art;
}

}  // namespace fairlink
