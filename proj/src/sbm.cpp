#include "fairlink/sbm.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "fairlink/errors.hpp"
#include "fairlink/rng.hpp"

namespace fairlink {

void SbmConfig::validate() const {
    if (n_nodes == 0) throw ValidationError("sbm: n_nodes must be positive");
    if (group_sizes.empty()) throw ValidationError("sbm: group_sizes is empty");
    for (auto s : group_sizes) {
        if (s < 1) throw ValidationError("sbm: every group size must be >= 1");
    }
    if (std::accumulate(group_sizes.begin(), group_sizes.end(), std::size_t{0}) != n_nodes) {
        throw ValidationError("sbm: group_sizes must sum to n_nodes");
    }
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(p_intra) || !prob(p_inter)) throw ValidationError("sbm: probabilities must lie in [0,1]");
    if (feature_dim == 0) throw ValidationError("sbm: feature_dim must be positive");
    if (!(feature_signal >= 0.0)) throw ValidationError("sbm: feature_signal must be >= 0");
}

SbmConfig SbmConfig::from_keys(const KeyValues& kv) {
    kv.require_known({"n_nodes", "group_sizes", "p_intra", "p_inter", "feature_dim", "feature_signal", "seed"},
                     "gen-sbm");
    SbmConfig cfg;
    auto non_negative = [](std::int64_t v, const char* key) {
        if (v < 0) throw ValidationError(std::string("sbm: ") + key + " must be non-negative");
        return static_cast<std::size_t>(v);
    };
    cfg.n_nodes = non_negative(kv.get_int("n_nodes"), "n_nodes");
    cfg.group_sizes.clear();
    for (auto s : kv.get_int_list("group_sizes")) cfg.group_sizes.push_back(non_negative(s, "group_sizes"));
    cfg.p_intra = kv.get_double("p_intra");
    cfg.p_inter = kv.get_double("p_inter");
    cfg.feature_dim = non_negative(kv.get_int("feature_dim"), "feature_dim");
    cfg.feature_signal = kv.get_double("feature_signal");
    cfg.seed = kv.get_u64("seed");
    cfg.validate();
    return cfg;
}

KeyValues SbmConfig::to_keys() const {
    KeyValues kv;
    kv.set("n_nodes", std::to_string(n_nodes));
    std::string sizes;
    for (std::size_t i = 0; i < group_sizes.size(); ++i) sizes += (i ? "," : "") + std::to_string(group_sizes[i]);
    kv.set("group_sizes", sizes);
    kv.set("p_intra", format_double(p_intra));
    kv.set("p_inter", format_double(p_inter));
    kv.set("feature_dim", std::to_string(feature_dim));
    kv.set("feature_signal", format_double(feature_signal));
    kv.set("seed", std::to_string(seed));
    return kv;
}

Graph generate_sbm(const SbmConfig& cfg) {
    cfg.validate();
    const std::size_t k_groups = cfg.group_sizes.size();

    std::vector<std::size_t> canon(k_groups);  // canonical slot -> configured group
    std::iota(canon.begin(), canon.end(), 0);
    std::stable_sort(canon.begin(), canon.end(),
                     [&](std::size_t a, std::size_t b) { return cfg.group_sizes[a] > cfg.group_sizes[b]; });

    std::vector<std::size_t> out_offset(k_groups, 0);
    for (std::size_t k = 1; k < k_groups; ++k) out_offset[k] = out_offset[k - 1] + cfg.group_sizes[k - 1];

    // Canonical node index -> (output node id, group).
    std::vector<std::size_t> node_of(cfg.n_nodes);
    std::vector<int> group_of(cfg.n_nodes);
    {
        std::size_t c = 0;
        for (std::size_t slot = 0; slot < k_groups; ++slot) {
            const std::size_t k = canon[slot];
            for (std::size_t j = 0; j < cfg.group_sizes[k]; ++j, ++c) {
                node_of[c] = out_offset[k] + j;
                group_of[c] = static_cast<int>(k);
            }
        }
    }

    Rng rng = make_rng(cfg.seed, Stream::sbm);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::vector<Edge> edges;
    for (std::size_t a = 0; a < cfg.n_nodes; ++a) {
        for (std::size_t b = a + 1; b < cfg.n_nodes; ++b) {
            const double p = group_of[a] == group_of[b] ? cfg.p_intra : cfg.p_inter;
            if (coin(rng) < p) edges.push_back(canonical(node_of[a], node_of[b]));
        }
    }

    std::normal_distribution<double> noise(0.0, 1.0);
    Tensor features(cfg.n_nodes, cfg.feature_dim);
    std::vector<int> sensitive(cfg.n_nodes);
    for (std::size_t c = 0; c < cfg.n_nodes; ++c) {
        const int k = group_of[c];
        const double mean = k_groups > 1 ? cfg.feature_signal * (static_cast<double>(k) / static_cast<double>(k_groups - 1) - 0.5)
                                         : 0.0;
        for (std::size_t d = 0; d < cfg.feature_dim; ++d) features(node_of[c], d) = mean + noise(rng);
        sensitive[node_of[c]] = k;
    }
    return Graph(cfg.n_nodes, std::move(edges), std::move(features), std::move(sensitive));
}

}  // namespace fairlink
