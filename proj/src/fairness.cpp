#include "fairlink/fairness.hpp"

#include <cmath>
#include <random>

#include "fairlink/errors.hpp"

namespace fairlink {

namespace {

double group_gap(std::span<const double> probs, std::span<const Edge> pairs, std::span<const int> s, const char* what) {
    if (probs.size() != pairs.size()) throw ValidationError(std::string(what) + ": probabilities do not align with pairs");
    // Sums are taken relative to the first probability so a constant predictor gives exactly 0.
    const double ref = probs.empty() ? 0.0 : probs[0];
    double intra_sum = 0.0, inter_sum = 0.0;
    std::size_t intra_n = 0, inter_n = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& e = pairs[i];
        if (e.u >= s.size() || e.v >= s.size()) throw ValidationError(std::string(what) + ": node index out of range");
        if (s[e.u] == s[e.v]) {
            intra_sum += probs[i] - ref;
            ++intra_n;
        } else {
            inter_sum += probs[i] - ref;
            ++inter_n;
        }
    }
    if (intra_n == 0) throw ValidationError(std::string(what) + ": no intra-group pairs");
    if (inter_n == 0) throw ValidationError(std::string(what) + ": no inter-group pairs");
    return 100.0 * std::fabs(intra_sum / static_cast<double>(intra_n) - inter_sum / static_cast<double>(inter_n));
}

}  // namespace

PairBatch sample_pairs(std::span<const int> sensitive, std::size_t m_per_side, Rng& rng) {
    if (m_per_side < 1) throw ValidationError("sample_pairs: m_per_side must be >= 1");
    const std::size_t n = sensitive.size();
    int max_id = -1;
    for (int s : sensitive) max_id = std::max(max_id, s);
    const auto k = static_cast<std::size_t>(max_id + 1);
    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(sensitive[i])].push_back(i);

    std::size_t populated = 0;
    for (const auto& m : members) populated += m.empty() ? 0 : 1;
    if (populated < 2) throw ValidationError("sample_pairs: no inter-group pairs (need at least two groups)");

    // First endpoint weighted by how many partners it has on each side.
    std::vector<double> w_intra(n), w_inter(n);
    double intra_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double own = static_cast<double>(members[static_cast<std::size_t>(sensitive[i])].size());
        w_intra[i] = own - 1.0;
        w_inter[i] = static_cast<double>(n) - own;
        intra_total += w_intra[i];
    }
    if (intra_total == 0.0) throw ValidationError("sample_pairs: no intra-group pairs (every group is a singleton)");

    std::discrete_distribution<std::size_t> first_intra(w_intra.begin(), w_intra.end());
    std::discrete_distribution<std::size_t> first_inter(w_inter.begin(), w_inter.end());
    PairBatch batch;
    batch.intra.reserve(m_per_side);
    batch.inter.reserve(m_per_side);
    for (std::size_t t = 0; t < m_per_side; ++t) {
        const std::size_t u = first_intra(rng);
        const auto& group = members[static_cast<std::size_t>(sensitive[u])];
        std::uniform_int_distribution<std::size_t> pick(0, group.size() - 2);
        std::size_t v = group[pick(rng)];
        if (v == u) v = group.back();  // skip u: index group.size()-1 stands in for u's slot
        batch.intra.push_back({u, v});
    }
    for (std::size_t t = 0; t < m_per_side; ++t) {
        const std::size_t u = first_inter(rng);
        const auto own = static_cast<std::size_t>(sensitive[u]);
        std::uniform_int_distribution<std::size_t> pick(0, n - members[own].size() - 1);
        std::size_t r = pick(rng);
        std::size_t v = 0;
        for (std::size_t g = 0; g < k; ++g) {
            if (g == own) continue;
            if (r < members[g].size()) {
                v = members[g][r];
                break;
            }
            r -= members[g].size();
        }
        batch.inter.push_back({u, v});
    }
    return batch;
}

PairBatch sample_pairs(const Graph& g, std::size_t m_per_side, std::uint64_t seed) {
    if (g.group_count() < 2) throw ValidationError("sample_pairs: no inter-group pairs (graph has one group)");
    Rng rng = make_rng(seed, Stream::pairs);
    PairBatch batch = sample_pairs(g.sensitive(), m_per_side, rng);
    batch.seed = seed;
    return batch;
}

ad::Expr fairness_loss(const ad::Expr& probs_intra, const ad::Expr& probs_inter) {
    for (const auto* p : {&probs_intra, &probs_inter}) {
        if (!p->valid() || p->value().size() == 0) throw ValidationError("fairness_loss: empty probability vector");
        for (double v : p->value().values()) {
            if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("fairness_loss: probability outside [0,1]");
        }
    }
    const double ref = probs_intra.value()[0];
    return ad::abs(ad::mean(ad::add_scalar(probs_intra, -ref)) - ad::mean(ad::add_scalar(probs_inter, -ref)));
}

double delta_dp(std::span<const double> probs, std::span<const Edge> pairs, std::span<const int> sensitive) {
    return group_gap(probs, pairs, sensitive, "delta_dp");
}

double delta_eo(std::span<const double> probs, std::span<const Edge> pos_edges, std::span<const int> sensitive) {
    return group_gap(probs, pos_edges, sensitive, "delta_eo");
}

}  // namespace fairlink
