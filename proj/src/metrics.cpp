#include "fairlink/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "fairlink/errors.hpp"

namespace fairlink {

double auc(std::span<const double> pos_scores, std::span<const double> neg_scores) {
    if (pos_scores.empty() || neg_scores.empty()) throw ValidationError("auc: empty score list");
    for (auto side : {pos_scores, neg_scores}) {
        for (double v : side) {
            if (std::isnan(v)) throw ValidationError("auc: NaN score");
        }
    }
    std::vector<double> neg(neg_scores.begin(), neg_scores.end());
    std::sort(neg.begin(), neg.end());
    // Counts stay integral (doubled to keep the half-ties exact) until the final division.
    unsigned long long twice_concordant = 0;
    for (double p : pos_scores) {
        const auto lo = std::lower_bound(neg.begin(), neg.end(), p);
        const auto hi = std::upper_bound(lo, neg.end(), p);
        twice_concordant += 2ULL * static_cast<unsigned long long>(lo - neg.begin()) +
                            static_cast<unsigned long long>(hi - lo);
    }
    const double pairs = static_cast<double>(pos_scores.size()) * static_cast<double>(neg.size());
    return 100.0 * (static_cast<double>(twice_concordant) / 2.0) / pairs;
}

double f1(std::span<const double> probs, std::span<const int> labels, double threshold) {
    if (probs.size() != labels.size()) throw ValidationError("f1: probabilities do not align with labels");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const bool predicted = probs[i] >= threshold;
        const bool actual = labels[i] != 0;
        if (predicted && actual) ++tp;
        if (predicted && !actual) ++fp;
        if (!predicted && actual) ++fn;
    }
    if (tp == 0) return 0.0;
    // 2PR/(P+R) simplifies to 2TP/(2TP+FP+FN).
    return 100.0 * static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
}

}  // namespace fairlink
