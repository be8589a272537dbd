#pragma once

#include <span>
#include <vector>

namespace fairlink {

// Mann-Whitney concordance (#{p > n} + 0.5 #{p == n}) / (|pos| |neg|), in percent.
double auc(std::span<const double> pos_scores, std::span<const double> neg_scores);

// F1 on the positive class at `threshold` (prob >= threshold predicts a link), in
// percent. Zero when precision + recall is zero.
double f1(std::span<const double> probs, std::span<const int> labels, double threshold = 0.5);

}  // namespace fairlink
