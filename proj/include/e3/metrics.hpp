// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

namespace e3 {

// Mann-Whitney AUC via average ranks: probability that a random positive
// scores above a random negative, with half credit for ties. O(n log n).
double roc_auc(const std::vector<double>& pos_scores,
               const std::vector<double>& neg_scores);

// Fraction of samples where (score >= threshold) matches the binary label.
double accuracy(const std::vector<double>& scores,
                const std::vector<int>& labels, double threshold = 0.5);

// Relative error reduction, in percent: 100*(auc_new - auc_ref)/(1 - auc_ref).
double rer(double auc_new, double auc_ref);

}  // namespace e3
