// SPDX-License-Identifier: Apache-2.0
#include "e3/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "e3/errors.hpp"

namespace e3 {

double roc_auc(const std::vector<double>& pos_scores,
               const std::vector<double>& neg_scores) {
  if (pos_scores.empty() || neg_scores.empty()) {
    throw DataError("roc_auc: both score lists must be nonempty");
  }
  const std::size_t np = pos_scores.size();
  const std::size_t nn = neg_scores.size();
  std::vector<std::pair<double, bool>> all;  // (score, is_positive)
  all.reserve(np + nn);
  for (double s : pos_scores) all.emplace_back(s, true);
  for (double s : neg_scores) all.emplace_back(s, false);
  std::stable_sort(all.begin(), all.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  // Sum of average ranks (1-based) over positives, with ties sharing the
  // mean rank of their group.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // (i+1 + j)/2
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].second) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(np) *
                                      static_cast<double>(np + 1);
  return u / (static_cast<double>(np) * static_cast<double>(nn));
}

double accuracy(const std::vector<double>& scores,
                const std::vector<int>& labels, double threshold) {
  if (scores.size() != labels.size()) {
    throw ContractError("accuracy: scores/labels length mismatch");
  }
  if (scores.empty()) throw DataError("accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int pred = scores[i] >= threshold ? 1 : 0;
    if (pred == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

double rer(double auc_new, double auc_ref) {
  if (auc_ref == 1.0) {
    throw UndefinedError("rer: undefined when the reference AUC is 1");
  }
  return 100.0 * (auc_new - auc_ref) / (1.0 - auc_ref);
}

}  // namespace e3
