#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "exgnas/tensor.hpp"

namespace exgnas {

class AucUndefined : public std::domain_error {
 public:
  AucUndefined() : std::domain_error("AUC undefined on this node set") {}
};

// Mann-Whitney statistic of one column: P(score_pos > score_neg) + 0.5 P(tie),
// via average ranks.
inline double binary_auc(std::span<const double> scores, std::span<const char> positive) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j + 1);  // 1-based ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (positive[order[k]]) {
        rank_sum += avg_rank;
        ++n_pos;
      }
    i = j;
  }
  const double p = static_cast<double>(n_pos);
  const double q = static_cast<double>(n - n_pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

/// One-vs-rest ROC-AUC per class present in `nodes`, macro-averaged.
/// Column c of `scores` is the score for class c.
inline double auc_score(const Matrix& scores, const std::vector<int>& labels, std::span<const std::size_t> nodes) {
  if (nodes.empty()) throw std::invalid_argument("auc_score: empty node set");
  const std::size_t k = scores.cols();
  std::vector<std::size_t> count(k, 0);
  for (auto u : nodes) {
    const int l = labels.at(u);
    if (l < 0 || static_cast<std::size_t>(l) >= k) throw std::invalid_argument("auc_score: label outside score columns");
    ++count[static_cast<std::size_t>(l)];
  }
  std::size_t present = 0;
  for (auto c : count) present += c > 0;
  if (present < 2) throw AucUndefined();

  std::vector<double> col(nodes.size());
  std::vector<char> pos(nodes.size());
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    if (count[c] == 0) continue;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      col[i] = scores(nodes[i], c);
      pos[i] = labels[nodes[i]] == static_cast<int>(c);
    }
    total += binary_auc(col, pos);
  }
  return total / static_cast<double>(present);
}

/// Row-wise softmax, used to turn logits into class probabilities.
inline Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) s += (p(r, c) = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < row.size(); ++c) p(r, c) /= s;
  }
  return p;
}

}  // namespace exgnas
