#include "dsrl/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace dsrl {

namespace {

std::vector<size_t> descending_order(std::span<const double> scores) {
  std::vector<size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return idx;
}

}  // namespace

double average_precision(std::span<const double> scores, std::span<const uint8_t> labels) {
  if (scores.size() != labels.size())
    throw DimensionError("average_precision: scores/labels length mismatch");
  if (scores.empty()) throw ContractError("average_precision: empty input");
  size_t total_pos = 0;
  for (uint8_t l : labels) total_pos += (l != 0);
  if (total_pos == 0) throw ContractError("average_precision: no positive labels");

  const auto order = descending_order(scores);
  size_t tp = 0, fp = 0;
  double ap = 0.0;
  double prev_recall = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    // all items sharing this score enter the threshold together
    size_t j = i;
    size_t tp_group = 0, fp_group = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] != 0)
        ++tp_group;
      else
        ++fp_group;
      ++j;
    }
    tp += tp_group;
    fp += fp_group;
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

double roc_auc(std::span<const double> scores, std::span<const uint8_t> labels) {
  if (scores.size() != labels.size())
    throw DimensionError("roc_auc: scores/labels length mismatch");
  size_t total_pos = 0, total_neg = 0;
  for (uint8_t l : labels) (l != 0 ? total_pos : total_neg) += 1;
  if (total_pos == 0 || total_neg == 0)
    throw ContractError("roc_auc: need at least one positive and one negative label");

  // Count concordant pairs by sweeping scores in ascending order; equal-score
  // groups contribute half credit. Integer arithmetic until the final divide.
  auto order = descending_order(scores);
  std::reverse(order.begin(), order.end());  // ascending
  double win_halves = 0.0;  // concordant pairs counted in half units
  size_t neg_below = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    size_t pos_group = 0, neg_group = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] != 0)
        ++pos_group;
      else
        ++neg_group;
      ++j;
    }
    win_halves += 2.0 * static_cast<double>(pos_group) * static_cast<double>(neg_below);
    win_halves += static_cast<double>(pos_group) * static_cast<double>(neg_group);
    neg_below += neg_group;
    i = j;
  }
  return win_halves / (2.0 * static_cast<double>(total_pos) * static_cast<double>(total_neg));
}

}  // namespace dsrl
