#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "dsrl/metrics.hpp"
#include "dsrl/rng.hpp"

using namespace dsrl;

namespace {

// Brute-force AP: recompute TP/FP from scratch at every distinct threshold of
// the descending sweep. Independent of the incremental implementation.
double ap_oracle(const std::vector<double>& scores, const std::vector<uint8_t>& labels) {
  std::vector<double> thresholds = scores;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  size_t total_pos = 0;
  for (uint8_t l : labels) total_pos += (l != 0);
  double ap = 0.0, prev_recall = 0.0;
  for (double th : thresholds) {
    size_t tp = 0, fp = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= th) {
        if (labels[i] != 0)
          ++tp;
        else
          ++fp;
      }
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

// O(n^2) pair counting.
double auc_oracle(const std::vector<double>& scores, const std::vector<uint8_t>& labels) {
  double wins = 0.0;
  size_t pairs = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 0) continue;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("average precision worked examples") {
  std::vector<double> s{0.9, 0.8, 0.7, 0.6};
  std::vector<uint8_t> l{1, 0, 1, 0};
  CHECK(average_precision(s, l) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));

  std::vector<uint8_t> perfect{1, 1, 0, 0};
  CHECK(average_precision(s, perfect) == 1.0);

  std::vector<uint8_t> all_pos{1, 1, 1, 1};
  CHECK(average_precision(s, all_pos) == 1.0);

  std::vector<uint8_t> none{0, 0, 0, 0};
  CHECK_THROWS_AS((void)average_precision(s, none), ContractError);
}

TEST_CASE("roc auc worked examples") {
  std::vector<double> s{0.9, 0.8, 0.7, 0.6};
  std::vector<uint8_t> l{1, 0, 1, 0};
  CHECK(roc_auc(s, l) == doctest::Approx(0.75).epsilon(1e-15));

  std::vector<uint8_t> perfect{1, 1, 0, 0};
  CHECK(roc_auc(s, perfect) == 1.0);

  std::vector<uint8_t> single{1, 1, 1, 1};
  CHECK_THROWS_AS((void)roc_auc(s, single), ContractError);
}

TEST_CASE("AP equals the brute-force oracle on every label pattern, n=8") {
  Rng rng(17);
  for (int pattern = 1; pattern < 256; ++pattern) {  // skip the no-positive pattern
    std::vector<uint8_t> labels(8);
    for (int i = 0; i < 8; ++i) labels[static_cast<size_t>(i)] = (pattern >> i) & 1;
    std::vector<double> scores(8);
    for (double& s : scores) s = rng.uniform();
    // inject ties on some patterns to exercise threshold grouping
    if (pattern % 3 == 0) scores[1] = scores[4];
    if (pattern % 5 == 0) scores[2] = scores[6];
    CHECK(average_precision(scores, labels) == ap_oracle(scores, labels));
  }
}

TEST_CASE("AUC equals pair counting") {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rng.uniform_int(2, 40);
    std::vector<double> scores(static_cast<size_t>(n));
    std::vector<uint8_t> labels(static_cast<size_t>(n));
    for (auto& s : scores) s = rng.uniform_int(0, 9) / 10.0;  // frequent ties
    bool has_pos = false, has_neg = false;
    for (auto& l : labels) {
      l = static_cast<uint8_t>(rng.uniform_int(0, 1));
      (l ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) continue;
    CHECK(roc_auc(scores, labels) == auc_oracle(scores, labels));
  }
}

TEST_CASE("metrics invariant under increasing transforms") {
  Rng rng(31);
  std::vector<double> scores(50);
  std::vector<uint8_t> labels(50);
  for (auto& s : scores) s = rng.uniform(-2.0, 2.0);
  for (size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<uint8_t>(i % 3 == 0);
  std::vector<double> transformed(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) transformed[i] = std::tanh(scores[i]) * 3.0 + 1.0;
  CHECK(average_precision(scores, labels) ==
        doctest::Approx(average_precision(transformed, labels)).epsilon(1e-14));
  CHECK(roc_auc(scores, labels) == doctest::Approx(roc_auc(transformed, labels)).epsilon(1e-14));
}

TEST_CASE("random scores on balanced labels give AUC near 0.5") {
  Rng rng(43);
  double sum = 0.0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> scores(400);
    std::vector<uint8_t> labels(400);
    for (auto& s : scores) s = rng.uniform();
    for (size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<uint8_t>(i % 2);
    sum += roc_auc(scores, labels);
  }
  CHECK(std::abs(sum / trials - 0.5) < 0.05);
}

TEST_CASE("constant scores give AP equal to positive prevalence") {
  std::vector<double> scores(40, 0.7);
  std::vector<uint8_t> labels(40, 0);
  for (size_t i = 0; i < 10; ++i) labels[i] = 1;
  CHECK(average_precision(scores, labels) == doctest::Approx(0.25).epsilon(1e-15));
}
