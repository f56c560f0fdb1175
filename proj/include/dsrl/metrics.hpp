#pragma once

#include <cstdint>
#include <span>

#include "dsrl/errors.hpp"

namespace dsrl {

// Frame-level ranking metrics. Both are invariant under strictly increasing
// score transforms and handle ties by grouping equal scores into a single
// threshold step.

// AP = sum_n (R_n - R_{n-1}) P_n over the descending-score sweep.
// Throws ContractError when there is no positive label.
double average_precision(std::span<const double> scores, std::span<const uint8_t> labels);

// Mann-Whitney form: fraction of (positive, negative) pairs ranked correctly,
// ties counted 1/2. Throws ContractError on single-class input.
double roc_auc(std::span<const double> scores, std::span<const uint8_t> labels);

}  // namespace dsrl
