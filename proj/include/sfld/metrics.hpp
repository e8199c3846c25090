// Copyright (C) 2026 The SFLD Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "sfld/error.hpp"

namespace sfld {

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// Area under the precision-recall curve, step-wise:
///   AP = sum_k (R_k - R_{k-1}) * P_k
/// over score thresholds in descending order. Equal scores form one
/// threshold, so precision is taken after the whole tie group.
inline double average_precision(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) fail(Errc::LengthMismatch, "scores and labels differ in length");
    const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    if (n_pos == 0 || n_pos == labels.size()) {
        fail(Errc::DegenerateLabels, "average precision needs both positive and negative labels");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    double prev_recall = 0.0;
    std::size_t tp = 0;
    std::size_t seen = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        for (; i < order.size() && scores[order[i]] == s; ++i) {
            tp += labels[order[i]] == 1 ? 1 : 0;
            ++seen;
        }
        const double recall = static_cast<double>(tp) / n_pos;
        const double precision = static_cast<double>(tp) / seen;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

}  // namespace sfld
