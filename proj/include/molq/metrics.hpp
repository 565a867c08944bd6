#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "molq/errors.hpp"

namespace molq {

/// Area under the ROC curve of score-ranked retrieval of flagged items,
/// computed by the rank-sum (Mann-Whitney) formula with average ranks for
/// ties. Empty when either class is absent.
inline std::optional<double> roc_auc(const std::vector<double>& scores,
                                     const std::vector<bool>& flags) {
    if (scores.size() != flags.size()) throw ShapeError("roc_auc: score/flag length mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (bool f : flags) n_pos += f ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k)
            if (flags[order[k]]) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

/// q-quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw TooSmallError("quantile: empty sample");
    std::sort(values.begin(), values.end());
    const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= values.size()) return values.back();
    const double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

struct HistogramBin {
    double lo = 0.0;
    double hi = 0.0;
    long count = 0;
};

/// Fixed-width histogram from 0 to the sample maximum.
inline std::vector<HistogramBin> histogram(const std::vector<double>& values, double width) {
    std::vector<HistogramBin> bins;
    if (values.empty() || width <= 0) return bins;
    const double mx = *std::max_element(values.begin(), values.end());
    const int n_bins = std::max(1, static_cast<int>(std::floor(mx / width)) + 1);
    bins.resize(n_bins);
    for (int b = 0; b < n_bins; ++b) {
        bins[b].lo = b * width;
        bins[b].hi = (b + 1) * width;
    }
    for (double v : values) {
        int b = static_cast<int>(std::floor(v / width));
        b = std::clamp(b, 0, n_bins - 1);
        bins[b].count += 1;
    }
    return bins;
}

/// Five confidence bins over total uncertainty: (0, 0.1], ..., (0.4, 0.5].
/// A total of exactly zero lands in the first bin.
inline int confidence_bin(double total) {
    if (total <= 0.0) return 0;
    int b = static_cast<int>(std::ceil(total / 0.1)) - 1;
    return std::clamp(b, 0, 4);
}

/// Decile of a probability in [0,1]; p = 1 folds into the last decile.
inline int probability_decile(double p) {
    return std::clamp(static_cast<int>(p * 10.0), 0, 9);
}

}  // namespace molq
