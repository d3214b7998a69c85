#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>

#include "flimsod/image.hpp"

namespace flimsod {

inline constexpr int kOtsuBins = 256;

struct OtsuResult {
    double threshold = 0.0;  ///< upper edge of the last bin of the low class
    int bin = 0;             ///< last bin of the low class
    double min = 0.0;
    double max = 0.0;
};

/// Histogram bin of `v` after min-max scaling [lo, hi] onto 256 bins.
inline int otsu_bin(double v, double lo, double hi) {
    const double t = (v - lo) / (hi - lo) * kOtsuBins;
    return std::clamp(static_cast<int>(std::floor(t)), 0, kOtsuBins - 1);
}

/// Otsu threshold of a set of reals. Values are min-max scaled into 256 bins;
/// the split maximizing between-class variance wins, lowest bin on ties.
/// Throws DegenerateInput when all values are equal.
inline OtsuResult otsu_threshold(std::span<const double> values) {
    if (values.empty()) throw DegenerateInput("Otsu threshold of an empty set");
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (!(hi > lo)) throw DegenerateInput("Otsu threshold undefined: all values are equal");

    std::array<std::int64_t, kOtsuBins> hist{};
    for (double v : values) ++hist[otsu_bin(v, lo, hi)];

    std::int64_t total = 0;
    std::int64_t total_sum = 0;
    for (int b = 0; b < kOtsuBins; ++b) {
        total += hist[b];
        total_sum += hist[b] * b;
    }

    // Counts and index sums stay integral, so the variance of a given split
    // does not depend on how the sums were accumulated.
    std::int64_t n0 = 0;
    std::int64_t s0 = 0;
    double best = -1.0;
    int best_bin = 0;
    for (int b = 0; b < kOtsuBins - 1; ++b) {
        n0 += hist[b];
        s0 += hist[b] * b;
        const std::int64_t n1 = total - n0;
        if (n0 == 0 || n1 == 0) continue;
        const double mu0 = static_cast<double>(s0) / static_cast<double>(n0);
        const double mu1 = static_cast<double>(total_sum - s0) / static_cast<double>(n1);
        const double var = static_cast<double>(n0) * static_cast<double>(n1) * (mu0 - mu1) * (mu0 - mu1);
        if (var > best) {
            best = var;
            best_bin = b;
        }
    }
    const double edge = lo + (hi - lo) * static_cast<double>(best_bin + 1) / kOtsuBins;
    return {edge, best_bin, lo, hi};
}

/// Count of values strictly above `threshold`.
inline std::size_t count_above(std::span<const double> values, double threshold) {
    return static_cast<std::size_t>(
        std::count_if(values.begin(), values.end(), [&](double v) { return v > threshold; }));
}

}  // namespace flimsod
