#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "flimsod/error.hpp"
#include "flimsod/rng.hpp"

namespace flimsod {

struct KMeansOptions {
    int max_iterations = 100;
    double tolerance = 1e-6;  ///< stop once no center moves farther than this
};

struct KMeansResult {
    std::vector<std::vector<double>> centers;
    std::vector<int> assignment;
    /// Within-cluster sum of squares after each assignment step.
    std::vector<double> wcss_trace;
    int iterations = 0;
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = a[i] - b[i];
        d += t * t;
    }
    return d;
}

}  // namespace detail

/// Lloyd's k-means with k-means++ seeding. Clusters that lose all members are
/// re-seeded on the point farthest from its own center.
inline KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed,
                           const KMeansOptions& opt = {}) {
    const std::size_t n = points.size();
    if (n == 0) throw Error("k-means needs at least one point");
    if (k < 1 || static_cast<std::size_t>(k) > n) throw Error("k-means cluster count must be in [1, #points]");
    const std::size_t dim = points.front().size();
    for (const auto& p : points)
        if (p.size() != dim) throw Error("k-means points differ in dimension");

    Rng rng(seed);
    KMeansResult res;

    // k-means++ seeding; indices are drawn without replacement so duplicate
    // points still yield k distinct seeds.
    std::vector<bool> chosen(n, false);
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    std::size_t first = rng.below(n);
    res.centers.push_back(points[first]);
    chosen[first] = true;
    while (res.centers.size() < static_cast<std::size_t>(k)) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], detail::squared_distance(points[i], res.centers.back()));
            if (!chosen[i]) total += nearest[i];
        }
        std::size_t pick = n;
        if (total > 0.0) {
            double r = rng.uniform() * total;
            for (std::size_t i = 0; i < n; ++i) {
                if (chosen[i] || nearest[i] <= 0.0) continue;
                pick = i;
                r -= nearest[i];
                if (r < 0.0) break;
            }
        } else {
            std::vector<std::size_t> free;
            for (std::size_t i = 0; i < n; ++i)
                if (!chosen[i]) free.push_back(i);
            pick = free[rng.below(free.size())];
        }
        chosen[pick] = true;
        res.centers.push_back(points[pick]);
    }

    res.assignment.assign(n, 0);
    std::vector<double> dist(n, 0.0);
    for (int it = 0; it < opt.max_iterations; ++it) {
        double wcss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int arg = 0;
            for (int c = 0; c < k; ++c) {
                const double d = detail::squared_distance(points[i], res.centers[c]);
                if (d < best) {
                    best = d;
                    arg = c;
                }
            }
            res.assignment[i] = arg;
            dist[i] = best;
            wcss += best;
        }
        res.wcss_trace.push_back(wcss);
        res.iterations = it + 1;

        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto& s = sums[res.assignment[i]];
            for (std::size_t d = 0; d < dim; ++d) s[d] += points[i][d];
            ++counts[res.assignment[i]];
        }

        double moved = 0.0;
        std::vector<bool> taken(n, false);
        for (int c = 0; c < k; ++c) {
            std::vector<double> next(dim);
            if (counts[c] > 0) {
                for (std::size_t d = 0; d < dim; ++d) next[d] = sums[c][d] / static_cast<double>(counts[c]);
            } else {
                std::size_t far = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (!taken[i] && dist[i] > far_d) {
                        far_d = dist[i];
                        far = i;
                    }
                }
                taken[far] = true;
                next = points[far];
            }
            moved = std::max(moved, std::sqrt(detail::squared_distance(next, res.centers[c])));
            res.centers[c] = std::move(next);
        }
        if (moved < opt.tolerance) break;
    }
    return res;
}

}  // namespace flimsod
