#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <tuple>
#include <vector>

#include "flimsod/image.hpp"

namespace flimsod {

struct SeedSet {
    std::vector<Pixel> internal;  ///< object seeds
    std::vector<Pixel> external;  ///< background seeds
};

/// Full forest produced by dynamic-trees delineation, kept for audits.
struct DelineationForest {
    BinaryMask object;
    std::vector<double> cost;           ///< max-arc path cost per pixel
    std::vector<std::int64_t> pred;     ///< predecessor pixel index, -1 at roots
    std::vector<std::int64_t> root;     ///< root pixel index of the pixel's tree
};

/// Seeded forest growth where each tree carries the running mean color of its
/// pixels. A pixel q offered by p costs max(cost(p), ||color(q) - mean(tree(p))||).
/// Pixels are conquered in nondecreasing cost, ties first-in first-out; the
/// tree mean is updated when a pixel is conquered. Pixels of trees rooted at
/// internal seeds form the object.
inline DelineationForest dynamic_trees_forest(const MultiChannelImage& img, const SeedSet& seeds,
                                              AdjacencySpec adj = {}) {
    if (seeds.internal.empty() || seeds.external.empty())
        throw Error("delineation needs both internal and external seeds");
    const int w = img.width();
    const int h = img.height();
    const int m = img.channels();
    const std::size_t n = img.pixel_count();
    constexpr double inf = std::numeric_limits<double>::infinity();

    DelineationForest f;
    f.object = BinaryMask(w, h);
    f.cost.assign(n, inf);
    f.pred.assign(n, -1);
    f.root.assign(n, -1);
    std::vector<std::uint8_t> done(n, 0);
    std::vector<std::int8_t> seed_kind(n, 0);  // 1 internal, 2 external

    // tree statistics live at the root index
    std::vector<double> tree_sum(n * m, 0.0);
    std::vector<std::size_t> tree_size(n, 0);

    using Entry = std::tuple<double, std::uint64_t, std::int64_t>;  // cost, insertion order, pixel
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    std::uint64_t order = 0;

    const auto push_seed = [&](Pixel p, std::int8_t kind) {
        if (!img.contains(p)) throw Error("seed pixel outside the image domain");
        const auto i = static_cast<std::int64_t>(p.y) * w + p.x;
        if (seed_kind[i] != 0) {
            if (seed_kind[i] != kind) throw Error("a pixel cannot be both an internal and an external seed");
            return;
        }
        seed_kind[i] = kind;
        f.cost[i] = 0.0;
        f.root[i] = i;
        heap.emplace(0.0, order++, i);
    };
    for (const Pixel p : seeds.internal) push_seed(p, 1);
    for (const Pixel p : seeds.external) push_seed(p, 2);

    const auto offsets = adj.offsets();
    const auto& data = img.data();
    while (!heap.empty()) {
        const auto [c, ord, pi] = heap.top();
        heap.pop();
        if (done[pi] || c > f.cost[pi]) continue;
        done[pi] = 1;
        const std::int64_t r = f.root[pi];
        for (int k = 0; k < m; ++k) tree_sum[r * m + k] += data[pi * m + k];
        ++tree_size[r];

        const int px = static_cast<int>(pi % w);
        const int py = static_cast<int>(pi / w);
        const double inv = 1.0 / static_cast<double>(tree_size[r]);
        for (const Pixel o : offsets) {
            const int qx = px + o.x;
            const int qy = py + o.y;
            if (!img.contains(qx, qy)) continue;
            const std::int64_t qi = static_cast<std::int64_t>(qy) * w + qx;
            if (done[qi]) continue;
            double d2 = 0.0;
            for (int k = 0; k < m; ++k) {
                const double diff = data[qi * m + k] - tree_sum[r * m + k] * inv;
                d2 += diff * diff;
            }
            const double cand = std::max(c, std::sqrt(d2));
            if (cand < f.cost[qi]) {
                f.cost[qi] = cand;
                f.pred[qi] = pi;
                f.root[qi] = r;
                heap.emplace(cand, order++, qi);
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) f.object.set(i, f.root[i] >= 0 && seed_kind[f.root[i]] == 1);
    return f;
}

inline BinaryMask dynamic_trees_delineate(const MultiChannelImage& img, const SeedSet& seeds, AdjacencySpec adj = {}) {
    return dynamic_trees_forest(img, seeds, adj).object;
}

}  // namespace flimsod
