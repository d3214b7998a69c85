#pragma once

#include <vector>

#include "flimsod/image.hpp"

namespace flimsod {

struct ComponentMap {
    int width = 0;
    int height = 0;
    std::vector<int> labels;       ///< 0 = background, components numbered from 1
    std::vector<std::size_t> areas;  ///< areas[l - 1] is the area of component l

    std::size_t count() const { return areas.size(); }
    int label(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

/// Labels foreground components in raster-scan discovery order.
inline ComponentMap connected_components(const BinaryMask& mask, AdjacencySpec adj = {}) {
    ComponentMap cc;
    cc.width = mask.width();
    cc.height = mask.height();
    cc.labels.assign(mask.size(), 0);
    const auto offsets = adj.offsets();
    std::vector<Pixel> stack;

    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.get(x, y) || cc.labels[mask.index(x, y)] != 0) continue;
            const int label = static_cast<int>(cc.areas.size()) + 1;
            std::size_t area = 0;
            cc.labels[mask.index(x, y)] = label;
            stack.push_back({x, y});
            while (!stack.empty()) {
                const Pixel p = stack.back();
                stack.pop_back();
                ++area;
                for (const Pixel o : offsets) {
                    const int qx = p.x + o.x;
                    const int qy = p.y + o.y;
                    if (!mask.contains(qx, qy) || !mask.get(qx, qy)) continue;
                    int& l = cc.labels[mask.index(qx, qy)];
                    if (l != 0) continue;
                    l = label;
                    stack.push_back({qx, qy});
                }
            }
            cc.areas.push_back(area);
        }
    }
    return cc;
}

/// Keeps components whose area lies in [min_area, max_area] (both inclusive).
inline BinaryMask area_filter(const BinaryMask& mask, std::size_t min_area, std::size_t max_area,
                              AdjacencySpec adj = {}) {
    if (min_area > max_area) throw Error("area filter requires min_area <= max_area");
    const auto cc = connected_components(mask, adj);
    BinaryMask out(mask.width(), mask.height());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const int l = cc.labels[i];
        if (l == 0) continue;
        const std::size_t a = cc.areas[l - 1];
        out.set(i, a >= min_area && a <= max_area);
    }
    return out;
}

/// Erases every component with a pixel on the image frame.
inline BinaryMask remove_frame_components(const BinaryMask& mask, AdjacencySpec adj = {}) {
    const auto cc = connected_components(mask, adj);
    std::vector<bool> touches(cc.count() + 1, false);
    const int w = mask.width();
    const int h = mask.height();
    for (int x = 0; x < w; ++x) {
        touches[cc.label(x, 0)] = true;
        touches[cc.label(x, h - 1)] = true;
    }
    for (int y = 0; y < h; ++y) {
        touches[cc.label(0, y)] = true;
        touches[cc.label(w - 1, y)] = true;
    }
    BinaryMask out(w, h);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const int l = cc.labels[i];
        out.set(i, l != 0 && !touches[l]);
    }
    return out;
}

}  // namespace flimsod
