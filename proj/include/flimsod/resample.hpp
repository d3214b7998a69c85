#pragma once

#include <cmath>

#include "flimsod/image.hpp"

namespace flimsod {

/// Bilinear upsampling of a single-channel map with corner pixel centers
/// aligned, so sample (0,0) and (w-1,h-1) map onto themselves.
inline MultiChannelImage bilinear_upsample(const MultiChannelImage& map, int target_w, int target_h) {
    if (map.channels() != 1) throw Error("bilinear_upsample expects a single-channel map");
    if (target_w < map.width() || target_h < map.height())
        throw Error("bilinear_upsample cannot shrink a map");
    if (target_w == map.width() && target_h == map.height()) return map;

    const auto coord = [](int i, int src, int dst) {
        if (dst <= 1 || src <= 1) return 0.0;
        return static_cast<double>(i) * (src - 1) / (dst - 1);
    };

    MultiChannelImage out(target_w, target_h, 1);
    for (int y = 0; y < target_h; ++y) {
        const double sy = coord(y, map.height(), target_h);
        const int y0 = static_cast<int>(std::floor(sy));
        const int y1 = std::min(y0 + 1, map.height() - 1);
        const double fy = sy - y0;
        for (int x = 0; x < target_w; ++x) {
            const double sx = coord(x, map.width(), target_w);
            const int x0 = static_cast<int>(std::floor(sx));
            const int x1 = std::min(x0 + 1, map.width() - 1);
            const double fx = sx - x0;
            const double top = map.at(x0, y0) * (1.0 - fx) + map.at(x1, y0) * fx;
            const double bottom = map.at(x0, y1) * (1.0 - fx) + map.at(x1, y1) * fx;
            out.at(x, y) = top * (1.0 - fy) + bottom * fy;
        }
    }
    return out;
}

}  // namespace flimsod
