#pragma once

#include <vector>

#include "flimsod/image.hpp"

namespace flimsod {

enum class MorphOp { Erode, Dilate };

/// Offsets of the Euclidean disc {(dx,dy) : dx^2 + dy^2 <= r^2}.
inline std::vector<Pixel> disc_offsets(int radius) {
    std::vector<Pixel> out;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (dx * dx + dy * dy <= radius * radius) out.push_back({dx, dy});
    return out;
}

/// Binary erosion/dilation by a disc. Samples outside the domain are ignored,
/// so the frame neither erodes nor dilates the mask.
inline BinaryMask morph(const BinaryMask& mask, MorphOp op, int radius) {
    if (radius < 1) throw Error("morphology radius must be >= 1");
    const auto disc = disc_offsets(radius);
    BinaryMask out(mask.width(), mask.height());
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            bool v = (op == MorphOp::Erode);
            for (const Pixel o : disc) {
                const int qx = x + o.x;
                const int qy = y + o.y;
                if (!mask.contains(qx, qy)) continue;
                if (op == MorphOp::Erode && !mask.get(qx, qy)) {
                    v = false;
                    break;
                }
                if (op == MorphOp::Dilate && mask.get(qx, qy)) {
                    v = true;
                    break;
                }
            }
            out.set(x, y, v);
        }
    }
    return out;
}

inline BinaryMask erode(const BinaryMask& m, int radius) { return morph(m, MorphOp::Erode, radius); }
inline BinaryMask dilate(const BinaryMask& m, int radius) { return morph(m, MorphOp::Dilate, radius); }

}  // namespace flimsod
