#pragma once

#include <vector>

#include "flimsod/image.hpp"

namespace flimsod {

struct PatchSpec {
    int kernel_size = 3;
    int dilation = 1;

    void validate() const {
        if (kernel_size < 1 || kernel_size % 2 == 0) throw Error("kernel size must be a positive odd number");
        if (dilation < 1) throw Error("dilation must be >= 1");
    }

    std::size_t length(int channels) const {
        return static_cast<std::size_t>(kernel_size) * kernel_size * channels;
    }
};

/// Offsets of the k x k dilated neighborhood, in raster order.
inline std::vector<Pixel> patch_offsets(const PatchSpec& spec) {
    spec.validate();
    const int r = spec.kernel_size / 2;
    std::vector<Pixel> offsets;
    offsets.reserve(static_cast<std::size_t>(spec.kernel_size) * spec.kernel_size);
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) offsets.push_back({dx * spec.dilation, dy * spec.dilation});
    return offsets;
}

/// Writes the patch at p into `out` (length k*k*m): neighbors in raster
/// order, channels innermost. Neighbors outside the domain contribute zeros.
inline void extract_patch_into(const MultiChannelImage& img, Pixel p, const std::vector<Pixel>& offsets,
                               std::span<double> out) {
    const int m = img.channels();
    std::size_t k = 0;
    for (const Pixel o : offsets) {
        const int x = p.x + o.x;
        const int y = p.y + o.y;
        if (img.contains(x, y)) {
            const auto v = img.pixel(x, y);
            for (int c = 0; c < m; ++c) out[k + c] = v[c];
        } else {
            for (int c = 0; c < m; ++c) out[k + c] = 0.0;
        }
        k += m;
    }
}

inline std::vector<double> extract_patch(const MultiChannelImage& img, Pixel p, const PatchSpec& spec) {
    if (!img.contains(p)) throw Error("patch center lies outside the image domain");
    const auto offsets = patch_offsets(spec);
    std::vector<double> patch(spec.length(img.channels()));
    extract_patch_into(img, p, offsets, patch);
    return patch;
}

}  // namespace flimsod
