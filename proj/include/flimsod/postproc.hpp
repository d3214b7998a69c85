#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "flimsod/color.hpp"
#include "flimsod/components.hpp"
#include "flimsod/delineation.hpp"
#include "flimsod/morphology.hpp"
#include "flimsod/threshold.hpp"

namespace flimsod {

struct PostprocConfig {
    bool otsu = true;
    bool frame_removal = false;
    std::size_t min_area = 1000;
    std::size_t max_area = 9000;
    bool delineation = false;
    /// Seed radii at the 400x400 reference scale; rescaled by image diagonal
    /// unless `scale_radii` is false.
    int internal_radius = 5;
    int external_radius = 10;
    bool scale_radii = true;
    AdjacencySpec adjacency{};

    void validate() const {
        if (min_area > max_area) throw Error("post-processing area range has min > max");
        if (internal_radius < 1 || external_radius < 1) throw Error("seed radii must be >= 1");
    }

    /// OT + frame removal + AF[1000, 9000] + DT
    static PostprocConfig parasites() {
        PostprocConfig c;
        c.frame_removal = true;
        c.delineation = true;
        return c;
    }

    /// OT + AF[100, 20000]
    static PostprocConfig brats() {
        PostprocConfig c;
        c.min_area = 100;
        c.max_area = 20000;
        return c;
    }
};

/// Foreground = values strictly above the Otsu threshold; a constant map
/// yields an empty mask.
inline BinaryMask binarize_otsu(const MultiChannelImage& saliency) {
    if (saliency.channels() != 1) throw Error("binarize_otsu expects a single-channel map");
    BinaryMask out(saliency.width(), saliency.height());
    OtsuResult ot;
    try {
        ot = otsu_threshold(saliency.data());
    } catch (const DegenerateInput&) {
        return out;
    }
    for (std::size_t i = 0; i < out.size(); ++i) out.set(i, saliency.data()[i] > ot.threshold);
    return out;
}

inline int scaled_radius(int reference_radius, int width, int height) {
    const double ref_diag = std::sqrt(2.0) * 400.0;
    const double diag = std::hypot(static_cast<double>(width), static_cast<double>(height));
    return std::max(1, static_cast<int>(std::lround(reference_radius * diag / ref_diag)));
}

/// Internal seeds from erosion (falling back to the largest component's pixel
/// nearest its centroid), external seeds from the complement of a dilation
/// (falling back to the image frame).
inline SeedSet make_seeds(const BinaryMask& mask, int internal_radius, int external_radius, AdjacencySpec adj = {}) {
    if (mask.count() == 0) throw Error("cannot make seeds from an empty mask");
    SeedSet s;
    const auto inner = erode(mask, internal_radius);
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x)
            if (inner.get(x, y)) s.internal.push_back({x, y});

    if (s.internal.empty()) {
        const auto cc = connected_components(mask, adj);
        const auto largest = static_cast<int>(std::max_element(cc.areas.begin(), cc.areas.end()) - cc.areas.begin()) + 1;
        double sx = 0.0, sy = 0.0;
        for (int y = 0; y < mask.height(); ++y)
            for (int x = 0; x < mask.width(); ++x)
                if (cc.label(x, y) == largest) {
                    sx += x;
                    sy += y;
                }
        const double area = static_cast<double>(cc.areas[largest - 1]);
        sx /= area;
        sy /= area;
        Pixel best{};
        double best_d = std::numeric_limits<double>::infinity();
        for (int y = 0; y < mask.height(); ++y)
            for (int x = 0; x < mask.width(); ++x)
                if (cc.label(x, y) == largest) {
                    const double d = (x - sx) * (x - sx) + (y - sy) * (y - sy);
                    if (d < best_d) {
                        best_d = d;
                        best = {x, y};
                    }
                }
        s.internal.push_back(best);
    }

    const auto outer = dilate(mask, external_radius);
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x)
            if (!outer.get(x, y)) s.external.push_back({x, y});

    if (s.external.empty()) {
        // The frame becomes background; internal seeds on it are dropped
        // unless that would leave none.
        const auto on_frame = [&](Pixel p) {
            return p.x == 0 || p.y == 0 || p.x == mask.width() - 1 || p.y == mask.height() - 1;
        };
        std::vector<Pixel> inner_only;
        for (const Pixel p : s.internal)
            if (!on_frame(p)) inner_only.push_back(p);
        if (!inner_only.empty()) s.internal = std::move(inner_only);
        BinaryMask internal(mask.width(), mask.height());
        for (const Pixel p : s.internal) internal.set(p.x, p.y, true);
        for (int y = 0; y < mask.height(); ++y)
            for (int x = 0; x < mask.width(); ++x)
                if (on_frame({x, y}) && !internal.get(x, y)) s.external.push_back({x, y});
    }
    return s;
}

/// Lab for color images; gray images are delineated on intensity scaled to [0,100].
inline MultiChannelImage delineation_features(const MultiChannelImage& original) {
    if (original.channels() == 3) return rgb_to_lab(original);
    if (original.channels() == 1) {
        auto out = original;
        for (double& v : out.data()) v *= 100.0;
        return out;
    }
    throw Error("delineation needs a 1- or 3-channel image");
}

struct PostprocTrace {
    BinaryMask thresholded;
    BinaryMask filtered;
    std::optional<SeedSet> seeds;
    BinaryMask result;
};

/// OT -> frame removal -> AF -> (seeds + dynamic trees on Lab -> AF).
/// `saliency` must already be on the original image grid.
inline PostprocTrace postprocess_traced(const MultiChannelImage& saliency, const MultiChannelImage& original,
                                        const PostprocConfig& cfg) {
    cfg.validate();
    if (saliency.width() != original.width() || saliency.height() != original.height())
        throw Error("saliency must be upsampled to the image domain before post-processing");
    PostprocTrace t;
    if (cfg.otsu) {
        t.thresholded = binarize_otsu(saliency);
    } else {
        t.thresholded = BinaryMask(saliency.width(), saliency.height());
        for (std::size_t i = 0; i < t.thresholded.size(); ++i) t.thresholded.set(i, saliency.data()[i] > 0.0);
    }
    BinaryMask m = t.thresholded;
    if (cfg.frame_removal) m = remove_frame_components(m, cfg.adjacency);
    m = area_filter(m, cfg.min_area, cfg.max_area, cfg.adjacency);
    t.filtered = m;
    if (cfg.delineation && m.count() > 0) {
        const int r_in = cfg.scale_radii ? scaled_radius(cfg.internal_radius, m.width(), m.height()) : cfg.internal_radius;
        const int r_out = cfg.scale_radii ? scaled_radius(cfg.external_radius, m.width(), m.height()) : cfg.external_radius;
        t.seeds = make_seeds(m, r_in, r_out, cfg.adjacency);
        m = dynamic_trees_delineate(delineation_features(original), *t.seeds, cfg.adjacency);
        m = area_filter(m, cfg.min_area, cfg.max_area, cfg.adjacency);
    }
    t.result = m;
    return t;
}

inline BinaryMask postprocess(const MultiChannelImage& saliency, const MultiChannelImage& original,
                              const PostprocConfig& cfg) {
    return postprocess_traced(saliency, original, cfg).result;
}

}  // namespace flimsod
