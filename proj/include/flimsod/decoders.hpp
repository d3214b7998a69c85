#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flimsod/image.hpp"
#include "flimsod/markers.hpp"
#include "flimsod/threshold.hpp"

namespace flimsod {

enum class DecoderKind { TriState, Attention, LabelTriState, Probability, Mean, LabelMap, Backprop };

inline std::string to_string(DecoderKind k) {
    switch (k) {
        case DecoderKind::TriState: return "ts";
        case DecoderKind::Attention: return "at";
        case DecoderKind::LabelTriState: return "lt";
        case DecoderKind::Probability: return "pb";
        case DecoderKind::Mean: return "mb";
        case DecoderKind::LabelMap: return "lm";
        case DecoderKind::Backprop: return "bp";
    }
    return "?";
}

inline DecoderKind decoder_kind_from_string(const std::string& s) {
    for (auto k : {DecoderKind::TriState, DecoderKind::Attention, DecoderKind::LabelTriState, DecoderKind::Probability,
                   DecoderKind::Mean, DecoderKind::LabelMap, DecoderKind::Backprop})
        if (to_string(k) == s) return k;
    throw Error("unknown decoder '" + s + "' (expected ts|at|lt|pb|mb|lm|bp)");
}

inline bool is_pixelwise(DecoderKind k) { return k == DecoderKind::Probability || k == DecoderKind::Mean; }

/// One weight per channel, shared by all pixels.
struct WeightVector {
    DecoderKind kind = DecoderKind::LabelMap;
    std::vector<double> alpha;

    friend bool operator==(const WeightVector&, const WeightVector&) = default;
};

/// One tri-state weight vector per pixel, pixel-major like MultiChannelImage.
struct PixelWeightField {
    DecoderKind kind = DecoderKind::Probability;
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::int8_t> alpha;

    std::int8_t at(int x, int y, int c) const {
        return alpha[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::span<const std::int8_t> pixel(int x, int y) const {
        return {alpha.data() + (static_cast<std::size_t>(y) * width + x) * channels, std::size_t(channels)};
    }

    friend bool operator==(const PixelWeightField&, const PixelWeightField&) = default;
};

namespace detail {

template <typename W>
double weighted_sum(std::span<const double> features, std::span<const W> weights) {
    double s = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) s += static_cast<double>(weights[i]) * features[i];
    return s;
}

}  // namespace detail

/// S(p) = max(0, <I(p), alpha>).
inline MultiChannelImage decode_pointwise(const MultiChannelImage& featmap, const WeightVector& w) {
    if (w.alpha.size() != static_cast<std::size_t>(featmap.channels()))
        throw Error("weight vector length " + std::to_string(w.alpha.size()) + " does not match " +
                    std::to_string(featmap.channels()) + " channels");
    MultiChannelImage out(featmap.width(), featmap.height(), 1);
    const std::span<const double> alpha(w.alpha);
    for (int y = 0; y < featmap.height(); ++y)
        for (int x = 0; x < featmap.width(); ++x)
            out.at(x, y) = std::max(0.0, detail::weighted_sum(featmap.pixel(x, y), alpha));
    return out;
}

/// S(p) = max(0, <I(p), alpha(p)>).
inline MultiChannelImage decode_pixelwise(const MultiChannelImage& featmap, const PixelWeightField& field) {
    if (field.width != featmap.width() || field.height != featmap.height() || field.channels != featmap.channels())
        throw Error("weight field domain does not match the feature map");
    MultiChannelImage out(featmap.width(), featmap.height(), 1);
    for (int y = 0; y < featmap.height(); ++y)
        for (int x = 0; x < featmap.width(); ++x)
            out.at(x, y) = std::max(0.0, detail::weighted_sum(featmap.pixel(x, y), field.pixel(x, y)));
    return out;
}

inline PixelWeightField constant_field(const WeightVector& w, int width, int height) {
    PixelWeightField f;
    f.kind = w.kind;
    f.width = width;
    f.height = height;
    f.channels = static_cast<int>(w.alpha.size());
    f.alpha.reserve(static_cast<std::size_t>(width) * height * f.channels);
    for (int i = 0; i < width * height; ++i)
        for (double a : w.alpha) {
            if (a != -1.0 && a != 0.0 && a != 1.0) throw Error("weight field entries must be tri-state");
            f.alpha.push_back(static_cast<std::int8_t>(a));
        }
    return f;
}

// ---------------------------------------------------------------------------
// Per-image channel heuristics: ts, lt

struct ChannelStats {
    std::vector<double> means;
    double tau = 0.0;    ///< Otsu threshold of the channel means
    double sigma = 0.0;  ///< population std of the channel means
    std::vector<double> above_fraction;
};

struct TriStateThresholds {
    double background_fraction = 0.2;  ///< -1 needs t_i above this
    double object_fraction = 0.1;      ///< +1 needs t_i below this
};

inline ChannelStats channel_stats(const MultiChannelImage& featmap) {
    const int m = featmap.channels();
    const std::size_t n = featmap.pixel_count();
    ChannelStats st;
    st.means.assign(m, 0.0);
    st.above_fraction.assign(m, 0.0);
    std::vector<double> values(n);
    for (int c = 0; c < m; ++c) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            values[i] = featmap.data()[i * m + c];
            sum += values[i];
        }
        st.means[c] = sum / static_cast<double>(n);
        try {
            const auto ot = otsu_threshold(values);
            st.above_fraction[c] = static_cast<double>(count_above(values, ot.threshold)) / static_cast<double>(n);
        } catch (const DegenerateInput&) {
            st.above_fraction[c] = 0.0;  // constant channel: nothing lies above
        }
    }
    const double mu = std::accumulate(st.means.begin(), st.means.end(), 0.0) / m;
    double var = 0.0;
    for (double v : st.means) var += (v - mu) * (v - mu);
    st.sigma = std::sqrt(var / m);
    try {
        st.tau = otsu_threshold(st.means).threshold;
    } catch (const DegenerateInput&) {
        st.tau = mu;
        st.sigma = 0.0;
    }
    return st;
}

inline WeightVector weights_ts(const ChannelStats& st, const TriStateThresholds& th = {}) {
    WeightVector w{DecoderKind::TriState, std::vector<double>(st.means.size(), 0.0)};
    for (std::size_t i = 0; i < st.means.size(); ++i) {
        const double mu = st.means[i];
        const double t = st.above_fraction[i];
        if (mu >= st.tau + st.sigma && t > th.background_fraction)
            w.alpha[i] = -1.0;
        else if (mu <= st.tau - st.sigma && t < th.object_fraction)
            w.alpha[i] = 1.0;
    }
    return w;
}

inline WeightVector weights_ts(const MultiChannelImage& featmap, const TriStateThresholds& th = {}) {
    return weights_ts(channel_stats(featmap), th);
}

inline void check_labels(std::span<const MarkerLabel> labels, int channels) {
    if (labels.size() != static_cast<std::size_t>(channels))
        throw Error("channel label count " + std::to_string(labels.size()) + " does not match " +
                    std::to_string(channels) + " channels");
    for (auto l : labels)
        if (l != MarkerLabel::Foreground && l != MarkerLabel::Background) throw Error("channel label outside {1,2}");
}

/// ts weights with background-labeled channels silenced.
inline WeightVector weights_lt(const MultiChannelImage& featmap, std::span<const MarkerLabel> labels,
                               const TriStateThresholds& th = {}) {
    check_labels(labels, featmap.channels());
    auto w = weights_ts(featmap, th);
    w.kind = DecoderKind::LabelTriState;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == MarkerLabel::Background) w.alpha[i] = 0.0;
    return w;
}

/// +1 for foreground channels, -1 for background channels.
inline WeightVector weights_lm(std::span<const MarkerLabel> labels) {
    WeightVector w{DecoderKind::LabelMap, {}};
    for (auto l : labels) {
        if (l == MarkerLabel::Foreground)
            w.alpha.push_back(1.0);
        else if (l == MarkerLabel::Background)
            w.alpha.push_back(-1.0);
        else
            throw Error("channel label outside {1,2}");
    }
    return w;
}

// ---------------------------------------------------------------------------
// Attention-based weights: at

struct AttentionStats {
    std::vector<double> max_map;   ///< X, scaled to [0,1]
    std::vector<double> mean_map;  ///< Y, scaled to [0,1]
    std::vector<double> attention; ///< a, scaled X + Y
    std::vector<double> importance;  ///< c_i
    double importance_mean = 0.0;
    double importance_std = 0.0;
};

namespace detail {

// Constant inputs scale to all zeros.
inline void minmax_scale(std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double a = *lo;
    const double b = *hi;
    if (!(b > a)) {
        std::fill(v.begin(), v.end(), 0.0);
        return;
    }
    for (double& x : v) x = (x - a) / (b - a);
}

}  // namespace detail

inline AttentionStats attention_stats(const MultiChannelImage& featmap) {
    const int m = featmap.channels();
    const std::size_t n = featmap.pixel_count();
    const auto& d = featmap.data();
    AttentionStats st;
    st.max_map.assign(n, 0.0);
    st.mean_map.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double mx = d[i * m];
        double sum = 0.0;
        for (int c = 0; c < m; ++c) {
            mx = std::max(mx, d[i * m + c]);
            sum += d[i * m + c];
        }
        st.max_map[i] = mx;
        st.mean_map[i] = sum / m;
    }
    detail::minmax_scale(st.max_map);
    detail::minmax_scale(st.mean_map);
    st.attention.resize(n);
    for (std::size_t i = 0; i < n; ++i) st.attention[i] = st.max_map[i] + st.mean_map[i];
    detail::minmax_scale(st.attention);

    double a_norm = 0.0;
    for (double v : st.attention) a_norm += v * v;
    a_norm = std::sqrt(a_norm);
    st.importance.assign(m, 0.0);
    for (int c = 0; c < m; ++c) {
        double dot = 0.0;
        double b_norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dot += st.attention[i] * d[i * m + c];
            b_norm += d[i * m + c] * d[i * m + c];
        }
        b_norm = std::sqrt(b_norm);
        st.importance[c] = (a_norm > 0.0 && b_norm > 0.0) ? dot / (a_norm * b_norm) : 0.0;
    }
    st.importance_mean = std::accumulate(st.importance.begin(), st.importance.end(), 0.0) / m;
    double var = 0.0;
    for (double c : st.importance) var += (c - st.importance_mean) * (c - st.importance_mean);
    st.importance_std = std::sqrt(var / m);
    return st;
}

/// Channels less aligned with the spatial attention map get +1, more aligned -1.
inline WeightVector weights_at(const MultiChannelImage& featmap) {
    const auto st = attention_stats(featmap);
    WeightVector w{DecoderKind::Attention, std::vector<double>(st.importance.size(), 0.0)};
    const double lo = st.importance_mean - st.importance_std / 2.0;
    const double hi = st.importance_mean + st.importance_std / 2.0;
    for (std::size_t i = 0; i < st.importance.size(); ++i) {
        if (st.importance[i] < lo)
            w.alpha[i] = 1.0;
        else if (st.importance[i] > hi)
            w.alpha[i] = -1.0;
    }
    return w;
}

// ---------------------------------------------------------------------------
// Per-pixel heuristics: pb, mb

inline constexpr double kVarianceFloor = 1e-8;

/// Label-conditional statistics of the window around one pixel.
struct LocalStats {
    double mean[2] = {0.0, 0.0};      ///< [0] foreground (label 1), [1] background (label 2)
    double variance[2] = {0.0, 0.0};  ///< population variance, before flooring
    std::size_t count[2] = {0, 0};    ///< N_j = in-domain window pixels x channels of label j

    /// exp(-(v - mean_j)^2 / (2 max(var_j, floor))), j in {1, 2}.
    double likelihood(double v, MarkerLabel label) const {
        const int j = label == MarkerLabel::Foreground ? 0 : 1;
        const double var = std::max(variance[j], kVarianceFloor);
        const double d = v - mean[j];
        return std::exp(-(d * d) / (2.0 * var));
    }
};

/// Statistics over the (2r+1)^2 square window around p; out-of-domain
/// samples are skipped rather than padded.
inline LocalStats local_stats(const MultiChannelImage& featmap, std::span<const MarkerLabel> labels, Pixel p,
                              int radius = 1) {
    check_labels(labels, featmap.channels());
    if (!featmap.contains(p)) throw Error("pixel outside the feature map");
    if (radius < 0) throw Error("neighborhood radius must be >= 0");
    LocalStats ls;
    double sum[2] = {0.0, 0.0};
    const int m = featmap.channels();
    for (int c = 0; c < m; ++c) {
        const int j = labels[c] == MarkerLabel::Foreground ? 0 : 1;
        for (int dy = -radius; dy <= radius; ++dy)
            for (int dx = -radius; dx <= radius; ++dx) {
                const int x = p.x + dx;
                const int y = p.y + dy;
                if (!featmap.contains(x, y)) continue;
                sum[j] += featmap.at(x, y, c);
                ++ls.count[j];
            }
    }
    for (int j = 0; j < 2; ++j)
        if (ls.count[j] == 0) throw Error("local statistics need channels of both labels");
    for (int j = 0; j < 2; ++j) ls.mean[j] = sum[j] / static_cast<double>(ls.count[j]);

    double sq[2] = {0.0, 0.0};
    for (int c = 0; c < m; ++c) {
        const int j = labels[c] == MarkerLabel::Foreground ? 0 : 1;
        for (int dy = -radius; dy <= radius; ++dy)
            for (int dx = -radius; dx <= radius; ++dx) {
                const int x = p.x + dx;
                const int y = p.y + dy;
                if (!featmap.contains(x, y)) continue;
                const double d = featmap.at(x, y, c) - ls.mean[j];
                sq[j] += d * d;
            }
    }
    for (int j = 0; j < 2; ++j) ls.variance[j] = sq[j] / static_cast<double>(ls.count[j]);
    return ls;
}

namespace detail {

template <typename Rule>
PixelWeightField pixel_field(const MultiChannelImage& featmap, std::span<const MarkerLabel> labels, int radius,
                             DecoderKind kind, Rule rule) {
    check_labels(labels, featmap.channels());
    const bool has_fg = std::find(labels.begin(), labels.end(), MarkerLabel::Foreground) != labels.end();
    const bool has_bg = std::find(labels.begin(), labels.end(), MarkerLabel::Background) != labels.end();
    if (!has_fg || !has_bg) throw Error(to_string(kind) + " decoder needs channels of both labels");

    PixelWeightField f;
    f.kind = kind;
    f.width = featmap.width();
    f.height = featmap.height();
    f.channels = featmap.channels();
    f.alpha.assign(static_cast<std::size_t>(f.width) * f.height * f.channels, 0);
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x) {
            const auto ls = local_stats(featmap, labels, {x, y}, radius);
            std::int8_t* out = f.alpha.data() + (static_cast<std::size_t>(y) * f.width + x) * f.channels;
            for (int c = 0; c < f.channels; ++c) out[c] = rule(ls, labels[c], featmap.at(x, y, c));
        }
    return f;
}

}  // namespace detail

inline PixelWeightField weights_pb(const MultiChannelImage& featmap, std::span<const MarkerLabel> labels,
                                   int radius = 1) {
    return detail::pixel_field(featmap, labels, radius, DecoderKind::Probability,
                               [](const LocalStats& ls, MarkerLabel label, double v) -> std::int8_t {
                                   const double fg = ls.likelihood(v, MarkerLabel::Foreground);
                                   const double bg = ls.likelihood(v, MarkerLabel::Background);
                                   if (label == MarkerLabel::Foreground && fg > bg) return 1;
                                   if (label == MarkerLabel::Background && fg < bg) return -1;
                                   return 0;
                               });
}

inline PixelWeightField weights_mb(const MultiChannelImage& featmap, std::span<const MarkerLabel> labels,
                                   int radius = 1) {
    return detail::pixel_field(featmap, labels, radius, DecoderKind::Mean,
                               [](const LocalStats& ls, MarkerLabel label, double) -> std::int8_t {
                                   if (label == MarkerLabel::Foreground && ls.mean[0] > ls.mean[1]) return 1;
                                   if (label == MarkerLabel::Background && ls.mean[0] < ls.mean[1]) return -1;
                                   return 0;
                               });
}

}  // namespace flimsod
