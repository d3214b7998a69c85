#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "flimsod/image.hpp"

namespace flimsod {

enum class MarkerLabel : int { Foreground = 1, Background = 2 };

inline MarkerLabel marker_label_from_int(int v) {
    if (v == 1) return MarkerLabel::Foreground;
    if (v == 2) return MarkerLabel::Background;
    throw Error("marker label must be 1 (foreground) or 2 (background), got " + std::to_string(v));
}

struct Marker {
    int id = 0;
    MarkerLabel label = MarkerLabel::Foreground;
    std::vector<Pixel> pixels;

    friend bool operator==(const Marker&, const Marker&) = default;
};

/// Markers drawn on one image, in first-appearance order.
struct ImageMarkers {
    std::string image_id;
    int width = 0;
    int height = 0;
    std::vector<Marker> markers;

    std::size_t pixel_count() const {
        std::size_t n = 0;
        for (const auto& m : markers) n += m.pixels.size();
        return n;
    }

    /// Set union of all marker pixels on this image.
    std::vector<Pixel> union_pixels() const {
        std::set<Pixel> seen;
        std::vector<Pixel> out;
        for (const auto& m : markers)
            for (const Pixel p : m.pixels)
                if (seen.insert(p).second) out.push_back(p);
        return out;
    }

    friend bool operator==(const ImageMarkers&, const ImageMarkers&) = default;
};

/// Marker lists keyed by image identifier.
struct MarkerSet {
    std::map<std::string, ImageMarkers> images;

    std::size_t marker_count() const {
        std::size_t n = 0;
        for (const auto& [_, im] : images) n += im.markers.size();
        return n;
    }

    void add(ImageMarkers im) {
        const std::string id = im.image_id;
        if (!images.emplace(id, std::move(im)).second) throw Error("duplicate marker file for image " + id);
    }

    friend bool operator==(const MarkerSet&, const MarkerSet&) = default;
};

inline constexpr std::string_view kMarkerMagic = "FLIM-MARKERS 1";

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline long long parse_int(std::string_view tok, int line_no) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size())
        throw Error("marker file line " + std::to_string(line_no) + ": expected an integer, got '" +
                    std::string(tok) + "'");
    return v;
}

}  // namespace detail

/// Parses the canonical marker text:
///   FLIM-MARKERS 1
///   <image-id> <width> <height>
///   <x> <y> <marker-id> <label>     (one line per pixel)
/// `#` starts a comment. Pixels repeated within a marker are kept once.
inline ImageMarkers parse_image_markers(std::string_view text) {
    ImageMarkers out;
    std::map<int, std::size_t> index_of;
    std::vector<std::set<Pixel>> seen;
    int line_no = 0;
    int stage = 0;
    std::size_t pos = 0;

    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const auto toks = detail::split_ws(line);
        if (toks.empty()) {
            if (end == text.size()) break;
            continue;
        }
        const std::string where = "marker file line " + std::to_string(line_no) + ": ";

        if (stage == 0) {
            if (toks.size() != 2 || toks[0] != "FLIM-MARKERS" || toks[1] != "1")
                throw Error(where + "expected header '" + std::string(kMarkerMagic) + "'");
            stage = 1;
        } else if (stage == 1) {
            if (toks.size() != 3) throw Error(where + "expected '<image-id> <width> <height>'");
            out.image_id = std::string(toks[0]);
            const auto w = detail::parse_int(toks[1], line_no);
            const auto h = detail::parse_int(toks[2], line_no);
            if (w < 1 || h < 1 || w > (1 << 20) || h > (1 << 20)) throw Error(where + "invalid image size");
            out.width = static_cast<int>(w);
            out.height = static_cast<int>(h);
            stage = 2;
        } else {
            if (toks.size() != 4) throw Error(where + "expected '<x> <y> <marker-id> <label>'");
            const auto x = detail::parse_int(toks[0], line_no);
            const auto y = detail::parse_int(toks[1], line_no);
            const auto id = detail::parse_int(toks[2], line_no);
            const auto label = detail::parse_int(toks[3], line_no);
            if (x < 0 || y < 0 || x >= out.width || y >= out.height)
                throw Error(where + "pixel (" + std::to_string(x) + "," + std::to_string(y) +
                            ") outside the " + std::to_string(out.width) + "x" + std::to_string(out.height) +
                            " image domain");
            if (label != 1 && label != 2) throw Error(where + "label must be 1 or 2");
            if (id < INT32_MIN || id > INT32_MAX) throw Error(where + "marker id out of range");
            const Pixel p{static_cast<int>(x), static_cast<int>(y)};
            // A marker's pixel lines are contiguous; an id that comes back
            // after another marker, or with another label, names a second marker.
            auto it = index_of.find(static_cast<int>(id));
            if (it != index_of.end() && it->second + 1 != out.markers.size())
                throw Error(where + "duplicate marker id " + std::to_string(id));
            if (it == index_of.end()) {
                it = index_of.emplace(static_cast<int>(id), out.markers.size()).first;
                out.markers.push_back({static_cast<int>(id), marker_label_from_int(static_cast<int>(label)), {}});
                seen.emplace_back();
            }
            auto& marker = out.markers[it->second];
            if (marker.label != marker_label_from_int(static_cast<int>(label)))
                throw Error(where + "duplicate marker id " + std::to_string(id) + " with a different label");
            if (seen[it->second].insert(p).second) marker.pixels.push_back(p);
        }
        if (end == text.size()) break;
    }
    if (stage < 2) throw Error("marker file is missing its header lines");
    return out;
}

/// Parses one marker file; the resulting set holds a single image.
inline MarkerSet parse_markers(std::string_view text) {
    MarkerSet ms;
    ms.add(parse_image_markers(text));
    return ms;
}

/// Canonical text of one image's markers (markers in order, pixels in order).
inline std::string serialize_markers(const ImageMarkers& im) {
    std::ostringstream os;
    os << kMarkerMagic << '\n' << im.image_id << ' ' << im.width << ' ' << im.height << '\n';
    for (const auto& m : im.markers)
        for (const Pixel p : m.pixels) os << p.x << ' ' << p.y << ' ' << m.id << ' ' << static_cast<int>(m.label) << '\n';
    return os.str();
}

/// Maps marker pixels onto the grid of a block whose input has been pooled
/// by a cumulative stride `s`: (x, y) -> (floor(x/s), floor(y/s)).
inline ImageMarkers map_markers_to_block(const ImageMarkers& im, int stride) {
    if (stride < 1) throw Error("cumulative stride must be >= 1");
    ImageMarkers out;
    out.image_id = im.image_id;
    out.width = (im.width + stride - 1) / stride;
    out.height = (im.height + stride - 1) / stride;
    for (const auto& m : im.markers) {
        Marker mapped{m.id, m.label, {}};
        std::set<Pixel> seen;
        for (const Pixel p : m.pixels) {
            const Pixel q{p.x / stride, p.y / stride};
            if (seen.insert(q).second) mapped.pixels.push_back(q);
        }
        out.markers.push_back(std::move(mapped));
    }
    return out;
}

inline MarkerSet map_markers_to_block(const MarkerSet& ms, int stride) {
    MarkerSet out;
    for (const auto& [id, im] : ms.images) out.images.emplace(id, map_markers_to_block(im, stride));
    return out;
}

/// Per-channel marker statistics used by marker-based normalization.
struct MarkerStats {
    std::vector<double> mean;
    std::vector<double> stddev;
    double epsilon = 1e-4;

    std::size_t channels() const { return mean.size(); }
    friend bool operator==(const MarkerStats&, const MarkerStats&) = default;
};

/// Mean and population standard deviation, per channel, over the union of
/// marker pixels of all training images. `images` must hold one feature map
/// per image id in `ms`, on the grid the markers were mapped to.
inline MarkerStats marker_stats(const std::map<std::string, MultiChannelImage>& images, const MarkerSet& ms,
                                double epsilon = 1e-4) {
    if (!(epsilon > 0)) throw Error("normalization epsilon must be positive");
    int m = -1;
    std::vector<std::span<const double>> samples;
    for (const auto& [id, im] : ms.images) {
        const auto it = images.find(id);
        if (it == images.end()) throw Error("no feature map for marked image " + id);
        const auto& img = it->second;
        if (m < 0) m = img.channels();
        if (img.channels() != m) throw Error("training images disagree on channel count");
        for (const Pixel p : im.union_pixels()) {
            if (!img.contains(p)) throw Error("marker pixel outside feature map of image " + id);
            samples.push_back(img.pixel(p.x, p.y));
        }
    }
    if (samples.empty()) throw Error("marker union is empty");

    MarkerStats st;
    st.epsilon = epsilon;
    st.mean.assign(m, 0.0);
    st.stddev.assign(m, 0.0);
    const double n = static_cast<double>(samples.size());
    for (const auto& s : samples)
        for (int c = 0; c < m; ++c) st.mean[c] += s[c];
    for (int c = 0; c < m; ++c) st.mean[c] /= n;
    for (const auto& s : samples)
        for (int c = 0; c < m; ++c) {
            const double d = s[c] - st.mean[c];
            st.stddev[c] += d * d;
        }
    for (int c = 0; c < m; ++c) st.stddev[c] = std::sqrt(st.stddev[c] / n);
    return st;
}

}  // namespace flimsod
