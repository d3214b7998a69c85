#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "flimsod/error.hpp"

namespace flimsod {

struct Pixel {
    int x = 0;
    int y = 0;

    friend constexpr bool operator==(Pixel, Pixel) = default;
    friend constexpr auto operator<=>(Pixel, Pixel) = default;
};

/// Real-valued raster with `channels` features per pixel, stored pixel-major
/// (all channels of a pixel are contiguous, pixels in row-major order).
class MultiChannelImage {
public:
    MultiChannelImage() = default;

    MultiChannelImage(int width, int height, int channels, double fill = 0.0)
        : width_(width), height_(height), channels_(channels) {
        if (width < 1 || height < 1 || channels < 1)
            throw Error("image dimensions and channel count must be positive");
        data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
    }

    MultiChannelImage(int width, int height, int channels, std::vector<double> data)
        : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
        if (width < 1 || height < 1 || channels < 1)
            throw Error("image dimensions and channel count must be positive");
        if (data_.size() != static_cast<std::size_t>(width) * height * channels)
            throw Error("image data size does not match its dimensions");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
    bool empty() const { return data_.empty(); }

    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
    bool contains(Pixel p) const { return contains(p.x, p.y); }

    std::size_t offset(int x, int y) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_;
    }

    double& at(int x, int y, int c = 0) { return data_[offset(x, y) + c]; }
    double at(int x, int y, int c = 0) const { return data_[offset(x, y) + c]; }

    std::span<double> pixel(int x, int y) { return {data_.data() + offset(x, y), std::size_t(channels_)}; }
    std::span<const double> pixel(int x, int y) const {
        return {data_.data() + offset(x, y), std::size_t(channels_)};
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    /// Copies one channel out as a single-channel image.
    MultiChannelImage channel(int c) const {
        MultiChannelImage out(width_, height_, 1);
        for (std::size_t i = 0; i < pixel_count(); ++i) out.data_[i] = data_[i * channels_ + c];
        return out;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    friend bool operator==(const MultiChannelImage&, const MultiChannelImage&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

/// Binary raster; values are 0 or 1.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int width, int height, std::uint8_t fill = 0) : width_(width), height_(height) {
        if (width < 1 || height < 1) throw Error("mask dimensions must be positive");
        data_.assign(static_cast<std::size_t>(width) * height, fill ? 1 : 0);
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return data_.size(); }

    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
    bool contains(Pixel p) const { return contains(p.x, p.y); }
    bool same_domain(const BinaryMask& o) const { return width_ == o.width_ && height_ == o.height_; }

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

    bool get(int x, int y) const { return data_[index(x, y)] != 0; }
    void set(int x, int y, bool v) { data_[index(x, y)] = v ? 1 : 0; }
    bool operator[](std::size_t i) const { return data_[i] != 0; }
    void set(std::size_t i, bool v) { data_[i] = v ? 1 : 0; }

    std::size_t count() const {
        std::size_t n = 0;
        for (auto v : data_) n += v;
        return n;
    }

    const std::vector<std::uint8_t>& data() const { return data_; }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

enum class Connectivity { Four = 4, Eight = 8 };

struct AdjacencySpec {
    Connectivity connectivity = Connectivity::Eight;

    std::span<const Pixel> offsets() const {
        static constexpr Pixel four[] = {{0, -1}, {-1, 0}, {1, 0}, {0, 1}};
        static constexpr Pixel eight[] = {{-1, -1}, {0, -1}, {1, -1}, {-1, 0},
                                          {1, 0},   {-1, 1}, {0, 1},  {1, 1}};
        if (connectivity == Connectivity::Four) return four;
        return eight;
    }

    static AdjacencySpec from_int(int n) {
        if (n == 4) return {Connectivity::Four};
        if (n == 8) return {Connectivity::Eight};
        throw Error("connectivity must be 4 or 8");
    }
};

inline BinaryMask mask_complement(const BinaryMask& m) {
    BinaryMask out(m.width(), m.height());
    for (std::size_t i = 0; i < m.size(); ++i) out.set(i, !m[i]);
    return out;
}

inline BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_domain(b)) throw Error("mask domains differ");
    BinaryMask out(a.width(), a.height());
    for (std::size_t i = 0; i < a.size(); ++i) out.set(i, a[i] && b[i]);
    return out;
}

inline MultiChannelImage mask_to_image(const BinaryMask& m) {
    MultiChannelImage out(m.width(), m.height(), 1);
    for (std::size_t i = 0; i < m.size(); ++i) out.data()[i] = m[i] ? 1.0 : 0.0;
    return out;
}

/// Nearest-neighbor resampling of a mask onto a (usually coarser) grid.
inline BinaryMask resample_nearest(const BinaryMask& m, int width, int height) {
    BinaryMask out(width, height);
    for (int y = 0; y < height; ++y) {
        const int sy = std::min(m.height() - 1, static_cast<int>(std::int64_t(y) * m.height() / height));
        for (int x = 0; x < width; ++x) {
            const int sx = std::min(m.width() - 1, static_cast<int>(std::int64_t(x) * m.width() / width));
            out.set(x, y, m.get(sx, sy));
        }
    }
    return out;
}

}  // namespace flimsod
