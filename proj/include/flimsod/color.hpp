#pragma once

#include <cmath>

#include "flimsod/image.hpp"

namespace flimsod {

namespace detail {

// sRGB primaries, D65 reference white, 2 degree observer.
inline constexpr double kWhiteX = 0.95047;
inline constexpr double kWhiteY = 1.00000;
inline constexpr double kWhiteZ = 1.08883;

inline double srgb_to_linear(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

inline double lab_f(double t) {
    constexpr double delta = 6.0 / 29.0;
    return t > delta * delta * delta ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

}  // namespace detail

/// sRGB in [0,1] to CIE L*a*b* (L in [0,100]).
inline MultiChannelImage rgb_to_lab(const MultiChannelImage& rgb) {
    if (rgb.channels() != 3) throw Error("rgb_to_lab expects a 3-channel image");
    MultiChannelImage lab(rgb.width(), rgb.height(), 3);
    const auto& in = rgb.data();
    auto& out = lab.data();
    for (std::size_t i = 0; i < rgb.pixel_count(); ++i) {
        const double r = detail::srgb_to_linear(in[3 * i]);
        const double g = detail::srgb_to_linear(in[3 * i + 1]);
        const double b = detail::srgb_to_linear(in[3 * i + 2]);

        const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
        const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
        const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;

        const double fx = detail::lab_f(x / detail::kWhiteX);
        const double fy = detail::lab_f(y / detail::kWhiteY);
        const double fz = detail::lab_f(z / detail::kWhiteZ);

        out[3 * i] = 116.0 * fy - 16.0;
        out[3 * i + 1] = 500.0 * (fx - fy);
        out[3 * i + 2] = 200.0 * (fy - fz);
    }
    return lab;
}

}  // namespace flimsod
