#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <unistd.h>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "flimsod/image.hpp"

namespace flimsod {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline void png_error_handler(png_structp png, png_const_charp msg) {
    auto* text = static_cast<std::string*>(png_get_error_ptr(png));
    if (text) *text = msg;
    png_longjmp(png, 1);
}

inline void png_warning_handler(png_structp, png_const_charp) {}

struct PngRaster {
    int width = 0;
    int height = 0;
    int channels = 0;   // 1 or 3
    int bit_depth = 0;  // 8 or 16
    std::vector<std::uint16_t> samples;
};

// libpng longjmps on error; nothing with a destructor may live between
// setjmp and the calls that can fail.
inline PngRaster read_png_raw(const std::string& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw Error("cannot open image file: " + path);

    unsigned char sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw Error("not a PNG file: " + path);

    std::string message;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_handler,
                                             png_warning_handler);
    if (!png) throw Error("libpng initialization failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw Error("libpng initialization failed");
    }

    PngRaster raster;
    std::vector<png_bytep> rows;
    std::vector<png_byte> buffer;
    bool unsupported = false;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("failed to decode PNG " + path + ": " + message);
    }

    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color_type = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);

    if (color_type == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if ((color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) && depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if ((color_type & PNG_COLOR_MASK_COLOR) && depth == 16) unsupported = true;
    if (depth == 16) png_set_swap(png);  // host order for 16-bit samples (little-endian hosts)
    png_read_update_info(png, info);

    raster.width = static_cast<int>(png_get_image_width(png, info));
    raster.height = static_cast<int>(png_get_image_height(png, info));
    raster.channels = png_get_channels(png, info);
    raster.bit_depth = png_get_bit_depth(png, info);

    if (!unsupported) {
        const std::size_t rowbytes = png_get_rowbytes(png, info);
        buffer.resize(rowbytes * raster.height);
        rows.resize(raster.height);
        for (int y = 0; y < raster.height; ++y) rows[y] = buffer.data() + rowbytes * y;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
    }
    png_destroy_read_struct(&png, &info, nullptr);

    if (unsupported) throw Error("unsupported PNG format (16-bit color): " + path);
    if (raster.channels != 1 && raster.channels != 3)
        throw Error("unsupported PNG channel layout: " + path);

    const std::size_t n = static_cast<std::size_t>(raster.width) * raster.height * raster.channels;
    raster.samples.resize(n);
    if (raster.bit_depth == 16) {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint16_t v;
            std::memcpy(&v, buffer.data() + 2 * i, 2);
            raster.samples[i] = v;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) raster.samples[i] = buffer[i];
    }
    return raster;
}

inline void write_png_raw(const std::string& path, int width, int height, int channels, int bit_depth,
                          const std::vector<std::uint16_t>& samples) {
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw Error("cannot write image file: " + path);

    std::vector<png_byte> buffer(samples.size() * (bit_depth / 8));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (bit_depth == 16) {
            buffer[2 * i] = static_cast<png_byte>(samples[i] >> 8);  // PNG is big-endian
            buffer[2 * i + 1] = static_cast<png_byte>(samples[i] & 0xff);
        } else {
            buffer[i] = static_cast<png_byte>(samples[i]);
        }
    }
    const std::size_t rowbytes = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) rows[y] = buffer.data() + rowbytes * y;

    std::string message;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_handler,
                                              png_warning_handler);
    if (!png) throw Error("libpng initialization failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("failed to encode PNG " + path + ": " + message);
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, width, height, bit_depth,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline std::uint16_t quantize(double v, double max_code) {
    return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * max_code));
}

}  // namespace detail

/// Reads an 8-bit gray/RGB or 16-bit gray PNG; samples are scaled to [0,1].
inline MultiChannelImage load_image(const std::string& path) {
    const auto raw = detail::read_png_raw(path);
    const double scale = raw.bit_depth == 16 ? 65535.0 : 255.0;
    MultiChannelImage img(raw.width, raw.height, raw.channels);
    auto& d = img.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = raw.samples[i] / scale;
    return img;
}

/// Writes a 1- or 3-channel image with values in [0,1] as an 8-bit PNG.
inline void save_image8(const std::string& path, const MultiChannelImage& img) {
    if (img.channels() != 1 && img.channels() != 3) throw Error("only 1- or 3-channel images can be saved");
    std::vector<std::uint16_t> samples(img.data().size());
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = detail::quantize(img.data()[i], 255.0);
    detail::write_png_raw(path, img.width(), img.height(), img.channels(), 8, samples);
}

/// Writes a single-channel image with values in [0,1] as a 16-bit gray PNG.
inline void save_gray16(const std::string& path, const MultiChannelImage& img) {
    if (img.channels() != 1) throw Error("16-bit output requires a single-channel image");
    std::vector<std::uint16_t> samples(img.data().size());
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = detail::quantize(img.data()[i], 65535.0);
    detail::write_png_raw(path, img.width(), img.height(), 1, 16, samples);
}

/// Masks are stored as 8-bit gray {0,255}.
inline void save_mask(const std::string& path, const BinaryMask& mask) {
    std::vector<std::uint16_t> samples(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) samples[i] = mask[i] ? 255 : 0;
    detail::write_png_raw(path, mask.width(), mask.height(), 1, 8, samples);
}

/// Any nonzero sample is foreground.
inline BinaryMask load_mask(const std::string& path) {
    const auto raw = detail::read_png_raw(path);
    BinaryMask mask(raw.width, raw.height);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        bool on = false;
        for (int c = 0; c < raw.channels; ++c) on = on || raw.samples[i * raw.channels + c] != 0;
        mask.set(i, on);
    }
    return mask;
}

struct SaliencyScale {
    double min = 0.0;
    double max = 0.0;
};

inline std::string sidecar_path(const std::string& png_path) { return png_path + ".scale"; }

/// Min-max scales a saliency map into a 16-bit PNG and records the scale in
/// `<path>.scale` as "min max" so the real values can be restored.
inline SaliencyScale save_saliency(const std::string& path, const MultiChannelImage& saliency) {
    if (saliency.channels() != 1) throw Error("saliency map must be single-channel");
    const auto [lo, hi] = std::minmax_element(saliency.data().begin(), saliency.data().end());
    SaliencyScale scale{*lo, *hi};
    MultiChannelImage scaled(saliency.width(), saliency.height(), 1);
    const double range = scale.max - scale.min;
    for (std::size_t i = 0; i < scaled.data().size(); ++i)
        scaled.data()[i] = range > 0 ? (saliency.data()[i] - scale.min) / range : 0.0;
    save_gray16(path, scaled);

    std::ofstream side(sidecar_path(path));
    if (!side) throw Error("cannot write scale sidecar for " + path);
    side << std::setprecision(std::numeric_limits<double>::max_digits10) << scale.min << ' ' << scale.max
         << '\n';
    return scale;
}

/// Inverse of save_saliency. Without a sidecar the [0,1] PNG values are returned.
inline MultiChannelImage load_saliency(const std::string& path) {
    auto img = load_image(path);
    if (img.channels() != 1) throw Error("saliency PNG must be grayscale: " + path);
    std::ifstream side(sidecar_path(path));
    if (!side) return img;
    SaliencyScale scale;
    if (!(side >> scale.min >> scale.max)) throw Error("malformed scale sidecar for " + path);
    for (double& v : img.data()) v = scale.min + v * (scale.max - scale.min);
    return img;
}

/// Encodes a 16-bit gray saliency PNG into memory (used by the HTTP service).
inline std::string encode_saliency_png(const MultiChannelImage& saliency) {
    // libpng writes to FILE*; a temporary file keeps this simple.
    std::string tmpl = "/tmp/flimsod-XXXXXX";
    const int fd = mkstemp(tmpl.data());
    if (fd < 0) throw Error("cannot create temporary file");
    ::close(fd);
    save_saliency(tmpl, saliency);
    std::ifstream in(tmpl, std::ios::binary);
    std::ostringstream bytes;
    bytes << in.rdbuf();
    std::remove(tmpl.c_str());
    std::remove(sidecar_path(tmpl).c_str());
    return bytes.str();
}

}  // namespace flimsod
