#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flimsod/image.hpp"
#include "flimsod/kmeans.hpp"
#include "flimsod/markers.hpp"
#include "flimsod/patch.hpp"
#include "flimsod/rng.hpp"

namespace flimsod {

enum class PoolType { Max, Avg };

struct PoolingSpec {
    PoolType type = PoolType::Max;
    int size = 3;
    int stride = 2;

    friend bool operator==(const PoolingSpec&, const PoolingSpec&) = default;
};

struct BlockSpec {
    int kernel_size = 3;
    int dilation = 1;
    int kernels_per_marker = 1;
    PoolingSpec pooling;

    PatchSpec patch() const { return {kernel_size, dilation}; }

    void validate() const {
        patch().validate();
        if (kernels_per_marker < 1) throw Error("kernels_per_marker must be >= 1");
        if (pooling.size < 1) throw Error("pooling size must be >= 1");
        if (pooling.stride < 1) throw Error("pooling stride must be >= 1");
    }

    friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

struct ArchitectureConfig {
    std::vector<BlockSpec> blocks;
    double epsilon = 1e-4;

    void validate() const {
        if (blocks.empty()) throw Error("architecture needs at least one block");
        if (!(epsilon > 0)) throw Error("epsilon must be positive");
        for (const auto& b : blocks) b.validate();
    }

    friend bool operator==(const ArchitectureConfig&, const ArchitectureConfig&) = default;
};

struct Kernel {
    std::vector<double> weights;  ///< unit L2 norm, layout of extract_patch
    std::string image_id;
    int marker_id = 0;
    MarkerLabel label = MarkerLabel::Foreground;

    friend bool operator==(const Kernel&, const Kernel&) = default;
};

struct KernelBank {
    std::vector<Kernel> kernels;
    int input_channels = 0;
    /// Cluster centers that collapsed to zero and were replaced by a one-hot center tap.
    int replaced_zero_centers = 0;

    std::size_t size() const { return kernels.size(); }

    std::vector<MarkerLabel> labels() const {
        std::vector<MarkerLabel> out;
        out.reserve(kernels.size());
        for (const auto& k : kernels) out.push_back(k.label);
        return out;
    }

    friend bool operator==(const KernelBank& a, const KernelBank& b) {
        return a.kernels == b.kernels && a.input_channels == b.input_channels;
    }
};

struct EncoderBlock {
    BlockSpec spec;
    MarkerStats stats;
    KernelBank bank;
    int cumulative_stride = 1;  ///< product of pooling strides of the preceding blocks

    friend bool operator==(const EncoderBlock&, const EncoderBlock&) = default;
};

struct EncoderModel {
    int input_channels = 0;
    std::vector<EncoderBlock> blocks;

    std::size_t depth() const { return blocks.size(); }

    /// Kernel weights only; normalization replaces the bias.
    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& b : blocks)
            for (const auto& k : b.bank.kernels) n += k.weights.size();
        return n;
    }

    friend bool operator==(const EncoderModel&, const EncoderModel&) = default;
};

/// (v - mean_c) / (std_c + epsilon), per channel.
inline MultiChannelImage normalize(const MultiChannelImage& img, const MarkerStats& stats) {
    const int m = img.channels();
    if (stats.mean.size() != static_cast<std::size_t>(m) || stats.stddev.size() != static_cast<std::size_t>(m))
        throw Error("normalization statistics do not match the image channel count");
    MultiChannelImage out(img.width(), img.height(), m);
    const auto& in = img.data();
    auto& o = out.data();
    for (std::size_t i = 0; i < img.pixel_count(); ++i)
        for (int c = 0; c < m; ++c) {
            const std::size_t j = i * m + c;
            o[j] = (in[j] - stats.mean[c]) / (stats.stddev[c] + stats.epsilon);
        }
    return out;
}

struct KernelEstimate {
    std::vector<std::vector<double>> kernels;
    int replaced_zero_centers = 0;
    std::vector<double> wcss_trace;
};

/// Clusters one marker's patches into min(m2, #patches) groups and returns
/// the unit-norm cluster centers.
inline KernelEstimate estimate_kernels_for_marker(const std::vector<std::vector<double>>& patches,
                                                  int kernels_per_marker, std::uint64_t seed,
                                                  int center_tap = -1) {
    if (patches.empty()) throw Error("cannot estimate kernels from an empty patch set");
    if (kernels_per_marker < 1) throw Error("kernels_per_marker must be >= 1");
    const int k = static_cast<int>(std::min<std::size_t>(kernels_per_marker, patches.size()));
    auto km = kmeans(patches, k, seed);

    KernelEstimate est;
    est.wcss_trace = std::move(km.wcss_trace);
    const std::size_t dim = patches.front().size();
    for (auto& c : km.centers) {
        double norm = 0.0;
        for (double v : c) norm += v * v;
        norm = std::sqrt(norm);
        if (norm > 0.0 && std::isfinite(norm)) {
            for (double& v : c) v /= norm;
        } else {
            c.assign(dim, 0.0);
            c[center_tap >= 0 ? static_cast<std::size_t>(center_tap) : dim / 2] = 1.0;
            ++est.replaced_zero_centers;
        }
        est.kernels.push_back(std::move(c));
    }
    return est;
}

/// Kernel bank of one block: for every marker (images in id order, markers
/// in file order) the patches of its pixels on the normalized input are
/// clustered into kernels that inherit the marker's label.
inline KernelBank build_kernel_bank(const std::map<std::string, MultiChannelImage>& normalized_inputs,
                                    const MarkerSet& markers, const BlockSpec& spec, std::uint64_t seed) {
    spec.validate();
    if (markers.marker_count() == 0) throw Error("cannot build a kernel bank without markers");
    const auto offsets = patch_offsets(spec.patch());
    KernelBank bank;
    std::uint64_t stream = 0;
    for (const auto& [id, im] : markers.images) {
        const auto it = normalized_inputs.find(id);
        if (it == normalized_inputs.end()) throw Error("no feature map for marked image " + id);
        const auto& img = it->second;
        if (bank.input_channels == 0) bank.input_channels = img.channels();
        if (img.channels() != bank.input_channels) throw Error("training images disagree on channel count");
        const std::size_t len = spec.patch().length(img.channels());
        // Center tap, channel 0: index of offset (0,0) times m.
        const int center_tap = static_cast<int>(offsets.size() / 2) * img.channels();

        for (const auto& marker : im.markers) {
            std::vector<std::vector<double>> patches;
            patches.reserve(marker.pixels.size());
            for (const Pixel p : marker.pixels) {
                if (!img.contains(p)) throw Error("marker pixel outside feature map of image " + id);
                std::vector<double> patch(len);
                extract_patch_into(img, p, offsets, patch);
                patches.push_back(std::move(patch));
            }
            auto est = estimate_kernels_for_marker(patches, spec.kernels_per_marker, derive_seed(seed, stream++),
                                                   center_tap);
            bank.replaced_zero_centers += est.replaced_zero_centers;
            for (auto& w : est.kernels) bank.kernels.push_back({std::move(w), id, marker.id, marker.label});
        }
    }
    return bank;
}

inline int pooled_extent(int n, int stride) { return (n + stride - 1) / stride; }

/// Pooling window centered on input pixel (i * stride); the window is
/// zero-padded and average pooling divides by the full window area.
inline MultiChannelImage pool(const MultiChannelImage& in, const PoolingSpec& spec) {
    const int w = pooled_extent(in.width(), spec.stride);
    const int h = pooled_extent(in.height(), spec.stride);
    const int m = in.channels();
    const int start = -(spec.size - 1) / 2;
    MultiChannelImage out(w, h, m);
    std::vector<double> acc(m);
    for (int oy = 0; oy < h; ++oy) {
        for (int ox = 0; ox < w; ++ox) {
            const int cx = ox * spec.stride;
            const int cy = oy * spec.stride;
            const bool max_pool = spec.type == PoolType::Max;
            std::fill(acc.begin(), acc.end(), max_pool ? -std::numeric_limits<double>::infinity() : 0.0);
            for (int dy = 0; dy < spec.size; ++dy) {
                for (int dx = 0; dx < spec.size; ++dx) {
                    const int x = cx + start + dx;
                    const int y = cy + start + dy;
                    if (!in.contains(x, y)) {
                        if (max_pool)
                            for (int c = 0; c < m; ++c) acc[c] = std::max(acc[c], 0.0);
                        continue;
                    }
                    const auto v = in.pixel(x, y);
                    for (int c = 0; c < m; ++c) acc[c] = max_pool ? std::max(acc[c], v[c]) : acc[c] + v[c];
                }
            }
            auto o = out.pixel(ox, oy);
            const double area = static_cast<double>(spec.size) * spec.size;
            for (int c = 0; c < m; ++c) o[c] = max_pool ? acc[c] : acc[c] / area;
        }
    }
    return out;
}

/// Convolution of an already-normalized image with the bank (zero padding,
/// stride 1) followed by ReLU.
inline MultiChannelImage convolve_relu(const MultiChannelImage& normalized, const KernelBank& bank,
                                       const BlockSpec& spec) {
    if (normalized.channels() != bank.input_channels)
        throw Error("input channel count does not match the kernel bank");
    const auto offsets = patch_offsets(spec.patch());
    const std::size_t len = spec.patch().length(normalized.channels());
    const int nk = static_cast<int>(bank.size());
    for (const auto& k : bank.kernels)
        if (k.weights.size() != len) throw Error("kernel length does not match the block geometry");

    MultiChannelImage out(normalized.width(), normalized.height(), nk);
    std::vector<double> patch(len);
    for (int y = 0; y < normalized.height(); ++y) {
        for (int x = 0; x < normalized.width(); ++x) {
            extract_patch_into(normalized, {x, y}, offsets, patch);
            auto o = out.pixel(x, y);
            for (int j = 0; j < nk; ++j) {
                const auto& w = bank.kernels[j].weights;
                double s = 0.0;
                for (std::size_t t = 0; t < len; ++t) s += patch[t] * w[t];
                o[j] = s > 0.0 ? s : 0.0;
            }
        }
    }
    return out;
}

/// normalize -> convolve -> ReLU -> pool.
inline MultiChannelImage conv_block_forward(const MultiChannelImage& img, const MarkerStats& stats,
                                            const KernelBank& bank, const BlockSpec& spec) {
    return pool(convolve_relu(normalize(img, stats), bank, spec), spec.pooling);
}

inline MultiChannelImage conv_block_forward(const MultiChannelImage& img, const EncoderBlock& block) {
    return conv_block_forward(img, block.stats, block.bank, block.spec);
}

struct TrainingImage {
    std::string id;
    MultiChannelImage image;
};

/// Trains blocks one after another: markers are mapped to each block's grid,
/// normalization statistics and kernels are estimated on that block's input
/// maps, and the training images are forwarded to feed the next block.
inline EncoderModel train_encoder(const std::vector<TrainingImage>& images, const MarkerSet& markers,
                                  const ArchitectureConfig& arch, std::uint64_t seed) {
    arch.validate();
    if (images.empty()) throw Error("training needs at least one image");

    std::map<std::string, MultiChannelImage> current;
    for (const auto& t : images) {
        if (!current.emplace(t.id, t.image).second) throw Error("duplicate training image id " + t.id);
    }
    const int m0 = images.front().image.channels();
    for (const auto& t : images) {
        if (t.image.channels() != m0) throw Error("training images disagree on channel count");
        const auto it = markers.images.find(t.id);
        if (it == markers.images.end() || it->second.markers.empty())
            throw Error("training image " + t.id + " has no markers");
        if (it->second.width != t.image.width() || it->second.height != t.image.height())
            throw Error("marker file dimensions do not match image " + t.id);
    }
    MarkerSet used;
    for (const auto& [id, im] : markers.images)
        if (current.count(id)) used.images.emplace(id, im);

    EncoderModel model;
    model.input_channels = m0;
    int stride = 1;
    for (std::size_t b = 0; b < arch.blocks.size(); ++b) {
        const auto& spec = arch.blocks[b];
        const auto mapped = map_markers_to_block(used, stride);
        EncoderBlock block;
        block.spec = spec;
        block.cumulative_stride = stride;
        try {
            block.stats = marker_stats(current, mapped, arch.epsilon);
        } catch (const Error& e) {
            throw Error("block " + std::to_string(b + 1) + ": " + e.what());
        }
        std::map<std::string, MultiChannelImage> normalized;
        for (const auto& [id, img] : current) normalized.emplace(id, normalize(img, block.stats));
        block.bank = build_kernel_bank(normalized, mapped, spec, derive_seed(seed, b + 1));

        for (auto& [id, img] : current) img = pool(convolve_relu(normalized.at(id), block.bank, spec), spec.pooling);
        stride *= spec.pooling.stride;
        model.blocks.push_back(std::move(block));
    }
    return model;
}

/// Feature map after block `upto_block` (1-based).
inline MultiChannelImage encoder_forward(const MultiChannelImage& img, const EncoderModel& model,
                                         std::size_t upto_block) {
    if (upto_block < 1 || upto_block > model.depth())
        throw Error("block index " + std::to_string(upto_block) + " outside [1, " + std::to_string(model.depth()) +
                    "]");
    if (img.channels() != model.input_channels)
        throw Error("image has " + std::to_string(img.channels()) + " channels, model expects " +
                    std::to_string(model.input_channels));
    MultiChannelImage x = img;
    for (std::size_t b = 0; b < upto_block; ++b) x = conv_block_forward(x, model.blocks[b]);
    return x;
}

/// Feature maps after every block, index 0 holding block 1.
inline std::vector<MultiChannelImage> encoder_forward_all(const MultiChannelImage& img, const EncoderModel& model) {
    std::vector<MultiChannelImage> out;
    MultiChannelImage x = encoder_forward(img, model, 1);
    out.push_back(x);
    for (std::size_t b = 1; b < model.depth(); ++b) {
        x = conv_block_forward(x, model.blocks[b]);
        out.push_back(x);
    }
    return out;
}

}  // namespace flimsod
