#pragma once

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flimsod/bp_decoder.hpp"
#include "flimsod/decoders.hpp"
#include "flimsod/encoder.hpp"
#include "flimsod/markers.hpp"
#include "flimsod/metrics.hpp"
#include "flimsod/model_io.hpp"
#include "flimsod/png_io.hpp"
#include "flimsod/postproc.hpp"
#include "flimsod/resample.hpp"

namespace flimsod {

namespace fs = std::filesystem;

struct DecoderOptions {
    DecoderKind kind = DecoderKind::LabelMap;
    int neighborhood_radius = 1;
    TriStateThresholds thresholds{};
    std::optional<WeightVector> bp_weights;
};

/// Saliency on the feature-map grid.
inline MultiChannelImage decode(const MultiChannelImage& featmap, std::span<const MarkerLabel> labels,
                                const DecoderOptions& opt) {
    switch (opt.kind) {
        case DecoderKind::TriState: return decode_pointwise(featmap, weights_ts(featmap, opt.thresholds));
        case DecoderKind::Attention: return decode_pointwise(featmap, weights_at(featmap));
        case DecoderKind::LabelTriState: return decode_pointwise(featmap, weights_lt(featmap, labels, opt.thresholds));
        case DecoderKind::LabelMap: return decode_pointwise(featmap, weights_lm(labels));
        case DecoderKind::Probability:
            return decode_pixelwise(featmap, weights_pb(featmap, labels, opt.neighborhood_radius));
        case DecoderKind::Mean: return decode_pixelwise(featmap, weights_mb(featmap, labels, opt.neighborhood_radius));
        case DecoderKind::Backprop:
            if (!opt.bp_weights) throw Error("decoder bp requires a trained weight file");
            return decode_bp(featmap, *opt.bp_weights);
    }
    throw Error("unhandled decoder kind");
}

inline std::vector<MarkerLabel> block_labels(const EncoderModel& model, std::size_t block) {
    if (block < 1 || block > model.depth()) throw Error("block index out of range");
    return model.blocks[block - 1].bank.labels();
}

/// Encoder block `block` + decoder, upsampled back onto the image grid.
inline MultiChannelImage saliency_map(const MultiChannelImage& img, const EncoderModel& model, std::size_t block,
                                      const DecoderOptions& opt) {
    const auto feat = encoder_forward(img, model, block);
    const auto s = decode(feat, block_labels(model, block), opt);
    return bilinear_upsample(s, img.width(), img.height());
}

// ---------------------------------------------------------------------------
// Weight files

inline nlohmann::json weights_to_json(const WeightVector& w) { return {{"kind", to_string(w.kind)}, {"weights", w.alpha}}; }

inline WeightVector weights_from_json(const nlohmann::json& j) {
    try {
        return {decoder_kind_from_string(j.at("kind").get<std::string>()), j.at("weights").get<std::vector<double>>()};
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed weight file: ") + e.what());
    }
}

inline nlohmann::json field_to_json(const PixelWeightField& f) {
    return {{"kind", to_string(f.kind)}, {"width", f.width}, {"height", f.height}, {"channels", f.channels},
            {"weights", f.alpha}};
}

// ---------------------------------------------------------------------------
// Datasets: <dir>/<id>.png images, <dir>/<id>.png masks, <dir>/<id>.txt markers

inline std::vector<std::string> list_stems(const std::string& dir, const std::string& ext) {
    if (!fs::is_directory(dir)) throw Error("not a directory: " + dir);
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path().stem().string());
    std::sort(out.begin(), out.end());
    return out;
}

inline ImageMarkers load_marker_file(const std::string& path) {
    if (!fs::exists(path)) throw Error("marker file not found: " + path);
    try {
        return parse_image_markers(read_text_file(path));
    } catch (const Error& e) {
        throw Error(path + ": " + e.what());
    }
}

struct PipelineConfig {
    ArchitectureConfig architecture;
    DecoderOptions decoder;
    std::size_t block = 1;
    std::optional<PostprocConfig> postproc;
    double beta_sq = kDefaultBetaSq;
    std::uint64_t seed = 0;
    std::string images_dir;
    std::string gt_dir;
    std::string markers_dir;
    BpHyperParams bp;
};

inline PostprocConfig postproc_from_json(const nlohmann::json& j) {
    PostprocConfig c;
    if (j.contains("preset")) {
        const auto p = j.at("preset").get<std::string>();
        if (p == "parasites")
            c = PostprocConfig::parasites();
        else if (p == "brats")
            c = PostprocConfig::brats();
        else
            throw Error("unknown post-processing preset '" + p + "'");
    }
    c.otsu = j.value("otsu", c.otsu);
    c.frame_removal = j.value("frame_removal", c.frame_removal);
    if (j.contains("area")) {
        c.min_area = j.at("area").at(0).get<std::size_t>();
        c.max_area = j.at("area").at(1).get<std::size_t>();
    }
    c.delineation = j.value("delineation", c.delineation);
    c.internal_radius = j.value("internal_radius", c.internal_radius);
    c.external_radius = j.value("external_radius", c.external_radius);
    c.scale_radii = j.value("scale_radii", c.scale_radii);
    if (j.contains("connectivity")) c.adjacency = AdjacencySpec::from_int(j.at("connectivity").get<int>());
    c.validate();
    return c;
}

/// Pipeline JSON. Relative paths resolve against `base_dir`.
///   {"architecture": <path or inline object>, "decoder": "lm", "block": 2,
///    "postproc": {...}, "beta_sq": 0.3, "seed": 7, "neighborhood": 1,
///    "dataset": {"images": dir, "gts": dir, "markers": dir},
///    "bp": {"learning_rate": 0.01, "epochs": 100}}
inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const fs::path& base_dir = {}) {
    const auto resolve = [&](const std::string& p) {
        if (p.empty()) return p;
        const fs::path path(p);
        return (path.is_absolute() || base_dir.empty() ? path : base_dir / path).string();
    };
    try {
        PipelineConfig c;
        if (j.contains("architecture")) {
            const auto& a = j.at("architecture");
            c.architecture = a.is_string() ? architecture_from_json(read_json_file(resolve(a.get<std::string>())))
                                           : architecture_from_json(a);
        }
        c.decoder.kind = decoder_kind_from_string(j.value("decoder", std::string("lm")));
        c.decoder.neighborhood_radius = j.value("neighborhood", 1);
        if (j.contains("ts_thresholds")) {
            c.decoder.thresholds.background_fraction = j.at("ts_thresholds").value("background", 0.2);
            c.decoder.thresholds.object_fraction = j.at("ts_thresholds").value("object", 0.1);
        }
        c.block = j.value("block", std::size_t{1});
        if (j.contains("postproc") && !j.at("postproc").is_null()) c.postproc = postproc_from_json(j.at("postproc"));
        c.beta_sq = j.value("beta_sq", kDefaultBetaSq);
        c.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            c.images_dir = resolve(d.value("images", std::string()));
            c.gt_dir = resolve(d.value("gts", std::string()));
            c.markers_dir = resolve(d.value("markers", std::string()));
        }
        if (j.contains("bp")) {
            c.bp.learning_rate = j.at("bp").value("learning_rate", c.bp.learning_rate);
            c.bp.epochs = j.at("bp").value("epochs", c.bp.epochs);
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("invalid pipeline config: ") + e.what());
    }
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
    return pipeline_config_from_json(read_json_file(path), fs::path(path).parent_path());
}

/// Loads the images named by the marker files and trains an encoder on them.
inline EncoderModel train_from_files(const std::vector<ImageMarkers>& marker_files, const std::string& images_dir,
                                     const ArchitectureConfig& arch, std::uint64_t seed) {
    MarkerSet ms;
    std::vector<TrainingImage> images;
    for (const auto& im : marker_files) {
        ms.add(im);
        const auto path = (fs::path(images_dir) / (im.image_id + ".png")).string();
        images.push_back({im.image_id, load_image(path)});
    }
    return train_encoder(images, ms, arch, seed);
}

/// Ground-truth-supervised point-wise decoder on the given block.
inline BpTrainingResult train_bp_from_images(const EncoderModel& model, std::size_t block,
                                             const std::vector<std::pair<MultiChannelImage, BinaryMask>>& data,
                                             const BpHyperParams& hp) {
    std::vector<BpSample> samples;
    for (const auto& [img, gt] : data) {
        auto feat = encoder_forward(img, model, block);
        auto target = resample_nearest(gt, feat.width(), feat.height());
        samples.push_back({std::move(feat), std::move(target)});
    }
    return train_bp_decoder(samples, hp);
}

}  // namespace flimsod
