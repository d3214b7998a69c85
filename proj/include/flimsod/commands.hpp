#pragma once

// Pipeline stages as in-process commands. The CLI is a thin argument parser
// over these; tests call them directly.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "flimsod/pipeline.hpp"
#include "flimsod/selection.hpp"

namespace flimsod {

struct TrainOptions {
    PipelineConfig config;
    std::vector<std::string> marker_files;  ///< empty: every *.txt in config.markers_dir
    std::string model_out;
    std::string bp_out;  ///< default <model_out>.bp.json, written only for decoder bp
};

struct InferOptions {
    PipelineConfig config;
    std::string model_path;
    std::string image_path;
    std::string saliency_out;
    std::string mask_out;  ///< default <saliency stem>_mask.png when post-processing is configured
    std::string bp_weights;
};

struct EvalOptions {
    std::string pred_dir;
    std::string gt_dir;
    double beta_sq = kDefaultBetaSq;
    std::string csv_out;  ///< empty: CSV to stdout
    std::string json_out;
};

struct SelectOptions {
    PipelineConfig config;
    int steps = 3;
    std::string log_path;  ///< replayed first when it exists; new events are appended
};

inline std::string default_bp_path(const std::string& model_path) { return model_path + ".bp.json"; }

inline std::vector<std::string> marker_files_in(const std::string& dir) {
    std::vector<std::string> out;
    for (const auto& stem : list_stems(dir, ".txt")) out.push_back((fs::path(dir) / (stem + ".txt")).string());
    return out;
}

inline std::string marker_path_for(const PipelineConfig& cfg, const std::string& id) {
    return (fs::path(cfg.markers_dir) / (id + ".txt")).string();
}

inline std::string image_path_for(const PipelineConfig& cfg, const std::string& id) {
    return (fs::path(cfg.images_dir) / (id + ".png")).string();
}

inline std::string gt_path_for(const PipelineConfig& cfg, const std::string& id) {
    return (fs::path(cfg.gt_dir) / (id + ".png")).string();
}

inline EncoderModel train_on_ids(const PipelineConfig& cfg, const std::vector<std::string>& ids) {
    std::vector<ImageMarkers> files;
    for (const auto& id : ids) files.push_back(load_marker_file(marker_path_for(cfg, id)));
    return train_from_files(files, cfg.images_dir, cfg.architecture, cfg.seed);
}

inline BinaryMask predict_mask(const PipelineConfig& cfg, const EncoderModel& model, const MultiChannelImage& img) {
    const auto s = saliency_map(img, model, cfg.block, cfg.decoder);
    return cfg.postproc ? postprocess(s, img, *cfg.postproc) : binarize_otsu(s);
}

inline void print_model_summary(const EncoderModel& model, std::ostream& out) {
    for (std::size_t b = 0; b < model.depth(); ++b) {
        std::size_t params = 0;
        for (const auto& k : model.blocks[b].bank.kernels) params += k.weights.size();
        out << "block " << b + 1 << ": " << model.blocks[b].bank.size() << " kernels, " << params << " parameters\n";
    }
    out << "total parameters: " << model.parameter_count() << '\n';
}

inline int run_train(const TrainOptions& opt, std::ostream& out, std::ostream& err) {
    try {
        if (opt.model_out.empty()) throw Error("no output model path given");
        auto files = opt.marker_files;
        if (files.empty()) {
            if (opt.config.markers_dir.empty()) throw Error("no marker files given and no markers directory configured");
            files = marker_files_in(opt.config.markers_dir);
            if (files.empty()) throw Error("no marker files in " + opt.config.markers_dir);
        }
        std::vector<ImageMarkers> markers;
        for (const auto& f : files) markers.push_back(load_marker_file(f));

        const auto model = train_from_files(markers, opt.config.images_dir, opt.config.architecture, opt.config.seed);
        for (std::size_t b = 0; b < model.depth(); ++b)
            if (model.blocks[b].bank.replaced_zero_centers > 0)
                err << "warning: block " << b + 1 << ": " << model.blocks[b].bank.replaced_zero_centers
                    << " zero cluster centers replaced by center-tap kernels\n";
        save_model(opt.model_out, model);
        print_model_summary(model, out);

        if (opt.config.decoder.kind == DecoderKind::Backprop) {
            if (opt.config.gt_dir.empty()) throw Error("decoder bp needs a ground-truth directory");
            std::vector<std::pair<MultiChannelImage, BinaryMask>> data;
            for (const auto& im : markers)
                data.emplace_back(load_image(image_path_for(opt.config, im.image_id)),
                                  load_mask(gt_path_for(opt.config, im.image_id)));
            auto hp = opt.config.bp;
            hp.seed = derive_seed(opt.config.seed, 0xb9);
            const auto res = train_bp_from_images(model, opt.config.block, data, hp);
            const auto path = opt.bp_out.empty() ? default_bp_path(opt.model_out) : opt.bp_out;
            write_text_file(path, weights_to_json(res.weights).dump(1) + "\n");
            out << "bp loss: " << res.loss_history.front() << " -> " << res.loss_history.back() << '\n';
        }
        return 0;
    } catch (const std::exception& e) {
        err << "train: " << e.what() << '\n';
        return 1;
    }
}

inline int run_infer(const InferOptions& opt, std::ostream& out, std::ostream& err) {
    try {
        const auto model = load_model(opt.model_path);
        const auto img = load_image(opt.image_path);
        if (img.channels() != model.input_channels)
            throw Error("model expects " + std::to_string(model.input_channels) + " channels, image has " +
                        std::to_string(img.channels()));
        auto dec = opt.config.decoder;
        if (dec.kind == DecoderKind::Backprop) {
            const auto path = opt.bp_weights.empty() ? default_bp_path(opt.model_path) : opt.bp_weights;
            if (!fs::exists(path)) throw Error("decoder bp requires a trained weight file (missing " + path + ")");
            dec.bp_weights = weights_from_json(read_json_file(path));
        }
        const auto s = saliency_map(img, model, opt.config.block, dec);
        save_saliency(opt.saliency_out, s);
        out << "saliency: " << opt.saliency_out << '\n';
        if (opt.config.postproc) {
            auto mask_path = opt.mask_out;
            if (mask_path.empty()) {
                const fs::path p(opt.saliency_out);
                mask_path = (p.parent_path() / (p.stem().string() + "_mask.png")).string();
            }
            save_mask(mask_path, postprocess(s, img, *opt.config.postproc));
            out << "mask: " << mask_path << '\n';
        }
        return 0;
    } catch (const std::exception& e) {
        err << "infer: " << e.what() << '\n';
        return 1;
    }
}

inline int run_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
    try {
        const auto preds = list_stems(opt.pred_dir, ".png");
        const auto gts = list_stems(opt.gt_dir, ".png");
        std::vector<std::string> missing_pred, missing_gt;
        std::set_difference(gts.begin(), gts.end(), preds.begin(), preds.end(), std::back_inserter(missing_pred));
        std::set_difference(preds.begin(), preds.end(), gts.begin(), gts.end(), std::back_inserter(missing_gt));
        if (!missing_pred.empty() || !missing_gt.empty()) {
            for (const auto& s : missing_pred) err << "eval: no prediction for " << s << '\n';
            for (const auto& s : missing_gt) err << "eval: no ground truth for " << s << '\n';
            return 1;
        }
        std::vector<EvalPair> pairs;
        for (const auto& id : gts)
            pairs.push_back({id, load_mask((fs::path(opt.gt_dir) / (id + ".png")).string()),
                             load_mask((fs::path(opt.pred_dir) / (id + ".png")).string())});
        const auto rep = evaluate_set(pairs, opt.beta_sq);
        if (opt.csv_out.empty())
            out << report_csv(rep);
        else
            write_text_file(opt.csv_out, report_csv(rep));
        if (!opt.json_out.empty()) write_text_file(opt.json_out, report_json(rep).dump(1) + "\n");
        err << std::setprecision(4) << "mean F-beta " << rep.f_beta.mean << " +- " << rep.f_beta.std << ", MAE "
            << rep.mae.mean << " +- " << rep.mae.std << '\n';
        return 0;
    } catch (const std::exception& e) {
        err << "eval: " << e.what() << '\n';
        return 1;
    }
}

/// Scores every pool image with a model trained on the session's training set.
inline SelectionScore score_selection(SelectionSession& s, const PipelineConfig& cfg) {
    return s.score([&](const std::vector<std::string>& ids) { return train_on_ids(cfg, ids); },
                   [&](const EncoderModel& model, const std::string& id) {
                       const auto img = load_image(image_path_for(cfg, id));
                       return evaluate(id, load_mask(gt_path_for(cfg, id)), predict_mask(cfg, model, img), cfg.beta_sq)
                           .f_beta;
                   });
}

/// Automatic Algorithm 1 loop: each step trains on T, scores the pool and
/// offers the worst-ranked image as the candidate.
inline int run_select(const SelectOptions& opt, std::ostream& out, std::ostream& err) {
    try {
        SelectionSession s;
        std::size_t logged = 0;
        if (!opt.log_path.empty() && fs::exists(opt.log_path)) {
            s = SelectionSession::replay_jsonl(read_text_file(opt.log_path));
            logged = s.history().size();
        } else {
            s = SelectionSession::init(list_stems(opt.config.images_dir, ".png"), opt.config.seed);
        }
        const auto flush = [&] {
            if (opt.log_path.empty()) return;
            std::ofstream f(opt.log_path, std::ios::app | std::ios::binary);
            if (!f) throw Error("cannot append to " + opt.log_path);
            for (; logged < s.history().size(); ++logged) f << s.history()[logged].dump() << '\n';
        };
        flush();
        for (int i = 0; i < opt.steps && !s.pool().empty(); ++i) {
            const auto score = score_selection(s, opt.config);
            const auto& z = score.ranking.front().image_id;
            const double before = s.x_prev();
            s.step(score.x, z);
            flush();
            out << "step " << i + 1 << ": x=" << score.x << " (prev " << before << "), candidate " << z << " "
                << s.history().back().at("outcome").get<std::string>() << ", |T|=" << s.training().size() << '\n';
        }
        out << s.to_json().dump(1) << '\n';
        return 0;
    } catch (const std::exception& e) {
        err << "select: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace flimsod
