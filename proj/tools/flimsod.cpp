#include <csignal>
#include <iostream>

#include "CLI11.hpp"

#include "flimsod/commands.hpp"
#include "flimsod/service.hpp"

using namespace flimsod;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string decoder;
    std::optional<std::size_t> block;
};

void add_common(CLI::App* app, Common& c, bool config_required) {
    auto* opt = app->add_option("--config", c.config, "pipeline config (JSON)");
    if (config_required) opt->required();
    opt->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "root seed, overrides the config");
    app->add_option("--decoder", c.decoder, "decoder id: ts|at|lt|pb|mb|lm|bp");
    app->add_option("--block", c.block, "block to decode (1-based)");
}

PipelineConfig resolve(const Common& c) {
    PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : load_pipeline_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (!c.decoder.empty()) cfg.decoder.kind = decoder_kind_from_string(c.decoder);
    if (c.block) cfg.block = *c.block;
    return cfg;
}

Service* g_service = nullptr;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flimsod: flyweight salient object detection from image markers"};
    app.require_subcommand(1);

    Common train_c, infer_c, select_c, serve_c;
    TrainOptions train;
    InferOptions infer;
    EvalOptions eval;
    SelectOptions select;
    int port = 8080;
    std::string host = "127.0.0.1";
    std::string state_dir = "flimsod-state";

    auto* t = app.add_subcommand("train", "train an encoder from marker files");
    add_common(t, train_c, true);
    t->add_option("--markers", train.marker_files, "marker files (default: every file in the markers directory)");
    t->add_option("--out,-o", train.model_out, "model file to write")->required();
    t->add_option("--bp-out", train.bp_out, "bp weight file (decoder bp only)");

    auto* i = app.add_subcommand("infer", "saliency map (and mask) for one image");
    add_common(i, infer_c, false);
    i->add_option("--model,-m", infer.model_path, "model file")->required()->check(CLI::ExistingFile);
    i->add_option("--image,-i", infer.image_path, "input PNG")->required()->check(CLI::ExistingFile);
    i->add_option("--out,-o", infer.saliency_out, "saliency PNG to write")->required();
    i->add_option("--mask", infer.mask_out, "mask PNG to write (needs post-processing in the config)");
    i->add_option("--bp-weights", infer.bp_weights, "bp weight file (default <model>.bp.json)");

    auto* e = app.add_subcommand("eval", "compare predicted masks with ground truth");
    e->add_option("--pred", eval.pred_dir, "directory of predicted masks")->required();
    e->add_option("--gt", eval.gt_dir, "directory of ground-truth masks")->required();
    e->add_option("--beta-sq", eval.beta_sq, "beta squared for F-beta")->capture_default_str();
    e->add_option("--csv", eval.csv_out, "CSV report path (default stdout)");
    e->add_option("--json", eval.json_out, "JSON report path");

    auto* s = app.add_subcommand("select", "run the representative-image selection loop");
    add_common(s, select_c, true);
    s->add_option("--steps", select.steps, "steps to run")->capture_default_str();
    s->add_option("--log", select.log_path, "JSON-lines history; resumed when it exists");

    auto* v = app.add_subcommand("serve", "HTTP service for the annotation UI");
    add_common(v, serve_c, true);
    v->add_option("--port", port, "port")->capture_default_str();
    v->add_option("--host", host, "address to bind")->capture_default_str();
    v->add_option("--state", state_dir, "directory for the mutation log")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (t->parsed()) {
            train.config = resolve(train_c);
            return run_train(train, std::cout, std::cerr);
        }
        if (i->parsed()) {
            infer.config = resolve(infer_c);
            return run_infer(infer, std::cout, std::cerr);
        }
        if (e->parsed()) return run_eval(eval, std::cout, std::cerr);
        if (s->parsed()) {
            select.config = resolve(select_c);
            return run_select(select, std::cout, std::cerr);
        }
        if (v->parsed()) {
            Service service(resolve(serve_c), state_dir);
            const int bound = service.bind(host, port);
            g_service = &service;
            std::signal(SIGINT, [](int) {
                if (g_service) g_service->http().stop();
            });
            std::cerr << "listening on http://" << host << ':' << bound << '\n';
            service.listen_after_bind();
            g_service = nullptr;
            return 0;
        }
    } catch (const std::exception& ex) {
        std::cerr << "flimsod: " << ex.what() << '\n';
        return 1;
    }
    return 0;
}
