#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "flimsod/encoder.hpp"

namespace flimsod {

using json = nlohmann::json;

inline constexpr const char* kModelSchema = "flim-model/1";

inline std::string to_string(PoolType t) { return t == PoolType::Max ? "max" : "avg"; }

inline PoolType pool_type_from_string(const std::string& s) {
    if (s == "max") return PoolType::Max;
    if (s == "avg") return PoolType::Avg;
    throw Error("unknown pooling type '" + s + "' (expected max or avg)");
}

inline json block_spec_to_json(const BlockSpec& b) {
    return {{"kernel_size", b.kernel_size},
            {"dilation", b.dilation},
            {"kernels_per_marker", b.kernels_per_marker},
            {"pooling", {{"type", to_string(b.pooling.type)}, {"size", b.pooling.size}, {"stride", b.pooling.stride}}}};
}

inline BlockSpec block_spec_from_json(const json& j) {
    BlockSpec b;
    b.kernel_size = j.value("kernel_size", 3);
    b.dilation = j.value("dilation", 1);
    b.kernels_per_marker = j.value("kernels_per_marker", 1);
    if (j.contains("pooling")) {
        const auto& p = j.at("pooling");
        b.pooling.type = pool_type_from_string(p.value("type", std::string("max")));
        b.pooling.size = p.value("size", 3);
        b.pooling.stride = p.value("stride", 2);
    }
    b.validate();
    return b;
}

/// Architecture JSON: {"epsilon": 1e-4, "blocks": [{kernel_size, dilation,
/// kernels_per_marker, pooling: {type, size, stride}}, ...]}
inline json architecture_to_json(const ArchitectureConfig& a) {
    json blocks = json::array();
    for (const auto& b : a.blocks) blocks.push_back(block_spec_to_json(b));
    return {{"epsilon", a.epsilon}, {"blocks", blocks}};
}

inline ArchitectureConfig architecture_from_json(const json& j) {
    try {
        ArchitectureConfig a;
        a.epsilon = j.value("epsilon", 1e-4);
        for (const auto& b : j.at("blocks")) a.blocks.push_back(block_spec_from_json(b));
        a.validate();
        return a;
    } catch (const json::exception& e) {
        throw Error(std::string("invalid architecture config: ") + e.what());
    }
}

inline json model_to_json(const EncoderModel& m) {
    json blocks = json::array();
    for (const auto& b : m.blocks) {
        json kernels = json::array();
        for (const auto& k : b.bank.kernels)
            kernels.push_back({{"image_id", k.image_id},
                               {"marker_id", k.marker_id},
                               {"label", static_cast<int>(k.label)},
                               {"weights", k.weights}});
        json jb = block_spec_to_json(b.spec);
        jb["cumulative_stride"] = b.cumulative_stride;
        jb["input_channels"] = b.bank.input_channels;
        jb["stats"] = {{"mean", b.stats.mean}, {"std", b.stats.stddev}, {"epsilon", b.stats.epsilon}};
        jb["kernels"] = std::move(kernels);
        blocks.push_back(std::move(jb));
    }
    return {{"schema", kModelSchema},
            {"input_channels", m.input_channels},
            {"parameters", m.parameter_count()},
            {"blocks", blocks}};
}

inline EncoderModel model_from_json(const json& j) {
    try {
        if (j.value("schema", std::string()) != kModelSchema)
            throw Error(std::string("model file is not tagged ") + kModelSchema);
        EncoderModel m;
        m.input_channels = j.at("input_channels").get<int>();
        int channels = m.input_channels;
        for (const auto& jb : j.at("blocks")) {
            EncoderBlock b;
            b.spec = block_spec_from_json(jb);
            b.cumulative_stride = jb.at("cumulative_stride").get<int>();
            b.bank.input_channels = jb.at("input_channels").get<int>();
            if (b.bank.input_channels != channels) throw Error("model block channel counts are inconsistent");
            const auto& st = jb.at("stats");
            b.stats.mean = st.at("mean").get<std::vector<double>>();
            b.stats.stddev = st.at("std").get<std::vector<double>>();
            b.stats.epsilon = st.at("epsilon").get<double>();
            if (b.stats.mean.size() != static_cast<std::size_t>(channels) || b.stats.stddev.size() != b.stats.mean.size())
                throw Error("model block statistics have the wrong length");
            const std::size_t len = b.spec.patch().length(channels);
            for (const auto& jk : jb.at("kernels")) {
                Kernel k;
                k.image_id = jk.at("image_id").get<std::string>();
                k.marker_id = jk.at("marker_id").get<int>();
                k.label = marker_label_from_int(jk.at("label").get<int>());
                k.weights = jk.at("weights").get<std::vector<double>>();
                if (k.weights.size() != len) throw Error("model kernel has the wrong length");
                b.bank.kernels.push_back(std::move(k));
            }
            if (b.bank.kernels.empty()) throw Error("model block has no kernels");
            channels = static_cast<int>(b.bank.size());
            m.blocks.push_back(std::move(b));
        }
        if (m.blocks.empty()) throw Error("model has no blocks");
        return m;
    } catch (const json::exception& e) {
        throw Error(std::string("malformed model file: ") + e.what());
    }
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error("cannot parse JSON in " + path + ": " + e.what());
    }
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << text;
    if (!out) throw Error("failed writing " + path);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void save_model(const std::string& path, const EncoderModel& m) { write_text_file(path, model_to_json(m).dump(1) + "\n"); }
inline EncoderModel load_model(const std::string& path) { return model_from_json(read_json_file(path)); }

}  // namespace flimsod
