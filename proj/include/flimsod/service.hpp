#pragma once

// Local HTTP/JSON service: dataset browsing, marker editing, background
// training, inference and the interactive selection loop.
//
// Every mutation is appended to <state_dir>/mutations.jsonl before it is
// acknowledged. A fresh Service on the same state directory replays that log
// and ends up in the same state (markers, jobs, trained model, selection).

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "flimsod/commands.hpp"

namespace flimsod {

enum class JobPhase { Queued, Training, Done, Failed };

inline std::string to_string(JobPhase p) {
    switch (p) {
        case JobPhase::Queued: return "queued";
        case JobPhase::Training: return "training";
        case JobPhase::Done: return "done";
        case JobPhase::Failed: return "failed";
    }
    return "failed";
}

inline JobPhase job_phase_from_string(const std::string& s) {
    if (s == "queued") return JobPhase::Queued;
    if (s == "training") return JobPhase::Training;
    if (s == "done") return JobPhase::Done;
    if (s == "failed") return JobPhase::Failed;
    throw Error("unknown job phase '" + s + "'");
}

struct JobState {
    std::string id;
    JobPhase phase = JobPhase::Queued;
    double progress = 0.0;
    std::string error;
    std::vector<std::string> images;
    std::vector<ImageMarkers> markers;  ///< snapshot taken when the job was queued

    bool finished() const { return phase == JobPhase::Done || phase == JobPhase::Failed; }

    nlohmann::json to_json() const {
        return {{"id", id}, {"phase", to_string(phase)}, {"progress", progress}, {"error", error}, {"images", images}};
    }
};

class Service {
public:
    static constexpr int kRetryAfterSeconds = 2;

    Service(PipelineConfig cfg, std::string state_dir) : cfg_(std::move(cfg)), state_dir_(std::move(state_dir)) {
        fs::create_directories(state_dir_);
        if (!cfg_.markers_dir.empty()) fs::create_directories(cfg_.markers_dir);
        log_path_ = (fs::path(state_dir_) / "mutations.jsonl").string();
        if (fs::exists(log_path_)) {
            std::ifstream in(log_path_, std::ios::binary);
            std::string line;
            while (std::getline(in, line))
                if (!line.empty()) replay_event(nlohmann::json::parse(line));
            fail_interrupted_jobs();
        } else {
            adopt_marker_files();
        }
        routes();
    }

    ~Service() { stop(); }

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    httplib::Server& http() { return server_; }

    /// Binds to `host:port` (port 0 picks a free one) and returns the port.
    int bind(const std::string& host = "127.0.0.1", int port = 0) {
        if (port == 0) return server_.bind_to_any_port(host);
        if (!server_.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
        return port;
    }

    void listen_after_bind() { server_.listen_after_bind(); }

    void stop() {
        server_.stop();
        if (worker_.joinable()) worker_.join();
    }

    /// Blocks until no training job is running.
    void wait_idle() {
        if (worker_.joinable()) worker_.join();
    }

    const std::string& log_path() const { return log_path_; }

    // State snapshots, mostly for tests.
    std::map<std::string, std::string> markers() const {
        std::shared_lock lock(mu_);
        return markers_;
    }
    std::optional<JobState> job(const std::string& id) const {
        std::shared_lock lock(mu_);
        auto it = jobs_.find(id);
        return it == jobs_.end() ? std::nullopt : std::optional<JobState>(it->second);
    }
    std::shared_ptr<const EncoderModel> model() const {
        std::shared_lock lock(mu_);
        return model_;
    }
    std::optional<SelectionSession> selection() const {
        std::shared_lock lock(mu_);
        return selection_;
    }

private:
    using Req = httplib::Request;
    using Res = httplib::Response;

    static void send_json(Res& res, const nlohmann::json& j, int status = 200) {
        res.status = status;
        res.set_content(j.dump(), "application/json");
    }

    static void send_error(Res& res, int status, const std::string& msg) { send_json(res, {{"error", msg}}, status); }

    static bool valid_id(const std::string& id) {
        return !id.empty() && id.find_first_of("/\\") == std::string::npos && id != "." && id != "..";
    }

    bool image_exists(const std::string& id) const { return valid_id(id) && fs::exists(image_path_for(cfg_, id)); }

    void append_log(const nlohmann::json& e) {
        std::ofstream f(log_path_, std::ios::app | std::ios::binary);
        if (!f) throw Error("cannot append to " + log_path_);
        f << e.dump() << '\n';
        f.flush();
    }

    /// Logs then applies; callers hold the unique lock.
    void mutate(const nlohmann::json& e) {
        append_log(e);
        apply_event(e);
    }

    void apply_event(const nlohmann::json& e) {
        const auto op = e.at("op").get<std::string>();
        if (op == "markers") {
            const auto id = e.at("id").get<std::string>();
            const auto text = e.at("text").get<std::string>();
            write_text_file(marker_path_for(cfg_, id), text);
            markers_[id] = text;
        } else if (op == "job") {
            JobState& j = jobs_[e.at("id").get<std::string>()];
            j.id = e.at("id").get<std::string>();
            j.phase = job_phase_from_string(e.at("phase").get<std::string>());
            j.progress = e.value("progress", j.progress);
            j.error = e.value("error", std::string());
            if (e.contains("images")) j.images = e.at("images").get<std::vector<std::string>>();
            if (j.phase == JobPhase::Queued) {
                j.markers.clear();
                for (const auto& id : j.images) j.markers.push_back(parse_image_markers(markers_.at(id)));
            }
        } else if (op == "selection") {
            const auto& ev = e.at("event");
            if (ev.at("op") == "init") selection_.reset();
            if (!selection_) selection_.emplace();
            selection_->apply(ev);
        } else if (op == "selection_score") {
            if (!selection_) throw Error("selection score logged before init");
            SelectionScore s;
            for (const auto& r : e.at("ranking")) s.ranking.push_back({r.at("image_id"), r.at("f_beta")});
            selection_->set_score(std::move(s));
        } else {
            throw Error("unknown mutation '" + op + "'");
        }
    }

    void replay_event(const nlohmann::json& e) {
        apply_event(e);
        // A finished training job is re-run so the model comes back bit-identical.
        if (e.at("op") == "job" && e.at("phase") == "done")
            model_ = std::make_shared<const EncoderModel>(train_job(jobs_.at(e.at("id").get<std::string>())));
    }

    EncoderModel train_job(const JobState& j) const {
        return train_from_files(j.markers, cfg_.images_dir, cfg_.architecture, cfg_.seed);
    }

    /// First start: marker files already on disk enter the log so later
    /// replays do not depend on what the directory holds by then.
    void adopt_marker_files() {
        if (cfg_.markers_dir.empty()) return;
        for (const auto& id : list_stems(cfg_.markers_dir, ".txt")) {
            const auto text = read_text_file(marker_path_for(cfg_, id));
            try {
                if (parse_image_markers(text).image_id != id || !image_exists(id)) continue;
            } catch (const Error&) {
                continue;
            }
            mutate({{"op", "markers"}, {"id", id}, {"text", text}});
        }
    }

    /// Jobs cut off by a restart never finish; record that instead of leaving them pending.
    void fail_interrupted_jobs() {
        for (const auto& [id, j] : jobs_)
            if (!j.finished())
                mutate({{"op", "job"}, {"id", id}, {"phase", "failed"}, {"progress", 1.0}, {"error", "interrupted by restart"}});
    }

    std::vector<std::string> trainable_ids() const {
        std::vector<std::string> out;
        for (const auto& [id, text] : markers_)
            if (image_exists(id)) out.push_back(id);
        return out;
    }

    void routes() {
        server_.Get("/api/images", [this](const Req&, Res& res) {
            nlohmann::json out = nlohmann::json::array();
            for (const auto& id : list_stems(cfg_.images_dir, ".png")) {
                const auto img = load_image(image_path_for(cfg_, id));
                out.push_back({{"id", id}, {"width", img.width()}, {"height", img.height()}, {"channels", img.channels()}});
            }
            send_json(res, out);
        });

        server_.Get(R"(/api/images/([^/]+)\.png)", [this](const Req& req, Res& res) {
            const std::string id = req.matches[1];
            if (!image_exists(id)) return send_error(res, 404, "no image " + id);
            res.set_content(read_text_file(image_path_for(cfg_, id)), "image/png");
        });

        server_.Get(R"(/api/markers/([^/]+))", [this](const Req& req, Res& res) {
            const std::string id = req.matches[1];
            std::shared_lock lock(mu_);
            auto it = markers_.find(id);
            if (it == markers_.end()) return send_error(res, 404, "no markers for " + id);
            res.set_content(it->second, "text/plain");
        });

        server_.Put(R"(/api/markers/([^/]+))", [this](const Req& req, Res& res) {
            const std::string id = req.matches[1];
            if (!image_exists(id)) return send_error(res, 404, "no image " + id);
            ImageMarkers parsed;
            try {
                parsed = parse_image_markers(req.body);
            } catch (const Error& e) {
                return send_error(res, 400, e.what());
            }
            if (parsed.image_id != id) return send_error(res, 400, "marker text names image " + parsed.image_id);
            std::unique_lock lock(mu_);
            mutate({{"op", "markers"}, {"id", id}, {"text", req.body}});
            res.set_content(markers_.at(id), "text/plain");
        });

        server_.Post("/api/train", [this](const Req& req, Res& res) {
            std::vector<std::string> ids;
            try {
                if (!req.body.empty()) {
                    const auto j = nlohmann::json::parse(req.body);
                    if (j.contains("images")) ids = j.at("images").get<std::vector<std::string>>();
                }
            } catch (const nlohmann::json::exception& e) {
                return send_error(res, 400, e.what());
            }
            std::unique_lock lock(mu_);
            if (busy_) {
                res.set_header("Retry-After", std::to_string(kRetryAfterSeconds));
                return send_error(res, 429, "a training job is already running");
            }
            if (ids.empty()) ids = trainable_ids();
            if (ids.empty()) return send_error(res, 400, "no images with markers to train on");
            for (const auto& id : ids)
                if (!markers_.count(id)) return send_error(res, 400, "image " + id + " has no markers");
            const std::string job_id = "job-" + std::to_string(jobs_.size() + 1);
            mutate({{"op", "job"}, {"id", job_id}, {"phase", "queued"}, {"progress", 0.0}, {"images", ids}});
            busy_ = true;
            if (worker_.joinable()) worker_.join();
            worker_ = std::thread([this, job = jobs_.at(job_id)] { run_job(job); });
            send_json(res, jobs_.at(job_id).to_json(), 202);
        });

        server_.Get(R"(/api/jobs/([^/]+))", [this](const Req& req, Res& res) {
            const auto j = job(req.matches[1]);
            if (!j) return send_error(res, 404, "no job " + std::string(req.matches[1]));
            send_json(res, j->to_json());
        });

        server_.Post(R"(/api/infer/([^/]+))", [this](const Req& req, Res& res) {
            const std::string id = req.matches[1];
            if (!image_exists(id)) return send_error(res, 404, "no image " + id);
            const auto m = model();
            if (!m) return send_error(res, 409, "no trained model");
            DecoderOptions dec = cfg_.decoder;
            std::size_t block = cfg_.block;
            try {
                if (req.has_param("decoder")) dec.kind = decoder_kind_from_string(req.get_param_value("decoder"));
                if (req.has_param("block")) block = std::stoul(req.get_param_value("block"));
                const auto s = saliency_map(load_image(image_path_for(cfg_, id)), *m, block, dec);
                res.set_content(encode_saliency_png(s), "image/png");
            } catch (const std::exception& e) {
                send_error(res, 400, e.what());
            }
        });

        const auto get_selection = [this](const Req&, Res& res) {
            const auto s = selection();
            if (!s) return send_json(res, {{"initialized", false}});
            auto j = s->to_json();
            j["initialized"] = true;
            send_json(res, j);
        };
        server_.Get("/api/selection", get_selection);
        server_.Get("/api/session", get_selection);

        server_.Post("/api/selection/init", [this](const Req& req, Res& res) {
            std::uint64_t seed = cfg_.seed;
            try {
                if (!req.body.empty()) seed = nlohmann::json::parse(req.body).value("seed", seed);
                std::unique_lock lock(mu_);
                const auto s = SelectionSession::init(list_stems(cfg_.images_dir, ".png"), seed);
                mutate({{"op", "selection"}, {"event", s.history().front()}});
                send_json(res, selection_->to_json());
            } catch (const std::exception& e) {
                send_error(res, 400, e.what());
            }
        });

        server_.Post("/api/selection/score", [this](const Req&, Res& res) {
            auto s = selection();
            if (!s) return send_error(res, 409, "selection is not initialized");
            try {
                const auto score = score_selection(*s, cfg_);
                nlohmann::json ranking = nlohmann::json::array();
                for (const auto& r : score.ranking) ranking.push_back({{"image_id", r.image_id}, {"f_beta", r.f_beta}});
                std::unique_lock lock(mu_);
                if (!selection_ || !(*selection_ == *s) || selection_->history().size() != s->history().size())
                    return send_error(res, 409, "selection changed while scoring");
                mutate({{"op", "selection_score"}, {"ranking", ranking}});
                send_json(res, selection_->to_json());
            } catch (const std::exception& e) {
                send_error(res, 400, e.what());
            }
        });

        server_.Post("/api/selection/step", [this](const Req& req, Res& res) {
            bool accept = false;
            std::string candidate;
            try {
                const auto j = nlohmann::json::parse(req.body);
                accept = j.at("accept").get<bool>();
                candidate = j.at("candidate").get<std::string>();
            } catch (const nlohmann::json::exception& e) {
                return send_error(res, 400, std::string("step body needs {accept, candidate}: ") + e.what());
            }
            std::unique_lock lock(mu_);
            if (!selection_) return send_error(res, 409, "selection is not initialized");
            try {
                SelectionSession next = *selection_;
                const double x = next.last_score() ? next.last_score()->x : next.x_prev();
                next.decide(accept, candidate, x);
                mutate({{"op", "selection"}, {"event", next.history().back()}});
                send_json(res, selection_->to_json());
            } catch (const Error& e) {
                send_error(res, 400, e.what());
            }
        });
    }

    void run_job(const JobState& job) {
        const std::string& id = job.id;
        {
            std::unique_lock lock(mu_);
            mutate({{"op", "job"}, {"id", id}, {"phase", "training"}, {"progress", 0.1}});
        }
        try {
            auto m = std::make_shared<const EncoderModel>(train_job(job));
            std::unique_lock lock(mu_);
            model_ = std::move(m);
            mutate({{"op", "job"}, {"id", id}, {"phase", "done"}, {"progress", 1.0}});
        } catch (const std::exception& e) {
            std::unique_lock lock(mu_);
            mutate({{"op", "job"}, {"id", id}, {"phase", "failed"}, {"progress", 1.0}, {"error", e.what()}});
        }
        std::unique_lock lock(mu_);
        busy_ = false;
    }

    PipelineConfig cfg_;
    std::string state_dir_;
    std::string log_path_;
    httplib::Server server_;

    mutable std::shared_mutex mu_;
    std::map<std::string, std::string> markers_;
    std::map<std::string, JobState> jobs_;
    std::shared_ptr<const EncoderModel> model_;
    std::optional<SelectionSession> selection_;
    bool busy_ = false;
    std::thread worker_;
};

}  // namespace flimsod
