#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "flimsod/error.hpp"
#include "flimsod/metrics.hpp"
#include "flimsod/rng.hpp"

namespace flimsod {

struct RankedImage {
    std::string image_id;
    double f_beta = 0.0;

    friend bool operator==(const RankedImage&, const RankedImage&) = default;
};

struct SelectionScore {
    double x = 0.0;                    ///< mean F-beta over the pool
    std::vector<RankedImage> ranking;  ///< ascending F-beta, ties by image id
};

/// State of the representative-image selection loop.
///
/// The training set starts from one random pick. Each step either accepts a
/// candidate (it joins the training set and becomes the pending addition) or
/// reverts the pending addition back into the pool. A revert with no pending
/// addition, or one that would empty the training set, leaves the sets
/// unchanged; it is still logged so replays stay aligned.
class SelectionSession {
public:
    const std::vector<std::string>& training() const { return training_; }
    const std::set<std::string>& pool() const { return pool_; }
    double x_prev() const { return x_prev_; }
    const std::optional<std::string>& z_prev() const { return z_prev_; }
    const std::vector<nlohmann::json>& history() const { return history_; }
    const std::optional<SelectionScore>& last_score() const { return last_score_; }

    bool in_training(const std::string& id) const {
        return std::find(training_.begin(), training_.end(), id) != training_.end();
    }

    static SelectionSession init(std::vector<std::string> pool, std::uint64_t seed) {
        if (pool.empty()) throw Error("selection needs a non-empty image pool");
        std::sort(pool.begin(), pool.end());
        pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
        Rng rng(derive_seed(seed, 0x5e1ec7));
        const std::string pick = pool[rng.below(pool.size())];
        SelectionSession s;
        s.apply({{"op", "init"}, {"pool", pool}, {"seed", seed}, {"pick", pick}});
        return s;
    }

    /// Trains on the current training set and scores every pool image.
    /// `train(training_ids)` returns a model handed to `score(model, image_id)`.
    template <typename TrainFn, typename ScoreFn>
    SelectionScore score(TrainFn&& train, ScoreFn&& score_image) {
        if (training_.empty()) throw Error("selection has an empty training set");
        auto model = train(training_);
        SelectionScore out;
        for (const auto& id : pool_) out.ranking.push_back({id, static_cast<double>(score_image(model, id))});
        set_score(std::move(out));
        return *last_score_;
    }

    void set_score(SelectionScore s) {
        std::stable_sort(s.ranking.begin(), s.ranking.end(), [](const RankedImage& a, const RankedImage& b) {
            if (a.f_beta != b.f_beta) return a.f_beta < b.f_beta;
            return a.image_id < b.image_id;
        });
        double sum = 0.0;
        for (const auto& r : s.ranking) sum += r.f_beta;
        s.x = s.ranking.empty() ? 0.0 : sum / static_cast<double>(s.ranking.size());
        last_score_ = std::move(s);
    }

    /// Accept/revert decided by comparing `x` against the previous score.
    void step(double x, const std::string& candidate) {
        require_candidate(candidate);
        decide(!(x < x_prev_), candidate, x);
    }

    /// Explicit decision (e.g. from a human reviewer).
    void decide(bool accept, const std::string& candidate, double x) {
        require_candidate(candidate);
        nlohmann::json e{{"op", "step"}, {"x", x}, {"candidate", candidate}, {"outcome", accept ? "accept" : "revert"}};
        if (!accept) e["removed"] = revertable() ? nlohmann::json(*z_prev_) : nlohmann::json(nullptr);
        apply(e);
    }

    /// Applies one logged event; used both live and on replay.
    void apply(const nlohmann::json& e) {
        const std::string op = e.at("op").get<std::string>();
        if (op == "init") {
            if (!history_.empty()) throw Error("selection log has a second init event");
            for (const auto& id : e.at("pool")) pool_.insert(id.get<std::string>());
            const std::string pick = e.at("pick").get<std::string>();
            if (!pool_.erase(pick)) throw Error("selection init picked an image outside the pool");
            training_.push_back(pick);
            x_prev_ = 0.0;
            z_prev_ = pick;
        } else if (op == "step") {
            if (history_.empty()) throw Error("selection log does not start with init");
            const std::string z = e.at("candidate").get<std::string>();
            const double x = e.at("x").get<double>();
            if (e.at("outcome") == "accept") {
                if (!pool_.erase(z)) throw Error("accepted candidate " + z + " is not in the pool");
                training_.push_back(z);
                x_prev_ = x;
                z_prev_ = z;
            } else {
                const auto& removed = e.at("removed");
                if (!removed.is_null()) {
                    const std::string r = removed.get<std::string>();
                    auto it = std::find(training_.begin(), training_.end(), r);
                    if (it == training_.end()) throw Error("reverted image " + r + " is not in the training set");
                    training_.erase(it);
                    pool_.insert(r);
                }
                z_prev_.reset();
            }
        } else {
            throw Error("unknown selection log event '" + op + "'");
        }
        history_.push_back(e);
    }

    std::string history_jsonl() const {
        std::ostringstream os;
        for (const auto& e : history_) os << e.dump() << '\n';
        return os.str();
    }

    static SelectionSession replay(const std::vector<nlohmann::json>& events) {
        SelectionSession s;
        for (const auto& e : events) s.apply(e);
        return s;
    }

    static SelectionSession replay_jsonl(const std::string& text) {
        std::vector<nlohmann::json> events;
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                events.push_back(nlohmann::json::parse(line));
            } catch (const nlohmann::json::exception& e) {
                throw Error(std::string("malformed selection log line: ") + e.what());
            }
        }
        return replay(events);
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"training", training_},
                         {"pool", std::vector<std::string>(pool_.begin(), pool_.end())},
                         {"x_prev", x_prev_},
                         {"z_prev", z_prev_ ? nlohmann::json(*z_prev_) : nlohmann::json(nullptr)},
                         {"steps", history_.empty() ? 0 : history_.size() - 1}};
        if (last_score_) {
            nlohmann::json ranking = nlohmann::json::array();
            for (const auto& r : last_score_->ranking) ranking.push_back({{"image_id", r.image_id}, {"f_beta", r.f_beta}});
            j["score"] = {{"x", last_score_->x}, {"ranking", ranking}};
        } else {
            j["score"] = nullptr;
        }
        return j;
    }

    /// Sets and pending state only; the cached score and log are not compared.
    friend bool operator==(const SelectionSession& a, const SelectionSession& b) {
        return a.training_ == b.training_ && a.pool_ == b.pool_ && a.x_prev_ == b.x_prev_ && a.z_prev_ == b.z_prev_;
    }

private:
    bool revertable() const { return z_prev_.has_value() && training_.size() > 1 && in_training(*z_prev_); }

    void require_candidate(const std::string& z) const {
        if (history_.empty()) throw Error("selection session is not initialized");
        if (!pool_.count(z)) throw Error("candidate " + z + " is not in the selection pool");
    }

    std::vector<std::string> training_;
    std::set<std::string> pool_;
    double x_prev_ = 0.0;
    std::optional<std::string> z_prev_;
    std::vector<nlohmann::json> history_;
    std::optional<SelectionScore> last_score_;
};

}  // namespace flimsod
