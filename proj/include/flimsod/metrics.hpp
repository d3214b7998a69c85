#pragma once

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "flimsod/image.hpp"

namespace flimsod {

struct Confusion {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

inline Confusion confusion(const BinaryMask& truth, const BinaryMask& pred) {
    if (!truth.same_domain(pred)) throw Error("ground truth and prediction have different domains");
    Confusion c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool g = truth[i];
        const bool b = pred[i];
        c.tp += g && b;
        c.fp += !g && b;
        c.fn += g && !b;
    }
    return c;
}

inline double precision(const Confusion& c) {
    return c.tp + c.fp == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

inline double recall(const Confusion& c) {
    return c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

inline constexpr double kDefaultBetaSq = 0.3;

/// (1 + b2) P R / (b2 P + R); 0 when the denominator vanishes.
inline double f_beta(double p, double r, double beta_sq = kDefaultBetaSq) {
    const double den = beta_sq * p + r;
    if (den <= 0.0) return 0.0;
    return (1.0 + beta_sq) * p * r / den;
}

inline double mae(const BinaryMask& truth, const BinaryMask& pred) {
    if (!truth.same_domain(pred)) throw Error("ground truth and prediction have different domains");
    std::size_t diff = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) diff += truth[i] != pred[i];
    return static_cast<double>(diff) / static_cast<double>(truth.size());
}

struct EvalResult {
    std::string image_id;
    Confusion counts;
    double precision = 0.0;
    double recall = 0.0;
    double f_beta = 0.0;
    double mae = 0.0;
};

inline EvalResult evaluate(const std::string& id, const BinaryMask& truth, const BinaryMask& pred,
                           double beta_sq = kDefaultBetaSq) {
    EvalResult r;
    r.image_id = id;
    r.counts = confusion(truth, pred);
    r.precision = precision(r.counts);
    r.recall = recall(r.counts);
    r.f_beta = f_beta(r.precision, r.recall, beta_sq);
    r.mae = mae(truth, pred);
    return r;
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
    MeanStd s;
    if (v.empty()) return s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(var / static_cast<double>(v.size()));
    return s;
}

struct EvalReport {
    std::vector<EvalResult> rows;
    MeanStd precision, recall, f_beta, mae;
};

struct EvalPair {
    std::string image_id;
    BinaryMask truth;
    BinaryMask prediction;
};

/// Per-image rows plus mean and population std of every metric.
inline EvalReport summarize(std::vector<EvalResult> rows) {
    if (rows.empty()) throw Error("evaluation needs at least one image");
    EvalReport rep;
    rep.rows = std::move(rows);
    std::vector<double> p, r, f, e;
    for (const auto& row : rep.rows) {
        p.push_back(row.precision);
        r.push_back(row.recall);
        f.push_back(row.f_beta);
        e.push_back(row.mae);
    }
    rep.precision = mean_std(p);
    rep.recall = mean_std(r);
    rep.f_beta = mean_std(f);
    rep.mae = mean_std(e);
    return rep;
}

inline EvalReport evaluate_set(const std::vector<EvalPair>& pairs, double beta_sq = kDefaultBetaSq) {
    if (pairs.empty()) throw Error("evaluation needs at least one image");
    std::vector<EvalResult> rows;
    rows.reserve(pairs.size());
    for (const auto& pr : pairs) rows.push_back(evaluate(pr.image_id, pr.truth, pr.prediction, beta_sq));
    return summarize(std::move(rows));
}

inline std::string report_csv(const EvalReport& rep) {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    os << "image_id,precision,recall,f_beta,mae\n";
    for (const auto& r : rep.rows)
        os << r.image_id << ',' << r.precision << ',' << r.recall << ',' << r.f_beta << ',' << r.mae << '\n';
    return os.str();
}

inline nlohmann::json report_json(const EvalReport& rep) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : rep.rows)
        rows.push_back({{"image_id", r.image_id},
                        {"tp", r.counts.tp},
                        {"fp", r.counts.fp},
                        {"fn", r.counts.fn},
                        {"precision", r.precision},
                        {"recall", r.recall},
                        {"f_beta", r.f_beta},
                        {"mae", r.mae}});
    const auto ms = [](const MeanStd& s) { return nlohmann::json{{"mean", s.mean}, {"std", s.std}}; };
    return {{"rows", rows},
            {"summary",
             {{"precision", ms(rep.precision)}, {"recall", ms(rep.recall)}, {"f_beta", ms(rep.f_beta)}, {"mae", ms(rep.mae)}}}};
}

}  // namespace flimsod
