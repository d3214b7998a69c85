#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "flimsod/decoders.hpp"
#include "flimsod/image.hpp"
#include "flimsod/rng.hpp"

namespace flimsod {

/// Point-wise decoder trained by gradient descent: sigmoid(<I(p), alpha>)
/// fitted with the mean of Dice and binary cross-entropy losses.
struct BpHyperParams {
    double learning_rate = 0.01;
    int epochs = 100;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double dice_smoothing = 1.0;
};

struct BpSample {
    MultiChannelImage featmap;
    BinaryMask target;  ///< on the feature-map grid
};

struct BpLoss {
    double value = 0.0;
    std::vector<double> gradient;
};

namespace detail {

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace detail

/// Loss and its analytic gradient with respect to alpha. Per image:
/// (Dice + BCE) / 2, where Dice = 1 - (2*sum(y*g) + s) / (sum(y) + sum(g) + s)
/// and BCE is the pixel mean; the total is the mean over images.
inline BpLoss bp_loss(const std::vector<BpSample>& samples, const std::vector<double>& alpha,
                      double smoothing = 1.0) {
    if (samples.empty()) throw Error("bp loss needs at least one sample");
    const std::size_t m = alpha.size();
    BpLoss out;
    out.gradient.assign(m, 0.0);
    std::vector<double> z, y;
    for (const auto& s : samples) {
        const auto& f = s.featmap;
        if (f.channels() != static_cast<int>(m)) throw Error("bp sample channel count mismatch");
        if (s.target.width() != f.width() || s.target.height() != f.height())
            throw Error("bp target is not on the feature-map grid");
        const std::size_t n = f.pixel_count();
        const auto& d = f.data();
        z.assign(n, 0.0);
        y.assign(n, 0.0);
        double inter = 0.0;
        double sum_y = 0.0;
        double sum_g = 0.0;
        double bce = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double zi = 0.0;
            for (std::size_t c = 0; c < m; ++c) zi += alpha[c] * d[i * m + c];
            z[i] = zi;
            y[i] = detail::sigmoid(zi);
            const double g = s.target[i] ? 1.0 : 0.0;
            inter += y[i] * g;
            sum_y += y[i];
            sum_g += g;
            // -[g log y + (1-g) log(1-y)] with log y = -softplus(-z), log(1-y) = -softplus(z)
            bce += g * detail::softplus(-zi) + (1.0 - g) * detail::softplus(zi);
        }
        const double nn = static_cast<double>(n);
        bce /= nn;
        const double num = 2.0 * inter + smoothing;
        const double den = sum_y + sum_g + smoothing;
        const double dice = 1.0 - num / den;
        out.value += 0.5 * (dice + bce);

        for (std::size_t i = 0; i < n; ++i) {
            const double g = s.target[i] ? 1.0 : 0.0;
            const double ddice_dy = -(2.0 * g * den - num) / (den * den);
            const double dy_dz = y[i] * (1.0 - y[i]);
            const double dbce_dz = (y[i] - g) / nn;
            const double dz = 0.5 * (ddice_dy * dy_dz + dbce_dz);
            for (std::size_t c = 0; c < m; ++c) out.gradient[c] += dz * d[i * m + c];
        }
    }
    const double k = static_cast<double>(samples.size());
    out.value /= k;
    for (double& g : out.gradient) g /= k;
    return out;
}

struct BpTrainingResult {
    WeightVector weights;
    std::vector<double> initial_alpha;
    /// loss_history[e] is the loss after e optimizer steps.
    std::vector<double> loss_history;
};

/// Xavier-uniform initialization followed by `epochs` full-batch Adam steps.
inline BpTrainingResult train_bp_decoder(const std::vector<BpSample>& samples, const BpHyperParams& hp = {}) {
    if (samples.empty()) throw Error("bp decoder training needs at least one image");
    if (hp.epochs < 0) throw Error("epochs must be >= 0");
    const std::size_t m = static_cast<std::size_t>(samples.front().featmap.channels());
    Rng rng(hp.seed);
    const double limit = std::sqrt(6.0 / static_cast<double>(m + 1));
    std::vector<double> alpha(m);
    for (double& a : alpha) a = rng.uniform(-limit, limit);

    BpTrainingResult res;
    res.initial_alpha = alpha;
    std::vector<double> m1(m, 0.0), m2(m, 0.0);
    for (int e = 0; e < hp.epochs; ++e) {
        const auto l = bp_loss(samples, alpha, hp.dice_smoothing);
        res.loss_history.push_back(l.value);
        const double b1t = 1.0 - std::pow(hp.beta1, e + 1);
        const double b2t = 1.0 - std::pow(hp.beta2, e + 1);
        for (std::size_t c = 0; c < m; ++c) {
            m1[c] = hp.beta1 * m1[c] + (1.0 - hp.beta1) * l.gradient[c];
            m2[c] = hp.beta2 * m2[c] + (1.0 - hp.beta2) * l.gradient[c] * l.gradient[c];
            alpha[c] -= hp.learning_rate * (m1[c] / b1t) / (std::sqrt(m2[c] / b2t) + hp.adam_epsilon);
        }
    }
    res.loss_history.push_back(bp_loss(samples, alpha, hp.dice_smoothing).value);
    res.weights = {DecoderKind::Backprop, std::move(alpha)};
    return res;
}

/// sigmoid(<I(p), alpha>), the inference head matching training.
inline MultiChannelImage decode_bp(const MultiChannelImage& featmap, const WeightVector& w) {
    if (w.alpha.size() != static_cast<std::size_t>(featmap.channels()))
        throw Error("bp weight vector length does not match the feature map");
    MultiChannelImage out(featmap.width(), featmap.height(), 1);
    const std::span<const double> alpha(w.alpha);
    for (int y = 0; y < featmap.height(); ++y)
        for (int x = 0; x < featmap.width(); ++x)
            out.at(x, y) = detail::sigmoid(detail::weighted_sum(featmap.pixel(x, y), alpha));
    return out;
}

}  // namespace flimsod
