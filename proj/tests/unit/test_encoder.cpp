#include <gtest/gtest.h>

#include <cmath>

#include "flimsod/encoder.hpp"
#include "flimsod/model_io.hpp"
#include "oracles.hpp"

using namespace flimsod;

namespace {

ImageMarkers random_markers(Rng& rng, const std::string& id, int w, int h, int count) {
    ImageMarkers im{id, w, h, {}};
    for (int k = 0; k < count; ++k) {
        Marker m{k + 1, k % 2 == 0 ? MarkerLabel::Foreground : MarkerLabel::Background, {}};
        const int n = 1 + static_cast<int>(rng.below(10));
        for (int i = 0; i < n; ++i) {
            const Pixel p{static_cast<int>(rng.below(w)), static_cast<int>(rng.below(h))};
            if (std::find(m.pixels.begin(), m.pixels.end(), p) == m.pixels.end()) m.pixels.push_back(p);
        }
        im.markers.push_back(m);
    }
    return im;
}

double norm2(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

TEST(KernelEstimate, SinglePatchGivesItsUnitVector) {
    const auto est = estimate_kernels_for_marker({{3.0, 4.0}}, 2, 1);
    ASSERT_EQ(est.kernels.size(), 1u);
    EXPECT_DOUBLE_EQ(est.kernels[0][0], 0.6);
    EXPECT_DOUBLE_EQ(est.kernels[0][1], 0.8);
}

TEST(KernelEstimate, TwoClustersOnAxes) {
    const std::vector<std::vector<double>> pts{{1, 0}, {1.1, 0}, {0, 1}, {0, 1.1}};
    auto est = estimate_kernels_for_marker(pts, 2, 5);
    ASSERT_EQ(est.kernels.size(), 2u);
    std::sort(est.kernels.begin(), est.kernels.end());
    EXPECT_NEAR(est.kernels[0][0], 0.0, 1e-12);
    EXPECT_NEAR(est.kernels[0][1], 1.0, 1e-12);
    EXPECT_NEAR(est.kernels[1][0], 1.0, 1e-12);
}

TEST(KernelEstimate, ZeroCenterIsReplacedByCenterTap) {
    const auto est = estimate_kernels_for_marker({{0, 0, 0}, {0, 0, 0}}, 1, 3, 1);
    ASSERT_EQ(est.kernels.size(), 1u);
    EXPECT_EQ(est.replaced_zero_centers, 1);
    EXPECT_EQ(est.kernels[0], (std::vector<double>{0, 1, 0}));
}

TEST(KernelEstimate, RejectsBadInput) {
    EXPECT_THROW(estimate_kernels_for_marker({}, 1, 1), Error);
    EXPECT_THROW(estimate_kernels_for_marker({{1.0}}, 0, 1), Error);
}

TEST(KMeans, DeterministicForSeed) {
    Rng rng(3);
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 60; ++i) pts.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    const auto a = kmeans(pts, 4, 99), b = kmeans(pts, 4, 99);
    EXPECT_EQ(a.centers, b.centers);
    EXPECT_EQ(a.assignment, b.assignment);
}

TEST(KMeans, DuplicatePointsStillYieldKCenters) {
    const std::vector<std::vector<double>> pts(5, std::vector<double>{2.0, 2.0});
    const auto r = kmeans(pts, 3, 1);
    EXPECT_EQ(r.centers.size(), 3u);
    EXPECT_EQ(r.wcss_trace.back(), 0.0);
}

TEST(KernelBank, SizeNormAndWcssOverFuzzedMarkers) {
    Rng rng(2024);
    for (int run = 0; run < 100; ++run) {
        const int m = 1 + static_cast<int>(rng.below(4));
        const int w = 8 + static_cast<int>(rng.below(24)), h = 8 + static_cast<int>(rng.below(24));
        BlockSpec spec;
        spec.kernel_size = rng.uniform() < 0.5 ? 3 : 5;
        spec.dilation = 1 + static_cast<int>(rng.below(2));
        spec.kernels_per_marker = 1 + static_cast<int>(rng.below(5));
        const auto img = oracle::random_image(rng, w, h, m, -1, 1);
        MarkerSet ms;
        ms.add(random_markers(rng, "x", w, h, 1 + static_cast<int>(rng.below(5))));

        const auto bank = build_kernel_bank({{"x", img}}, ms, spec, rng.below(1u << 30));
        std::size_t expected = 0;
        for (const auto& mk : ms.images.at("x").markers)
            expected += std::min<std::size_t>(spec.kernels_per_marker, mk.pixels.size());
        ASSERT_EQ(bank.size(), expected);
        for (const auto& k : bank.kernels) {
            ASSERT_EQ(k.weights.size(), static_cast<std::size_t>(spec.kernel_size * spec.kernel_size * m));
            EXPECT_NEAR(norm2(k.weights), 1.0, 1e-6);
        }

        // Lloyd iterations on the raw patches never increase WCSS.
        const auto& mk = ms.images.at("x").markers.front();
        std::vector<std::vector<double>> patches;
        for (auto p : mk.pixels) patches.push_back(extract_patch(img, p, spec.patch()));
        const int k = static_cast<int>(std::min<std::size_t>(spec.kernels_per_marker, patches.size()));
        const auto km = kmeans(patches, k, run);
        for (std::size_t i = 1; i < km.wcss_trace.size(); ++i)
            EXPECT_LE(km.wcss_trace[i], km.wcss_trace[i - 1] * (1 + 1e-12) + 1e-12);
    }
}

TEST(KernelBank, KernelsInheritMarkerLabels) {
    MultiChannelImage img(10, 10, 2);
    Rng rng(5);
    for (double& v : img.data()) v = rng.uniform();
    MarkerSet ms;
    ms.add({"a", 10, 10,
            {{4, MarkerLabel::Background, {{1, 1}, {2, 2}, {3, 3}}}, {9, MarkerLabel::Foreground, {{5, 5}, {6, 6}}}}});
    BlockSpec spec;
    spec.kernels_per_marker = 2;
    const auto bank = build_kernel_bank({{"a", img}}, ms, spec, 0);
    ASSERT_EQ(bank.size(), 4u);
    EXPECT_EQ(bank.kernels[0].marker_id, 4);
    EXPECT_EQ(bank.kernels[0].label, MarkerLabel::Background);
    EXPECT_EQ(bank.kernels[3].marker_id, 9);
    EXPECT_EQ(bank.kernels[3].label, MarkerLabel::Foreground);
}

TEST(ConvBlock, MatchesNaiveOracle) {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const int w = 1 + static_cast<int>(rng.below(32)), h = 1 + static_cast<int>(rng.below(32));
        const int m = 1 + static_cast<int>(rng.below(8));
        BlockSpec spec;
        spec.kernel_size = 1 + 2 * static_cast<int>(rng.below(3));
        spec.dilation = 1 + static_cast<int>(rng.below(3));
        spec.pooling = {rng.uniform() < 0.5 ? PoolType::Max : PoolType::Avg, 1 + 2 * static_cast<int>(rng.below(2)),
                        1 + static_cast<int>(rng.below(3))};
        const auto img = oracle::random_image(rng, w, h, m, -2, 2);
        MarkerStats st;
        st.epsilon = 1e-4;
        for (int c = 0; c < m; ++c) {
            st.mean.push_back(rng.uniform(-0.5, 0.5));
            st.stddev.push_back(rng.uniform(0.2, 2.0));
        }
        KernelBank bank;
        bank.input_channels = m;
        std::vector<std::vector<double>> raw;
        const int nk = 1 + static_cast<int>(rng.below(6));
        for (int j = 0; j < nk; ++j) {
            std::vector<double> k(spec.kernel_size * spec.kernel_size * m);
            for (double& v : k) v = rng.uniform(-1, 1);
            raw.push_back(k);
            bank.kernels.push_back({k, "x", j + 1, MarkerLabel::Foreground});
        }
        const auto got = conv_block_forward(img, st, bank, spec);
        const auto want = oracle::conv_block(img, st.mean, st.stddev, st.epsilon, raw, spec.kernel_size, spec.dilation,
                                             spec.pooling.type == PoolType::Max, spec.pooling.size, spec.pooling.stride);
        ASSERT_EQ(got.width(), want.width());
        ASSERT_EQ(got.height(), want.height());
        ASSERT_EQ(got.channels(), want.channels());
        for (std::size_t i = 0; i < got.data().size(); ++i) ASSERT_NEAR(got.data()[i], want.data()[i], 1e-9);
    }
}

TEST(Pooling, OutputExtentIsCeilOfSizeOverStride) {
    for (int n = 1; n < 40; ++n)
        for (int s = 1; s < 5; ++s) {
            const auto out = pool(MultiChannelImage(n, 3, 1), {PoolType::Max, 3, s});
            EXPECT_EQ(out.width(), (n + s - 1) / s);
        }
    EXPECT_EQ(pooled_extent(400, 2), 200);
    EXPECT_EQ(pooled_extent(399, 2), 200);
}

TEST(Pooling, AverageDividesByFullWindow) {
    MultiChannelImage img(2, 2, 1);
    img.data() = {1, 1, 1, 1};
    const auto out = pool(img, {PoolType::Avg, 3, 1});
    EXPECT_DOUBLE_EQ(out.at(0, 0), 4.0 / 9.0);
}

class TrainedModel : public ::testing::Test {
protected:
    static EncoderModel train(std::uint64_t seed) {
        Rng rng(31);
        std::vector<TrainingImage> imgs;
        MarkerSet ms;
        for (const std::string id : {"a", "b"}) {
            imgs.push_back({id, oracle::random_image(rng, 40, 30, 3)});
            ms.add(random_markers(rng, id, 40, 30, 4));
        }
        ArchitectureConfig arch;
        arch.blocks.push_back({3, 1, 2, {PoolType::Max, 3, 2}});
        arch.blocks.push_back({3, 2, 3, {PoolType::Avg, 3, 2}});
        return train_encoder(imgs, ms, arch, seed);
    }
};

TEST_F(TrainedModel, DeterministicForSeed) {
    EXPECT_EQ(train(7), train(7));
    EXPECT_NE(train(7).blocks[0].bank, train(8).blocks[0].bank);
}

TEST_F(TrainedModel, ShapesAndStrides) {
    const auto model = train(1);
    ASSERT_EQ(model.depth(), 2u);
    EXPECT_EQ(model.blocks[0].cumulative_stride, 1);
    EXPECT_EQ(model.blocks[1].cumulative_stride, 2);
    EXPECT_EQ(model.blocks[1].bank.input_channels, static_cast<int>(model.blocks[0].bank.size()));
    const auto maps = encoder_forward_all(MultiChannelImage(40, 30, 3), model);
    EXPECT_EQ(maps[0].width(), 20);
    EXPECT_EQ(maps[0].height(), 15);
    EXPECT_EQ(maps[1].width(), 10);
    EXPECT_EQ(maps[1].height(), 8);
    EXPECT_EQ(maps[1].channels(), static_cast<int>(model.blocks[1].bank.size()));
    std::size_t params = 0;
    for (const auto& b : model.blocks) params += b.bank.size() * 9 * b.bank.input_channels;
    EXPECT_EQ(model.parameter_count(), params);
}

TEST_F(TrainedModel, JsonRoundTripIsExact) {
    const auto model = train(3);
    const auto text = model_to_json(model).dump();
    const auto back = model_from_json(json::parse(text));
    EXPECT_EQ(back, model);
    EXPECT_EQ(model_to_json(back).dump(), text);
}

TEST_F(TrainedModel, ForwardRejectsBadInputs) {
    const auto model = train(3);
    EXPECT_THROW(encoder_forward(MultiChannelImage(8, 8, 1), model, 1), Error);
    EXPECT_THROW(encoder_forward(MultiChannelImage(8, 8, 3), model, 3), Error);
    EXPECT_THROW(encoder_forward(MultiChannelImage(8, 8, 3), model, 0), Error);
}

TEST(TrainEncoder, RejectsUnmarkedImagesAndSizeMismatch) {
    ArchitectureConfig arch;
    arch.blocks.push_back({});
    MarkerSet ms;
    ms.add({"a", 5, 5, {{1, MarkerLabel::Foreground, {{1, 1}}}}});
    EXPECT_THROW(train_encoder({{"b", MultiChannelImage(5, 5, 1)}}, ms, arch, 0), Error);
    EXPECT_THROW(train_encoder({{"a", MultiChannelImage(6, 5, 1)}}, ms, arch, 0), Error);
    EXPECT_NO_THROW(train_encoder({{"a", MultiChannelImage(5, 5, 1)}}, ms, arch, 0));
}

TEST(ModelJson, RejectsWrongSchema) {
    EXPECT_THROW(model_from_json(json{{"schema", "other"}}), Error);
}
