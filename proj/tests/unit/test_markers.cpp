#include <gtest/gtest.h>

#include <cmath>

#include "flimsod/encoder.hpp"
#include "flimsod/markers.hpp"
#include "oracles.hpp"

using namespace flimsod;

namespace {

const char* kThreePixels =
    "FLIM-MARKERS 1\n"
    "img 400 400\n"
    "# fg stroke\n"
    "10 10 1 1\n"
    "11 10 1 1\n"
    "12 10 1 1\n";

ImageMarkers random_markers(Rng& rng, const std::string& id, int w, int h, int count) {
    ImageMarkers im{id, w, h, {}};
    for (int k = 0; k < count; ++k) {
        Marker m{k + 1, rng.uniform() < 0.5 ? MarkerLabel::Foreground : MarkerLabel::Background, {}};
        const int n = 1 + static_cast<int>(rng.below(12));
        for (int i = 0; i < n; ++i) {
            const Pixel p{static_cast<int>(rng.below(w)), static_cast<int>(rng.below(h))};
            if (std::find(m.pixels.begin(), m.pixels.end(), p) == m.pixels.end()) m.pixels.push_back(p);
        }
        im.markers.push_back(m);
    }
    return im;
}

}  // namespace

TEST(MarkerParse, OneForegroundMarker) {
    const auto ms = parse_markers(kThreePixels);
    ASSERT_EQ(ms.marker_count(), 1u);
    const auto& m = ms.images.at("img").markers.front();
    EXPECT_EQ(m.id, 1);
    EXPECT_EQ(m.label, MarkerLabel::Foreground);
    EXPECT_EQ(m.pixels.size(), 3u);
}

TEST(MarkerParse, OutOfDomainCoordinate) {
    EXPECT_THROW(parse_image_markers("FLIM-MARKERS 1\nimg 400 400\n500 10 1 1\n"), Error);
}

TEST(MarkerParse, DuplicateMarkerId) {
    const std::string text = "FLIM-MARKERS 1\nimg 10 10\n1 1 7 1\n2 2 3 2\n3 3 7 1\n";
    try {
        parse_image_markers(text);
        FAIL() << "expected a duplicate-id error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("duplicate"), std::string::npos);
    }
    // Same id with a different label is also a clash.
    EXPECT_THROW(parse_image_markers("FLIM-MARKERS 1\nimg 10 10\n1 1 7 1\n2 1 7 2\n"), Error);
}

TEST(MarkerParse, SyntaxErrorsCarryLineNumbers) {
    try {
        parse_image_markers("FLIM-MARKERS 1\nimg 10 10\n1 1 1 1\n1 x 1 1\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_image_markers("FLIM-MARKERS 2\nimg 10 10\n"), Error);
    EXPECT_THROW(parse_image_markers("FLIM-MARKERS 1\nimg 10 10\n1 1 1 3\n"), Error);
    EXPECT_THROW(parse_image_markers("FLIM-MARKERS 1\nimg 10 10\n1 1 1\n"), Error);
    EXPECT_THROW(parse_image_markers(""), Error);
}

TEST(MarkerParse, DuplicatePixelsCollapse) {
    const auto im = parse_image_markers("FLIM-MARKERS 1\nimg 10 10\n1 1 1 1\n1 1 1 1\n2 1 1 1\n");
    EXPECT_EQ(im.markers.front().pixels.size(), 2u);
}

TEST(MarkerParse, CanonicalTextRoundTripsByteForByte) {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const auto im = random_markers(rng, "scan_" + std::to_string(trial), 37, 23, 1 + trial % 4);
        const auto text = serialize_markers(im);
        const auto back = parse_image_markers(text);
        EXPECT_EQ(serialize_markers(back), text);
        ASSERT_EQ(back.markers.size(), im.markers.size());
        for (std::size_t k = 0; k < im.markers.size(); ++k) {
            auto a = im.markers[k].pixels, b = back.markers[k].pixels;
            std::sort(a.begin(), a.end());
            std::sort(b.begin(), b.end());
            EXPECT_EQ(a, b);
        }
    }
}

TEST(MarkerMap, IdentityAtStrideOne) {
    Rng rng(1);
    const auto im = random_markers(rng, "a", 30, 30, 3);
    const auto mapped = map_markers_to_block(im, 1);
    EXPECT_EQ(serialize_markers(mapped), serialize_markers(map_markers_to_block(mapped, 1)));
    EXPECT_EQ(mapped.pixel_count(), im.pixel_count());
}

TEST(MarkerMap, FloorDivisionAndDedup) {
    ImageMarkers im{"a", 400, 400, {{1, MarkerLabel::Foreground, {{0, 0}, {1, 1}}}, {2, MarkerLabel::Background, {{399, 399}}}}};
    const auto m2 = map_markers_to_block(im, 2);
    EXPECT_EQ(m2.markers[0].pixels, (std::vector<Pixel>{{0, 0}}));
    const auto m4 = map_markers_to_block(im, 4);
    EXPECT_EQ(m4.markers[1].pixels, (std::vector<Pixel>{{99, 99}}));
    EXPECT_EQ(m4.width, 100);
}

TEST(MarkerMap, ComposesAcrossStrides) {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const auto im = random_markers(rng, "a", 97, 61, 4);
        const int s1 = 1 + static_cast<int>(rng.below(3)), s2 = 1 + static_cast<int>(rng.below(3));
        auto twice = map_markers_to_block(map_markers_to_block(im, s1), s2);
        auto once = map_markers_to_block(im, s1 * s2);
        for (std::size_t k = 0; k < once.markers.size(); ++k) {
            std::sort(twice.markers[k].pixels.begin(), twice.markers[k].pixels.end());
            std::sort(once.markers[k].pixels.begin(), once.markers[k].pixels.end());
            ASSERT_EQ(twice.markers[k].pixels, once.markers[k].pixels);
            ASSERT_FALSE(once.markers[k].pixels.empty());
        }
    }
}

TEST(MarkerStats, SinglePixel) {
    MultiChannelImage img(3, 3, 1);
    img.at(1, 2) = 4.5;
    MarkerSet ms;
    ms.add({"a", 3, 3, {{1, MarkerLabel::Foreground, {{1, 2}}}}});
    const auto st = marker_stats({{"a", img}}, ms);
    EXPECT_EQ(st.mean[0], 4.5);
    EXPECT_EQ(st.stddev[0], 0.0);
}

TEST(MarkerStats, SymmetricPair) {
    MultiChannelImage img(2, 1, 1);
    img.data() = {0.0, 2.0};
    MarkerSet ms;
    ms.add({"a", 2, 1, {{1, MarkerLabel::Foreground, {{0, 0}}}, {2, MarkerLabel::Background, {{1, 0}}}}});
    const auto st = marker_stats({{"a", img}}, ms);
    EXPECT_DOUBLE_EQ(st.mean[0], 1.0);
    EXPECT_DOUBLE_EQ(st.stddev[0], 1.0);
}

TEST(MarkerStats, MatchesTwoPassOracleAcrossImages) {
    Rng rng(12);
    std::map<std::string, MultiChannelImage> images;
    MarkerSet ms;
    std::vector<std::vector<double>> samples(4);
    for (const std::string id : {"a", "b"}) {
        images.emplace(id, oracle::random_image(rng, 20, 20, 4, -5, 5));
        ImageMarkers im{id, 20, 20, {{1, MarkerLabel::Foreground, {}}}};
        for (int i = 0; i < 50; ++i) {
            const Pixel p{static_cast<int>(rng.below(20)), static_cast<int>(rng.below(20))};
            if (std::find(im.markers[0].pixels.begin(), im.markers[0].pixels.end(), p) != im.markers[0].pixels.end())
                continue;
            im.markers[0].pixels.push_back(p);
            for (int c = 0; c < 4; ++c) samples[c].push_back(images.at(id).at(p.x, p.y, c));
        }
        ms.add(im);
    }
    const auto st = marker_stats(images, ms);
    for (int c = 0; c < 4; ++c) {
        double mean = 0;
        for (double v : samples[c]) mean += v;
        mean /= samples[c].size();
        double var = 0;
        for (double v : samples[c]) var += (v - mean) * (v - mean);
        EXPECT_NEAR(st.mean[c], mean, 1e-9);
        EXPECT_NEAR(st.stddev[c], std::sqrt(var / samples[c].size()), 1e-9);
    }
}

TEST(MarkerStats, PixelsSharedByTwoMarkersCountOnce) {
    MultiChannelImage img(2, 1, 1);
    img.data() = {0.0, 6.0};
    MarkerSet ms;
    ms.add({"a", 2, 1, {{1, MarkerLabel::Foreground, {{0, 0}, {1, 0}}}, {2, MarkerLabel::Background, {{1, 0}}}}});
    EXPECT_DOUBLE_EQ(marker_stats({{"a", img}}, ms).mean[0], 3.0);
}

TEST(MarkerStats, EmptyUnionThrows) {
    MarkerSet ms;
    EXPECT_THROW(marker_stats({{"a", MultiChannelImage(2, 2, 1)}}, ms), Error);
}

TEST(MarkerStats, NormalizationCentersAndScalesMarkerPixels) {
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 1 + static_cast<int>(rng.below(5));
        const auto img = oracle::random_image(rng, 24, 24, m, -3, 9);
        MarkerSet ms;
        ms.add(random_markers(rng, "a", 24, 24, 3));
        const auto st = marker_stats({{"a", img}}, ms, 1e-6);
        const auto norm = normalize(img, st);
        const auto pix = ms.images.at("a").union_pixels();
        for (int c = 0; c < m; ++c) {
            double mean = 0;
            for (auto p : pix) mean += norm.at(p.x, p.y, c);
            mean /= pix.size();
            double var = 0;
            for (auto p : pix) var += (norm.at(p.x, p.y, c) - mean) * (norm.at(p.x, p.y, c) - mean);
            const double sd = std::sqrt(var / pix.size());
            EXPECT_LE(std::abs(mean), 1e-6);
            if (pix.size() > 1) {
                EXPECT_GE(sd, 0.99);
                EXPECT_LE(sd, 1.0);
            }
        }
    }
}
