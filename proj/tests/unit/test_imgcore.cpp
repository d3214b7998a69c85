#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "flimsod/color.hpp"
#include "flimsod/components.hpp"
#include "flimsod/morphology.hpp"
#include "flimsod/patch.hpp"
#include "flimsod/png_io.hpp"
#include "flimsod/resample.hpp"
#include "flimsod/threshold.hpp"
#include "oracles.hpp"

using namespace flimsod;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("flimsod_imgcore_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    return dir / name;
}

BinaryMask mask_from(int w, int h, std::initializer_list<Pixel> on) {
    BinaryMask m(w, h);
    for (auto p : on) m.set(p.x, p.y, true);
    return m;
}

// Reference CIE conversion written against the CIE constants (216/24389,
// 24389/27) instead of the 6/29 form the library uses.
std::array<double, 3> ref_rgb_to_lab(double r, double g, double b) {
    auto lin = [](double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); };
    const double R = lin(r), G = lin(g), B = lin(b);
    const double X = (0.4124564 * R + 0.3575761 * G + 0.1804375 * B) / 0.95047;
    const double Y = 0.2126729 * R + 0.7151522 * G + 0.0721750 * B;
    const double Z = (0.0193339 * R + 0.1191920 * G + 0.9503041 * B) / 1.08883;
    constexpr double eps = 216.0 / 24389.0, kappa = 24389.0 / 27.0;
    auto f = [&](double t) { return t > eps ? std::cbrt(t) : (kappa * t + 16.0) / 116.0; };
    return {116.0 * f(Y) - 16.0, 500.0 * (f(X) - f(Y)), 200.0 * (f(Y) - f(Z))};
}

std::array<double, 3> ref_lab_to_rgb(double L, double a, double bb) {
    constexpr double eps = 216.0 / 24389.0, kappa = 24389.0 / 27.0;
    const double fy = (L + 16.0) / 116.0, fx = fy + a / 500.0, fz = fy - bb / 200.0;
    auto finv = [&](double f) { return f * f * f > eps ? f * f * f : (116.0 * f - 16.0) / kappa; };
    const double X = finv(fx) * 0.95047, Y = L > kappa * eps ? fy * fy * fy : L / kappa, Z = finv(fz) * 1.08883;
    const double R = 3.2404542 * X - 1.5371385 * Y - 0.4985314 * Z;
    const double G = -0.9692660 * X + 1.8760108 * Y + 0.0415560 * Z;
    const double B = 0.0556434 * X - 0.2040259 * Y + 1.0572252 * Z;
    auto gam = [](double c) { return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055; };
    return {gam(R), gam(G), gam(B)};
}

}  // namespace

// ---------------------------------------------------------------------------
// containers

TEST(Image, RejectsEmptyDomainsAndChannels) {
    EXPECT_THROW(MultiChannelImage(0, 3, 1), Error);
    EXPECT_THROW(MultiChannelImage(3, 3, 0), Error);
}

TEST(Image, PixelMajorLayout) {
    MultiChannelImage img(2, 2, 3);
    img.at(1, 0, 2) = 7.0;
    EXPECT_EQ(img.data()[(0 * 2 + 1) * 3 + 2], 7.0);
    EXPECT_EQ(img.pixel(1, 0)[2], 7.0);
}

TEST(Image, FiniteCheck) {
    MultiChannelImage img(2, 1, 1);
    EXPECT_TRUE(img.all_finite());
    img.at(1, 0) = std::nan("");
    EXPECT_FALSE(img.all_finite());
}

TEST(Adjacency, FromIntAcceptsOnlyFourOrEight) {
    EXPECT_EQ(AdjacencySpec::from_int(4).offsets().size(), 4u);
    EXPECT_EQ(AdjacencySpec::from_int(8).offsets().size(), 8u);
    EXPECT_THROW(AdjacencySpec::from_int(6), Error);
}

// ---------------------------------------------------------------------------
// PNG

TEST(Png, EightBitGrayScalesEndpoints) {
    MultiChannelImage img(2, 2, 1);
    img.data() = {0, 1, 0, 1};
    const auto path = scratch("gray8.png").string();
    save_image8(path, img);
    const auto back = load_image(path);
    EXPECT_EQ(back.channels(), 1);
    EXPECT_EQ(back.data(), (std::vector<double>{0, 1, 0, 1}));
}

TEST(Png, RgbKeepsDimsAndChannels) {
    Rng rng(3);
    const auto img = oracle::random_image(rng, 400, 400, 3);
    const auto path = scratch("rgb.png").string();
    save_image8(path, img);
    const auto back = load_image(path);
    EXPECT_EQ(back.width(), 400);
    EXPECT_EQ(back.height(), 400);
    EXPECT_EQ(back.channels(), 3);
    for (std::size_t i = 0; i < img.data().size(); i += 997) EXPECT_NEAR(back.data()[i], img.data()[i], 0.5 / 255.0 + 1e-12);
}

TEST(Png, SixteenBitGray) {
    Rng rng(4);
    const auto img = oracle::random_image(rng, 240, 240, 1);
    const auto path = scratch("gray16.png").string();
    save_gray16(path, img);
    const auto back = load_image(path);
    EXPECT_EQ(back.width(), 240);
    EXPECT_EQ(back.channels(), 1);
    for (std::size_t i = 0; i < img.data().size(); ++i) ASSERT_NEAR(back.data()[i], img.data()[i], 0.5 / 65535.0 + 1e-12);
}

TEST(Png, UnreadableFileThrows) {
    const auto path = scratch("junk.png");
    std::ofstream(path) << "not a png";
    EXPECT_THROW(load_image(path.string()), Error);
    EXPECT_THROW(load_image(scratch("missing.png").string()), Error);
}

TEST(Png, MaskRoundTrip) {
    auto m = mask_from(5, 4, {{0, 0}, {4, 3}, {2, 1}});
    const auto path = scratch("mask.png").string();
    save_mask(path, m);
    EXPECT_EQ(load_mask(path), m);
}

TEST(Png, SaliencySidecarRestoresScale) {
    MultiChannelImage s(3, 1, 1);
    s.data() = {-2.5, 0.0, 7.25};
    const auto path = scratch("sal.png").string();
    const auto scale = save_saliency(path, s);
    EXPECT_EQ(scale.min, -2.5);
    EXPECT_EQ(scale.max, 7.25);
    EXPECT_TRUE(fs::exists(sidecar_path(path)));
    const auto back = load_saliency(path);
    EXPECT_EQ(back.data()[0], -2.5);
    EXPECT_EQ(back.data()[2], 7.25);
    EXPECT_NEAR(back.data()[1], 0.0, 9.75 / 65535.0);
}

// ---------------------------------------------------------------------------
// color

TEST(Lab, WhiteAndBlack) {
    MultiChannelImage img(2, 1, 3);
    for (int c = 0; c < 3; ++c) img.at(0, 0, c) = 1.0;
    const auto lab = rgb_to_lab(img);
    EXPECT_NEAR(lab.at(0, 0, 0), 100.0, 1e-3);
    EXPECT_LT(std::abs(lab.at(0, 0, 1)), 0.01);
    EXPECT_LT(std::abs(lab.at(0, 0, 2)), 0.01);
    EXPECT_EQ(lab.at(1, 0, 0), 0.0);
    EXPECT_EQ(lab.at(1, 0, 1), 0.0);
    EXPECT_EQ(lab.at(1, 0, 2), 0.0);
}

TEST(Lab, WrongChannelCountThrows) { EXPECT_THROW(rgb_to_lab(MultiChannelImage(1, 1, 1)), Error); }

TEST(Lab, MidGrayMatchesReference) {
    MultiChannelImage img(1, 1, 3, 0.5);
    const auto lab = rgb_to_lab(img);
    const auto ref = ref_rgb_to_lab(0.5, 0.5, 0.5);
    EXPECT_NEAR(lab.at(0, 0, 0), ref[0], 1e-6);
    EXPECT_LT(std::abs(lab.at(0, 0, 1)), 0.01);
    EXPECT_LT(std::abs(lab.at(0, 0, 2)), 0.01);
}

TEST(Lab, RoundTripThroughReferenceInverse) {
    Rng rng(11);
    const auto img = oracle::random_image(rng, 20, 20, 3);
    const auto lab = rgb_to_lab(img);
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 20; ++x) {
            const auto rgb = ref_lab_to_rgb(lab.at(x, y, 0), lab.at(x, y, 1), lab.at(x, y, 2));
            for (int c = 0; c < 3; ++c) ASSERT_NEAR(rgb[c], img.at(x, y, c), 1e-3);
        }
}

// ---------------------------------------------------------------------------
// patches

TEST(Patch, IdentityKernel) {
    Rng rng(1);
    const auto img = oracle::random_image(rng, 4, 3, 2);
    const auto p = extract_patch(img, {2, 1}, {1, 1});
    EXPECT_EQ(p, (std::vector<double>{img.at(2, 1, 0), img.at(2, 1, 1)}));
}

TEST(Patch, CornerOfConstantImageIsZeroPadded) {
    MultiChannelImage img(5, 5, 1, 1.0);
    const auto p = extract_patch(img, {0, 0}, {3, 1});
    EXPECT_EQ(p, (std::vector<double>{0, 0, 0, 0, 1, 1, 0, 1, 1}));
}

TEST(Patch, RejectsEvenKernelAndOutsidePixel) {
    MultiChannelImage img(5, 5, 1);
    EXPECT_THROW(extract_patch(img, {0, 0}, {2, 1}), Error);
    EXPECT_THROW(extract_patch(img, {0, 0}, {3, 0}), Error);
    EXPECT_THROW(extract_patch(img, {5, 0}, {3, 1}), Error);
}

TEST(Patch, MatchesNaiveEnumeration) {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const int w = 1 + static_cast<int>(rng.below(9)), h = 1 + static_cast<int>(rng.below(9));
        const int m = 1 + static_cast<int>(rng.below(3));
        const int k = 1 + 2 * static_cast<int>(rng.below(3));
        const int d = 1 + static_cast<int>(rng.below(3));
        const auto img = oracle::random_image(rng, w, h, m);
        const Pixel p{static_cast<int>(rng.below(w)), static_cast<int>(rng.below(h))};
        std::vector<double> want;
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx)
                for (int c = 0; c < m; ++c) {
                    const int x = p.x + (kx - k / 2) * d, y = p.y + (ky - k / 2) * d;
                    want.push_back(x >= 0 && y >= 0 && x < w && y < h ? img.at(x, y, c) : 0.0);
                }
        ASSERT_EQ(extract_patch(img, p, {k, d}), want) << "trial " << trial;
    }
}

TEST(Patch, DilatedRampSamplesAtTwo) {
    MultiChannelImage img(5, 5, 1);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) img.at(x, y) = 10 * y + x;
    EXPECT_EQ(extract_patch(img, {2, 2}, {3, 2}), (std::vector<double>{0, 2, 4, 20, 22, 24, 40, 42, 44}));
}

// ---------------------------------------------------------------------------
// Otsu

TEST(Otsu, TwoGroupsSeparateCleanly) {
    const std::vector<double> v{0, 0, 0, 10, 10, 10};
    const auto t = otsu_threshold(v).threshold;
    EXPECT_GE(t, 0.0);
    EXPECT_LT(t, 10.0);
    EXPECT_EQ(count_above(v, t), 3u);
}

TEST(Otsu, ConstantIsDegenerate) {
    EXPECT_THROW(otsu_threshold(std::vector<double>{5, 5, 5, 5}), DegenerateInput);
    EXPECT_THROW(otsu_threshold(std::vector<double>{}), DegenerateInput);
}

TEST(Otsu, BimodalSetMatchesExhaustiveSearch) {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> v(1000);
        const double a = rng.uniform(0, 5), b = rng.uniform(5, 10);
        for (auto& x : v) x = (rng.uniform() < 0.3 ? a : b) + rng.uniform(-1, 1);
        ASSERT_EQ(otsu_threshold(v).bin, oracle::otsu_bin(v)) << "trial " << trial;
    }
}

TEST(Otsu, TiesGoToLowestBin) {
    // Empty bins between the groups give equal variance; the first wins.
    const std::vector<double> v{0, 0, 1, 1};
    EXPECT_EQ(otsu_threshold(v).bin, 0);
}

// ---------------------------------------------------------------------------
// components

TEST(Components, EmptyMask) { EXPECT_EQ(connected_components(BinaryMask(4, 4)).count(), 0u); }

TEST(Components, TwoSquares) {
    const auto m = mask_from(6, 3, {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {4, 1}, {5, 1}, {4, 2}, {5, 2}});
    const auto cc = connected_components(m);
    ASSERT_EQ(cc.count(), 2u);
    EXPECT_EQ(cc.areas, (std::vector<std::size_t>{4, 4}));
}

TEST(Components, DiagonalPairDependsOnAdjacency) {
    const auto m = mask_from(2, 2, {{0, 0}, {1, 1}});
    EXPECT_EQ(connected_components(m, {Connectivity::Eight}).count(), 1u);
    EXPECT_EQ(connected_components(m, {Connectivity::Four}).count(), 2u);
}

TEST(Components, AreasSumToPopcount) {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        BinaryMask m(16, 12);
        for (std::size_t i = 0; i < m.size(); ++i) m.set(i, rng.uniform() < 0.4);
        for (auto adj : {Connectivity::Four, Connectivity::Eight}) {
            const auto cc = connected_components(m, {adj});
            std::size_t sum = 0;
            for (auto a : cc.areas) sum += a;
            ASSERT_EQ(sum, m.count());
        }
    }
}

TEST(AreaFilter, InclusiveBounds) {
    BinaryMask m(100, 30);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 100; ++x) m.set(x, y, true);  // 1000
    for (int y = 15; y < 25; ++y)
        for (int x = 0; x < 100; ++x) m.set(x, y, !(x == 99 && y == 24));  // 999
    const auto f = area_filter(m, 1000, 9000);
    EXPECT_EQ(f.count(), 1000u);
    EXPECT_TRUE(f.get(0, 0));
    EXPECT_FALSE(f.get(0, 15));
    EXPECT_EQ(area_filter(f, 1000, 9000), f);
}

TEST(FrameRemoval, EdgeComponentsGoInteriorStays) {
    const auto m = mask_from(7, 7, {{0, 3}, {1, 3}, {3, 3}, {3, 4}});
    const auto f = remove_frame_components(m);
    EXPECT_FALSE(f.get(0, 3));
    EXPECT_FALSE(f.get(1, 3));
    EXPECT_TRUE(f.get(3, 3));
    EXPECT_TRUE(f.get(3, 4));

    BinaryMask full(5, 5);
    for (std::size_t i = 0; i < full.size(); ++i) full.set(i, true);
    EXPECT_EQ(remove_frame_components(full).count(), 0u);
}

// ---------------------------------------------------------------------------
// morphology

namespace {

BinaryMask naive_morph(const BinaryMask& m, bool erode_op, int r) {
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) {
            bool all = true, any = false;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    if (dx * dx + dy * dy > r * r) continue;
                    const int qx = x + dx, qy = y + dy;
                    if (qx < 0 || qy < 0 || qx >= m.width() || qy >= m.height()) continue;
                    all = all && m.get(qx, qy);
                    any = any || m.get(qx, qy);
                }
            out.set(x, y, erode_op ? all : any);
        }
    return out;
}

}  // namespace

TEST(Morphology, ErodeSquareToCenter) {
    const auto m = mask_from(5, 5, {{1, 1}, {2, 1}, {3, 1}, {1, 2}, {2, 2}, {3, 2}, {1, 3}, {2, 3}, {3, 3}});
    EXPECT_EQ(erode(m, 1), mask_from(5, 5, {{2, 2}}));
}

TEST(Morphology, DilatePixelToDisc) {
    EXPECT_EQ(dilate(mask_from(5, 5, {{2, 2}}), 1), mask_from(5, 5, {{2, 2}, {1, 2}, {3, 2}, {2, 1}, {2, 3}}));
}

TEST(Morphology, MatchesNaiveDiscAndOpeningIsIdempotent) {
    Rng rng(31);
    for (int trial = 0; trial < 30; ++trial) {
        BinaryMask m(20, 17);
        for (std::size_t i = 0; i < m.size(); ++i) m.set(i, rng.uniform() < 0.6);
        const int r = 1 + static_cast<int>(rng.below(3));
        ASSERT_EQ(erode(m, r), naive_morph(m, true, r));
        ASSERT_EQ(dilate(m, r), naive_morph(m, false, r));
        const auto open1 = dilate(erode(m, r), r);
        EXPECT_EQ(dilate(erode(open1, r), r), open1);
        // Dilating the erosion covers the erosion.
        EXPECT_EQ(mask_and(open1, erode(m, r)), erode(m, r));
    }
}

// ---------------------------------------------------------------------------
// resampling

TEST(Upsample, ConstantStaysConstant) {
    MultiChannelImage s(3, 2, 1, 0.7);
    const auto u = bilinear_upsample(s, 11, 9);
    for (double v : u.data()) EXPECT_DOUBLE_EQ(v, 0.7);
}

TEST(Upsample, RampAndIdentity) {
    MultiChannelImage s(2, 1, 1);
    s.data() = {0.0, 1.0};
    const auto u = bilinear_upsample(s, 4, 1);
    for (int x = 1; x < 4; ++x) EXPECT_GT(u.at(x, 0), u.at(x - 1, 0));
    EXPECT_EQ(u.at(0, 0), 0.0);
    EXPECT_EQ(u.at(3, 0), 1.0);
    EXPECT_EQ(bilinear_upsample(s, 2, 1), s);
    EXPECT_THROW(bilinear_upsample(s, 1, 1), Error);
}

TEST(Upsample, StaysWithinSourceRange) {
    Rng rng(2);
    const auto s = oracle::random_image(rng, 5, 4, 1, -3, 3);
    const auto [lo, hi] = std::minmax_element(s.data().begin(), s.data().end());
    const auto u = bilinear_upsample(s, 23, 17);
    for (double v : u.data()) {
        ASSERT_GE(v, *lo - 1e-12);
        ASSERT_LE(v, *hi + 1e-12);
    }
}

// ---------------------------------------------------------------------------
// RNG

TEST(Rng, StreamsAreReproducibleAndDistinct) {
    Rng a(9), b(9), c(derive_seed(9, 1));
    for (int i = 0; i < 10; ++i) EXPECT_EQ(a.uniform(), b.uniform());
    EXPECT_NE(Rng(9).uniform(), c.uniform());
    for (int i = 0; i < 1000; ++i) EXPECT_LT(a.below(7), 7u);
}
