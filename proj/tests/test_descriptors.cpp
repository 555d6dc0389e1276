#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "egoadl/descriptors.hpp"
#include "oracles.hpp"
#include "testing.hpp"

using namespace egoadl;
using namespace egoadl::testing;

TEST(Htpe, BinEdgesFollowTheCalibration) {
    const double sh = desc::htpe_step(640, 5);
    EXPECT_DOUBLE_EQ(sh, std::log(640.0 * 640.0) / 4);
    EXPECT_EQ(desc::htpe_bin(0.0, sh, 5), 1);
    EXPECT_EQ(desc::htpe_bin(640.0, sh, 5), 5);
    EXPECT_EQ(desc::htpe_bin(-640.0, sh, 5), 5);
    EXPECT_EQ(desc::htpe_bin(1e6, sh, 5), 5);
    // a = 3: ln 9 = 2.197 < s_h = 3.232 -> first bin; a = 30: ln 900 = 6.80 -> [2 s_h, 3 s_h) -> bin 3.
    EXPECT_EQ(desc::htpe_bin(3.0, sh, 5), 1);
    EXPECT_EQ(desc::htpe_bin(30.0, sh, 5), 3);
}

TEST(Htpe, BinMatchesClosedForm) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> loga(-8, 8);
    for (int bins : {2, 3, 5, 9}) {
        const double sh = desc::htpe_step(480, bins);
        for (int i = 0; i < 2000; ++i) {
            const double a = std::exp(loga(rng)) * (i % 2 ? 1 : -1);
            const double e = std::log(a * a + 1e-12);
            const int expected = e < sh ? 1 : std::min(bins, 1 + static_cast<int>(std::floor(e / sh)));
            ASSERT_EQ(desc::htpe_bin(a, sh, bins), expected) << a;
        }
    }
}

TEST(Htpe, SegmentExamples) {
    std::vector<AffineMotionModel> zeros(4);
    auto h = desc::htpe_segment(zeros, 640, 480);
    EXPECT_EQ(h.bins_x, (std::vector<double>{1, 0, 0, 0, 0}));
    EXPECT_EQ(h.bins_y, (std::vector<double>{1, 0, 0, 0, 0}));

    std::vector<AffineMotionModel> half(4);
    half[1].a[0] = 640;
    half[3].a[0] = 640;
    h = desc::htpe_segment(half, 640, 480);
    EXPECT_EQ(h.bins_x, (std::vector<double>{0.5, 0, 0, 0, 0.5}));

    // a4 is binned against the height: 480 px lands in the last bin only for y.
    std::vector<AffineMotionModel> vert(1);
    vert[0].a[3] = 480;
    EXPECT_EQ(desc::htpe_segment(vert, 640, 480).bins_y.back(), 1.0);
    EXPECT_THROW(desc::htpe_segment({}, 640, 480), ValidationError);
}

TEST(Htpe, SegmentMatchesPerFrameLoopAndSumsToOne) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> loga(-6, 7);
    std::uniform_int_distribution<int> len(1, 60);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<AffineMotionModel> ms(static_cast<std::size_t>(len(rng)));
        for (auto& m : ms) {
            m.a[0] = std::exp(loga(rng));
            m.a[3] = -std::exp(loga(rng));
        }
        const auto h = desc::htpe_segment(ms, 640, 480);
        std::vector<double> x(5, 0.0), y(5, 0.0);
        const double sx = std::log(640.0 * 640.0) / 4, sy = std::log(480.0 * 480.0) / 4;
        for (const auto& m : ms) {
            auto bin = [](double a, double s) {
                const double e = std::log(a * a + 1e-12);
                return e < s ? 0 : std::min(4, static_cast<int>(std::floor(e / s)));
            };
            x[static_cast<std::size_t>(bin(m.a[0], sx))] += 1.0 / static_cast<double>(ms.size());
            y[static_cast<std::size_t>(bin(m.a[3], sy))] += 1.0 / static_cast<double>(ms.size());
        }
        for (int i = 0; i < 5; ++i) {
            EXPECT_NEAR(h.bins_x[static_cast<std::size_t>(i)], x[static_cast<std::size_t>(i)], 1e-12);
            EXPECT_NEAR(h.bins_y[static_cast<std::size_t>(i)], y[static_cast<std::size_t>(i)], 1e-12);
        }
        EXPECT_NEAR(std::accumulate(h.bins_x.begin(), h.bins_x.end(), 0.0), 1.0, 1e-12);
        EXPECT_NEAR(std::accumulate(h.bins_y.begin(), h.bins_y.end(), 0.0), 1.0, 1e-12);
    }
}

TEST(Htpe, SegmentModelsTreatFirstFrameAsStatic) {
    std::vector<AffineMotionModel> tr(5);
    for (std::size_t k = 0; k < tr.size(); ++k) tr[k].a[0] = double(k + 1);
    const auto ms = desc::segment_models(tr, Segment::make(0, 2));
    ASSERT_EQ(ms.size(), 3u);
    EXPECT_EQ(ms[0].a1(), 0.0);
    EXPECT_EQ(ms[1].a1(), 1.0);
    EXPECT_EQ(ms[2].a1(), 2.0);
    EXPECT_EQ(desc::segment_models(tr, Segment::make(4, 5)).back().a1(), 5.0);
    EXPECT_THROW(desc::segment_models(tr, Segment::make(4, 6)), ValidationError);
}

TEST(CutHistogram, Examples) {
    const std::vector<long long> none;
    EXPECT_EQ(desc::cut_histogram(none, 50), std::vector<double>(8, 0.0));
    const std::vector<long long> three_ago{47};
    EXPECT_EQ(desc::cut_histogram(three_ago, 50), (std::vector<double>{0, 1, 1, 1, 1, 1, 1, 1}));
    const std::vector<long long> now{50};
    EXPECT_EQ(desc::cut_histogram(now, 50), std::vector<double>(8, 1.0));
    const std::vector<long long> old{50 - 256};
    EXPECT_EQ(desc::cut_histogram(old, 50), std::vector<double>(8, 0.0));  // outside the longest window
}

TEST(CutHistogram, MatchesWindowCountAndIsNondecreasing) {
    std::mt19937_64 rng(3);
    std::bernoulli_distribution cut(0.05);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<long long> cuts;
        for (long long f = 1; f < 600; ++f)
            if (cut(rng)) cuts.push_back(f);
        for (long long frame : {0LL, 5LL, 100LL, 333LL, 599LL}) {
            const auto h = desc::cut_histogram(cuts, frame);
            EXPECT_EQ(h, cut_oracle(cuts, frame, 8));
            for (std::size_t i = 1; i < h.size(); ++i) EXPECT_LE(h[i - 1], h[i]);
        }
        const Segment s = Segment::make(200, 260);
        const auto avg = desc::cut_histogram_segment(cuts, s);
        std::vector<double> naive(8, 0.0);
        for (long long f = s.start_frame; f <= s.end_frame; ++f) {
            const auto h = cut_oracle(cuts, f, 8);
            for (std::size_t i = 0; i < 8; ++i) naive[i] += h[i] / static_cast<double>(s.length());
        }
        for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(avg[i], naive[i], 1e-12);
        for (std::size_t i = 1; i < 8; ++i) EXPECT_LE(avg[i - 1], avg[i]);
    }
}

TEST(CutHistogram, SegmentEdgeCases) {
    const std::vector<long long> none;
    EXPECT_EQ(desc::cut_histogram_segment(none, Segment::make(0, 99)), std::vector<double>(8, 0.0));
    const std::vector<long long> cuts{10, 40};
    EXPECT_EQ(desc::cut_histogram_segment(cuts, Segment::make(41, 41)), desc::cut_histogram(cuts, 41));
}

TEST(Cld, ZigzagPrefixIsJpegOrder) {
    const int want[10][2] = {{0, 0}, {0, 1}, {1, 0}, {2, 0}, {1, 1}, {0, 2}, {0, 3}, {1, 2}, {2, 1}, {3, 0}};
    for (int i = 0; i < 10; ++i) {
        EXPECT_EQ(desc::kZigzag[static_cast<std::size_t>(i)][0], want[i][0]);
        EXPECT_EQ(desc::kZigzag[static_cast<std::size_t>(i)][1], want[i][1]);
    }
    EXPECT_EQ(desc::kZigzag[63][0], 7);
    EXPECT_EQ(desc::kZigzag[63][1], 7);
}

TEST(Cld, ConstantImageHasOnlyDc) {
    Raster gray(64, 48, 1, 128);
    const auto d = desc::cld(gray);
    EXPECT_NEAR(d.y_coeffs[0], 128.0 * 8, 1e-9);  // orthonormal DC = 8 * mean
    for (int i = 1; i < 6; ++i) EXPECT_NEAR(d.y_coeffs[static_cast<std::size_t>(i)], 0.0, 1e-9);
    for (int i = 1; i < 3; ++i) {
        EXPECT_NEAR(d.cb_coeffs[static_cast<std::size_t>(i)], 0.0, 1e-9);
        EXPECT_NEAR(d.cr_coeffs[static_cast<std::size_t>(i)], 0.0, 1e-9);
    }
}

TEST(Cld, HorizontalStepHasNoVerticalFrequencies) {
    Raster img(64, 64, 3);
    for (int y = 0; y < 64; ++y)
        for (int x = 32; x < 64; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = 255;
    const auto d = desc::cld(img);
    EXPECT_GT(std::abs(d.y_coeffs[1]), 1.0);     // (0,1): first horizontal frequency
    EXPECT_NEAR(d.y_coeffs[2], 0.0, 1e-9);       // (1,0)
    EXPECT_NEAR(d.y_coeffs[3], 0.0, 1e-9);       // (2,0)
    EXPECT_NEAR(d.y_coeffs[4], 0.0, 1e-9);       // (1,1)
}

TEST(Cld, MatchesDirectDctOracle) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const int w = 8 + static_cast<int>(seed * 7 % 90), h = 8 + static_cast<int>(seed * 13 % 70);
        const Raster img = egoadl::testing::textured(w, h, seed, seed % 3 == 0 ? 1 : 3);
        const auto got = desc::cld(img).values();
        const auto want = cld_oracle(img);
        ASSERT_EQ(got.size(), 12u);
        for (std::size_t i = 0; i < 12; ++i) EXPECT_NEAR(got[i], want[i], 1e-9) << "seed " << seed << " coeff " << i;
    }
}

TEST(Cld, RejectsTinyImages) { EXPECT_THROW(desc::cld(Raster(7, 20, 1)), ValidationError); }

TEST(Fuse, DimensionsAndLayout) {
    DescriptorBlocks b{std::vector<double>(5, 0.1), std::vector<double>(5, 0.2), std::vector<double>(8, 0.3),
                       std::vector<double>(12, 0.4), std::vector<double>(5, 0.5)};
    EXPECT_EQ(desc::fuse(b, BlockSelection::all()).values.size(), 35u);
    EXPECT_EQ(desc::fuse(b, BlockSelection::dynamic()).values.size(), 18u);
    EXPECT_EQ(desc::fuse(b, BlockSelection::parse("htpe,audio")).values.size(), 15u);
    EXPECT_EQ(desc::fuse(b, BlockSelection::parse("audio")).values.size(), 5u);

    for (const auto* spec : {"all", "dynamic", "cld", "hc,audio", "htpe,cld"}) {
        const auto o = desc::fuse(b, BlockSelection::parse(spec));
        std::size_t expected_offset = 0;
        for (const auto& e : o.layout) {
            EXPECT_EQ(e.offset, expected_offset);
            expected_offset += e.size;
        }
        EXPECT_EQ(expected_offset, o.values.size());
    }
    const auto o = desc::fuse(b, BlockSelection::all());
    EXPECT_EQ(o.layout[3].name, "cld");
    EXPECT_EQ(o.values[o.layout[3].offset], 0.4);
}

TEST(Fuse, MissingOrNonFiniteBlockRaises) {
    DescriptorBlocks b{std::vector<double>(5, 0.1), std::vector<double>(5, 0.2), std::vector<double>(8, 0.3), {}, {}};
    EXPECT_NO_THROW(desc::fuse(b, BlockSelection::dynamic()));
    EXPECT_THROW(desc::fuse(b, BlockSelection::all()), ValidationError);
    b.hc[2] = std::nan("");
    EXPECT_THROW(desc::fuse(b, BlockSelection::dynamic()), NumericError);
}

TEST(BlockSelection, ParseAndName) {
    EXPECT_EQ(BlockSelection::parse("all"), BlockSelection::all());
    EXPECT_EQ(BlockSelection::parse("dynamic"), BlockSelection::dynamic());
    EXPECT_EQ(BlockSelection::parse("hc, htpe"), BlockSelection::dynamic());
    EXPECT_EQ(BlockSelection::all().name(), "htpe+hc+cld+audio");
    for (const auto& b : {BlockSelection::all(), BlockSelection::dynamic(), BlockSelection::parse("cld,audio")})
        EXPECT_EQ(BlockSelection::parse(b.name()), b);
    EXPECT_THROW(BlockSelection::parse("colour"), ValidationError);
    EXPECT_THROW(BlockSelection::parse(""), ValidationError);
}

TEST(FeaturesFile, RoundTripIsExact) {
    egoadl::testing::TempDir dir("features");
    std::vector<desc::SegmentFeatures> feats(2);
    feats[0] = {"v1", Segment::make(0, 9), {{0.1, 1.0 / 3}, {0.2}, {}, {1e-300, -2.5}, {}}};
    feats[1] = {"v1", Segment::make(10, 30), {{0.3}, {0.4}, {7}, {}, {0.5, 0.25}}};
    desc::save_features(dir / "f.jsonl", feats);
    const auto back = desc::load_features(dir / "f.jsonl");
    ASSERT_EQ(back.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back[i].video, feats[i].video);
        EXPECT_EQ(back[i].segment, feats[i].segment);
        EXPECT_EQ(back[i].blocks.htpe_x, feats[i].blocks.htpe_x);
        EXPECT_EQ(back[i].blocks.cld, feats[i].blocks.cld);
        EXPECT_EQ(back[i].blocks.audio, feats[i].blocks.audio);
    }
    egoadl::testing::write_text(dir / "bad.jsonl", "{\"video\": \"v\"}\n");
    EXPECT_THROW(desc::load_features(dir / "bad.jsonl"), ParseError);
}

TEST(Normalizer, StandardizesAndHandlesConstantDimensions) {
    const std::vector<std::vector<double>> obs{{1, 5, 2}, {3, 5, 4}, {5, 5, 9}};
    const auto n = desc::Normalizer::fit(obs);
    EXPECT_DOUBLE_EQ(n.mean[0], 3);
    EXPECT_DOUBLE_EQ(n.stddev[0], std::sqrt(8.0 / 3));
    EXPECT_DOUBLE_EQ(n.stddev[1], 1.0);
    const auto z = n.apply(obs[2]);
    EXPECT_DOUBLE_EQ(z[1], 0.0);
    double sum = 0;
    for (const auto& o : obs) sum += n.apply(o)[2];
    EXPECT_NEAR(sum, 0.0, 1e-12);
    EXPECT_THROW(desc::Normalizer::fit({}), InsufficientDataError);
    EXPECT_THROW(n.apply(std::vector<double>{1, 2}), ValidationError);
}
