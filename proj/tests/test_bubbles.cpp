#include "uwstereo/bubbles.hpp"
#include "uwstereo/io.hpp"
#include "uwstereo/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

using namespace uwstereo;
using namespace uwstereo::bubbles;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / "uwstereo_bubble_tests" / name;
    fs::remove_all(p);
    return p;
}

StereoFrame gray_frame(int w, int h, float v) {
    StereoFrame f;
    f.id = "gray";
    f.left = Image(w, h, 1, v);
    f.right = Image(w, h, 1, v);
    f.gt_left = DisparityMap(w, h, 5.0f);
    return f;
}

Condition near_much_large() { return Condition::parse("near_much_large"); }

}  // namespace

TEST(Synth, FrontoParallelPlaneCorrespondencesAreExact) {
    auto r = synth::render_scene(synth::fronto_parallel_plane(64, 32, 6, 3));
    const auto& f = r.frame;
    for (int y = 0; y < 32; ++y)
        for (int x = 6; x < 64; ++x) {
            ASSERT_EQ(f.gt_left->at(x, y), 6.0f);
            EXPECT_EQ(f.left.at(x, y), f.right.at(x - 6, y));
            EXPECT_EQ(r.left_plain.at(x, y), r.right_plain.at(x - 6, y));
        }
    EXPECT_EQ(f.left_mask->count(), 64u * 32u);
}

TEST(Synth, TwoPlaneRightViewSeesForeground) {
    auto r = synth::render_scene(synth::two_plane_scene(80, 8, 4, 12, 30, 50, 5));
    const auto& f = r.frame;
    for (int xr = 0; xr < 80; ++xr) {
        const bool fg = xr + 12 >= 30 && xr + 12 < 50;
        EXPECT_EQ(f.gt_right->at(xr, 3), fg ? 12.0f : 4.0f) << xr;
    }
}

TEST(Synth, RandomSceneStaysInDisparityRange) {
    for (std::uint64_t seed = 1; seed < 6; ++seed) {
        auto r = synth::render_scene(synth::random_scene(96, 64, 2, 20, seed));
        for (float d : r.frame.gt_left->data) {
            ASSERT_TRUE(valid_disparity(d));
            EXPECT_GE(d, 2.0f - 1e-4f);
            EXPECT_LE(d, 20.0f + 1e-4f);
        }
    }
}

TEST(Condition, GridHasEightBubbleCasesPlusClean) {
    auto g = Condition::grid();
    ASSERT_EQ(g.size(), 9u);
    EXPECT_EQ(std::count_if(g.begin(), g.end(), [](const Condition& c) { return c.clean; }), 1);
    std::set<std::string> names;
    for (const auto& c : g) {
        names.insert(c.name());
        EXPECT_EQ(Condition::parse(c.name()), c);
    }
    EXPECT_EQ(names.size(), 9u);
    EXPECT_THROW(Condition::parse("deep_sea"), std::invalid_argument);
}

TEST(SampleField, CleanConditionIsEmpty) {
    EXPECT_TRUE(sample_field(Condition{}, 1024, 768, 3, {}, 20).bubbles.empty());
}

TEST(SampleField, SameSeedSameField) {
    auto a = sample_field(near_much_large(), 640, 480, 42, {}, 20);
    auto b = sample_field(near_much_large(), 640, 480, 42, {}, 20);
    ASSERT_EQ(a.bubbles.size(), b.bubbles.size());
    for (std::size_t i = 0; i < a.bubbles.size(); ++i) {
        EXPECT_EQ(a.bubbles[i].x, b.bubbles[i].x);
        EXPECT_EQ(a.bubbles[i].radius, b.bubbles[i].radius);
    }
}

TEST(SampleField, MeanCountMatchesPoissonExpectation) {
    ClassParams p;
    p.much_rate = 50;
    const double expected = 50 * 1024 * 768 / 1e6;  // 39.32
    double sum = 0;
    for (std::uint64_t s = 0; s < 1000; ++s) sum += sample_field(near_much_large(), 1024, 768, s, p, 10).bubbles.size();
    const double mean = sum / 1000;
    EXPECT_NEAR(expected, 39.3, 0.05);
    EXPECT_LT(std::abs(mean - expected), 3 * std::sqrt(expected / 1000));
}

TEST(SampleFieldProperty, BubblesRespectBoundsOpacityAndClasses) {
    ClassParams p;
    for (const auto& c : Condition::grid()) {
        if (c.clean) continue;
        for (std::uint64_t s = 0; s < 20; ++s) {
            auto f = sample_field(c, 320, 240, s, p, 30);
            for (const auto& b : f.bubbles) {
                EXPECT_GE(b.x, -b.radius);
                EXPECT_LE(b.x, 320 + b.radius);
                EXPECT_GE(b.y, -b.radius);
                EXPECT_LE(b.y, 240 + b.radius);
                EXPECT_GT(b.opacity, 0.0);
                EXPECT_LE(b.opacity, 1.0);
                if (c.size == SizeClass::Small) EXPECT_LE(b.radius, p.small_max);
                if (c.size == SizeClass::Large) EXPECT_GE(b.radius, p.large_min);
                if (c.position == PositionClass::Near) EXPECT_GT(b.parallax, 30.0);
                if (c.position == PositionClass::Far) EXPECT_LE(b.parallax, p.far_parallax_max);
            }
        }
    }
}

TEST(SampleFieldProperty, MuchDensityYieldsMoreBubblesOnAverage) {
    double little = 0, much = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
        little += sample_field(Condition::parse("far_little_small"), 512, 384, s, {}, 10).bubbles.size();
        much += sample_field(Condition::parse("far_much_small"), 512, 384, s, {}, 10).bubbles.size();
    }
    EXPECT_GE(much, little);
}

TEST(RenderBubbles, EmptyFieldIsIdentity) {
    auto f = gray_frame(32, 24, 0.4f);
    BubbleField field;
    auto s = render_bubbles(f, field, {});
    EXPECT_EQ(s.degraded.left, f.left);
    EXPECT_EQ(s.degraded.right, f.right);
    EXPECT_EQ(s.left_bubbles.count(), 0u);
}

TEST(RenderBubbles, OpaqueBubbleCentreIsHighlight) {
    auto f = gray_frame(64, 64, 0.3f);
    BubbleField field;
    field.condition = near_much_large();
    field.bubbles.push_back({32, 32, 10, 1.0, 0, 0, 0, 0});
    ClassParams p;
    p.highlight = 0.9;
    auto s = render_bubbles(f, field, p);
    EXPECT_EQ(s.degraded.left.at(32, 32), 0.9f);
}

TEST(RenderBubbles, HalfOpacityOverGray100) {
    auto f = gray_frame(64, 64, 100.0f / 255.0f);
    BubbleField field;
    field.condition = near_much_large();
    field.bubbles.push_back({32, 32, 10, 0.5, 0, 0, 0, 0});
    auto s = render_bubbles(f, field, {});
    const int v = io::to_u8(s.degraded.left.at(32, 32));
    EXPECT_NEAR(v, 177, 1);  // 0.5 * 255 + 0.5 * 100 = 177.5
}

TEST(RenderBubblesProperty, UnmaskedPixelsUntouchedAndGtPreserved) {
    auto scene = synth::render_scene(synth::random_scene(160, 120, 4, 24, 9));
    for (const auto& c : Condition::grid()) {
        auto field = sample_field(c, 160, 120, 77, {}, scene.max_disparity);
        auto s = render_bubbles(scene.frame, field, {});
        for (int view = 0; view < 2; ++view) {
            const Image& a = view ? scene.frame.right : scene.frame.left;
            const Image& b = view ? s.degraded.right : s.degraded.left;
            const Mask& m = view ? s.right_bubbles : s.left_bubbles;
            for (std::size_t i = 0; i < a.data.size(); ++i)
                if (!m.data[i]) ASSERT_EQ(a.data[i], b.data[i]) << c.name();
        }
        EXPECT_EQ(s.degraded.gt_left->data, scene.frame.gt_left->data);
        EXPECT_EQ(s.degraded.gt_right->data, scene.frame.gt_right->data);
        EXPECT_EQ(s.degraded.left_mask, scene.frame.left_mask);
        if (c.clean) EXPECT_EQ(s.left_bubbles.count(), 0u);
    }
}

TEST(RenderBubbles, NearBubbleShiftsMoreThanSceneDisparity) {
    auto f = gray_frame(200, 40, 0.2f);
    BubbleField field;
    field.condition = near_much_large();
    field.bubbles.push_back({150, 20, 6, 1.0, 0, 0, 60, 0});
    auto s = render_bubbles(f, field, {});
    EXPECT_TRUE(s.left_bubbles.at(150, 20));
    EXPECT_TRUE(s.right_bubbles.at(90, 20));
    EXPECT_FALSE(s.right_bubbles.at(150, 20));
}

TEST(FluctuationWarp, ZeroAmplitudeIsIdentity) {
    auto scene = synth::render_scene(synth::fronto_parallel_plane(48, 32, 3, 1));
    EXPECT_EQ(fluctuation_warp(scene.frame.left, 0.0, 32, 5), scene.frame.left);
}

TEST(FluctuationWarp, ConstantImageStaysConstant) {
    Image img(40, 30, 1, 0.37f);
    EXPECT_EQ(fluctuation_warp(img, 3.0, 16, 5), img);
}

TEST(FluctuationWarpProperty, DisplacementBoundedByAmplitude) {
    for (double amp : {0.5, 1.0, 4.0})
        for (std::uint64_t s = 0; s < 4; ++s) {
            auto d = fluctuation_field(128, 96, amp, 32, s);
            EXPECT_LE(d.max_magnitude(), amp + 1e-6);
            EXPECT_GT(d.max_magnitude(), 0.3 * amp);
        }
    EXPECT_THROW(fluctuation_warp(Image(4, 4), -1.0, 16, 1), std::invalid_argument);
}

TEST(RenderBubbles, WarpOnlyOnBubbleConditions) {
    auto scene = synth::render_scene(synth::random_scene(64, 48, 2, 10, 3));
    ClassParams p;
    p.warp_amplitude = 1.5;
    auto clean = render_bubbles(scene.frame, sample_field(Condition{}, 64, 48, 1, p, 10), p);
    EXPECT_FALSE(clean.warped);
    EXPECT_EQ(clean.degraded.left, scene.frame.left);
    auto bub = render_bubbles(scene.frame, sample_field(near_much_large(), 64, 48, 1, p, 10), p);
    EXPECT_TRUE(bub.warped);
    EXPECT_EQ(bub.degraded.gt_left->data, scene.frame.gt_left->data);
}

TEST(TransferDataset, OneFrameNineConditions) {
    auto scene = synth::render_scene(synth::random_scene(48, 32, 2, 10, 1));
    scene.frame.id = "f0";
    const auto dir = scratch("one");
    auto m = build_transfer_dataset({scene.frame}, Condition::grid(), 5, {}, dir);
    ASSERT_EQ(m.entries.size(), 9u);
    EXPECT_EQ(std::count_if(m.entries.begin(), m.entries.end(), [](const auto& e) { return e.condition == "clean"; }), 1);
    for (const auto& e : m.entries) {
        for (const char* f : {"im0.png", "im1.png", "disp0.pfm", "mask0.png", "bubble0.png", "meta.json"})
            EXPECT_TRUE(fs::exists(dir / e.dir / f)) << e.dir << "/" << f;
        auto gt = io::read_pfm(dir / e.dir / "disp0.pfm");
        EXPECT_EQ(gt.data, scene.frame.gt_left->data);
    }
    EXPECT_TRUE(fs::exists(dir / "manifest.json"));
}

TEST(TransferDataset, EmptyBaseGivesEmptyManifest) {
    EXPECT_TRUE(build_transfer_dataset({}, Condition::grid(), 1, {}, scratch("empty")).entries.empty());
}

TEST(TransferDataset, FramesWithoutGtAreSkipped) {
    StereoFrame f;
    f.id = "nogt";
    f.left = Image(8, 8);
    f.right = Image(8, 8);
    EXPECT_TRUE(build_transfer_dataset({f}, Condition::grid(), 1, {}, scratch("nogt")).entries.empty());
}

TEST(TransferDataset, HundredTwoFramesGive918Samples) {
    std::vector<StereoFrame> base;
    for (int i = 0; i < 102; ++i) {
        auto f = gray_frame(8, 8, 0.5f);
        f.id = "frame" + std::to_string(i);
        base.push_back(f);
    }
    EXPECT_EQ(build_transfer_dataset(base, Condition::grid(), 1, {}, scratch("full")).entries.size(), 918u);
}
