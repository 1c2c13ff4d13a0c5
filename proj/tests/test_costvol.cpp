#include "sgm_oracle.hpp"

#include "uwstereo/costvol.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace uwstereo;
using namespace uwstereo::stereo;

namespace {

DescriptorMap random_descriptors(int w, int h, int f, std::mt19937_64& rng) {
    DescriptorMap m{w, h, f, std::vector<float>(static_cast<std::size_t>(w) * h * f), {}};
    std::normal_distribution<float> n(0.0f, 1.0f);
    for (auto& v : m.data) v = n(rng);
    normalize_descriptors(m);
    return m;
}

// Costs on a 1/8 grid so float sums are exact.
CostVolume random_volume(int w, int h, int nd, std::mt19937_64& rng, double invalid_fraction = 0.0) {
    CostVolume v(w, h, 0, nd - 1);
    std::uniform_int_distribution<int> q(0, 16);
    std::bernoulli_distribution drop(invalid_fraction);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int keep = std::uniform_int_distribution<int>(0, nd - 1)(rng);
            for (int d = 0; d < nd; ++d) v.at(x, y, d) = (d != keep && drop(rng)) ? kInvalidCost : q(rng) / 8.0f;
        }
    return v;
}

void expect_matches_oracle(const CostVolume& got, const std::vector<double>& want) {
    ASSERT_EQ(got.cost.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
        if (std::isinf(want[i]))
            EXPECT_FALSE(valid_cost(got.cost[i])) << "cell " << i;
        else
            EXPECT_EQ(static_cast<double>(got.cost[i]), want[i]) << "cell " << i;
    }
}

}  // namespace

TEST(CostVolume, SelfMatchPicksZeroDisparity) {
    std::mt19937_64 rng(1);
    auto l = random_descriptors(40, 6, 16, rng);
    auto vol = build_cost_volume(l, l, nullptr, nullptr, 0, 9);
    auto d = winner_take_all(vol);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 40; ++x) EXPECT_EQ(d.at(x, y), 0.0f);
}

TEST(CostVolume, ShiftedTextureRecoversShift) {
    std::mt19937_64 rng(2);
    auto l = random_descriptors(96, 20, 24, rng);
    // Left pixel x matches right pixel x - 7.
    DescriptorMap right = random_descriptors(96, 20, 24, rng);
    for (int y = 0; y < 20; ++y)
        for (int x = 7; x < 96; ++x)
            std::copy(l.at(x, y), l.at(x, y) + 24,
                      right.data.begin() + static_cast<long>((static_cast<std::size_t>(y) * 96 + x - 7) * 24));
    auto d = winner_take_all(build_cost_volume(l, right, nullptr, nullptr, 0, 15));
    std::size_t good = 0, total = 0;
    for (int y = 0; y < 20; ++y)
        for (int x = 16; x < 96; ++x, ++total) good += d.at(x, y) == 7.0f;
    EXPECT_GT(static_cast<double>(good) / total, 0.99);
}

TEST(CostVolume, CostIsOneMinusCosineAndRespectsMasks) {
    std::mt19937_64 rng(3);
    auto l = random_descriptors(12, 3, 5, rng);
    auto r = random_descriptors(12, 3, 5, rng);
    Mask lm(12, 3, 1), rm(12, 3, 1);
    lm.at(4, 1) = 0;
    rm.at(2, 2) = 0;
    auto vol = build_cost_volume(l, r, &lm, &rm, 1, 4);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 12; ++x)
            for (int d = 1; d <= 4; ++d) {
                const int xr = x - d;
                const bool ok = lm.at(x, y) && xr >= 0 && rm.at(xr, y);
                ASSERT_EQ(vol.valid(x, y, d), ok) << x << "," << y << "," << d;
                if (!ok) continue;
                double dot = 0;
                for (int k = 0; k < 5; ++k) dot += l.at(x, y)[k] * r.at(xr, y)[k];
                EXPECT_NEAR(vol.at(x, y, d), 1.0 - dot, 1e-6);
            }
}

TEST(CostVolume, EmptyMaskInvalidatesEverything) {
    std::mt19937_64 rng(4);
    auto l = random_descriptors(20, 5, 8, rng);
    Mask none(20, 5, 0);
    auto vol = build_cost_volume(l, l, &none, nullptr, 0, 7);
    EXPECT_EQ(vol.valid_cells(), 0u);
    EXPECT_EQ(winner_take_all(vol).valid_count(), 0u);
    auto agg = sgm_aggregate(vol, {});
    EXPECT_EQ(winner_take_all(agg).valid_count(), 0u);
}

TEST(CostVolume, ZeroNormDescriptorsAreFlaggedNotFatal) {
    DescriptorMap m{3, 1, 2, {1, 0, 0, 0, 0, 2}, {}};
    EXPECT_EQ(normalize_descriptors(m), 1u);
    EXPECT_EQ(m.degenerate[1], 1);
    CostStats stats;
    auto vol = build_cost_volume(m, m, nullptr, nullptr, 0, 0, &stats);
    EXPECT_EQ(stats.degenerate_pixels, 2u);
    EXPECT_EQ(vol.at(1, 0, 0), 1.0f);  // similarity 0
}

TEST(Sgm, ZeroPenaltiesKeepRawArgmin) {
    std::mt19937_64 rng(5);
    auto vol = random_volume(17, 9, 6, rng, 0.2);
    SgmParams p{0.0f, 0.0f, 8};
    EXPECT_EQ(winner_take_all(sgm_aggregate(vol, p)).data, winner_take_all(vol).data);
}

TEST(Sgm, SinglePathMatchesExhaustiveDpOnFivePixelScanline) {
    std::mt19937_64 rng(6);
    auto vol = random_volume(5, 1, 3, rng);
    const float p1 = 0.25f, p2 = 1.0f;
    auto got = sgm_aggregate(vol, {p1, p2, 1, false});
    expect_matches_oracle(got, oracle::brute_force_path(vol, 1, 0, p1, p2));
}

TEST(Sgm, NormalizationKeepsArgminAndBoundsValues) {
    std::mt19937_64 rng(9);
    auto vol = random_volume(40, 12, 9, rng, 0.1);
    const SgmParams exact{0.125f, 0.625f, 8, false}, norm{0.125f, 0.625f, 8, true};  // dyadic: exact arithmetic
    const auto a = sgm_aggregate(vol, exact), b = sgm_aggregate(vol, norm);
    EXPECT_EQ(winner_take_all(a).data, winner_take_all(b).data);
    for (std::size_t i = 0; i < b.cost.size(); ++i) {
        if (!valid_cost(vol.cost[i])) continue;
        // Each normalized path term lies in [C, C + p2].
        EXPECT_GE(b.cost[i], 8 * vol.cost[i] - 1e-4f);
        EXPECT_LE(b.cost[i], 8 * (vol.cost[i] + norm.p2) + 1e-4f);
    }
}

TEST(Sgm, ConstantVolumeTiesBreakToSmallestDisparity) {
    CostVolume vol(6, 4, 3, 9, 0.5f);
    auto d = winner_take_all(sgm_aggregate(vol, {}));
    for (float v : d.data) EXPECT_EQ(v, 3.0f);
}

TEST(Sgm, RejectsBadPenalties) {
    CostVolume vol(2, 2, 0, 1, 0.0f);
    EXPECT_THROW(sgm_aggregate(vol, {0.5f, 0.1f, 8}), std::invalid_argument);
    EXPECT_THROW(sgm_aggregate(vol, {-0.1f, 0.1f, 8}), std::invalid_argument);
    EXPECT_THROW(sgm_aggregate(vol, {0.1f, 0.2f, 3}), std::invalid_argument);
}

TEST(Sgm, EveryDirectionMatchesEnumerationOn2dVolumes) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 6; ++trial) {
        auto vol = random_volume(4, 3, 3, rng, trial % 2 ? 0.3 : 0.0);
        for (auto [dx, dy] : sgm_directions(8)) {
            auto got = sgm_path(vol, dx, dy, 0.25f, 0.75f);
            expect_matches_oracle(got, oracle::brute_force_path(vol, dx, dy, 0.25, 0.75));
        }
    }
}

TEST(Sgm, PathRestartsAfterFullyInvalidPixel) {
    CostVolume vol(4, 1, 0, 1, 0.0f);
    vol.at(0, 0, 0) = 1.0f;
    vol.at(0, 0, 1) = 0.0f;
    vol.at(1, 0, 0) = kInvalidCost;
    vol.at(1, 0, 1) = kInvalidCost;
    vol.at(2, 0, 0) = 0.5f;
    vol.at(2, 0, 1) = 0.25f;
    auto got = sgm_path(vol, 1, 0, 0.125f, 1.0f);
    EXPECT_EQ(got.at(2, 0, 0), 0.5f);
    EXPECT_EQ(got.at(2, 0, 1), 0.25f);
    expect_matches_oracle(got, oracle::brute_force_path(vol, 1, 0, 0.125, 1.0));
}

TEST(LrCheck, ConsistentMapsKeepEverything) {
    DisparityMap l(10, 2, 3.0f), r(10, 2, 3.0f);
    auto out = lr_check(l, r, 1.0f);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 10; ++x) EXPECT_EQ(valid_disparity(out.at(x, y)), x >= 3);
}

TEST(LrCheck, DisagreementBeyondToleranceInvalidates) {
    DisparityMap l(12, 1, kInvalidDisparity), r(12, 1, kInvalidDisparity);
    l.at(10, 0) = 5.0f;
    r.at(5, 0) = 9.0f;
    EXPECT_FALSE(valid_disparity(lr_check(l, r, 1.0f).at(10, 0)));
    r.at(5, 0) = 6.0f;
    EXPECT_EQ(lr_check(l, r, 1.0f).at(10, 0), 5.0f);
    EXPECT_THROW(lr_check(l, DisparityMap(11, 1), 1.0f), std::invalid_argument);
}

TEST(LrCheck, TwoPlaneOcclusionStripInvalidatedExactly) {
    // Background at disparity 4, foreground block [30, 50) at disparity 12.
    // Left pixels [30 - 8, 30) see background that the foreground hides in the right view.
    const int w = 80, bg = 4, fg = 12, x0 = 30, x1 = 50;
    DisparityMap l(w, 1), r(w, 1);
    for (int x = 0; x < w; ++x) l.at(x, 0) = (x >= x0 && x < x1) ? fg : bg;
    for (int xr = 0; xr < w; ++xr) {
        const bool on_fg = xr + fg >= x0 && xr + fg < x1;
        r.at(xr, 0) = on_fg ? fg : bg;
    }
    auto out = lr_check(l, r, 1.0f);
    for (int x = bg; x < w; ++x) {
        const bool occluded = x >= x0 - (fg - bg) && x < x0;
        EXPECT_EQ(valid_disparity(out.at(x, 0)), !occluded) << x;
    }
}

TEST(Subpixel, ParabolaVertex) {
    CostVolume vol(1, 1, 0, 20, 5.0f);
    DisparityMap d(1, 1, 10.0f);
    vol.at(0, 0, 9) = 2;
    vol.at(0, 0, 10) = 1;
    vol.at(0, 0, 11) = 2;
    EXPECT_EQ(subpixel_refine(vol, d).at(0, 0), 10.0f);
    vol.at(0, 0, 9) = 3;
    EXPECT_NEAR(subpixel_refine(vol, d).at(0, 0), 10.0 + 1.0 / 6.0, 1e-6);
    EXPECT_NEAR(subpixel_refine(vol, d).at(0, 0), 10.167, 5e-4);
}

TEST(Subpixel, BoundaryAndInvalidNeighboursUnrefined) {
    CostVolume vol(3, 1, 0, 4, 1.0f);
    vol.at(1, 0, 3) = kInvalidCost;
    DisparityMap d(3, 1);
    d.at(0, 0) = 0.0f;
    d.at(1, 0) = 2.0f;
    d.at(2, 0) = 4.0f;
    auto out = subpixel_refine(vol, d);
    EXPECT_EQ(out.data, d.data);
}

TEST(Subpixel, OffsetStaysWithinHalfPixelProperty) {
    std::mt19937_64 rng(8);
    auto vol = random_volume(30, 10, 7, rng);
    auto d = winner_take_all(vol);
    auto r = subpixel_refine(vol, d);
    for (std::size_t i = 0; i < d.data.size(); ++i) EXPECT_LE(std::abs(r.data[i] - d.data[i]), 0.5f);
}

class SgmOracleProperty : public ::testing::TestWithParam<int> {};

TEST_P(SgmOracleProperty, ScanlinesMatchExhaustiveDp) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()));
    for (int len = 1; len <= 8; ++len)
        for (int nd = 1; nd <= 4; ++nd) {
            auto vol = random_volume(len, 1, nd, rng);
            const float p1 = std::uniform_int_distribution<int>(0, 4)(rng) / 8.0f;
            const float p2 = p1 + std::uniform_int_distribution<int>(0, 8)(rng) / 8.0f;
            expect_matches_oracle(sgm_aggregate(vol, {p1, p2, 1, false}), oracle::brute_force_path(vol, 1, 0, p1, p2));
            auto fwd = oracle::brute_force_path(vol, 1, 0, p1, p2);
            auto bwd = oracle::brute_force_path(vol, -1, 0, p1, p2);
            std::vector<double> four(fwd.size());
            for (std::size_t i = 0; i < four.size(); ++i) four[i] = fwd[i] + bwd[i] + 2.0 * vol.cost[i];
            expect_matches_oracle(sgm_aggregate(vol, {p1, p2, 4, false}), four);
        }
}

INSTANTIATE_TEST_SUITE_P(Seeds, SgmOracleProperty, ::testing::Range(100, 104));

namespace {

float optimal_scanline_energy(const CostVolume& vol, float p1, float p2) {
    auto l = sgm_path(vol, 1, 0, p1, p2);
    const float* last = l.cost.data() + l.offset(vol.width - 1, 0);
    return *std::min_element(last, last + vol.disparities());
}

}  // namespace

// E*(p2) = A + p2 * n2(p2), where n2 counts jumps larger than one in the optimal
// scanline labeling. Concavity of E* is equivalent to n2 never increasing with p2.
TEST(SgmProperty, LargeJumpCountNeverIncreasesWithP2) {
    std::mt19937_64 rng(9);
    for (int t = 0; t < 300; ++t) {
        auto vol = random_volume(24, 1, 8, rng);
        const float p1 = 0.125f;
        std::vector<float> e;
        for (int k = 1; k <= 24; ++k) e.push_back(optimal_scanline_energy(vol, p1, k * 0.125f));
        for (std::size_t k = 1; k < e.size(); ++k) {
            const float slope = (e[k] - e[k - 1]) / 0.125f;
            EXPECT_GE(slope, 0.0f);
            EXPECT_EQ(slope, std::round(slope));
            if (k + 1 < e.size()) EXPECT_LE(e[k + 1] - e[k], e[k] - e[k - 1]) << "trial " << t << " step " << k;
        }
    }
}

// Total variation of the optimal labeling is not monotone in p2: one jump of 3
// (TV 3) loses to five unit steps (TV 5) once p2 exceeds 0.875.
TEST(SgmProperty, TotalVariationCanGrowWithP2) {
    const std::vector<std::vector<double>> c = {
        {0.25, 0.25, 0.875, 0, 0.625},   {1.875, 1, 0.125, 1.125, 1.25}, {0.125, 1.125, 1.625, 0.375, 0.875},
        {0.5, 0.5, 1.625, 1, 0.5},       {0.5, 1.5, 0.875, 0.625, 0.625}, {0.125, 0.25, 0.125, 1.375, 1.375}};
    CostVolume vol(6, 1, 0, 4);
    for (int x = 0; x < 6; ++x)
        for (int d = 0; d < 5; ++d) vol.at(x, 0, d) = static_cast<float>(c[x][d]);
    auto energy = [&](const std::vector<int>& s, double p2) {
        double e = 0;
        for (int i = 0; i < 6; ++i) e += c[i][s[i]] + (i ? oracle::pairwise(s[i - 1], s[i], 0.125, p2) : 0.0);
        return e;
    };
    const std::vector<int> jump = {3, 2, 0, 0, 0, 0}, steps = {3, 2, 3, 4, 3, 2};
    EXPECT_EQ(optimal_scanline_energy(vol, 0.125f, 0.75f), energy(jump, 0.75));
    EXPECT_LT(energy(jump, 0.75), energy(steps, 0.75));
    EXPECT_EQ(optimal_scanline_energy(vol, 0.125f, 1.0f), energy(steps, 1.0));
    EXPECT_LT(energy(steps, 1.0), energy(jump, 1.0));
}
