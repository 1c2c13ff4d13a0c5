#include "uwstereo/matcher.hpp"
#include "uwstereo/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace uwstereo;
using namespace uwstereo::stereo;

namespace {

nn::Tensor<float> random_patches(int n, int p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> g(0.0f, 1.0f);
    nn::Tensor<float> t({n, 1, p, p});
    for (auto& v : t.vec()) v = g(rng);
    return t;
}

Image random_image(int w, int h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Image img(w, h);
    for (auto& v : img.data) v = u(rng);
    return img;
}

Image to_image(const nn::Tensor<float>& t, int i) {
    const int p = t.dim(2);
    Image img(p, p);
    std::copy_n(t.data() + static_cast<std::size_t>(i) * p * p, p * p, img.data.begin());
    return img;
}

double cosine_oracle(const std::vector<float>& a, const std::vector<float>& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += double(a[i]) * b[i];
        aa += double(a[i]) * a[i];
        bb += double(b[i]) * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

// Textured planes at several disparities with exact GT.
std::vector<StereoFrame> plane_frames(int count, std::uint64_t seed) {
    std::vector<StereoFrame> out;
    for (int i = 0; i < count; ++i)
        out.push_back(synth::render_scene(synth::random_scene(96, 64, 4, 20, seed + static_cast<std::uint64_t>(i))).frame);
    return out;
}

}  // namespace

TEST(MatcherConfig, PatchSizeFollowsScaleCount) {
    EXPECT_EQ(MatcherConfig{}.patch_size(), 44);
    MatcherConfig one;
    one.scales = 1;
    EXPECT_EQ(one.patch_size(), 11);
    MatcherConfig bad;
    bad.patch = 45;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    MatcherConfig tiny;
    tiny.scales = 1;
    tiny.patch = 6;
    EXPECT_THROW(tiny.validate(), std::invalid_argument);
    const auto back = MatcherConfig::from_json(MatcherConfig{}.to_json());
    EXPECT_EQ(back.to_json(), MatcherConfig{}.to_json());
}

TEST(Matcher, PyramidSizesAndConcatChannels) {
    const auto m = Matcher::create({}, 3);
    const auto tape = m.net().forward_recorded({random_patches(2, 44, 1)});
    const auto& layers = m.net().layers();
    std::vector<int> pooled;
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i].kind == nn::LayerKind::MaxPool2) pooled.push_back(tape.values[i].dim(2));
    EXPECT_EQ(pooled, (std::vector<int>{22, 11}));
    const auto& cat = tape.values[static_cast<std::size_t>(m.concat_node())];
    EXPECT_EQ(cat.shape(), (nn::Shape{2, 48, 1, 1}));
    EXPECT_EQ(m.concat_channels(), 48);
    EXPECT_EQ(tape.result().shape(), (nn::Shape{2, 112}));
}

TEST(Matcher, CroppedRouteEqualsUpsampledFullMapsAtCentre) {
    for (int scales : {1, 2, 3}) {
        MatcherConfig cfg;
        cfg.scales = scales;
        auto m = Matcher::create(cfg, 10 + scales);
        // Biases nonzero so zero padding would show if it leaked into the centre.
        for (auto& p : m.net().params())
            if (p.name.ends_with(".bias")) std::fill(p.value.vec().begin(), p.value.vec().end(), 0.05f);
        const int p = m.patch_size(), c = p / 2;
        const auto x = random_patches(3, p, 7);
        const auto full = m.full_maps(x);
        ASSERT_EQ(full.shape(), (nn::Shape{3, m.concat_channels(), p, p}));
        const auto tape = m.net().forward_recorded({x});
        const auto& cat = tape.values[static_cast<std::size_t>(m.concat_node())];
        for (int n = 0; n < 3; ++n)
            for (int ch = 0; ch < m.concat_channels(); ++ch) {
                const float want = full.data()[((static_cast<std::size_t>(n) * m.concat_channels() + ch) * p + c) * p + c];
                EXPECT_NEAR(cat.data()[static_cast<std::size_t>(n) * m.concat_channels() + ch], want, 1e-5f);
            }
    }
}

TEST(Matcher, DescribeRejectsWrongSizeAndIsDeterministic) {
    const auto m = Matcher::create({}, 5);
    EXPECT_THROW(m.describe(Image(43, 44)), std::invalid_argument);
    EXPECT_THROW(m.describe(random_patches(1, 40, 1)), std::invalid_argument);
    const auto p = to_image(random_patches(1, 44, 2), 0);
    EXPECT_EQ(m.describe(p), m.describe(p));
    EXPECT_EQ(m.describe(p).size(), 112u);
}

TEST(Matcher, SimilarityProperties) {
    const auto m = Matcher::create({}, 9);
    const auto x = random_patches(6, 44, 3);
    for (int i = 0; i + 1 < 6; i += 2) {
        const auto a = to_image(x, i), b = to_image(x, i + 1);
        EXPECT_NEAR(m.similarity(a, a), 1.0, 1e-6);
        EXPECT_EQ(m.similarity(a, b), m.similarity(b, a));
        EXPECT_NEAR(m.similarity(a, b), cosine_oracle(m.describe(a), m.describe(b)), 1e-6);
        const double s = m.similarity(a, b);
        EXPECT_GE(s, -1.0);
        EXPECT_LE(s, 1.0);
    }
}

TEST(Matcher, ZeroNormDescriptorFlagged) {
    auto m = Matcher::create({}, 9);
    m.net().zero_params();
    bool degenerate = false;
    const auto a = to_image(random_patches(1, 44, 4), 0);
    EXPECT_EQ(m.similarity(a, a, &degenerate), 0.0);
    EXPECT_TRUE(degenerate);
}

TEST(Matcher, DenseDescriptorsEqualPatchDescriptors) {
    for (int scales : {1, 3}) {
        MatcherConfig cfg;
        cfg.scales = scales;
        cfg.hidden = 24;
        cfg.features = 16;
        const auto m = Matcher::create(cfg, 21);
        const int p = m.patch_size();
        const Image norm = normalize_local(random_image(37, 29, 8), p);
        const auto dense = m.describe_dense(norm);
        ASSERT_EQ(dense.width, 37);
        ASSERT_EQ(dense.height, 29);
        std::vector<float> patch(static_cast<std::size_t>(p) * p);
        for (auto [x, y] : std::vector<std::pair<int, int>>{{0, 0}, {36, 28}, {18, 14}, {5, 27}, {33, 2}, {17, 0}}) {
            extract_patch(norm, x, y, p, patch.data());
            Image img(p, p);
            img.data = patch;
            const auto d = m.describe(img);
            for (int k = 0; k < dense.features; ++k)
                EXPECT_NEAR(dense.at(x, y)[k], d[static_cast<std::size_t>(k)], 1e-4f * (1 + std::abs(d[k])))
                    << "scales " << scales << " at " << x << "," << y;
        }
    }
}

TEST(Matcher, SingleScaleDescriptorMapIsUnitNormalized) {
    MatcherConfig cfg;
    cfg.scales = 1;
    const auto m = Matcher::create(cfg, 2);
    const auto map = m.descriptors(random_image(20, 12, 3));
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 20; ++x) {
            double n = 0;
            for (int k = 0; k < map.features; ++k) n += double(map.at(x, y)[k]) * map.at(x, y)[k];
            if (!map.degenerate[static_cast<std::size_t>(y) * 20 + x]) EXPECT_NEAR(n, 1.0, 1e-5);
        }
}

TEST(NormalizeLocal, MatchesBruteForceWindowStatistics) {
    const Image img = random_image(15, 11, 4);
    const int win = 6, c = win / 2;
    const Image out = normalize_local(img, win);
    for (int y = 0; y < 11; ++y)
        for (int x = 0; x < 15; ++x) {
            double s = 0, s2 = 0, n = 0;
            for (int yy = y - c; yy < y - c + win; ++yy)
                for (int xx = x - c; xx < x - c + win; ++xx)
                    if (xx >= 0 && yy >= 0 && xx < 15 && yy < 11) {
                        s += img.at(xx, yy);
                        s2 += double(img.at(xx, yy)) * img.at(xx, yy);
                        ++n;
                    }
            const double mean = s / n, var = s2 / n - mean * mean;
            EXPECT_NEAR(out.at(x, y), (img.at(x, y) - mean) / std::sqrt(var + 1e-4), 1e-4);
        }
    const Image flat = normalize_local(Image(9, 9, 1, 0.7f), 4);
    for (float v : flat.data) EXPECT_NEAR(v, 0.0f, 1e-3f);
}

TEST(ExtractPatch, IntegerCentreAndZeroOutside) {
    Image img(5, 5);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) img.at(x, y) = float(10 * y + x);
    std::vector<float> p(9);
    extract_patch(img, 0, 0, 3, p.data());
    EXPECT_EQ(p, (std::vector<float>{0, 0, 0, 0, 0, 1, 0, 10, 11}));
    extract_patch(img, 2.5, 2, 3, p.data());
    EXPECT_FLOAT_EQ(p[4], 22.5f);
}

TEST(Triplets, SamplingRespectsGroundTruthAndSkipsFramesWithoutIt) {
    auto frames = plane_frames(2, 40);
    frames[1].gt_left.reset();
    PairSamplingConfig cfg;
    cfg.pairs_per_frame = 50;
    const auto set = sample_triplets(frames, 11, cfg, 1);
    EXPECT_EQ(set.count(), 50u);
    EXPECT_EQ(set.anchor.size(), set.positive.size());
    EXPECT_EQ(set.anchor.size(), set.negative.size());
}

TEST(Training, ZeroEpochsLeavesWeightsUnchanged) {
    auto m = Matcher::create({}, 4);
    const auto before = m.net().params();
    PairSamplingConfig s;
    s.pairs_per_frame = 20;
    const auto set = sample_triplets(plane_frames(1, 2), 44, s, 3);
    nn::TrainConfig cfg;
    cfg.epochs = 0;
    EXPECT_TRUE(train_matcher(m, set, s, cfg).epoch_loss.empty());
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(m.net().params()[i].value, before[i].value);
}

TEST(Training, HingeGradientMatchesFiniteDifferences) {
    MatcherConfig cfg;
    cfg.scales = 2;
    cfg.channels = 3;
    cfg.layers_per_scale = 2;
    cfg.hidden = 5;
    cfg.features = 4;
    cfg.patch = 12;
    auto m = Matcher::create(cfg, 6);
    // Live units everywhere: a zero descriptor would sit on the cosine's singularity.
    for (auto& p : m.net().params())
        if (p.name.ends_with(".bias")) std::fill(p.value.vec().begin(), p.value.vec().end(), 0.1f);
    TripletSet set;
    set.patch = 12;
    const auto x = random_patches(9, 12, 12);
    set.anchor.assign(x.data(), x.data() + 3 * 144);
    set.positive.assign(x.data() + 3 * 144, x.data() + 6 * 144);
    set.negative.assign(x.data() + 6 * 144, x.data() + 9 * 144);
    const std::vector<std::size_t> idx{0, 1, 2};
    const double margin = 2.0;  // keeps every triplet active
    nn::Gradients<float> g;
    hinge_batch(m, set, idx, margin, &g);
    // Oracle: the same network in double precision, hinge recomputed from scratch.
    auto net = m.net().cast<double>();
    nn::Tensor<double> xd({9, 1, 12, 12});
    for (std::size_t k = 0; k < xd.size(); ++k) xd[k] = x[k];
    auto loss = [&] {
        const auto d = net.forward({xd});
        std::vector<double> rows[9];
        for (int r = 0; r < 9; ++r) rows[r].assign(d.data() + r * 4, d.data() + r * 4 + 4);
        auto cosd = [](const std::vector<double>& u, const std::vector<double>& v) {
            double uv = 0, uu = 0, vv = 0;
            for (std::size_t k = 0; k < u.size(); ++k) {
                uv += u[k] * v[k];
                uu += u[k] * u[k];
                vv += v[k] * v[k];
            }
            return uv / std::sqrt(uu * vv);
        };
        double total = 0;
        for (int i = 0; i < 3; ++i) total += std::max(0.0, margin - cosd(rows[i], rows[3 + i]) + cosd(rows[i], rows[6 + i]));
        return total / 3;
    };
    for (std::size_t p = 0; p < net.params().size(); ++p) {
        auto& v = net.params()[p].value.vec();
        for (std::size_t k = 0; k < v.size(); k += 3) {
            const double keep = v[k], h = 1e-6;
            v[k] = keep + h;
            const double up = loss();
            v[k] = keep - h;
            const double dn = loss();
            v[k] = keep;
            const double num = (up - dn) / (2 * h);
            EXPECT_NEAR(g.params[p][k], num, 1e-3 * (1 + std::abs(num))) << net.params()[p].name << "[" << k << "]";
        }
    }
}

TEST(Training, LearnsToSeparatePositivesFromNegatives) {
    auto m = Matcher::create({}, 11);
    PairSamplingConfig s;
    s.pairs_per_frame = 400;
    const auto train = sample_triplets(plane_frames(6, 100), 44, s, 1);
    const auto held = sample_triplets(plane_frames(2, 200), 44, s, 2);
    const auto before = evaluate_triplets(m, held, s.margin);
    nn::TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch = 32;
    cfg.lr = 1e-3;
    const auto curve = train_matcher(m, train, s, cfg);
    ASSERT_EQ(curve.epoch_loss.size(), 4u);
    EXPECT_LT(curve.epoch_loss.back(), curve.epoch_loss.front());
    const auto after = evaluate_triplets(m, held, s.margin);
    EXPECT_LT(after.loss, before.loss);
    EXPECT_GT(after.mean_pos - after.mean_neg, s.margin / 2);
}

TEST(Training, TransferStageKeepsArchitecture) {
    auto base = Matcher::create({}, 12);
    const auto path = (std::filesystem::temp_directory_path() / "uwstereo_matcher_base.bin").string();
    base.save(path, {{"stage", "base"}});
    auto transfer = Matcher::load(path);
    ASSERT_EQ(transfer.net().params().size(), base.net().params().size());
    for (std::size_t i = 0; i < base.net().params().size(); ++i)
        EXPECT_EQ(transfer.net().params()[i].value, base.net().params()[i].value);
    PairSamplingConfig s;
    s.pairs_per_frame = 30;
    nn::TrainConfig cfg;
    cfg.epochs = 1;
    train_matcher(transfer, sample_triplets(plane_frames(1, 7), 44, s, 5), s, cfg);
    EXPECT_EQ(transfer.parameter_count(), base.parameter_count());
    EXPECT_EQ(transfer.net().graph(), base.net().graph());
    for (std::size_t i = 0; i < base.net().params().size(); ++i)
        EXPECT_EQ(transfer.net().params()[i].value.shape(), base.net().params()[i].value.shape());
}
