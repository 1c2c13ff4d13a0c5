#include "uwstereo/harness.hpp"
#include "uwstereo/io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

using namespace uwstereo;
using namespace uwstereo::harness;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("uwstereo_harness_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

stereo::Matcher tiny_matcher(std::uint64_t seed) {
    stereo::MatcherConfig c;
    c.scales = 1;
    c.channels = 4;
    c.hidden = 16;
    c.features = 16;
    return stereo::Matcher::create(c, seed);
}

EvalOptions quick_eval() {
    EvalOptions o;
    o.stereo.d_max = 24;
    return o;
}

}  // namespace

TEST(Config, DefaultsValidateAndHashIsStable) {
    const auto a = load_config(std::nullopt, {});
    const auto b = load_config(std::nullopt, {});
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_EQ(a.hash().size(), 16u);
    EXPECT_EQ(a.conditions.size(), 9u);
    EXPECT_FALSE(a.matcher);
}

TEST(Config, OverridesReachTheTypedFields) {
    const auto c = load_config(std::nullopt, {"stereo.p2=0.75", "stereo.subpixel=false", "seed=42"});
    EXPECT_EQ(c.stereo.sgm.p2, 0.75);
    EXPECT_FALSE(c.stereo.subpixel);
    EXPECT_EQ(c.seed, 42u);
    EXPECT_NE(c.hash(), load_config(std::nullopt, {}).hash());
    // training streams follow the root seed
    EXPECT_NE(c.train_matcher.seed, load_config(std::nullopt, {}).train_matcher.seed);
}

TEST(Config, UnknownAndInvalidFieldsAreRejectedByName) {
    try {
        load_config(std::nullopt, {"stereo.bogus=1"});
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("stereo.bogus"), std::string::npos);
    }
    try {
        load_config(std::nullopt, {"stereo.d_max=5000"});
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("d_max"), std::string::npos);
    }
    EXPECT_THROW(load_config(std::nullopt, {"no_equals"}), ConfigError);
    EXPECT_THROW(load_config(std::nullopt, {"paths.matcher=/definitely/not/here.bin"}), ConfigError);
    EXPECT_THROW(load_config(std::nullopt, {"conditions=[\"underwater\"]"}), ConfigError);
}

TEST(Config, FileIsMergedBeforeOverrides) {
    const auto dir = fresh_dir("config");
    std::ofstream(dir / "c.json") << R"({"stereo": {"p1": 0.05, "p2": 0.4}})";
    const auto c = load_config(dir / "c.json", {"stereo.p2=0.45"});
    EXPECT_FLOAT_EQ(c.stereo.sgm.p1, 0.05f);
    EXPECT_FLOAT_EQ(c.stereo.sgm.p2, 0.45f);
    std::ofstream(dir / "bad.json") << "{ not json";
    EXPECT_THROW(load_config(dir / "bad.json", {}), ConfigError);
}

TEST(Dataset, EmptyDirectoryGivesNoFrames) {
    const auto d = load_dataset(fresh_dir("empty"));
    EXPECT_TRUE(d.frames.empty());
    EXPECT_THROW(load_dataset("/definitely/not/here"), io::DataError);
}

TEST(Dataset, ManifestOfSyntheticFrames) {
    const auto dir = fresh_dir("synth");
    const auto frames = synth_frames(10, 48, 32, 2, 10, 3);
    bubbles::Manifest m;
    for (const auto& f : frames) {
        save_frame(dir / f.id, f);
        m.entries.push_back({f.id, f.id, "clean", f.id, 0});
    }
    std::ofstream(dir / "manifest.json") << m.to_json().dump();
    const auto d = load_dataset(dir);
    ASSERT_EQ(d.frames.size(), 10u);
    EXPECT_TRUE(d.skipped.empty());
    EXPECT_EQ(d.frames[3].frame.id, "frame003");
    EXPECT_EQ(d.frames[3].frame.gt_left->data, frames[3].gt_left->data);
    // also found without the manifest, by walking the tree
    fs::remove(dir / "manifest.json");
    EXPECT_EQ(load_dataset(dir).frames.size(), 10u);
}

TEST(Dataset, MissingMaskIsDefaultedAndCorruptFrameSkipped) {
    const auto dir = fresh_dir("broken");
    auto frames = synth_frames(2, 32, 24, 2, 8, 5);
    frames[0].left_mask.reset();
    frames[0].right_mask.reset();
    save_frame(dir / "a", frames[0]);
    save_frame(dir / "b", frames[1]);
    std::ofstream(dir / "b" / "disp0.pfm", std::ios::trunc) << "Pf\n32 24\n-1.0\n";  // truncated body
    const auto d = load_dataset(dir);
    ASSERT_EQ(d.frames.size(), 1u);
    EXPECT_TRUE(d.frames[0].mask_defaulted);
    for (auto v : d.frames[0].frame.left_mask->data) EXPECT_EQ(v, 1);
    ASSERT_EQ(d.skipped.size(), 1u);
    EXPECT_EQ(d.skipped[0].first, "b");
}

TEST(Dataset, SingleFrameDirectoryAndConditionFromMeta) {
    const auto dir = fresh_dir("single");
    save_frame(dir, synth_frames(1, 32, 24, 2, 8, 1)[0]);
    std::ofstream(dir / "meta.json") << R"({"condition": "far_much_large"})";
    const auto d = load_dataset(dir);
    ASSERT_EQ(d.frames.size(), 1u);
    EXPECT_EQ(d.frames[0].condition, "far_much_large");
}

TEST(Eval, SingleCellReport) {
    Dataset data;
    for (auto& f : synth_frames(1, 64, 48, 2, 12, 7)) data.frames.push_back({f, "clean", {}, false});
    std::vector<Method> methods{{"tiny", tiny_matcher(1)}};
    const auto dir = fresh_dir("eval1");
    const auto r = run_experiment(data, methods, quick_eval(), dir, "h");
    ASSERT_EQ(r.cells.size(), 1u);
    EXPECT_EQ(r.cells[0].frames, 1u);
    EXPECT_GE(r.cells[0].bad_rate, 0.0);
    EXPECT_LE(r.cells[0].bad_rate, 1.0);
    EXPECT_TRUE(fs::exists(dir / "report.json"));
    EXPECT_TRUE(fs::exists(dir / "report.csv"));
    EXPECT_TRUE(fs::exists(dir / r.frames[0].disparity_file));
}

TEST(Eval, NineByThreeTableRescoresExactly) {
    const auto base = synth_frames(1, 64, 48, 2, 12, 11);
    const auto ddir = fresh_dir("grid_data");
    const auto m = bubbles::build_transfer_dataset(base, bubbles::Condition::grid(), 3, bubbles::ClassParams{}, ddir);
    ASSERT_EQ(m.entries.size(), 9u);
    const auto data = load_dataset(ddir);
    ASSERT_EQ(data.frames.size(), 9u);

    std::vector<Method> methods{{"a", tiny_matcher(1)}, {"b", tiny_matcher(2)}, {"c", tiny_matcher(3)}};
    const auto dir = fresh_dir("grid_eval");
    const auto r = run_experiment(data, methods, quick_eval(), dir, "h");
    EXPECT_EQ(r.conditions.size(), 9u);
    EXPECT_EQ(r.methods.size(), 3u);
    EXPECT_EQ(r.cells.size(), 27u);
    EXPECT_EQ(r.frames.size(), 27u);
    EXPECT_EQ(r.conditions.front(), "clean");

    const auto back = ExperimentReport::from_json(nlohmann::json::parse(slurp(dir / "report.json")));
    const auto again = rescore(back, data, dir);
    for (const auto& c : r.conditions)
        for (const auto& name : r.methods) {
            EXPECT_EQ(again.cell(c, name).bad_rate, r.cell(c, name).bad_rate);
            EXPECT_EQ(again.cell(c, name).rmse, r.cell(c, name).rmse);
        }

    // a condition subset only scores those frames
    auto opt = quick_eval();
    opt.conditions = {"clean", "near_much_large"};
    const auto sub = run_experiment(data, {methods[0]}, opt, fresh_dir("grid_sub"), "h");
    EXPECT_EQ(sub.cells.size(), 2u);
    EXPECT_THROW(r.cell("clean", "nope"), std::out_of_range);
}

TEST(Eval, RerunIsByteIdentical) {
    Dataset data;
    for (auto& f : synth_frames(2, 64, 48, 2, 12, 13)) data.frames.push_back({f, "clean", {}, false});
    std::vector<Method> methods{{"tiny", tiny_matcher(4)}};
    const auto da = fresh_dir("rep_a"), db = fresh_dir("rep_b");
    const auto a = run_experiment(data, methods, quick_eval(), da, "h");
    const auto b = run_experiment(data, methods, quick_eval(), db, "h");
    ASSERT_EQ(a.frames.size(), 2u);
    ASSERT_EQ(b.frames.size(), 2u);
    for (std::size_t i = 0; i < a.frames.size(); ++i) {
        const auto pa = slurp(da / a.frames[i].disparity_file);
        EXPECT_FALSE(pa.empty());
        EXPECT_EQ(pa, slurp(db / b.frames[i].disparity_file));
    }
}

TEST(Eval, NoScorableFrameIsADataError) {
    Dataset data;
    auto f = synth_frames(1, 32, 24, 2, 8, 1)[0];
    f.gt_left.reset();
    data.frames.push_back({f, "clean", {}, false});
    std::vector<Method> methods{{"tiny", tiny_matcher(1)}};
    EXPECT_THROW(run_experiment(data, methods, quick_eval(), fresh_dir("nogt"), "h"), io::DataError);
}

TEST(SeedStreams, DerivedStreamsDifferAndRepeat) {
    EXPECT_EQ(derive_seed(1, "a"), derive_seed(1, "a"));
    EXPECT_NE(derive_seed(1, "a"), derive_seed(1, "b"));
    EXPECT_NE(derive_seed(1, "a"), derive_seed(2, "a"));
}
