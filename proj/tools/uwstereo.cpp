// uwstereo command line front end.
#include "uwstereo/bubbles.hpp"
#include "uwstereo/harness.hpp"
#include "uwstereo/io.hpp"
#include "uwstereo/matcher.hpp"
#include "uwstereo/pipeline.hpp"
#include "uwstereo/recon3d.hpp"
#include "uwstereo/refraction.hpp"
#include "uwstereo/segmenter.hpp"
#include "uwstereo/texture.hpp"

#include <CLI11.hpp>
#include <omp.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace uwstereo;
using harness::ConfigError;
using harness::NumericalError;

namespace {

struct Globals {
    std::string config;
    std::vector<std::string> overrides;
    int threads = 0;
    bool verbose = false;
    bool quiet = false;

    harness::PipelineConfig load() const {
        return harness::load_config(config.empty() ? std::nullopt : std::optional<fs::path>(config), overrides);
    }
};

void check_curve(const nn::LossCurve& c, const std::string& what) {
    for (double l : c.epoch_loss)
        if (!std::isfinite(l)) throw NumericalError(what + ": training loss became non-finite");
}

std::string curve_path(const std::string& out) {
    fs::path p(out);
    return (p.parent_path() / (p.stem().string() + "_loss.csv")).string();
}

std::vector<StereoFrame> frames_of(const harness::Dataset& d) {
    std::vector<StereoFrame> out;
    for (const auto& f : d.frames) out.push_back(f.frame);
    return out;
}

harness::Dataset require_frames(const std::string& path) {
    auto d = harness::load_dataset(path);
    if (d.frames.empty()) throw io::DataError("no usable frames in '" + path + "'");
    return d;
}

// synth ----------------------------------------------------------------------

struct SynthArgs {
    std::string out;
    int frames = 10, width = 256, height = 192;
    double d_min = 4, d_max = 40;
};

int run_synth(const Globals& g, const SynthArgs& a) {
    const auto cfg = g.load();
    const auto frames = harness::synth_frames(a.frames, a.width, a.height, a.d_min, a.d_max,
                                              harness::derive_seed(cfg.seed, "synth"));
    bubbles::Manifest m;
    for (const auto& f : frames) {
        harness::save_frame(fs::path(a.out) / f.id, f);
        m.entries.push_back({f.id, f.id, "clean", f.id, 0});
    }
    fs::create_directories(a.out);
    std::ofstream(fs::path(a.out) / "manifest.json") << m.to_json().dump(2) << '\n';
    spdlog::info("wrote {} frames to {}", frames.size(), a.out);
    return harness::kOk;
}

// augment --------------------------------------------------------------------

struct AugmentArgs {
    std::string base, out;
};

int run_augment(const Globals& g, const AugmentArgs& a) {
    const auto cfg = g.load();
    const auto data = harness::load_dataset(a.base);
    const auto m = bubbles::build_transfer_dataset(frames_of(data), cfg.conditions,
                                                   harness::derive_seed(cfg.seed, "augment"), cfg.bubbles, a.out);
    spdlog::info("{} samples written to {}", m.entries.size(), a.out);
    return harness::kOk;
}

// train-seg ------------------------------------------------------------------

struct TrainSegArgs {
    std::string data, out;
    int discs = 0, size = 64;
};

int run_train_seg(const Globals& g, const TrainSegArgs& a) {
    const auto cfg = g.load();
    std::vector<seg::Sample> sources;
    if (a.discs > 0) {
        const auto seed = harness::derive_seed(cfg.seed, "train-seg.discs");
        for (int i = 0; i < a.discs; ++i) sources.push_back(seg::disc_sample(a.size, seed + static_cast<std::uint64_t>(i)));
    } else {
        if (a.data.empty()) throw ConfigError("train-seg needs --data or --discs");
        for (const auto& f : require_frames(a.data).frames) {
            if (f.mask_defaulted) {
                spdlog::warn("frame '{}' has no mask, not used for segmentation", f.frame.id);
                continue;
            }
            sources.emplace_back(f.frame.left.gray(), *f.frame.left_mask);
        }
        if (sources.empty()) throw io::DataError("no frame with a mask in '" + a.data + "'");
    }
    const auto samples = seg::augment(sources, cfg.seg_augment, harness::derive_seed(cfg.seed, "seg_augment"));
    auto s = seg::Segmenter::create(cfg.seg, harness::derive_seed(cfg.seed, "segmenter.init"));
    spdlog::info("training segmenter on {} samples", samples.size());
    const auto curve = seg::train_segmenter(s, samples, cfg.train_segmenter);
    check_curve(curve, "train-seg");
    s.save(a.out, {{"config_hash", cfg.hash()}});
    curve.write_csv(curve_path(a.out));
    return harness::kOk;
}

// train-stereo ---------------------------------------------------------------

struct TrainStereoArgs {
    std::string data, out, init;
};

int run_train_stereo(const Globals& g, const TrainStereoArgs& a) {
    const auto cfg = g.load();
    const bool transfer = !a.init.empty();
    auto m = transfer ? stereo::Matcher::load(a.init)
                      : stereo::Matcher::create(cfg.matcher_net, harness::derive_seed(cfg.seed, "matcher.init"));
    const auto data = require_frames(a.data);
    const auto set = stereo::sample_triplets(frames_of(data), m.patch_size(), cfg.sampling,
                                             harness::derive_seed(cfg.seed, transfer ? "triplets.transfer" : "triplets"));
    if (set.count() == 0) throw io::DataError("no training pairs could be sampled (frames need ground truth)");
    spdlog::info("{} stage: {} triplets from {} frames", transfer ? "transfer" : "base", set.count(), data.frames.size());
    const auto curve = stereo::train_matcher(m, set, cfg.sampling, transfer ? cfg.train_transfer : cfg.train_matcher);
    check_curve(curve, "train-stereo");
    m.save(a.out, {{"stage", transfer ? "transfer" : "base"}, {"config_hash", cfg.hash()}});
    curve.write_csv(curve_path(a.out));
    return harness::kOk;
}

// train-texture --------------------------------------------------------------

struct TrainTextureArgs {
    std::string mode = "supervised", data, out, detector, init;
    int synthetic = 0, size = 96;
};

int run_train_texture(const Globals& g, const TrainTextureArgs& a) {
    const auto cfg = g.load();
    std::vector<texture::Pair> pairs;
    if (a.synthetic > 0) {
        const auto seed = harness::derive_seed(cfg.seed, "train-texture.synthetic");
        for (int i = 0; i < a.synthetic; ++i) {
            auto s = texture::stripe_sample(a.size, seed + static_cast<std::uint64_t>(i));
            pairs.push_back({std::move(s.degraded), std::move(s.clean)});
        }
    } else {
        if (a.data.empty()) throw ConfigError("train-texture needs --data or --synthetic");
        for (const auto& f : require_frames(a.data).frames) {
            const auto clean = f.dir / "clean0.png";
            if (a.mode != "unsupervised" && !fs::exists(clean)) {
                spdlog::warn("frame '{}' has no clean0.png, skipped", f.frame.id);
                continue;
            }
            pairs.push_back({f.frame.left.gray(), a.mode == "unsupervised" ? Image() : io::read_png(clean).gray()});
        }
        if (pairs.empty()) throw io::DataError("no usable training images in '" + a.data + "'");
    }
    texture::TextureConfig tcfg = cfg.texture;
    const auto init_seed = harness::derive_seed(cfg.seed, "texture.init." + a.mode);
    nn::LossCurve curve;
    if (a.mode == "supervised") {
        auto r = a.init.empty() ? texture::create_net(tcfg, init_seed) : texture::load_net(a.init, "restore", &tcfg);
        curve = texture::train_supervised(r, pairs, tcfg, cfg.train_texture);
        check_curve(curve, "train-texture");
        texture::save_net(a.out, r, "restore", tcfg, {{"mode", a.mode}, {"config_hash", cfg.hash()}});
    } else if (a.mode == "detector") {
        auto d = texture::create_net(tcfg, init_seed);
        curve = texture::train_detector(d, texture::difference_pairs(pairs), tcfg, cfg.train_texture);
        check_curve(curve, "train-texture");
        texture::save_net(a.out, d, "detect", tcfg, {{"mode", a.mode}, {"config_hash", cfg.hash()}});
    } else if (a.mode == "unsupervised") {
        const std::string det = !a.detector.empty() ? a.detector : cfg.detector ? cfg.detector->string() : "";
        if (det.empty()) throw ConfigError("unsupervised training needs --detector or paths.detector");
        const auto d = texture::load_net(det, "detect");
        auto r = a.init.empty() ? texture::create_net(tcfg, init_seed) : texture::load_net(a.init, "restore", &tcfg);
        std::vector<Image> inputs;
        for (auto& p : pairs) inputs.push_back(std::move(p.input));
        curve = texture::train_unsupervised(r, d, inputs, tcfg, cfg.train_texture);
        check_curve(curve, "train-texture");
        texture::save_net(a.out, r, "restore", tcfg, {{"mode", a.mode}, {"config_hash", cfg.hash()}});
    } else {
        throw ConfigError("--mode must be supervised, detector or unsupervised");
    }
    curve.write_csv(curve_path(a.out));
    return harness::kOk;
}

// match ----------------------------------------------------------------------

struct MatchArgs {
    std::string frame, left, right, out, matcher, segmenter, calibration;
    bool no_mask = false;
};

int run_match(const Globals& g, const MatchArgs& a) {
    const auto cfg = g.load();
    StereoFrame frame;
    bool have_masks = false;
    if (!a.frame.empty()) {
        const auto d = require_frames(a.frame);
        frame = d.frames.front().frame;
        have_masks = !d.frames.front().mask_defaulted;
    } else {
        if (a.left.empty() || a.right.empty()) throw ConfigError("match needs --frame or --left and --right");
        frame.id = fs::path(a.left).stem().string();
        frame.left = io::read_png(a.left);
        frame.right = io::read_png(a.right);
    }
    const std::string calib = !a.calibration.empty() ? a.calibration : cfg.calibration ? cfg.calibration->string() : "";
    if (!calib.empty()) {
        const auto model = rectify::load_calibration(calib);
        auto rect = rectify::rectify_pair(model, frame.left, frame.right, cfg.depth_hint);
        rect.frame.id = frame.id;
        frame = std::move(rect.frame);
        have_masks = false;  // masks were drawn on the raw images
    }
    const std::string mpath = !a.matcher.empty() ? a.matcher : cfg.matcher ? cfg.matcher->string() : "";
    if (mpath.empty()) throw ConfigError("match needs --matcher or paths.matcher");
    const auto matcher = stereo::Matcher::load(mpath);

    std::optional<Mask> lm, rm;
    const std::string spath = !a.segmenter.empty() ? a.segmenter : cfg.segmenter ? cfg.segmenter->string() : "";
    if (!a.no_mask) {
        if (!spath.empty()) {
            const auto s = seg::Segmenter::load(spath);
            lm = s.stereo_mask(frame.left);
            rm = s.stereo_mask(frame.right);
        } else if (have_masks) {
            lm = frame.left_mask;
            rm = frame.right_mask;
        }
    }
    const auto out = stereo::match(frame, matcher, cfg.stereo, lm ? &*lm : nullptr, rm ? &*rm : nullptr);
    for (float d : out.disparity.data)
        if (std::isnan(d)) throw NumericalError("NaN in the disparity map");
    if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
    io::write_pfm(a.out, out.disparity);
    spdlog::info("{}: {} of {} pixels valid, {} rejected by the LR check", a.out, out.disparity.valid_count(),
                 out.disparity.data.size(), out.lr_rejected);
    return harness::kOk;
}

// restore --------------------------------------------------------------------

struct RestoreArgs {
    std::string in, frame, out, restorer;
};

int run_restore(const Globals& g, const RestoreArgs& a) {
    const auto cfg = g.load();
    const std::string rpath = !a.restorer.empty() ? a.restorer : cfg.restorer ? cfg.restorer->string() : "";
    if (rpath.empty()) throw ConfigError("restore needs --restorer or paths.restorer");
    texture::TextureConfig tcfg;
    const auto r = texture::load_net(rpath, "restore", &tcfg);
    if (!a.frame.empty()) {
        const auto d = require_frames(a.frame);
        const auto& f = d.frames.front().frame;
        fs::create_directories(a.out);
        io::write_png(fs::path(a.out) / "im0.png", texture::restore(r, f.left, tcfg));
        io::write_png(fs::path(a.out) / "im1.png", texture::restore(r, f.right, tcfg));
    } else {
        if (a.in.empty()) throw ConfigError("restore needs --in or --frame");
        io::write_png(a.out, texture::restore(r, io::read_png(a.in), tcfg));
    }
    return harness::kOk;
}

// reconstruct ----------------------------------------------------------------

struct ReconArgs {
    std::string disparity, out, calibration, color;
    double focal = 0, baseline = 0, cx = std::nan(""), cy = std::nan("");
    int k = 16;
    double sigma = 2.0;
    bool no_filter = false;
};

int run_reconstruct(const Globals& g, const ReconArgs& a) {
    const auto cfg = g.load();
    const auto disp = io::read_pfm(a.disparity);
    recon::Pinhole cam;
    const std::string calib = !a.calibration.empty() ? a.calibration : cfg.calibration ? cfg.calibration->string() : "";
    if (!calib.empty()) {
        const auto model = rectify::load_calibration(calib);
        cam = recon::Pinhole::from(model, rectify::rectification(model, cfg.depth_hint).focal);
    } else {
        if (!(a.focal > 0) || !(a.baseline > 0))
            throw ConfigError("reconstruct needs --calibration or --focal and --baseline");
        cam.focal = a.focal;
        cam.baseline = a.baseline;
        cam.cx = std::isnan(a.cx) ? 0.5 * (disp.width - 1) : a.cx;
        cam.cy = std::isnan(a.cy) ? 0.5 * (disp.height - 1) : a.cy;
    }
    std::optional<Image> color;
    if (!a.color.empty()) color = io::read_png(a.color);
    recon::TriangulationStats st;
    auto cloud = recon::triangulate(disp, cam, color ? &*color : nullptr, &st);
    if (st.non_positive) spdlog::warn("{} pixels with non-positive disparity dropped", st.non_positive);
    if (!a.no_filter) {
        const auto before = cloud.size();
        cloud = recon::remove_outliers(cloud, a.k, a.sigma);
        spdlog::info("outlier filter kept {} of {} points", cloud.size(), before);
    }
    recon::estimate_normals(cloud, a.k);
    recon::write_ply(a.out, cloud);
    return harness::kOk;
}

// eval -----------------------------------------------------------------------

struct EvalArgs {
    std::string data, out, segmenter;
    std::vector<std::string> methods;  // name=checkpoint
    std::vector<std::string> conditions;
};

int run_eval(const Globals& g, const EvalArgs& a) {
    const auto cfg = g.load();
    std::vector<harness::Method> methods;
    for (const auto& spec : a.methods) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--method expects name=checkpoint, got '" + spec + "'");
        methods.push_back({spec.substr(0, eq), stereo::Matcher::load(spec.substr(eq + 1))});
    }
    if (methods.empty()) {
        if (!cfg.matcher) throw ConfigError("eval needs --method or paths.matcher");
        methods.push_back({"matcher", stereo::Matcher::load(cfg.matcher->string())});
    }
    const std::string data = !a.data.empty() ? a.data : cfg.dataset ? cfg.dataset->string() : "";
    if (data.empty()) throw ConfigError("eval needs --data or paths.dataset");
    const auto dataset = require_frames(data);
    std::optional<seg::Segmenter> s;
    const std::string spath = !a.segmenter.empty() ? a.segmenter : cfg.segmenter ? cfg.segmenter->string() : "";
    if (!spath.empty()) s = seg::Segmenter::load(spath);
    for (const auto& c : a.conditions) bubbles::Condition::parse(c);  // validate names early
    harness::EvalOptions opt;
    opt.stereo = cfg.stereo;
    opt.threshold = cfg.eval_threshold;
    opt.segmenter = s ? &*s : nullptr;
    opt.conditions = a.conditions;
    const auto report = harness::run_experiment(dataset, methods, opt, a.out, cfg.hash());
    std::cout << "condition";
    for (const auto& m : report.methods) std::cout << '\t' << m;
    std::cout << '\n';
    for (const auto& c : report.conditions) {
        std::cout << c;
        for (const auto& m : report.methods) {
            const auto& cell = report.cell(c, m);
            std::cout << '\t' << fmt::format("bad {:.4f} rmse {:.3f}", cell.bad_rate, cell.rmse);
        }
        std::cout << '\n';
    }
    return harness::kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dense stereo for underwater scenes with bubbles"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("-c,--config", g.config, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("-s,--set", g.overrides, "Override a config field, e.g. stereo.p2=0.6")->take_all();
    app.add_option("-j,--threads", g.threads, "Worker threads (default: UWSTEREO_THREADS or all cores)");
    app.add_flag("-v,--verbose", g.verbose, "Debug logging");
    app.add_flag("-q,--quiet", g.quiet, "Warnings and errors only");

    std::function<int()> action;

    SynthArgs synth;
    auto* c = app.add_subcommand("synth", "Render a synthetic base dataset with exact ground truth");
    c->add_option("-o,--out", synth.out, "Output directory")->required();
    c->add_option("-n,--frames", synth.frames, "Number of frames")->check(CLI::PositiveNumber);
    c->add_option("--width", synth.width)->check(CLI::PositiveNumber);
    c->add_option("--height", synth.height)->check(CLI::PositiveNumber);
    c->add_option("--dmin", synth.d_min);
    c->add_option("--dmax", synth.d_max);
    c->callback([&] { action = [&] { return run_synth(g, synth); }; });

    AugmentArgs aug;
    c = app.add_subcommand("augment", "Build the bubble transfer dataset (one sample per frame and condition)");
    c->add_option("-b,--base", aug.base, "Base dataset (manifest or directory)")->required();
    c->add_option("-o,--out", aug.out, "Output directory")->required();
    c->callback([&] { action = [&] { return run_augment(g, aug); }; });

    TrainSegArgs tseg;
    c = app.add_subcommand("train-seg", "Train the target segmenter");
    c->add_option("-d,--data", tseg.data, "Dataset with mask0.png per frame");
    c->add_option("--discs", tseg.discs, "Train on N synthetic disc images instead");
    c->add_option("--size", tseg.size, "Disc image size");
    c->add_option("-o,--out", tseg.out, "Checkpoint")->required();
    c->callback([&] { action = [&] { return run_train_seg(g, tseg); }; });

    TrainStereoArgs tst;
    c = app.add_subcommand("train-stereo", "Train the patch matcher (base stage, or transfer with --init)");
    c->add_option("-d,--data", tst.data, "Dataset with disp0.pfm")->required();
    c->add_option("-o,--out", tst.out, "Checkpoint")->required();
    c->add_option("--init", tst.init, "Continue from this checkpoint (transfer stage)");
    c->callback([&] { action = [&] { return run_train_stereo(g, tst); }; });

    TrainTextureArgs ttx;
    c = app.add_subcommand("train-texture", "Train the restoration or detector network");
    c->add_option("-m,--mode", ttx.mode, "supervised, detector or unsupervised")
        ->check(CLI::IsMember({"supervised", "detector", "unsupervised"}));
    c->add_option("-d,--data", ttx.data, "Dataset with im0.png (and clean0.png for supervised/detector)");
    c->add_option("--synthetic", ttx.synthetic, "Train on N synthetic stripe images instead");
    c->add_option("--size", ttx.size, "Synthetic image size");
    c->add_option("--detector", ttx.detector, "Detector checkpoint (unsupervised)");
    c->add_option("--init", ttx.init, "Start from this restorer checkpoint");
    c->add_option("-o,--out", ttx.out, "Checkpoint")->required();
    c->callback([&] { action = [&] { return run_train_texture(g, ttx); }; });

    MatchArgs mt;
    c = app.add_subcommand("match", "Disparity for one stereo pair, written as PFM");
    c->add_option("-f,--frame", mt.frame, "Frame directory (im0.png, im1.png, optional mask0/mask1.png)");
    c->add_option("-l,--left", mt.left, "Left image");
    c->add_option("-r,--right", mt.right, "Right image");
    c->add_option("--matcher", mt.matcher, "Matcher checkpoint");
    c->add_option("--segmenter", mt.segmenter, "Segmenter checkpoint; its masks limit the search");
    c->add_option("--calibration", mt.calibration, "Rectify with this calibration first");
    c->add_flag("--no-mask", mt.no_mask, "Search the whole image");
    c->add_option("-o,--out", mt.out, "Output PFM")->required();
    c->callback([&] { action = [&] { return run_match(g, mt); }; });

    RestoreArgs rs;
    c = app.add_subcommand("restore", "Remove projected pattern or bubbles from an image or frame");
    c->add_option("-i,--in", rs.in, "Input image");
    c->add_option("-f,--frame", rs.frame, "Frame directory (restores both views)");
    c->add_option("--restorer", rs.restorer, "Restorer checkpoint");
    c->add_option("-o,--out", rs.out, "Output image, or directory for --frame")->required();
    c->callback([&] { action = [&] { return run_restore(g, rs); }; });

    ReconArgs rc;
    c = app.add_subcommand("reconstruct", "Triangulate a disparity map into a PLY point cloud");
    c->add_option("-d,--disparity", rc.disparity, "Disparity PFM")->required()->check(CLI::ExistingFile);
    c->add_option("--calibration", rc.calibration, "Calibration JSON");
    c->add_option("--focal", rc.focal, "Focal length, px");
    c->add_option("--baseline", rc.baseline, "Baseline, m");
    c->add_option("--cx", rc.cx);
    c->add_option("--cy", rc.cy);
    c->add_option("--color", rc.color, "Colour image for the points");
    c->add_option("-k,--neighbors", rc.k, "Neighbours for the outlier filter and normals")->check(CLI::PositiveNumber);
    c->add_option("--sigma", rc.sigma, "Outlier threshold multiplier");
    c->add_flag("--no-filter", rc.no_filter, "Keep every point");
    c->add_option("-o,--out", rc.out, "Output PLY")->required();
    c->callback([&] { action = [&] { return run_reconstruct(g, rc); }; });

    EvalArgs ev;
    c = app.add_subcommand("eval", "Score matchers over a dataset and write the experiment report");
    c->add_option("-d,--data", ev.data, "Dataset (manifest or directory)");
    c->add_option("-m,--method", ev.methods, "name=checkpoint, repeatable")->take_all();
    c->add_option("--segmenter", ev.segmenter, "Segmenter checkpoint for the search masks");
    c->add_option("--conditions", ev.conditions, "Only these conditions")->delimiter(',');
    c->add_option("-o,--out", ev.out, "Report directory")->required();
    c->callback([&] { action = [&] { return run_eval(g, ev); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? harness::kOk : harness::kUsage;
    }

    spdlog::set_level(g.quiet ? spdlog::level::warn : g.verbose ? spdlog::level::debug : spdlog::level::info);
    int threads = g.threads;
    if (threads <= 0)
        if (const char* env = std::getenv("UWSTEREO_THREADS")) threads = std::atoi(env);
    if (threads > 0) omp_set_num_threads(threads);

    try {
        return action();
    } catch (const ConfigError& e) {
        spdlog::error("config: {}", e.what());
        return harness::kUsage;
    } catch (const NumericalError& e) {
        spdlog::error("numerical failure: {}", e.what());
        return harness::kNumerical;
    } catch (const io::DataError& e) {
        spdlog::error("data: {}", e.what());
        return harness::kData;
    } catch (const std::invalid_argument& e) {
        spdlog::error("{}", e.what());
        return harness::kUsage;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return harness::kData;
    }
}
