#include "uwstereo/harness.hpp"

#include "uwstereo/io.hpp"
#include "uwstereo/synth.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

namespace uwstereo::harness {

namespace fs = std::filesystem;

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

nlohmann::json without_seed(nlohmann::json j) {
    j.erase("seed");
    return j;
}

nn::TrainConfig train_defaults(int epochs, int batch, double lr) {
    nn::TrainConfig c;
    c.epochs = epochs;
    c.batch = batch;
    c.lr = lr;
    return c;
}

void reject_unknown(const nlohmann::json& j, const nlohmann::json& known, const std::string& prefix) {
    for (const auto& [key, value] : j.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!known.contains(key)) throw ConfigError("unknown config field '" + path + "'");
        if (value.is_object() && known.at(key).is_object()) reject_unknown(value, known.at(key), path);
    }
}

// Runs parse(section) and prefixes any error with the section name.
template <typename F>
auto section(const nlohmann::json& j, const std::string& name, F&& parse) {
    try {
        return parse(j.at(nlohmann::json::json_pointer("/" + [&] {
            std::string p = name;
            std::replace(p.begin(), p.end(), '.', '/');
            return p;
        }())));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        throw ConfigError(msg.rfind(name, 0) == 0 ? msg : name + ": " + msg);
    }
}

std::string sanitize(const std::string& id) {
    std::string out = id;
    for (char& c : out)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
    return out;
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
double from_number_or_null(const nlohmann::json& j) { return j.is_null() ? nan() : j.get<double>(); }

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) { return synth::mix(root, fnv1a(stream)); }

nlohmann::json default_config() {
    nlohmann::json conditions = nlohmann::json::array();
    for (const auto& c : bubbles::Condition::grid()) conditions.push_back(c.name());
    return {
        {"seed", 1},
        {"paths",
         {{"calibration", ""}, {"matcher", ""}, {"segmenter", ""}, {"restorer", ""}, {"detector", ""}, {"dataset", ""}}},
        {"depth_hint", 0.6},
        {"stereo", stereo::StereoConfig{}.to_json()},
        {"matcher", stereo::MatcherConfig{}.to_json()},
        {"sampling", stereo::PairSamplingConfig{}.to_json()},
        {"segmenter", seg::SegConfig{}.to_json()},
        {"seg_augment", seg::AugmentConfig{}.to_json()},
        {"texture", texture::TextureConfig{}.to_json()},
        {"bubbles", bubbles::ClassParams{}.to_json()},
        {"conditions", conditions},
        {"train",
         {{"matcher", without_seed(train_defaults(6, 32, 1e-3).to_json())},
          {"transfer", without_seed(train_defaults(3, 32, 5e-4).to_json())},
          {"segmenter", without_seed(train_defaults(6, 16, 1e-3).to_json())},
          {"texture", without_seed(train_defaults(8, 16, 3e-3).to_json())}}},
        {"eval", {{"threshold", 1.0}}},
    };
}

void apply_override(nlohmann::json& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    nlohmann::json* node = &cfg;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("override '" + assignment + "' has an empty field name");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = nlohmann::json::object();
        node = &(*node)[part];
        start = dot + 1;
    }
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
    const nlohmann::json defaults = default_config();
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    reject_unknown(j, defaults, "");
    nlohmann::json merged = defaults;
    merged.merge_patch(j);

    PipelineConfig c;
    c.raw = merged;
    c.seed = section(merged, "seed", [](const nlohmann::json& v) { return v.get<std::uint64_t>(); });
    c.depth_hint = section(merged, "depth_hint", [](const nlohmann::json& v) {
        const double d = v.get<double>();
        if (!(d > 0)) throw std::invalid_argument("must be positive");
        return d;
    });
    for (const char* key : {"calibration", "matcher", "segmenter", "restorer", "detector", "dataset"}) {
        const std::string name = std::string("paths.") + key;
        const auto p = section(merged, name, [](const nlohmann::json& v) { return v.get<std::string>(); });
        if (p.empty()) continue;
        if (!fs::exists(p)) throw ConfigError(name + ": '" + p + "' does not exist");
        std::optional<fs::path>* slot = key == std::string("calibration") ? &c.calibration
                                      : key == std::string("matcher")     ? &c.matcher
                                      : key == std::string("segmenter")   ? &c.segmenter
                                      : key == std::string("restorer")    ? &c.restorer
                                      : key == std::string("detector")    ? &c.detector
                                                                          : &c.dataset;
        *slot = p;
    }
    c.stereo = section(merged, "stereo", [](const nlohmann::json& v) { return stereo::StereoConfig::from_json(v); });
    c.matcher_net = section(merged, "matcher", [](const nlohmann::json& v) { return stereo::MatcherConfig::from_json(v); });
    c.sampling =
        section(merged, "sampling", [](const nlohmann::json& v) { return stereo::PairSamplingConfig::from_json(v); });
    c.seg = section(merged, "segmenter", [](const nlohmann::json& v) { return seg::SegConfig::from_json(v); });
    c.seg_augment = section(merged, "seg_augment", [](const nlohmann::json& v) { return seg::AugmentConfig::from_json(v); });
    c.texture = section(merged, "texture", [](const nlohmann::json& v) { return texture::TextureConfig::from_json(v); });
    c.bubbles = section(merged, "bubbles", [](const nlohmann::json& v) { return bubbles::ClassParams::from_json(v); });
    c.conditions = section(merged, "conditions", [](const nlohmann::json& v) {
        std::vector<bubbles::Condition> out;
        for (const auto& n : v) out.push_back(bubbles::Condition::parse(n.get<std::string>()));
        return out;
    });
    auto train = [&](const char* key) {
        const std::string name = std::string("train.") + key;
        auto t = section(merged, name, [](const nlohmann::json& v) { return nn::TrainConfig::from_json(v); });
        t.seed = derive_seed(c.seed, name);
        return t;
    };
    c.train_matcher = train("matcher");
    c.train_transfer = train("transfer");
    c.train_segmenter = train("segmenter");
    c.train_texture = train("texture");
    c.eval_threshold = section(merged, "eval.threshold", [](const nlohmann::json& v) {
        const double t = v.get<double>();
        if (!(t >= 0)) throw std::invalid_argument("must be >= 0");
        return t;
    });
    return c;
}

std::string PipelineConfig::hash() const { return fmt::format("{:016x}", fnv1a(raw.dump())); }

PipelineConfig load_config(const std::optional<fs::path>& file, const std::vector<std::string>& overrides) {
    nlohmann::json user = nlohmann::json::object();
    if (file) {
        std::ifstream in(*file);
        if (!in) throw ConfigError("cannot open config '" + file->string() + "'");
        user = nlohmann::json::parse(in, nullptr, false);
        if (user.is_discarded()) throw ConfigError("config '" + file->string() + "' is not valid JSON");
    }
    for (const auto& o : overrides) apply_override(user, o);
    return PipelineConfig::from_json(user);
}

namespace {

std::string condition_from_meta(const fs::path& dir) {
    std::ifstream in(dir / "meta.json");
    if (!in) return "clean";
    const auto j = nlohmann::json::parse(in, nullptr, false);
    return j.is_object() ? j.value("condition", std::string("clean")) : "clean";
}

LoadedFrame load_frame(const fs::path& dir, const std::string& id, const std::string& condition) {
    LoadedFrame f;
    f.dir = dir;
    f.condition = condition;
    f.frame.id = id;
    f.frame.left = io::read_png(dir / "im0.png");
    f.frame.right = io::read_png(dir / "im1.png");
    if (!f.frame.left.same_size(f.frame.right)) throw io::DataError("im0.png and im1.png differ in size");
    const int w = f.frame.left.width, h = f.frame.left.height;
    auto check = [&](int mw, int mh, const char* what) {
        if (mw != w || mh != h) throw io::DataError(std::string(what) + " does not match the image size");
    };
    if (fs::exists(dir / "mask0.png")) {
        f.frame.left_mask = io::read_mask_png(dir / "mask0.png");
        check(f.frame.left_mask->width, f.frame.left_mask->height, "mask0.png");
    } else {
        f.frame.left_mask = Mask(w, h, 1);
        f.mask_defaulted = true;
    }
    if (fs::exists(dir / "mask1.png")) {
        f.frame.right_mask = io::read_mask_png(dir / "mask1.png");
        check(f.frame.right_mask->width, f.frame.right_mask->height, "mask1.png");
    } else {
        f.frame.right_mask = Mask(w, h, 1);
    }
    if (fs::exists(dir / "disp0.pfm")) {
        f.frame.gt_left = io::read_pfm(dir / "disp0.pfm");
        check(f.frame.gt_left->width, f.frame.gt_left->height, "disp0.pfm");
    }
    if (fs::exists(dir / "disp1.pfm")) {
        f.frame.gt_right = io::read_pfm(dir / "disp1.pfm");
        check(f.frame.gt_right->width, f.frame.gt_right->height, "disp1.pfm");
    }
    return f;
}

}  // namespace

Dataset load_dataset(const fs::path& root) {
    if (!fs::exists(root)) throw io::DataError("dataset '" + root.string() + "' does not exist");
    struct Entry {
        std::string id;
        fs::path dir;
        std::string condition;
    };
    std::vector<Entry> entries;
    fs::path manifest;
    if (fs::is_regular_file(root))
        manifest = root;
    else if (fs::exists(root / "manifest.json"))
        manifest = root / "manifest.json";

    if (!manifest.empty()) {
        std::ifstream in(manifest);
        const auto j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded()) throw io::DataError("manifest '" + manifest.string() + "' is not valid JSON");
        bubbles::Manifest m;
        try {
            m = bubbles::Manifest::from_json(j);
        } catch (const std::exception& e) {
            throw io::DataError("manifest '" + manifest.string() + "': " + e.what());
        }
        for (const auto& e : m.entries) entries.push_back({e.id, manifest.parent_path() / e.dir, e.condition});
    } else if (fs::exists(root / "im0.png")) {
        entries.push_back({root.filename().string(), root, condition_from_meta(root)});
    } else {
        std::vector<fs::path> dirs;
        for (const auto& it : fs::recursive_directory_iterator(root))
            if (it.is_directory() && fs::exists(it.path() / "im0.png")) dirs.push_back(it.path());
        std::sort(dirs.begin(), dirs.end());
        for (const auto& d : dirs)
            entries.push_back({fs::relative(d, root).generic_string(), d, condition_from_meta(d)});
    }

    Dataset out;
    if (entries.empty()) spdlog::warn("dataset '{}' contains no frames", root.string());
    for (const auto& e : entries) {
        try {
            out.frames.push_back(load_frame(e.dir, e.id, e.condition));
            if (out.frames.back().mask_defaulted) spdlog::info("frame '{}': no mask0.png, using a full mask", e.id);
        } catch (const std::exception& ex) {
            spdlog::warn("frame '{}' skipped: {}", e.id, ex.what());
            out.skipped.emplace_back(e.id, ex.what());
        }
    }
    return out;
}

void save_frame(const fs::path& dir, const StereoFrame& frame) {
    fs::create_directories(dir);
    io::write_png(dir / "im0.png", frame.left);
    io::write_png(dir / "im1.png", frame.right);
    if (frame.left_mask) io::write_mask_png(dir / "mask0.png", *frame.left_mask);
    if (frame.right_mask) io::write_mask_png(dir / "mask1.png", *frame.right_mask);
    if (frame.gt_left) io::write_pfm(dir / "disp0.pfm", *frame.gt_left);
    if (frame.gt_right) io::write_pfm(dir / "disp1.pfm", *frame.gt_right);
}

std::vector<StereoFrame> synth_frames(int count, int width, int height, double d_min, double d_max,
                                      std::uint64_t seed) {
    std::vector<StereoFrame> out;
    for (int i = 0; i < count; ++i) {
        const auto spec = synth::random_scene(width, height, d_min, d_max, synth::mix(seed, static_cast<std::uint64_t>(i)));
        auto frame = synth::render_scene(spec).frame;
        frame.id = fmt::format("frame{:03d}", i);
        out.push_back(std::move(frame));
    }
    return out;
}

Mask evaluation_mask(const LoadedFrame& f) {
    if (!f.frame.gt_left) throw std::invalid_argument("evaluation_mask: frame has no ground truth");
    Mask m = recon::nonoccluded(*f.frame.gt_left, f.frame.gt_right ? &*f.frame.gt_right : nullptr);
    if (f.frame.left_mask && !f.mask_defaulted)
        for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = m.data[i] && f.frame.left_mask->data[i];
    return m;
}

const ReportCell& ExperimentReport::cell(const std::string& condition, const std::string& method) const {
    for (const auto& c : cells)
        if (c.condition == condition && c.method == method) return c;
    throw std::out_of_range("no report cell for " + condition + " / " + method);
}

std::vector<ReportCell> aggregate(const std::vector<FrameResult>& frames, const std::vector<std::string>& conditions,
                                  const std::vector<std::string>& methods) {
    std::vector<ReportCell> cells;
    for (const auto& c : conditions)
        for (const auto& m : methods) {
            ReportCell cell{c, m, 0, nan(), nan(), nan()};
            double sq = 0;
            std::size_t compared = 0, bad = 0, gt = 0;
            for (const auto& f : frames) {
                if (f.condition != c || f.method != m) continue;
                ++cell.frames;
                sq += f.errors.squared_error;
                compared += f.errors.compared;
                bad += f.errors.bad;
                gt += f.errors.gt_pixels;
            }
            if (compared) cell.rmse = std::sqrt(sq / static_cast<double>(compared));
            if (gt) {
                cell.bad_rate = static_cast<double>(bad) / static_cast<double>(gt);
                cell.coverage = static_cast<double>(compared) / static_cast<double>(gt);
            }
            cells.push_back(cell);
        }
    return cells;
}

nlohmann::json ExperimentReport::to_json() const {
    nlohmann::json jc = nlohmann::json::array(), jf = nlohmann::json::array();
    for (const auto& c : cells)
        jc.push_back({{"condition", c.condition},
                      {"method", c.method},
                      {"frames", c.frames},
                      {"rmse", number_or_null(c.rmse)},
                      {"bad_rate", number_or_null(c.bad_rate)},
                      {"coverage", number_or_null(c.coverage)}});
    for (const auto& f : frames)
        jf.push_back({{"entry", f.entry},
                      {"condition", f.condition},
                      {"method", f.method},
                      {"disparity_file", f.disparity_file},
                      {"rmse", f.errors.rmse},
                      {"bad_rate", f.errors.bad_rate},
                      {"compared", f.errors.compared},
                      {"gt_pixels", f.errors.gt_pixels},
                      {"bad", f.errors.bad},
                      {"squared_error", f.errors.squared_error},
                      {"seconds", f.seconds}});
    return {{"config_hash", config_hash}, {"threshold", threshold}, {"seconds", seconds}, {"conditions", conditions},
            {"methods", methods},         {"cells", jc},           {"frames", jf}};
}

ExperimentReport ExperimentReport::from_json(const nlohmann::json& j) {
    ExperimentReport r;
    r.config_hash = j.at("config_hash").get<std::string>();
    r.threshold = j.at("threshold").get<double>();
    r.seconds = j.at("seconds").get<double>();
    r.conditions = j.at("conditions").get<std::vector<std::string>>();
    r.methods = j.at("methods").get<std::vector<std::string>>();
    for (const auto& c : j.at("cells"))
        r.cells.push_back({c.at("condition").get<std::string>(), c.at("method").get<std::string>(),
                           c.at("frames").get<std::size_t>(), from_number_or_null(c.at("rmse")),
                           from_number_or_null(c.at("bad_rate")), from_number_or_null(c.at("coverage"))});
    for (const auto& f : j.at("frames")) {
        FrameResult fr;
        fr.entry = f.at("entry").get<std::string>();
        fr.condition = f.at("condition").get<std::string>();
        fr.method = f.at("method").get<std::string>();
        fr.disparity_file = f.at("disparity_file").get<std::string>();
        fr.errors.rmse = f.at("rmse").get<double>();
        fr.errors.bad_rate = f.at("bad_rate").get<double>();
        fr.errors.compared = f.at("compared").get<std::size_t>();
        fr.errors.gt_pixels = f.at("gt_pixels").get<std::size_t>();
        fr.errors.bad = f.at("bad").get<std::size_t>();
        fr.errors.squared_error = f.at("squared_error").get<double>();
        fr.seconds = f.at("seconds").get<double>();
        r.frames.push_back(fr);
    }
    return r;
}

void ExperimentReport::write(const fs::path& dir) const {
    fs::create_directories(dir);
    std::ofstream js(dir / "report.json");
    if (!js) throw io::DataError("cannot write " + (dir / "report.json").string());
    js << to_json().dump(2) << '\n';
    std::ofstream csv(dir / "report.csv");
    csv << "condition,method,frames,rmse,bad_rate,coverage\n";
    for (const auto& c : cells)
        csv << fmt::format("{},{},{},{},{},{}\n", c.condition, c.method, c.frames, c.rmse, c.bad_rate, c.coverage);
}

namespace {

std::vector<std::string> present_conditions(const Dataset& data, const std::vector<std::string>& wanted) {
    std::set<std::string> have;
    for (const auto& f : data.frames) have.insert(f.condition);
    std::vector<std::string> out;
    if (!wanted.empty()) {
        for (const auto& w : wanted)
            if (have.count(w)) out.push_back(w);
        return out;
    }
    for (const auto& c : bubbles::Condition::grid())
        if (have.erase(c.name())) out.push_back(c.name());
    out.insert(out.end(), have.begin(), have.end());  // anything not on the grid, sorted
    return out;
}

}  // namespace

ExperimentReport run_experiment(const Dataset& data, const std::vector<Method>& methods, const EvalOptions& opt,
                                const fs::path& out_dir, const std::string& config_hash) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentReport report;
    report.config_hash = config_hash;
    report.threshold = opt.threshold;
    report.conditions = present_conditions(data, opt.conditions);
    for (const auto& m : methods) report.methods.push_back(m.name);
    const std::set<std::string> selected(report.conditions.begin(), report.conditions.end());

    std::size_t scored = 0;
    for (const auto& f : data.frames) {
        if (!selected.count(f.condition)) continue;
        if (!f.frame.gt_left) {
            spdlog::warn("eval: frame '{}' has no ground truth, skipped", f.frame.id);
            continue;
        }
        const Mask eval_mask = evaluation_mask(f);
        std::optional<Mask> lm, rm;
        if (opt.segmenter) {
            lm = opt.segmenter->stereo_mask(f.frame.left);
            rm = opt.segmenter->stereo_mask(f.frame.right);
        } else if (!f.mask_defaulted) {
            lm = f.frame.left_mask;
            rm = f.frame.right_mask;
        }
        for (const auto& m : methods) {
            const auto ts = std::chrono::steady_clock::now();
            const auto out = stereo::match(f.frame, m.matcher, opt.stereo, lm ? &*lm : nullptr, rm ? &*rm : nullptr);
            for (float d : out.disparity.data)
                if (std::isnan(d)) throw NumericalError("NaN disparity for frame '" + f.frame.id + "'");
            FrameResult r;
            r.entry = f.frame.id;
            r.condition = f.condition;
            r.method = m.name;
            r.disparity_file = (fs::path(sanitize(m.name)) / sanitize(f.frame.id) / "disp0.pfm").generic_string();
            fs::create_directories((out_dir / r.disparity_file).parent_path());
            io::write_pfm(out_dir / r.disparity_file, out.disparity);
            r.errors = recon::disparity_errors(out.disparity, *f.frame.gt_left, opt.threshold, &eval_mask);
            r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - ts).count();
            spdlog::info("{} {} [{}]: bad {:.4f} rmse {:.3f} ({:.1f}s)", m.name, f.frame.id, f.condition,
                         r.errors.bad_rate, r.errors.rmse, r.seconds);
            report.frames.push_back(std::move(r));
        }
        ++scored;
    }
    if (scored == 0 && !data.frames.empty()) throw io::DataError("eval: no frame could be scored");
    report.cells = aggregate(report.frames, report.conditions, report.methods);
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.write(out_dir);
    return report;
}

ExperimentReport rescore(const ExperimentReport& report, const Dataset& data, const fs::path& report_dir) {
    std::map<std::string, const LoadedFrame*> by_id;
    for (const auto& f : data.frames) by_id[f.frame.id] = &f;
    ExperimentReport out = report;
    for (auto& r : out.frames) {
        const auto it = by_id.find(r.entry);
        if (it == by_id.end() || !it->second->frame.gt_left)
            throw io::DataError("rescore: frame '" + r.entry + "' not in the dataset");
        const auto est = io::read_pfm(report_dir / r.disparity_file);
        const Mask m = evaluation_mask(*it->second);
        r.errors = recon::disparity_errors(est, *it->second->frame.gt_left, report.threshold, &m);
    }
    out.cells = aggregate(out.frames, out.conditions, out.methods);
    return out;
}

}  // namespace uwstereo::harness
