#include "uwstereo/bubbles.hpp"

#include "uwstereo/io.hpp"
#include "uwstereo/synth.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

namespace uwstereo::bubbles {

namespace {

const char* size_name(SizeClass s) { return s == SizeClass::Small ? "small" : "large"; }
const char* density_name(DensityClass d) { return d == DensityClass::Little ? "little" : "much"; }
const char* position_name(PositionClass p) { return p == PositionClass::Near ? "near" : "far"; }

}  // namespace

std::string Condition::name() const {
    if (clean) return "clean";
    return std::string(position_name(position)) + "_" + density_name(density) + "_" + size_name(size);
}

Condition Condition::parse(const std::string& name) {
    for (const auto& c : grid())
        if (c.name() == name) return c;
    throw std::invalid_argument("unknown bubble condition '" + name + "'");
}

std::vector<Condition> Condition::grid() {
    std::vector<Condition> g{Condition{}};
    for (auto pos : {PositionClass::Near, PositionClass::Far})
        for (auto den : {DensityClass::Little, DensityClass::Much})
            for (auto sz : {SizeClass::Small, SizeClass::Large}) g.push_back({false, sz, den, pos});
    return g;
}

ClassParams ClassParams::from_json(const nlohmann::json& j) {
    ClassParams p;
    auto get = [&](const char* key, double& v) {
        if (j.contains(key)) v = j.at(key).get<double>();
    };
    get("small_min", p.small_min);
    get("small_max", p.small_max);
    get("large_min", p.large_min);
    get("large_max", p.large_max);
    get("little_rate", p.little_rate);
    get("much_rate", p.much_rate);
    get("near_extra_parallax_min", p.near_extra_parallax_min);
    get("near_extra_parallax_max", p.near_extra_parallax_max);
    get("far_parallax_max", p.far_parallax_max);
    get("near_blur", p.near_blur);
    get("far_blur", p.far_blur);
    get("opacity_min", p.opacity_min);
    get("opacity_max", p.opacity_max);
    get("highlight", p.highlight);
    get("highlight_sigma", p.highlight_sigma);
    get("rim_darkening", p.rim_darkening);
    get("warp_amplitude", p.warp_amplitude);
    get("warp_wavelength", p.warp_wavelength);
    if (!(p.opacity_min > 0 && p.opacity_max <= 1 && p.opacity_min <= p.opacity_max))
        throw std::invalid_argument("bubble opacity range must lie in (0, 1]");
    if (p.little_rate < 0 || p.much_rate < 0) throw std::invalid_argument("bubble rates must be non-negative");
    if (p.warp_amplitude < 0) throw std::invalid_argument("warp amplitude must be non-negative");
    return p;
}

nlohmann::json ClassParams::to_json() const {
    return {{"small_min", small_min},
            {"small_max", small_max},
            {"large_min", large_min},
            {"large_max", large_max},
            {"little_rate", little_rate},
            {"much_rate", much_rate},
            {"near_extra_parallax_min", near_extra_parallax_min},
            {"near_extra_parallax_max", near_extra_parallax_max},
            {"far_parallax_max", far_parallax_max},
            {"near_blur", near_blur},
            {"far_blur", far_blur},
            {"opacity_min", opacity_min},
            {"opacity_max", opacity_max},
            {"highlight", highlight},
            {"highlight_sigma", highlight_sigma},
            {"rim_darkening", rim_darkening},
            {"warp_amplitude", warp_amplitude},
            {"warp_wavelength", warp_wavelength}};
}

double rate_for(const Condition& c, const ClassParams& p) {
    if (c.clean) return 0.0;
    return c.density == DensityClass::Much ? p.much_rate : p.little_rate;
}

BubbleField sample_field(const Condition& c, int width, int height, std::uint64_t seed, const ClassParams& p,
                         double scene_max_disparity) {
    BubbleField f;
    f.condition = c;
    f.seed = seed;
    f.width = width;
    f.height = height;
    const double mean = rate_for(c, p) * width * height / 1e6;
    if (mean <= 0) return f;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = std::poisson_distribution<int>(mean)(rng);
    const bool large = c.size == SizeClass::Large;
    const double rmin = large ? p.large_min : p.small_min, rmax = large ? p.large_max : p.small_max;
    for (int i = 0; i < n; ++i) {
        Bubble b;
        b.radius = rmin + (rmax - rmin) * u(rng);
        b.x = -b.radius + u(rng) * (width + 2 * b.radius);
        b.y = -b.radius + u(rng) * (height + 2 * b.radius);
        b.opacity = p.opacity_min + (p.opacity_max - p.opacity_min) * u(rng);
        const double ang = 2 * std::numbers::pi * u(rng);
        const double off = 0.35 * b.radius * u(rng);
        b.hx = off * std::cos(ang);
        b.hy = off * std::sin(ang);
        if (c.position == PositionClass::Near) {
            b.parallax = scene_max_disparity + p.near_extra_parallax_min +
                         (p.near_extra_parallax_max - p.near_extra_parallax_min) * u(rng);
            b.blur = p.near_blur;
        } else {
            b.parallax = p.far_parallax_max * u(rng);
            b.blur = p.far_blur;
        }
        f.bubbles.push_back(b);
    }
    return f;
}

namespace {

void composite(Image& img, Mask& mask, const Bubble& b, double cx, const ClassParams& p) {
    const double reach = b.radius + 0.5 * b.blur;
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - reach)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(b.y - reach)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(b.y + reach)));
    const double s = p.highlight_sigma * b.radius;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dist = std::hypot(x - cx, y - b.y);
            double edge;
            if (b.blur > 0)
                edge = std::clamp((b.radius + 0.5 * b.blur - dist) / b.blur, 0.0, 1.0);
            else
                edge = dist <= b.radius ? 1.0 : 0.0;
            const double alpha = b.opacity * edge;
            if (alpha <= 0) continue;
            const double rr = std::min(1.0, dist / b.radius);
            const double hd2 = (x - cx - b.hx) * (x - cx - b.hx) + (y - b.y - b.hy) * (y - b.y - b.hy);
            const double g = std::exp(-hd2 / (2 * s * s));
            for (int c = 0; c < img.channels; ++c) {
                const double in = img.at(x, y, c);
                const double body = in * (1.0 - p.rim_darkening * rr * rr);
                const double paint = g * p.highlight + (1.0 - g) * body;
                img.at(x, y, c) = static_cast<float>(std::clamp(alpha * paint + (1.0 - alpha) * in, 0.0, 1.0));
            }
            mask.at(x, y) = 1;
        }
}

}  // namespace

AugmentedSample render_bubbles(const StereoFrame& frame, const BubbleField& field, const ClassParams& p) {
    if (!frame.left.same_size(frame.right)) throw std::invalid_argument("render_bubbles: views differ in size");
    AugmentedSample s;
    s.clean = frame;
    s.degraded = frame;
    s.condition = field.condition;
    s.left_bubbles = Mask(frame.left.width, frame.left.height, 0);
    s.right_bubbles = Mask(frame.right.width, frame.right.height, 0);
    std::vector<const Bubble*> order;
    for (const auto& b : field.bubbles) order.push_back(&b);
    // Farther bubbles first so nearer ones land on top.
    std::stable_sort(order.begin(), order.end(), [](const Bubble* a, const Bubble* b) { return a->parallax < b->parallax; });
    for (const Bubble* b : order) {
        composite(s.degraded.left, s.left_bubbles, *b, b->x, p);
        composite(s.degraded.right, s.right_bubbles, *b, b->x - b->parallax, p);
    }
    if (p.warp_amplitude > 0 && !field.condition.clean) {
        s.degraded.left = fluctuation_warp(s.degraded.left, p.warp_amplitude, p.warp_wavelength, synth::mix(field.seed, 1));
        s.degraded.right =
            fluctuation_warp(s.degraded.right, p.warp_amplitude, p.warp_wavelength, synth::mix(field.seed, 2));
        s.warped = true;
    }
    return s;
}

double Displacement::max_magnitude() const {
    double m = 0;
    for (std::size_t i = 0; i < dx.size(); ++i) m = std::max(m, std::hypot(static_cast<double>(dx[i]), dy[i]));
    return m;
}

Displacement fluctuation_field(int width, int height, double amplitude, double wavelength, std::uint64_t seed) {
    if (amplitude < 0) throw std::invalid_argument("warp amplitude must be non-negative");
    if (!(wavelength > 0)) throw std::invalid_argument("warp wavelength must be positive");
    Displacement d{width, height, std::vector<float>(static_cast<std::size_t>(width) * height, 0.0f),
                   std::vector<float>(static_cast<std::size_t>(width) * height, 0.0f)};
    if (amplitude == 0) return d;
    const double phi = 2 * std::numbers::pi * synth::hash_unit(seed, 0, 0);
    const double psi = 2 * std::numbers::pi * synth::hash_unit(seed, 0, 1);
    const double kx = std::cos(phi) / wavelength, ky = std::sin(phi) / wavelength;
    // Magnitude factors are each in [0, 1]; float rounding is absorbed by the
    // 1 - 1e-7 guard so |d| <= amplitude holds after conversion.
    const double a = amplitude * (1.0 - 1e-7);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double wave = 0.5 + 0.5 * std::sin(2 * std::numbers::pi * (kx * x + ky * y) + psi);
            const double n = synth::value_noise(x, y, wavelength, 2, synth::mix(seed, 3));
            const double theta = 4 * std::numbers::pi * synth::value_noise(x, y, wavelength, 2, synth::mix(seed, 4));
            const double m = a * wave * (0.5 + 0.5 * n);
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            d.dx[i] = static_cast<float>(m * std::cos(theta));
            d.dy[i] = static_cast<float>(m * std::sin(theta));
        }
    return d;
}

Image apply_displacement(const Image& img, const Displacement& d) {
    if (d.width != img.width || d.height != img.height) throw std::invalid_argument("displacement size mismatch");
    Image out(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * img.width + x;
            for (int c = 0; c < img.channels; ++c)
                out.at(x, y, c) = img.sample(static_cast<float>(x) + d.dx[i], static_cast<float>(y) + d.dy[i], c);
        }
    return out;
}

Image fluctuation_warp(const Image& img, double amplitude, double wavelength, std::uint64_t seed) {
    if (amplitude < 0) throw std::invalid_argument("warp amplitude must be non-negative");
    if (amplitude == 0) return img;
    return apply_displacement(img, fluctuation_field(img.width, img.height, amplitude, wavelength, seed));
}

std::uint64_t sample_seed(std::uint64_t root, const std::string& frame_id, const Condition& c) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char ch : frame_id) h = (h ^ ch) * 1099511628211ULL;
    const auto grid = Condition::grid();
    const auto idx = static_cast<std::uint64_t>(std::find(grid.begin(), grid.end(), c) - grid.begin());
    return synth::mix(synth::mix(root, h), idx);
}

nlohmann::json Manifest::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : entries)
        arr.push_back({{"id", e.id}, {"frame", e.frame}, {"condition", e.condition}, {"dir", e.dir}, {"bubbles", e.bubbles}});
    return {{"version", 1}, {"entries", arr}};
}

Manifest Manifest::from_json(const nlohmann::json& j) {
    Manifest m;
    for (const auto& e : j.at("entries"))
        m.entries.push_back({e.at("id").get<std::string>(), e.value("frame", std::string()),
                             e.value("condition", std::string("clean")), e.at("dir").get<std::string>(),
                             e.value("bubbles", std::size_t{0})});
    return m;
}

Manifest build_transfer_dataset(const std::vector<StereoFrame>& base, const std::vector<Condition>& conditions,
                                std::uint64_t seed, const ClassParams& params, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    Manifest manifest;
    for (const auto& frame : base) {
        if (!frame.gt_left) {
            spdlog::warn("frame '{}' has no ground-truth disparity, skipped", frame.id);
            continue;
        }
        float max_d = 0;
        for (float d : frame.gt_left->data)
            if (valid_disparity(d)) max_d = std::max(max_d, d);
        for (const auto& c : conditions) {
            const std::uint64_t s = sample_seed(seed, frame.id, c);
            const auto field = sample_field(c, frame.left.width, frame.left.height, s, params, max_d);
            const auto sample = render_bubbles(frame, field, params);
            const std::string rel = frame.id + "/" + c.name();
            const fs::path dir = out_dir / rel;
            fs::create_directories(dir);
            io::write_png(dir / "im0.png", sample.degraded.left);
            io::write_png(dir / "im1.png", sample.degraded.right);
            io::write_png(dir / "clean0.png", sample.clean.left);
            io::write_png(dir / "clean1.png", sample.clean.right);
            io::write_pfm(dir / "disp0.pfm", *frame.gt_left);
            if (frame.gt_right) io::write_pfm(dir / "disp1.pfm", *frame.gt_right);
            if (frame.left_mask) io::write_mask_png(dir / "mask0.png", *frame.left_mask);
            if (frame.right_mask) io::write_mask_png(dir / "mask1.png", *frame.right_mask);
            io::write_mask_png(dir / "bubble0.png", sample.left_bubbles);
            io::write_mask_png(dir / "bubble1.png", sample.right_bubbles);
            nlohmann::json bubbles = nlohmann::json::array();
            for (const auto& b : field.bubbles)
                bubbles.push_back({{"x", b.x}, {"y", b.y}, {"radius", b.radius}, {"opacity", b.opacity},
                                   {"parallax", b.parallax}});
            nlohmann::json meta = {{"frame", frame.id}, {"condition", c.name()}, {"seed", s},
                                   {"warped", sample.warped}, {"bubbles", bubbles}};
            std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
            manifest.entries.push_back({frame.id + ":" + c.name(), frame.id, c.name(), rel, field.bubbles.size()});
        }
    }
    std::ofstream os(out_dir / "manifest.json");
    if (!os) throw io::DataError("cannot write manifest in " + out_dir.string());
    os << manifest.to_json().dump(2) << '\n';
    return manifest;
}

}  // namespace uwstereo::bubbles
