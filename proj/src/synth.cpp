#include "uwstereo/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace uwstereo::synth {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double hash_unit(std::uint64_t seed, std::int64_t i, std::int64_t j) {
    const std::uint64_t h = mix(mix(seed, static_cast<std::uint64_t>(i)), static_cast<std::uint64_t>(j));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double value_noise(double x, double y, double scale, int octaves, std::uint64_t seed) {
    double sum = 0, norm = 0, amp = 1;
    for (int o = 0; o < octaves; ++o) {
        const double s = scale / std::ldexp(1.0, o);
        const double u = x / s, v = y / s;
        const double fu = std::floor(u), fv = std::floor(v);
        const auto i = static_cast<std::int64_t>(fu), j = static_cast<std::int64_t>(fv);
        double tu = u - fu, tv = v - fv;
        tu = tu * tu * (3 - 2 * tu);
        tv = tv * tv * (3 - 2 * tv);
        const std::uint64_t so = mix(seed, static_cast<std::uint64_t>(o));
        const double a = hash_unit(so, i, j), b = hash_unit(so, i + 1, j);
        const double c = hash_unit(so, i, j + 1), d = hash_unit(so, i + 1, j + 1);
        sum += amp * ((a + tu * (b - a)) + tv * ((c + tu * (d - c)) - (a + tu * (b - a))));
        norm += amp;
        amp *= 0.5;
    }
    return sum / norm;
}

double dot_pattern(double x, double y, double spacing, double radius, double density, std::uint64_t seed) {
    const auto ci = static_cast<std::int64_t>(std::floor(x / spacing));
    const auto cj = static_cast<std::int64_t>(std::floor(y / spacing));
    double best = 0;
    for (std::int64_t j = cj - 1; j <= cj + 1; ++j)
        for (std::int64_t i = ci - 1; i <= ci + 1; ++i) {
            if (hash_unit(seed, i, j) >= density) continue;
            const double px = (static_cast<double>(i) + 0.2 + 0.6 * hash_unit(seed + 1, i, j)) * spacing;
            const double py = (static_cast<double>(j) + 0.2 + 0.6 * hash_unit(seed + 2, i, j)) * spacing;
            const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
            best = std::max(best, std::exp(-d2 / (2 * radius * radius)));
        }
    return best;
}

double stripes(double x, double period, double phase) {
    return 0.5 + 0.5 * std::sin(2 * std::numbers::pi * x / period + phase);
}

bool Layer::covers(double x, double y) const {
    switch (shape) {
        case Shape::Full: return true;
        case Shape::Rect: return x >= x0 && x < x1 && y >= y0 && y < y1;
        case Shape::Ellipse: {
            const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
            const double rx = 0.5 * (x1 - x0), ry = 0.5 * (y1 - y0);
            const double u = (x - cx) / rx, v = (y - cy) / ry;
            return u * u + v * v <= 1.0;
        }
    }
    return false;
}

namespace {

struct Shade {
    float plain;
    float patterned;
};

Shade shade(const SceneSpec& spec, const Layer& l, double x, double y) {
    const double base = 0.5 + l.contrast * (value_noise(x, y, l.texture_scale, 4, l.texture_seed) - 0.5);
    double p = base;
    if (spec.pattern)
        p += spec.pattern_strength *
             dot_pattern(x, y, spec.pattern_spacing, spec.pattern_radius, spec.pattern_density, spec.pattern_seed);
    return {static_cast<float>(std::clamp(base, 0.0, 1.0)), static_cast<float>(std::clamp(p, 0.0, 1.0))};
}

}  // namespace

SceneRender render_scene(const SceneSpec& spec) {
    const int w = spec.width, h = spec.height;
    SceneRender out;
    StereoFrame& f = out.frame;
    f.left = Image(w, h);
    f.right = Image(w, h);
    out.left_plain = Image(w, h);
    out.right_plain = Image(w, h);
    f.left_mask = Mask(w, h, 0);
    f.right_mask = Mask(w, h, 0);
    f.gt_left = DisparityMap(w, h);
    f.gt_right = DisparityMap(w, h);
    const int nl = static_cast<int>(spec.layers.size());

#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int k = nl - 1; k >= 0; --k) {
                const Layer& l = spec.layers[static_cast<std::size_t>(k)];
                if (!l.covers(x, y)) continue;
                const Shade s = shade(spec, l, x, y);
                f.left.at(x, y) = s.patterned;
                out.left_plain.at(x, y) = s.plain;
                f.gt_left->at(x, y) = static_cast<float>(l.disparity(x, y));
                f.left_mask->at(x, y) = l.target;
                break;
            }
            for (int k = nl - 1; k >= 0; --k) {
                const Layer& l = spec.layers[static_cast<std::size_t>(k)];
                const double xl = (x + l.d0 + l.dy * y) / (1.0 - l.dx);
                if (!l.covers(xl, y)) continue;
                const Shade s = shade(spec, l, xl, y);
                f.right.at(x, y) = s.patterned;
                out.right_plain.at(x, y) = s.plain;
                f.gt_right->at(x, y) = static_cast<float>(l.disparity(xl, y));
                f.right_mask->at(x, y) = l.target;
                break;
            }
        }
    }
    if (spec.noise_sigma > 0) {
        std::mt19937_64 rng(spec.noise_seed);
        std::normal_distribution<float> n(0.0f, static_cast<float>(spec.noise_sigma));
        for (Image* img : {&f.left, &f.right})
            for (auto& v : img->data) v = std::clamp(v + n(rng), 0.0f, 1.0f);
    }
    float mx = 0;
    for (float d : f.gt_left->data)
        if (valid_disparity(d)) mx = std::max(mx, d);
    out.max_disparity = mx;
    return out;
}

SceneSpec fronto_parallel_plane(int width, int height, double disparity, std::uint64_t seed) {
    SceneSpec s;
    s.width = width;
    s.height = height;
    s.pattern_seed = mix(seed, 1);
    Layer l;
    l.d0 = disparity;
    l.texture_seed = mix(seed, 2);
    s.layers.push_back(l);
    return s;
}

SceneSpec two_plane_scene(int width, int height, double d_back, double d_front, int x0, int x1,
                          std::uint64_t seed) {
    SceneSpec s = fronto_parallel_plane(width, height, d_back, seed);
    Layer front;
    front.shape = Layer::Shape::Rect;
    front.x0 = x0;
    front.x1 = x1;
    front.y0 = -1e9;
    front.y1 = 1e9;
    front.d0 = d_front;
    front.texture_seed = mix(seed, 3);
    front.texture_scale = 16.0;
    s.layers.push_back(front);
    return s;
}

SceneSpec random_scene(int width, int height, double d_min, double d_max, std::uint64_t seed) {
    std::mt19937_64 rng(mix(seed, 99));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double range = d_max - d_min;
    SceneSpec s;
    s.width = width;
    s.height = height;
    s.pattern_seed = mix(seed, 1);

    Layer bg;
    const double lo = d_min, hi = d_min + 0.35 * range;
    const double at_origin = lo + u(rng) * (hi - lo);
    // Slope chosen so the plane stays inside [lo, hi] over the image.
    const double sx = (u(rng) - 0.5) * (hi - lo) / std::max(1, width);
    const double sy = (u(rng) - 0.5) * (hi - lo) / std::max(1, height);
    const double corners[4] = {at_origin, at_origin + sx * width, at_origin + sy * height,
                               at_origin + sx * width + sy * height};
    const double cmin = *std::min_element(corners, corners + 4), cmax = *std::max_element(corners, corners + 4);
    bg.d0 = at_origin + std::max(0.0, lo - cmin) - std::max(0.0, cmax - hi);
    bg.dx = sx;
    bg.dy = sy;
    bg.texture_seed = mix(seed, 2);
    bg.texture_scale = 20 + 20 * u(rng);
    s.layers.push_back(bg);

    const int objects = 2 + static_cast<int>(u(rng) * 3);
    std::vector<Layer> fg;
    for (int k = 0; k < objects; ++k) {
        Layer o;
        o.shape = u(rng) < 0.5 ? Layer::Shape::Rect : Layer::Shape::Ellipse;
        const double ow = width * (0.15 + 0.3 * u(rng)), oh = height * (0.2 + 0.4 * u(rng));
        o.x0 = u(rng) * (width - ow);
        o.y0 = u(rng) * (height - oh);
        o.x1 = o.x0 + ow;
        o.y1 = o.y0 + oh;
        o.d0 = d_min + (0.45 + 0.55 * u(rng)) * range;
        o.texture_seed = mix(seed, 10 + static_cast<std::uint64_t>(k));
        o.texture_scale = 10 + 20 * u(rng);
        o.contrast = 0.4 + 0.4 * u(rng);
        fg.push_back(o);
    }
    std::sort(fg.begin(), fg.end(), [](const Layer& a, const Layer& b) { return a.d0 < b.d0; });
    s.layers.insert(s.layers.end(), fg.begin(), fg.end());
    return s;
}

}  // namespace uwstereo::synth
