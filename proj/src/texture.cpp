#include "uwstereo/texture.hpp"

#include "uwstereo/nn/checkpoint.hpp"
#include "uwstereo/nn/loss.hpp"
#include "uwstereo/synth.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

namespace uwstereo::texture {

TextureConfig TextureConfig::from_json(const nlohmann::json& j, const TextureConfig& d) {
    TextureConfig c = d;
    c.channels = j.value("channels", c.channels);
    c.convs = j.value("convs", c.convs);
    c.lambda = j.value("lambda", c.lambda);
    c.crop = j.value("crop", c.crop);
    c.tile = j.value("tile", c.tile);
    c.overlap = j.value("overlap", c.overlap);
    c.match_brightness = j.value("match_brightness", c.match_brightness);
    if (c.channels < 1 || c.convs < 1) throw std::invalid_argument("texture channels and convs must be positive");
    if (c.lambda < 0) throw std::invalid_argument("texture lambda must be non-negative");
    if (c.crop < 4 || c.crop % 4) throw std::invalid_argument("texture crop must be a positive multiple of 4");
    if (c.tile < 16 || c.overlap < 0 || 2 * c.overlap >= c.tile)
        throw std::invalid_argument("texture tile must be >= 16 and larger than twice the overlap");
    return c;
}

nlohmann::json TextureConfig::to_json() const {
    return {{"channels", channels}, {"convs", convs},     {"lambda", lambda},
            {"crop", crop},         {"tile", tile},       {"overlap", overlap},
            {"match_brightness", match_brightness}};
}

nn::Network<float> build_pyramid_net(const TextureConfig& cfg) {
    nn::Network<float> net;
    const int x = net.input("image", 1);
    const int half = net.maxpool2(x, "down1");
    const int quarter = net.maxpool2(half, "down2");
    auto stack = [&](int h, const std::string& name) {
        for (int i = 0; i < cfg.convs; ++i) h = net.relu(net.conv2d(h, cfg.channels, 3, name + ".conv" + std::to_string(i)));
        return h;
    };
    int h = stack(quarter, "r2");
    h = stack(net.concat({half, net.upsample2(h)}), "r1");
    h = stack(net.concat({x, net.upsample2(h)}), "r0");
    net.set_output(net.conv2d(h, 1, 1, "head"));
    return net;
}

nn::Network<float> create_net(const TextureConfig& cfg, std::uint64_t seed) {
    auto net = build_pyramid_net(cfg);
    net.init_xavier(seed);
    for (auto& p : net.params())
        if (p.name.starts_with("head.")) std::fill(p.value.vec().begin(), p.value.vec().end(), 0.0f);
    return net;
}

namespace {

int round_up4(int n) { return (n + 3) / 4 * 4; }

// Tile starts covering [0, n) with tiles of `tile` px overlapping by `overlap`.
std::vector<int> tile_starts(int n, int tile, int overlap) {
    if (n <= tile) return {0};
    std::vector<int> s;
    for (int p = 0;; p += tile - overlap) {
        if (p + tile >= n) {
            s.push_back(n - tile);
            break;
        }
        s.push_back(p);
    }
    return s;
}

// Feather weight of position i in a tile of length len starting at `start` in [0, n).
float feather(int i, int len, int start, int n, int overlap) {
    if (overlap <= 0) return 1.0f;
    float w = 1.0f;
    if (start > 0) w = std::min(w, (i + 0.5f) / static_cast<float>(overlap));
    if (start + len < n) w = std::min(w, (len - i - 0.5f) / static_cast<float>(overlap));
    return w;
}

}  // namespace

Image run_tiled(const nn::Network<float>& net, const Image& img, int tile, int overlap) {
    const Image g = img.gray();
    const int w = g.width, h = g.height;
    Image acc(w, h), weight(w, h);
    const auto xs = tile_starts(w, tile, overlap), ys = tile_starts(h, tile, overlap);
    const int tw = std::min(tile, w), th = std::min(tile, h);
    const int pw = round_up4(tw), ph = round_up4(th);
    for (int y0 : ys)
        for (int x0 : xs) {
            nn::Tensor<float> t({1, 1, ph, pw});
            for (int y = 0; y < ph; ++y)
                for (int x = 0; x < pw; ++x)
                    t[static_cast<std::size_t>(y) * pw + x] = g.at(x0 + std::min(x, tw - 1), y0 + std::min(y, th - 1));
            const auto out = net.forward({t});
            for (int y = 0; y < th; ++y) {
                const float wy = feather(y, th, y0, h, overlap);
                for (int x = 0; x < tw; ++x) {
                    const float wgt = wy * feather(x, tw, x0, w, overlap);
                    acc.at(x0 + x, y0 + y) += wgt * out[static_cast<std::size_t>(y) * pw + x];
                    weight.at(x0 + x, y0 + y) += wgt;
                }
            }
        }
    for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] /= weight.data[i];
    return acc;
}

Image restore(const nn::Network<float>& r, const Image& img, const TextureConfig& cfg) {
    const Image g = img.gray();
    Image out = run_tiled(r, g, cfg.tile, cfg.overlap);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::clamp(g.data[i] + out.data[i], 0.0f, 1.0f);
    return out;
}

Image detect(const nn::Network<float>& d, const Image& img, const TextureConfig& cfg) {
    return run_tiled(d, img, cfg.tile, cfg.overlap);
}

Image match_brightness(const Image& clean, const Image& reference) {
    if (!clean.same_size(reference)) throw std::invalid_argument("match_brightness: sizes differ");
    const Image c = clean.gray(), r = reference.gray();
    const double n = static_cast<double>(c.data.size());
    double sc = 0, sr = 0, scc = 0, scr = 0;
    for (std::size_t i = 0; i < c.data.size(); ++i) {
        sc += c.data[i];
        sr += r.data[i];
        scc += double(c.data[i]) * c.data[i];
        scr += double(c.data[i]) * r.data[i];
    }
    const double var = scc - sc * sc / n;
    const double gain = var > 1e-12 ? (scr - sc * sr / n) / var : 1.0;
    const double bias = (sr - gain * sc) / n;
    Image out = c;
    for (auto& v : out.data) v = static_cast<float>(gain * v + bias);
    return out;
}

std::vector<Pair> difference_pairs(const std::vector<Pair>& pairs) {
    std::vector<Pair> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        if (!p.input.same_size(p.target)) throw std::invalid_argument("difference_pairs: sizes differ");
        Image in = p.input.gray(), diff = in;
        const Image t = p.target.gray();
        for (std::size_t i = 0; i < diff.data.size(); ++i) diff.data[i] -= t.data[i];
        out.push_back({std::move(in), std::move(diff)});
    }
    return out;
}

namespace {

void check_pairs(const std::vector<Pair>& pairs, int crop) {
    if (pairs.empty()) throw std::invalid_argument("training needs at least one pair");
    for (const auto& p : pairs) {
        if (!p.input.same_size(p.target))
            throw std::invalid_argument("training pair is misaligned: input and target sizes differ");
        if (p.input.width < crop || p.input.height < crop)
            throw std::invalid_argument("training images must be at least the crop size (" + std::to_string(crop) + ")");
    }
}

// Supervised regression of the network output onto target - (residual ? input : 0).
nn::LossCurve train_regression(nn::Network<float>& net, const std::vector<Pair>& pairs, const TextureConfig& tcfg,
                               const nn::TrainConfig& cfg, bool residual, bool match) {
    nn::LossCurve curve;
    if (cfg.epochs <= 0) return curve;
    const int c = tcfg.crop;
    check_pairs(pairs, c);
    std::vector<Image> inputs, targets;
    for (const auto& p : pairs) {
        Image in = p.input.gray();
        Image t = match ? match_brightness(p.target, in) : p.target.gray();
        if (residual)
            for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] -= in.data[i];
        inputs.push_back(std::move(in));
        targets.push_back(std::move(t));
    }
    nn::Optimizer<float> opt(cfg);
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t plane = static_cast<std::size_t>(c) * c;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0;
        std::size_t batches = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch)) {
            const int n = static_cast<int>(std::min<std::size_t>(cfg.batch, order.size() - b0));
            nn::Tensor<float> x({n, 1, c, c}), y({n, 1, c, c});
            for (int i = 0; i < n; ++i) {
                const std::size_t k = order[b0 + static_cast<std::size_t>(i)];
                const Image& in = inputs[k];
                const int ox = std::uniform_int_distribution<int>(0, in.width - c)(rng);
                const int oy = std::uniform_int_distribution<int>(0, in.height - c)(rng);
                for (int yy = 0; yy < c; ++yy)
                    for (int xx = 0; xx < c; ++xx) {
                        x[i * plane + static_cast<std::size_t>(yy) * c + xx] = in.at(ox + xx, oy + yy);
                        y[i * plane + static_cast<std::size_t>(yy) * c + xx] = targets[k].at(ox + xx, oy + yy);
                    }
            }
            const auto tape = net.forward_recorded({x});
            const auto loss = nn::mse(tape.result(), y);
            opt.step(net, net.backward(tape, loss.grad));
            total += loss.value;
            ++batches;
        }
        curve.epoch_loss.push_back(total / static_cast<double>(batches));
        spdlog::debug("texture epoch {} mse {:.6f}", epoch + 1, curve.epoch_loss.back());
    }
    return curve;
}

}  // namespace

nn::LossCurve train_supervised(nn::Network<float>& r, const std::vector<Pair>& pairs, const TextureConfig& tcfg,
                               const nn::TrainConfig& cfg) {
    return train_regression(r, pairs, tcfg, cfg, true, tcfg.match_brightness);
}

nn::LossCurve train_detector(nn::Network<float>& d, const std::vector<Pair>& pairs, const TextureConfig& tcfg,
                             const nn::TrainConfig& cfg) {
    return train_regression(d, pairs, tcfg, cfg, false, false);
}

template <typename T>
UnsupervisedLoss<T> unsupervised_loss(const nn::Network<T>& r, const nn::Network<T>& d, const nn::Tensor<T>& in,
                                      double lambda, bool want_grads) {
    if (!(lambda >= 0)) throw std::invalid_argument("unsupervised loss weight lambda must be non-negative");
    UnsupervisedLoss<T> out;
    const auto rt = r.forward_recorded({in});
    const auto& res = rt.result();
    nn::Tensor<T> restored = in;
    for (std::size_t i = 0; i < restored.size(); ++i) restored[i] += res[i];
    const auto n = static_cast<double>(res.size());
    double fid = 0;
    for (std::size_t i = 0; i < res.size(); ++i) fid += double(res[i]) * res[i];
    out.fidelity = fid / n;

    const auto dt = d.forward_recorded({restored});
    const auto& resp = dt.result();
    double det = 0;
    for (std::size_t i = 0; i < resp.size(); ++i) det += double(resp[i]) * resp[i];
    out.detector = det / static_cast<double>(resp.size());
    out.value = out.fidelity + lambda * out.detector;
    if (!want_grads) return out;

    // d/d residual: 2 r / n from the fidelity term plus the detector term
    // routed through D's input (D's own parameters get no gradient).
    nn::Tensor<T> g_res(res.shape());
    for (std::size_t i = 0; i < res.size(); ++i) g_res[i] = static_cast<T>(2.0 * res[i] / n);
    if (lambda > 0) {
        nn::Tensor<T> g_resp(resp.shape());
        const double scale = 2.0 * lambda / static_cast<double>(resp.size());
        for (std::size_t i = 0; i < resp.size(); ++i) g_resp[i] = static_cast<T>(scale * resp[i]);
        const auto gd = d.backward(dt, g_resp, false, true);
        const auto& g_in = gd.inputs.at(0);
        for (std::size_t i = 0; i < g_res.size(); ++i) g_res[i] += g_in[i];
    }
    out.grads = r.backward(rt, g_res);
    return out;
}

template UnsupervisedLoss<float> unsupervised_loss(const nn::Network<float>&, const nn::Network<float>&,
                                                   const nn::Tensor<float>&, double, bool);
template UnsupervisedLoss<double> unsupervised_loss(const nn::Network<double>&, const nn::Network<double>&,
                                                    const nn::Tensor<double>&, double, bool);

nn::LossCurve train_unsupervised(nn::Network<float>& r, const nn::Network<float>& d, const std::vector<Image>& images,
                                 const TextureConfig& tcfg, const nn::TrainConfig& cfg) {
    if (tcfg.lambda < 0) throw std::invalid_argument("unsupervised loss weight lambda must be non-negative");
    nn::LossCurve curve;
    if (cfg.epochs <= 0) return curve;
    const int c = tcfg.crop;
    if (images.empty()) throw std::invalid_argument("unsupervised training needs at least one image");
    std::vector<Image> gray;
    for (const auto& img : images) {
        if (img.width < c || img.height < c)
            throw std::invalid_argument("training images must be at least the crop size (" + std::to_string(c) + ")");
        gray.push_back(img.gray());
    }
    nn::Optimizer<float> opt(cfg);
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(gray.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t plane = static_cast<std::size_t>(c) * c;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0;
        std::size_t batches = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch)) {
            const int n = static_cast<int>(std::min<std::size_t>(cfg.batch, order.size() - b0));
            nn::Tensor<float> x({n, 1, c, c});
            for (int i = 0; i < n; ++i) {
                const Image& in = gray[order[b0 + static_cast<std::size_t>(i)]];
                const int ox = std::uniform_int_distribution<int>(0, in.width - c)(rng);
                const int oy = std::uniform_int_distribution<int>(0, in.height - c)(rng);
                for (int yy = 0; yy < c; ++yy)
                    for (int xx = 0; xx < c; ++xx)
                        x[i * plane + static_cast<std::size_t>(yy) * c + xx] = in.at(ox + xx, oy + yy);
            }
            auto loss = unsupervised_loss(r, d, x, tcfg.lambda);
            opt.step(r, loss.grads);
            total += loss.value;
            ++batches;
        }
        curve.epoch_loss.push_back(total / static_cast<double>(batches));
        spdlog::debug("unsupervised epoch {} loss {:.6f}", epoch + 1, curve.epoch_loss.back());
    }
    return curve;
}

double restore_mse(const nn::Network<float>& r, const std::vector<Pair>& pairs, const TextureConfig& cfg) {
    double total = 0;
    std::size_t n = 0;
    for (const auto& p : pairs) {
        const Image out = restore(r, p.input, cfg), t = p.target.gray();
        for (std::size_t i = 0; i < out.data.size(); ++i) total += std::pow(double(out.data[i]) - t.data[i], 2);
        n += out.data.size();
    }
    return n ? total / static_cast<double>(n) : 0.0;
}

double detector_energy(const nn::Network<float>& d, const std::vector<Image>& images, const TextureConfig& cfg) {
    double total = 0;
    std::size_t n = 0;
    for (const auto& img : images) {
        const Image out = detect(d, img, cfg);
        for (float v : out.data) total += double(v) * v;
        n += out.data.size();
    }
    return n ? total / static_cast<double>(n) : 0.0;
}

Image stripe_image(int width, int height, const StripeSpec& s) {
    Image out(width, height);
    const double ca = std::cos(s.angle), sa = std::sin(s.angle);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            out.at(x, y) = static_cast<float>(
                s.amplitude * std::sin(2 * std::numbers::pi * (x * ca + y * sa) / s.period + s.phase));
    return out;
}

Image texture_image(int width, int height, std::uint64_t seed) {
    Image out(width, height);
    std::mt19937_64 rng(seed);
    const double scale = std::uniform_real_distribution<double>(16.0, 32.0)(rng);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            out.at(x, y) = static_cast<float>(0.2 + 0.6 * synth::value_noise(x, y, scale, 3, seed));
    return out;
}

StripeSample stripe_sample(int size, std::uint64_t seed) {
    std::mt19937_64 rng(synth::mix(seed, 0x5717));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    StripeSample s;
    s.stripes.period = 6 + 4 * u(rng);
    s.stripes.phase = 2 * std::numbers::pi * u(rng);
    s.stripes.amplitude = 0.1 + 0.1 * u(rng);
    s.clean = texture_image(size, size, seed);
    s.degraded = stripe_image(size, size, s.stripes);
    for (std::size_t i = 0; i < s.degraded.data.size(); ++i)
        s.degraded.data[i] = std::clamp(s.degraded.data[i] + s.clean.data[i], 0.0f, 1.0f);
    return s;
}

Pair pattern_pair(int size, std::uint64_t seed) {
    const synth::SceneSpec spec;  // projector defaults
    Pair p;
    p.target = texture_image(size, size, seed);
    p.input = p.target;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            p.input.at(x, y) = static_cast<float>(std::clamp(
                p.target.at(x, y) + spec.pattern_strength * synth::dot_pattern(x, y, spec.pattern_spacing,
                                                                               spec.pattern_radius,
                                                                               spec.pattern_density, seed ^ 0x9e37),
                0.0, 1.0));
    return p;
}

void save_net(const std::string& path, const nn::Network<float>& net, const std::string& kind,
              const TextureConfig& cfg, const nlohmann::json& extra) {
    nn::Checkpoint ckpt;
    ckpt.meta = {{"kind", kind}, {"config", cfg.to_json()}};
    if (!extra.is_null()) ckpt.meta["extra"] = extra;
    ckpt.networks.emplace(kind, net);
    nn::save_checkpoint(path, ckpt);
}

nn::Network<float> load_net(const std::string& path, const std::string& kind, TextureConfig* cfg) {
    auto ckpt = nn::load_checkpoint(path);
    if (ckpt.meta.value("kind", std::string{}) != kind)
        throw std::runtime_error(path + " is not a '" + kind + "' checkpoint");
    const auto c = TextureConfig::from_json(ckpt.meta.at("config"));
    if (cfg) *cfg = c;
    auto it = ckpt.networks.find(kind);
    if (it == ckpt.networks.end()) throw std::runtime_error(path + " has no '" + kind + "' network");
    if (it->second.graph() != build_pyramid_net(c).graph())
        throw std::runtime_error(path + ": network graph does not match its config");
    return it->second;
}

}  // namespace uwstereo::texture
