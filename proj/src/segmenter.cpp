#include "uwstereo/segmenter.hpp"

#include "uwstereo/nn/checkpoint.hpp"
#include "uwstereo/nn/loss.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

namespace uwstereo::seg {

SegConfig SegConfig::from_json(const nlohmann::json& j, const SegConfig& d) {
    SegConfig c = d;
    c.levels = j.value("levels", c.levels);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.threshold = j.value("threshold", c.threshold);
    c.dilation = j.value("dilation", c.dilation);
    if (c.levels < 1 || c.levels > 8) throw std::invalid_argument("segmenter levels must be in [1, 8]");
    if (c.base_channels < 1) throw std::invalid_argument("segmenter base_channels must be positive");
    if (!(c.threshold > 0 && c.threshold < 1)) throw std::invalid_argument("segmenter threshold must be in (0, 1)");
    if (c.dilation < 0) throw std::invalid_argument("segmenter dilation must be non-negative");
    return c;
}

nlohmann::json SegConfig::to_json() const {
    return {{"levels", levels}, {"base_channels", base_channels}, {"threshold", threshold}, {"dilation", dilation}};
}

AugmentConfig AugmentConfig::from_json(const nlohmann::json& j, const AugmentConfig& d) {
    AugmentConfig c = d;
    c.factor = j.value("factor", c.factor);
    c.scale = j.value("scale", c.scale);
    c.rotate = j.value("rotate", c.rotate);
    c.translate = j.value("translate", c.translate);
    c.max_scale = j.value("max_scale", c.max_scale);
    c.max_rotation = j.value("max_rotation", c.max_rotation);
    c.max_shift = j.value("max_shift", c.max_shift);
    if (c.factor < 1) throw std::invalid_argument("augmentation factor must be at least 1");
    return c;
}

nlohmann::json AugmentConfig::to_json() const {
    return {{"factor", factor},         {"scale", scale},           {"rotate", rotate},
            {"translate", translate},   {"max_scale", max_scale},   {"max_rotation", max_rotation},
            {"max_shift", max_shift}};
}

std::vector<Sample> augment(const std::vector<Sample>& sources, const AugmentConfig& cfg, std::uint64_t seed) {
    if (cfg.factor < 1) throw std::invalid_argument("augmentation factor must be at least 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Sample> out;
    out.reserve(sources.size() * static_cast<std::size_t>(cfg.factor));
    for (const auto& [img, mask] : sources) {
        if (img.width != mask.width || img.height != mask.height)
            throw std::invalid_argument("augment: image and mask sizes differ");
        out.push_back({img, mask});
        for (int k = 1; k < cfg.factor; ++k) {
            const double s = cfg.scale ? 1.0 + cfg.max_scale * u(rng) : 1.0;
            const double a = cfg.rotate ? cfg.max_rotation * u(rng) * std::numbers::pi / 180.0 : 0.0;
            const double tx = cfg.translate ? cfg.max_shift * img.width * u(rng) : 0.0;
            const double ty = cfg.translate ? cfg.max_shift * img.height * u(rng) : 0.0;
            const double cx = 0.5 * (img.width - 1), cy = 0.5 * (img.height - 1);
            const double ca = std::cos(a) / s, sa = std::sin(a) / s;
            Image wi(img.width, img.height, img.channels);
            Mask wm(img.width, img.height, 0);
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x) {
                    // Inverse map: output pixel -> source pixel.
                    const double dx = x - cx - tx, dy = y - cy - ty;
                    const auto sx = static_cast<float>(cx + ca * dx + sa * dy);
                    const auto sy = static_cast<float>(cy - sa * dx + ca * dy);
                    for (int c = 0; c < img.channels; ++c) wi.at(x, y, c) = img.sample(sx, sy, c);
                    const int nx = std::clamp(static_cast<int>(std::lround(sx)), 0, img.width - 1);
                    const int ny = std::clamp(static_cast<int>(std::lround(sy)), 0, img.height - 1);
                    wm.at(x, y) = mask.at(nx, ny);
                }
            out.push_back({std::move(wi), std::move(wm)});
        }
    }
    return out;
}

nn::Network<float> build_unet(const SegConfig& cfg) {
    nn::Network<float> net;
    int x = net.input("image", 1);
    std::vector<int> skips;
    auto block = [&](int src, int ch, const std::string& name) {
        int h = net.relu(net.conv2d(src, ch, 3, name + ".conv1"));
        return net.relu(net.conv2d(h, ch, 3, name + ".conv2"));
    };
    for (int l = 0; l < cfg.levels; ++l) {
        const int ch = cfg.base_channels << l;
        x = block(x, ch, "enc" + std::to_string(l));
        if (l + 1 < cfg.levels) {
            skips.push_back(x);
            x = net.maxpool2(x);
        }
    }
    for (int l = cfg.levels - 2; l >= 0; --l) {
        x = net.upsample2(x);
        x = net.concat({skips[static_cast<std::size_t>(l)], x});
        x = block(x, cfg.base_channels << l, "dec" + std::to_string(l));
    }
    net.set_output(net.conv2d(x, 1, 1, "logit"));
    return net;
}

Segmenter::Segmenter(SegConfig cfg, nn::Network<float> net) : cfg_(cfg), net_(std::move(net)) {}

Segmenter Segmenter::create(const SegConfig& cfg, std::uint64_t seed) {
    auto net = build_unet(cfg);
    net.init_xavier(seed);
    return Segmenter(cfg, std::move(net));
}

namespace {

int padded(int n, int multiple) { return (n + multiple - 1) / multiple * multiple; }

// Gray image into a [1, 1, H', W'] tensor, edge-replicated up to the padded size.
void pack(const Image& img, int ph, int pw, float* dst) {
    const Image g = img.gray();
    for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x)
            dst[static_cast<std::size_t>(y) * pw + x] = g.at(std::min(x, g.width - 1), std::min(y, g.height - 1));
}

}  // namespace

Image Segmenter::probabilities(const Image& img) const {
    const int m = 1 << (cfg_.levels - 1);
    const int ph = padded(img.height, m), pw = padded(img.width, m);
    nn::Tensor<float> t({1, 1, ph, pw});
    pack(img, ph, pw, t.data());
    const auto logits = net_.forward({t});
    Image out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) out.at(x, y) = nn::sigmoid(logits[static_cast<std::size_t>(y) * pw + x]);
    return out;
}

Mask Segmenter::segment(const Image& img) const {
    const Image p = probabilities(img);
    Mask m(img.width, img.height, 0);
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = p.data[i] >= cfg_.threshold ? 1 : 0;
    return m;
}

Mask Segmenter::stereo_mask(const Image& img) const { return dilate(segment(img), cfg_.dilation); }

void Segmenter::save(const std::string& path, const nlohmann::json& extra) const {
    nn::Checkpoint ckpt;
    ckpt.meta = {{"kind", "segmenter"}, {"config", cfg_.to_json()}};
    if (!extra.is_null()) ckpt.meta["extra"] = extra;
    ckpt.networks.emplace("segmenter", net_);
    nn::save_checkpoint(path, ckpt);
}

Segmenter Segmenter::load(const std::string& path) {
    auto ckpt = nn::load_checkpoint(path);
    if (ckpt.meta.value("kind", std::string{}) != "segmenter")
        throw std::runtime_error(path + " is not a segmenter checkpoint");
    const auto cfg = SegConfig::from_json(ckpt.meta.at("config"));
    const auto it = ckpt.networks.find("segmenter");
    if (it == ckpt.networks.end()) throw std::runtime_error(path + " has no segmenter network");
    if (it->second.graph() != build_unet(cfg).graph())
        throw std::runtime_error(path + ": network graph does not match its config");
    return Segmenter(cfg, it->second);
}

nn::LossCurve train_segmenter(Segmenter& seg, const std::vector<Sample>& samples, const nn::TrainConfig& cfg) {
    if (samples.empty()) throw std::invalid_argument("train_segmenter needs at least one sample");
    const int m = 1 << (seg.levels() - 1);
    const int ph = padded(samples[0].first.height, m), pw = padded(samples[0].first.width, m);
    for (const auto& [img, mask] : samples) {
        if (img.width != mask.width || img.height != mask.height)
            throw std::invalid_argument("train_segmenter: image and mask sizes differ");
        if (padded(img.height, m) != ph || padded(img.width, m) != pw)
            throw std::invalid_argument("train_segmenter: all samples must share one (padded) size");
        for (auto v : mask.data)
            if (v > 1) throw std::invalid_argument("train_segmenter: masks must be binary");
    }
    nn::Optimizer<float> opt(cfg);
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    nn::LossCurve curve;
    const std::size_t plane = static_cast<std::size_t>(ph) * pw;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0;
        std::size_t batches = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch)) {
            const int n = static_cast<int>(std::min<std::size_t>(cfg.batch, order.size() - b0));
            nn::Tensor<float> x({n, 1, ph, pw}), y({n, 1, ph, pw}), weight({n, 1, ph, pw});
            for (int i = 0; i < n; ++i) {
                const auto& [img, mask] = samples[order[b0 + static_cast<std::size_t>(i)]];
                pack(img, ph, pw, x.data() + i * plane);
                for (int yy = 0; yy < img.height; ++yy)
                    for (int xx = 0; xx < img.width; ++xx) {
                        const std::size_t k = i * plane + static_cast<std::size_t>(yy) * pw + xx;
                        y[k] = mask.at(xx, yy);
                        weight[k] = 1.0f;
                    }
            }
            const auto tape = seg.net().forward_recorded({x});
            auto loss = nn::cross_entropy(tape.result(), y);
            // Padding pixels carry no label.
            std::size_t labelled = 0;
            for (float w : weight.vec()) labelled += w > 0;
            const float rescale = static_cast<float>(weight.size()) / static_cast<float>(labelled);
            for (std::size_t k = 0; k < weight.size(); ++k) loss.grad[k] *= weight[k] * rescale;
            const auto grads = seg.net().backward(tape, loss.grad);
            opt.step(seg.net(), grads);
            total += loss.value;
            ++batches;
        }
        curve.epoch_loss.push_back(total / static_cast<double>(batches));
        spdlog::debug("segmenter epoch {} loss {:.5f}", epoch + 1, curve.epoch_loss.back());
    }
    return curve;
}

double iou(const Mask& a, const Mask& b) {
    if (a.width != b.width || a.height != b.height) throw std::invalid_argument("iou: mask sizes differ");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        inter += a.data[i] && b.data[i];
        uni += a.data[i] || b.data[i];
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Sample disc_sample(int size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.02);
    const double r = size * (0.15 + 0.25 * u(rng));
    const double cx = r + u(rng) * (size - 1 - 2 * r), cy = r + u(rng) * (size - 1 - 2 * r);
    const double theta = 2 * std::numbers::pi * u(rng);
    const double ramp = 0.5 + 0.3 * u(rng);
    const double contrast = 0.25 + 0.1 * u(rng);
    Image img(size, size);
    Mask mask(size, size, 0);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double t = ((x - 0.5 * size) * std::cos(theta) + (y - 0.5 * size) * std::sin(theta)) / size + 0.5;
            double v = 0.08 + ramp * t;
            const bool inside = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
            if (inside) v += contrast;
            img.at(x, y) = static_cast<float>(std::clamp(v + noise(rng), 0.0, 1.0));
            mask.at(x, y) = inside;
        }
    return {std::move(img), std::move(mask)};
}

}  // namespace uwstereo::seg
