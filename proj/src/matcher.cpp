#include "uwstereo/matcher.hpp"

#include "uwstereo/nn/loss.hpp"
#include "uwstereo/nn/ops.hpp"

#include <Eigen/Core>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace uwstereo::stereo {

void MatcherConfig::validate() const {
    if (scales < 1) throw std::invalid_argument("matcher scales must be at least 1");
    if (channels < 1 || layers_per_scale < 1 || hidden < 1 || features < 1)
        throw std::invalid_argument("matcher channels, layers, hidden and features must be positive");
    const int p = patch_size();
    if (p < 1 || p % (1 << (scales - 1)) != 0)
        throw std::invalid_argument("patch size " + std::to_string(p) + " is not divisible by 2^(scales-1)");
    for (int s = 0; s < scales; ++s) {
        const int size = p >> s, c = (p / 2) >> s;
        if (c - layers_per_scale < 0 || c + layers_per_scale > size - 1)
            throw std::invalid_argument("receptive field of scale " + std::to_string(s) + " exceeds the " +
                                        std::to_string(size) + " px patch");
    }
}

MatcherConfig MatcherConfig::from_json(const nlohmann::json& j, const MatcherConfig& d) {
    MatcherConfig c = d;
    c.scales = j.value("scales", c.scales);
    c.patch = j.value("patch", c.patch);
    c.channels = j.value("channels", c.channels);
    c.layers_per_scale = j.value("layers_per_scale", c.layers_per_scale);
    c.hidden = j.value("hidden", c.hidden);
    c.features = j.value("features", c.features);
    c.validate();
    return c;
}

nlohmann::json MatcherConfig::to_json() const {
    return {{"scales", scales},   {"patch", patch}, {"channels", channels},
            {"layers_per_scale", layers_per_scale}, {"hidden", hidden}, {"features", features}};
}

Image normalize_local(const Image& img, int window) {
    if (window < 1) throw std::invalid_argument("normalization window must be positive");
    const Image g = img.gray();
    const int w = g.width, h = g.height, c = window / 2;
    // Integral images of value, square and count with one row/column of zeros.
    const int iw = w + 1;
    std::vector<double> s1(static_cast<std::size_t>(iw) * (h + 1), 0.0), s2(s1.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double v = g.at(x, y);
            const std::size_t k = static_cast<std::size_t>(y + 1) * iw + x + 1;
            s1[k] = v + s1[k - 1] + s1[k - iw] - s1[k - iw - 1];
            s2[k] = v * v + s2[k - 1] + s2[k - iw] - s2[k - iw - 1];
        }
    auto rect = [&](const std::vector<double>& s, int x0, int y0, int x1, int y1) {
        return s[static_cast<std::size_t>(y1) * iw + x1] - s[static_cast<std::size_t>(y0) * iw + x1] -
               s[static_cast<std::size_t>(y1) * iw + x0] + s[static_cast<std::size_t>(y0) * iw + x0];
    };
    Image out(w, h);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        const int y0 = std::max(0, y - c), y1 = std::min(h, y - c + window);
        for (int x = 0; x < w; ++x) {
            const int x0 = std::max(0, x - c), x1 = std::min(w, x - c + window);
            const double n = static_cast<double>(x1 - x0) * (y1 - y0);
            const double mean = rect(s1, x0, y0, x1, y1) / n;
            const double var = std::max(0.0, rect(s2, x0, y0, x1, y1) / n - mean * mean);
            out.at(x, y) = static_cast<float>((g.at(x, y) - mean) / std::sqrt(var + 1e-4));
        }
    }
    return out;
}

nn::Network<float> Matcher::build(const MatcherConfig& cfg, int* concat_node) {
    cfg.validate();
    const int p = cfg.patch_size(), l = cfg.layers_per_scale;
    nn::Network<float> net;
    int level = net.input("patch", 1);
    std::vector<int> outs;
    for (int s = 0; s < cfg.scales; ++s) {
        if (s > 0) level = net.maxpool2(level, "pool" + std::to_string(s));
        const int k = ((p / 2) >> s) - l;
        int h = net.crop(level, k, k, 2 * l + 1, 2 * l + 1, "s" + std::to_string(s) + ".crop");
        for (int i = 0; i < l; ++i)
            h = net.relu(net.conv2d(h, cfg.channels, 3, "s" + std::to_string(s) + ".conv" + std::to_string(i), 1, 0));
        outs.push_back(h);
    }
    const int cat = net.concat(outs, "concat");
    if (concat_node) *concat_node = cat;
    const int f = net.relu(net.linear(cat, cfg.scales * cfg.channels, cfg.hidden, "fc1"));
    net.set_output(net.linear(f, cfg.hidden, cfg.features, "fc2"));
    return net;
}

Matcher Matcher::create(const MatcherConfig& cfg, std::uint64_t seed) {
    Matcher m;
    m.cfg_ = cfg;
    m.net_ = build(cfg, &m.concat_node_);
    m.net_.init_xavier(seed);
    return m;
}

namespace {

const nn::Tensor<float>& param(const nn::Network<float>& net, const std::string& name) {
    for (const auto& p : net.params())
        if (p.name == name) return p.value;
    throw std::logic_error("matcher has no parameter " + name);
}

}  // namespace

nn::Tensor<float> Matcher::full_maps(const nn::Tensor<float>& patches) const {
    nn::Network<float> full;
    int level = full.input("patch", 1);
    std::vector<int> outs;
    for (int s = 0; s < cfg_.scales; ++s) {
        if (s > 0) level = full.maxpool2(level);
        int h = level;
        for (int i = 0; i < cfg_.layers_per_scale; ++i)
            h = full.relu(full.conv2d(h, cfg_.channels, 3, "s" + std::to_string(s) + ".conv" + std::to_string(i), 1, 1));
        for (int u = 0; u < s; ++u) h = full.upsample2(h);
        outs.push_back(h);
    }
    full.set_output(full.concat(outs));
    for (auto& p : full.params()) p.value = param(net_, p.name);
    return full.forward({patches});
}

nn::Tensor<float> Matcher::describe(const nn::Tensor<float>& patches) const {
    const int p = patch_size();
    if (patches.rank() != 4 || patches.dim(1) != 1 || patches.dim(2) != p || patches.dim(3) != p)
        throw std::invalid_argument("describe expects [N, 1, " + std::to_string(p) + ", " + std::to_string(p) +
                                    "] patches");
    return net_.forward({patches});
}

std::vector<float> Matcher::describe(const Image& patch) const {
    const int p = patch_size();
    if (patch.width != p || patch.height != p)
        throw std::invalid_argument("patch is " + std::to_string(patch.width) + "x" + std::to_string(patch.height) +
                                    ", matcher expects " + std::to_string(p));
    const Image g = patch.gray();
    nn::Tensor<float> t({1, 1, p, p});
    std::copy(g.data.begin(), g.data.end(), t.data());
    const auto d = describe(t);
    return {d.data(), d.data() + d.size()};
}

double Matcher::similarity(const Image& left_patch, const Image& right_patch, bool* degenerate) const {
    const auto a = describe(left_patch), b = describe(right_patch);
    const auto c = nn::cosine_similarity<float>(a, b);
    if (degenerate) *degenerate = c.degenerate;
    return c.value;
}

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Valid 3x3 convolution with dilation `dil` plus ReLU on a [cin, h, w] map,
// processed in row bands to bound the im2col buffer.
std::vector<float> dilated_conv_relu(const std::vector<float>& in, int cin, int h, int w, const float* weight,
                                     const float* bias, int cout, int dil) {
    const int oh = h - 2 * dil, ow = w - 2 * dil;
    std::vector<float> out(static_cast<std::size_t>(cout) * oh * ow);
    constexpr int kBand = 32;
    const int bands = (oh + kBand - 1) / kBand;
#pragma omp parallel for schedule(dynamic)
    for (int b = 0; b < bands; ++b) {
        const int r0 = b * kBand, rows = std::min(kBand, oh - r0), ih = rows + 2 * dil;
        std::vector<float> src(static_cast<std::size_t>(cin) * ih * w), dst(static_cast<std::size_t>(cout) * rows * ow);
        for (int c = 0; c < cin; ++c)
            std::copy_n(in.data() + (static_cast<std::size_t>(c) * h + r0) * w, static_cast<std::size_t>(ih) * w,
                        src.data() + static_cast<std::size_t>(c) * ih * w);
        nn::ops::ConvGeometry g{cin, ih, w, cout, 3, 1, 0, dil};
        nn::ops::conv2d_forward(g, src.data(), weight, bias, dst.data());
        for (int c = 0; c < cout; ++c)
            for (int r = 0; r < rows; ++r)
                for (int x = 0; x < ow; ++x)
                    out[(static_cast<std::size_t>(c) * oh + r0 + r) * ow + x] =
                        std::max(0.0f, dst[(static_cast<std::size_t>(c) * rows + r) * ow + x]);
    }
    return out;
}

}  // namespace

DescriptorMap Matcher::describe_dense(const Image& normalized) const {
    if (normalized.channels != 1) throw std::invalid_argument("describe_dense expects a normalized gray image");
    const int w = normalized.width, h = normalized.height;
    const int p = patch_size(), c = p / 2, l = cfg_.layers_per_scale, ch = cfg_.channels;
    // Zero-padded image: patch pixel (q, r) of the patch at (x, y) is z(x + q, y + r).
    const int pw = w + p - 1, ph = h + p - 1;
    std::vector<float> pooled(static_cast<std::size_t>(pw) * ph, 0.0f);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) pooled[static_cast<std::size_t>(y + c) * pw + x + c] = normalized.at(x, y);

    std::vector<std::vector<float>> scale_out;
    for (int s = 0; s < cfg_.scales; ++s) {
        const int step = 1 << s;
        if (s > 0) {
            // Sliding 2^s box maximum: the dense counterpart of one more maxpool.
            const int half = step / 2;
            std::vector<float> next(pooled.size(), 0.0f);
#pragma omp parallel for schedule(static)
            for (int y = 0; y < ph; ++y)
                for (int x = 0; x < pw; ++x) {
                    auto at = [&](int xx, int yy) {
                        return xx < pw && yy < ph ? pooled[static_cast<std::size_t>(yy) * pw + xx] : 0.0f;
                    };
                    next[static_cast<std::size_t>(y) * pw + x] =
                        std::max({at(x, y), at(x + half, y), at(x, y + half), at(x + half, y + half)});
                }
            pooled.swap(next);
        }
        // Crop window of scale s starts at pooled cell (c >> s) - l, i.e. padded offset ((c >> s) - l) * 2^s.
        const int off = ((c >> s) - l) * step;
        int mh = h + 2 * l * step, mw = w + 2 * l * step;
        std::vector<float> map(static_cast<std::size_t>(mh) * mw);
        for (int y = 0; y < mh; ++y)
            std::copy_n(pooled.data() + static_cast<std::size_t>(y + off) * pw + off, mw,
                        map.data() + static_cast<std::size_t>(y) * mw);
        int cin = 1;
        for (int i = 0; i < l; ++i) {
            const std::string name = "s" + std::to_string(s) + ".conv" + std::to_string(i);
            map = dilated_conv_relu(map, cin, mh, mw, param(net_, name + ".weight").data(),
                                    param(net_, name + ".bias").data(), ch, step);
            mh -= 2 * step;
            mw -= 2 * step;
            cin = ch;
        }
        scale_out.push_back(std::move(map));
    }

    const auto& w1 = param(net_, "fc1.weight");
    const auto& b1 = param(net_, "fc1.bias");
    const auto& w2 = param(net_, "fc2.weight");
    const auto& b2 = param(net_, "fc2.bias");
    const int hidden = cfg_.hidden, feat = cfg_.features, cat = cfg_.scales * ch;
    Eigen::Map<const RowMatrix> W1(w1.data(), hidden, cat), W2(w2.data(), feat, hidden);
    Eigen::Map<const Eigen::VectorXf> B1(b1.data(), hidden), B2(b2.data(), feat);

    DescriptorMap out;
    out.width = w;
    out.height = h;
    out.features = feat;
    out.data.resize(static_cast<std::size_t>(w) * h * feat);
    const std::size_t npix = static_cast<std::size_t>(w) * h;
    constexpr std::size_t kChunk = 4096;
    const auto chunks = static_cast<long>((npix + kChunk - 1) / kChunk);
#pragma omp parallel for schedule(dynamic)
    for (long k = 0; k < chunks; ++k) {
        const std::size_t p0 = static_cast<std::size_t>(k) * kChunk;
        const auto n = static_cast<Eigen::Index>(std::min(kChunk, npix - p0));
        Eigen::MatrixXf hid = B1.replicate(1, n);
        for (int s = 0; s < cfg_.scales; ++s) {
            // Scale s output is [ch][pixel]: a row-major ch x npix matrix.
            Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>> x(scale_out[static_cast<std::size_t>(s)].data() + p0,
                                                                   ch, n, Eigen::OuterStride<>(static_cast<Eigen::Index>(npix)));
            hid.noalias() += W1.middleCols(s * ch, ch) * x;
        }
        hid = hid.cwiseMax(0.0f);
        Eigen::Map<Eigen::MatrixXf> dst(out.data.data() + p0 * feat, feat, n);
        dst = B2.replicate(1, n);
        dst.noalias() += W2 * hid;
    }
    return out;
}

DescriptorMap Matcher::descriptors(const Image& img) const {
    auto map = describe_dense(normalize_local(img, patch_size()));
    normalize_descriptors(map);
    return map;
}

nlohmann::json Matcher::meta() const {
    return {{"kind", "matcher"}, {"config", cfg_.to_json()}, {"parameters", parameter_count()}};
}

void Matcher::save(const std::string& path, const nlohmann::json& extra) const {
    nn::Checkpoint ckpt;
    ckpt.meta = meta();
    if (!extra.is_null()) ckpt.meta["extra"] = extra;
    ckpt.networks.emplace("matcher", net_);
    nn::save_checkpoint(path, ckpt);
}

Matcher Matcher::from_checkpoint(const nn::Checkpoint& ckpt) {
    if (ckpt.meta.value("kind", std::string{}) != "matcher")
        throw std::runtime_error("checkpoint does not hold a matcher");
    const auto it = ckpt.networks.find("matcher");
    if (it == ckpt.networks.end()) throw std::runtime_error("checkpoint has no matcher network");
    Matcher m;
    m.cfg_ = MatcherConfig::from_json(ckpt.meta.at("config"));
    m.net_ = build(m.cfg_, &m.concat_node_);
    if (m.net_.graph() != it->second.graph())
        throw std::runtime_error("matcher checkpoint graph does not match its config");
    for (std::size_t i = 0; i < m.net_.params().size(); ++i) m.net_.params()[i].value = it->second.params()[i].value;
    return m;
}

Matcher Matcher::load(const std::string& path) { return from_checkpoint(nn::load_checkpoint(path)); }

void extract_patch(const Image& normalized, double x, int y, int size, float* dst) {
    const int c = size / 2;
    auto value = [&](int xx, int yy) {
        return xx >= 0 && yy >= 0 && xx < normalized.width && yy < normalized.height ? normalized.at(xx, yy) : 0.0f;
    };
    for (int r = 0; r < size; ++r) {
        const int yy = y - c + r;
        for (int q = 0; q < size; ++q) {
            const double xf = x - c + q;
            const double x0 = std::floor(xf);
            const auto t = static_cast<float>(xf - x0);
            const int xi = static_cast<int>(x0);
            float v = value(xi, yy);
            if (t > 0) v += t * (value(xi + 1, yy) - v);
            dst[static_cast<std::size_t>(r) * size + q] = v;
        }
    }
}

PairSamplingConfig PairSamplingConfig::from_json(const nlohmann::json& j, const PairSamplingConfig& d) {
    PairSamplingConfig c = d;
    c.margin = j.value("margin", c.margin);
    c.neg_min = j.value("neg_min", c.neg_min);
    c.neg_max = j.value("neg_max", c.neg_max);
    c.pairs_per_frame = j.value("pairs_per_frame", c.pairs_per_frame);
    if (c.neg_min < 1 || c.neg_max < c.neg_min) throw std::invalid_argument("negative offsets need 1 <= min <= max");
    if (c.pairs_per_frame < 1) throw std::invalid_argument("pairs_per_frame must be positive");
    return c;
}

nlohmann::json PairSamplingConfig::to_json() const {
    return {{"margin", margin}, {"neg_min", neg_min}, {"neg_max", neg_max}, {"pairs_per_frame", pairs_per_frame}};
}

TripletSet sample_triplets(const std::vector<StereoFrame>& frames, int patch, const PairSamplingConfig& cfg,
                           std::uint64_t seed) {
    TripletSet set;
    set.patch = patch;
    const std::size_t pp = static_cast<std::size_t>(patch) * patch;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> offset(cfg.neg_min, cfg.neg_max);
    std::bernoulli_distribution sign(0.5);
    for (const auto& f : frames) {
        if (!f.gt_left) {
            spdlog::warn("frame '{}' has no ground truth disparity, skipped", f.id);
            continue;
        }
        const Image left = normalize_local(f.left, patch), right = normalize_local(f.right, patch);
        const auto& gt = *f.gt_left;
        const int w = left.width, h = left.height;
        std::uniform_int_distribution<int> ux(0, w - 1), uy(0, h - 1);
        int taken = 0;
        for (long attempt = 0; taken < cfg.pairs_per_frame && attempt < 50L * cfg.pairs_per_frame; ++attempt) {
            const int x = ux(rng), y = uy(rng);
            const float d = gt.at(x, y);
            if (!valid_disparity(d)) continue;
            if (f.left_mask && !f.left_mask->at(x, y)) continue;
            const double xr = x - static_cast<double>(d);
            if (xr < 0 || xr > w - 1) continue;
            if (f.gt_right) {  // occluded in the right view
                const float dr = f.gt_right->at(static_cast<int>(std::lround(xr)), y);
                if (!valid_disparity(dr) || std::abs(dr - d) > 1.0f) continue;
            }
            const double o = offset(rng);
            double xn = sign(rng) ? xr + o : xr - o;
            if (xn < 0 || xn > w - 1) xn = 2 * xr - xn;
            if (xn < 0 || xn > w - 1) continue;
            for (auto* v : {&set.anchor, &set.positive, &set.negative}) v->resize(v->size() + pp);
            extract_patch(left, x, y, patch, set.anchor.data() + set.anchor.size() - pp);
            extract_patch(right, xr, y, patch, set.positive.data() + set.positive.size() - pp);
            extract_patch(right, xn, y, patch, set.negative.data() + set.negative.size() - pp);
            ++taken;
        }
        if (taken < cfg.pairs_per_frame)
            spdlog::warn("frame '{}': only {} of {} training pairs found", f.id, taken, cfg.pairs_per_frame);
    }
    return set;
}

HingeStats hinge_batch(const Matcher& m, const TripletSet& set, std::span<const std::size_t> idx, double margin,
                       nn::Gradients<float>* grads) {
    const int n = static_cast<int>(idx.size()), p = set.patch, f = m.features();
    if (n == 0) return {};
    if (p != m.patch_size()) throw std::invalid_argument("triplet patch size does not match the matcher");
    const std::size_t pp = static_cast<std::size_t>(p) * p;
    nn::Tensor<float> x({3 * n, 1, p, p});
    for (int i = 0; i < n; ++i) {
        const std::size_t src = idx[static_cast<std::size_t>(i)] * pp;
        std::copy_n(set.anchor.data() + src, pp, x.data() + static_cast<std::size_t>(i) * pp);
        std::copy_n(set.positive.data() + src, pp, x.data() + static_cast<std::size_t>(n + i) * pp);
        std::copy_n(set.negative.data() + src, pp, x.data() + static_cast<std::size_t>(2 * n + i) * pp);
    }
    nn::Tape<float> tape;
    nn::Tensor<float> desc;
    if (grads) {
        tape = m.net().forward_recorded({x});
        desc = tape.result();
    } else {
        desc = m.describe(x);
    }
    auto row = [&](int r) { return std::span<const float>(desc.data() + static_cast<std::size_t>(r) * f, f); };
    nn::Tensor<float> g({3 * n, f});
    auto grow = [&](int r) { return std::span<float>(g.data() + static_cast<std::size_t>(r) * f, f); };
    std::vector<float> da(f), dv(f);
    HingeStats st;
    for (int i = 0; i < n; ++i) {
        const double sp = nn::cosine_similarity<float>(row(i), row(n + i)).value;
        const double sn = nn::cosine_similarity<float>(row(i), row(2 * n + i)).value;
        st.mean_pos += sp;
        st.mean_neg += sn;
        const double h = margin - sp + sn;
        if (h <= 0) continue;
        st.loss += h;
        if (!grads) continue;
        const float scale = 1.0f / static_cast<float>(n);
        nn::cosine_similarity_grad<float>(row(i), row(n + i), da, dv);
        for (int k = 0; k < f; ++k) {
            grow(i)[k] -= scale * da[k];
            grow(n + i)[k] -= scale * dv[k];
        }
        nn::cosine_similarity_grad<float>(row(i), row(2 * n + i), da, dv);
        for (int k = 0; k < f; ++k) {
            grow(i)[k] += scale * da[k];
            grow(2 * n + i)[k] += scale * dv[k];
        }
    }
    st.loss /= n;
    st.mean_pos /= n;
    st.mean_neg /= n;
    if (grads) *grads = m.net().backward(tape, g);
    return st;
}

HingeStats evaluate_triplets(const Matcher& m, const TripletSet& set, double margin) {
    HingeStats total;
    const std::size_t count = set.count();
    if (count == 0) return total;
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), 0);
    constexpr std::size_t kBatch = 256;
    for (std::size_t b = 0; b < count; b += kBatch) {
        const std::size_t n = std::min(kBatch, count - b);
        const auto st = hinge_batch(m, set, std::span(idx).subspan(b, n), margin, nullptr);
        const double wgt = static_cast<double>(n) / static_cast<double>(count);
        total.loss += st.loss * wgt;
        total.mean_pos += st.mean_pos * wgt;
        total.mean_neg += st.mean_neg * wgt;
    }
    return total;
}

nn::LossCurve train_matcher(Matcher& m, const TripletSet& set, const PairSamplingConfig& sampling,
                            const nn::TrainConfig& cfg) {
    nn::LossCurve curve;
    if (cfg.epochs <= 0) return curve;
    if (set.count() == 0) throw std::invalid_argument("train_matcher needs at least one training triplet");
    nn::Optimizer<float> opt(cfg);
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(set.count());
    std::iota(order.begin(), order.end(), 0);
    const auto batch = static_cast<std::size_t>(std::max(1, cfg.batch));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0;
        std::size_t batches = 0;
        for (std::size_t b = 0; b < order.size(); b += batch) {
            nn::Gradients<float> grads;
            const auto st = hinge_batch(m, set, std::span(order).subspan(b, std::min(batch, order.size() - b)),
                                        sampling.margin, &grads);
            opt.step(m.net(), grads);
            total += st.loss;
            ++batches;
        }
        curve.epoch_loss.push_back(total / static_cast<double>(batches));
        spdlog::debug("matcher epoch {} hinge {:.5f}", epoch + 1, curve.epoch_loss.back());
    }
    return curve;
}

}  // namespace uwstereo::stereo
