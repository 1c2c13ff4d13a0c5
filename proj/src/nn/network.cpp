#include "uwstereo/nn/network.hpp"

#include "uwstereo/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace uwstereo::nn {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Input: return "input";
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::MaxPool2: return "maxpool2";
        case LayerKind::Upsample2: return "upsample2";
        case LayerKind::Relu: return "relu";
        case LayerKind::Concat: return "concat";
        case LayerKind::Linear: return "linear";
        case LayerKind::Crop: return "crop";
    }
    return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
    for (auto k : {LayerKind::Input, LayerKind::Conv2d, LayerKind::MaxPool2, LayerKind::Upsample2, LayerKind::Relu,
                   LayerKind::Concat, LayerKind::Linear, LayerKind::Crop})
        if (s == to_string(k)) return k;
    throw std::invalid_argument("unknown layer kind '" + s + "'");
}

namespace {

ops::ConvGeometry geometry(const Layer& l, int h, int w) {
    ops::ConvGeometry g;
    g.in_channels = l.hyper.in_channels;
    g.in_h = h;
    g.in_w = w;
    g.out_channels = l.hyper.out_channels;
    g.kernel = l.hyper.kernel;
    g.stride = l.hyper.stride;
    g.padding = l.hyper.padding;
    return g;
}

std::size_t per_sample(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t i = 1; i < s.size(); ++i) n *= static_cast<std::size_t>(s[i]);
    return n;
}

}  // namespace

template <typename T>
int Network<T>::add(Layer layer) {
    for (int src : layer.inputs)
        if (src < 0 || src >= static_cast<int>(layers_.size()))
            throw std::invalid_argument("layer '" + layer.name + "' references unknown node " + std::to_string(src));
    if (layer.name.empty()) layer.name = std::string(to_string(layer.kind)) + "_" + std::to_string(layers_.size());
    layers_.push_back(std::move(layer));
    return static_cast<int>(layers_.size()) - 1;
}

template <typename T>
int Network<T>::add_param(const std::string& name, Shape shape) {
    params_.push_back({name, Tensor<T>(std::move(shape))});
    return static_cast<int>(params_.size()) - 1;
}

template <typename T>
const Layer& Network<T>::node(int id) const {
    return layers_.at(static_cast<std::size_t>(id));
}

template <typename T>
int Network<T>::input(const std::string& name, int channels) {
    if (channels <= 0) throw std::invalid_argument("input '" + name + "' needs a positive channel count");
    Layer l;
    l.kind = LayerKind::Input;
    l.name = name;
    l.channels = channels;
    const int id = add(std::move(l));
    inputs_.push_back(id);
    return id;
}

template <typename T>
int Network<T>::conv2d(int src, int out_channels, int kernel, const std::string& name, int stride, int padding,
                       bool bias) {
    if (kernel <= 0 || kernel % 2 == 0) throw std::invalid_argument("conv kernel extent must be odd");
    if (out_channels <= 0 || stride <= 0) throw std::invalid_argument("conv needs positive channels and stride");
    Layer l;
    l.kind = LayerKind::Conv2d;
    l.name = name;
    l.inputs = {src};
    l.hyper.kernel = kernel;
    l.hyper.stride = stride;
    l.hyper.padding = padding < 0 ? kernel / 2 : padding;
    l.hyper.in_channels = node(src).channels;
    l.hyper.out_channels = out_channels;
    l.hyper.bias = bias;
    l.channels = out_channels;
    const int id = add(std::move(l));
    auto& ref = layers_.back();
    ref.weight = add_param(ref.name + ".weight", {out_channels, ref.hyper.in_channels, kernel, kernel});
    if (bias) ref.bias = add_param(ref.name + ".bias", {out_channels});
    return id;
}

template <typename T>
int Network<T>::maxpool2(int src, const std::string& name) {
    Layer l;
    l.kind = LayerKind::MaxPool2;
    l.name = name;
    l.inputs = {src};
    l.channels = node(src).channels;
    return add(std::move(l));
}

template <typename T>
int Network<T>::upsample2(int src, const std::string& name) {
    Layer l;
    l.kind = LayerKind::Upsample2;
    l.name = name;
    l.inputs = {src};
    l.channels = node(src).channels;
    return add(std::move(l));
}

template <typename T>
int Network<T>::relu(int src, const std::string& name) {
    Layer l;
    l.kind = LayerKind::Relu;
    l.name = name;
    l.inputs = {src};
    l.channels = node(src).channels;
    return add(std::move(l));
}

template <typename T>
int Network<T>::concat(const std::vector<int>& srcs, const std::string& name) {
    if (srcs.empty()) throw std::invalid_argument("concat needs at least one input");
    Layer l;
    l.kind = LayerKind::Concat;
    l.name = name;
    l.inputs = srcs;
    for (int s : srcs) l.channels += node(s).channels;
    return add(std::move(l));
}

template <typename T>
int Network<T>::linear(int src, int in_features, int out_features, const std::string& name, bool bias) {
    if (in_features <= 0 || out_features <= 0) throw std::invalid_argument("linear needs positive feature counts");
    Layer l;
    l.kind = LayerKind::Linear;
    l.name = name;
    l.inputs = {src};
    l.hyper.in_channels = in_features;
    l.hyper.out_channels = out_features;
    l.hyper.bias = bias;
    l.channels = out_features;
    const int id = add(std::move(l));
    auto& ref = layers_.back();
    ref.weight = add_param(ref.name + ".weight", {out_features, in_features});
    if (bias) ref.bias = add_param(ref.name + ".bias", {out_features});
    return id;
}

template <typename T>
int Network<T>::crop(int src, int y, int x, int h, int w, const std::string& name) {
    if (y < 0 || x < 0 || h <= 0 || w <= 0) throw std::invalid_argument("crop window must be non-empty and inside");
    Layer l;
    l.kind = LayerKind::Crop;
    l.name = name;
    l.inputs = {src};
    l.hyper.crop_y = y;
    l.hyper.crop_x = x;
    l.hyper.crop_h = h;
    l.hyper.crop_w = w;
    l.channels = node(src).channels;
    return add(std::move(l));
}

template <typename T>
void Network<T>::set_output(int id) {
    node(id);
    output_ = id;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

template <typename T>
void Network<T>::init_xavier(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (const auto& l : layers_) {
        if (l.weight < 0) continue;
        double fan_in = l.hyper.in_channels, fan_out = l.hyper.out_channels;
        if (l.kind == LayerKind::Conv2d) {
            fan_in *= l.hyper.kernel * l.hyper.kernel;
            fan_out *= l.hyper.kernel * l.hyper.kernel;
        }
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& v : params_[static_cast<std::size_t>(l.weight)].value.vec()) v = static_cast<T>(dist(rng));
        if (l.bias >= 0) params_[static_cast<std::size_t>(l.bias)].value.fill(T(0));
    }
}

template <typename T>
void Network<T>::zero_params() {
    for (auto& p : params_) p.value.fill(T(0));
}

template <typename T>
void Network<T>::run(const std::vector<Tensor<T>>& inputs, Tape<T>& tape, bool keep_argmax) const {
    if (output_ < 0) throw std::logic_error("network has no output node");
    if (inputs.size() != inputs_.size())
        throw std::invalid_argument("network expects " + std::to_string(inputs_.size()) + " inputs, got " +
                                    std::to_string(inputs.size()));
    tape.values.assign(layers_.size(), {});
    tape.argmax.assign(layers_.size(), {});
    std::size_t next_input = 0;
    int batch = -1;

    for (std::size_t id = 0; id < layers_.size(); ++id) {
        const Layer& l = layers_[id];
        auto& out = tape.values[id];
        auto src = [&](std::size_t k) -> const Tensor<T>& {
            return tape.values[static_cast<std::size_t>(l.inputs[k])];
        };
        switch (l.kind) {
            case LayerKind::Input: {
                const auto& x = inputs[next_input++];
                if (x.rank() < 2 || x.dim(1) != l.channels)
                    throw ShapeError(l.name, "expected [N," + std::to_string(l.channels) + ",...], got " +
                                                 shape_str(x.shape()));
                if (batch >= 0 && x.dim(0) != batch) throw ShapeError(l.name, "batch size differs between inputs");
                batch = x.dim(0);
                out = x;
                break;
            }
            case LayerKind::Conv2d: {
                const auto& x = src(0);
                if (x.rank() != 4 || x.dim(1) != l.hyper.in_channels)
                    throw ShapeError(l.name, "expected [N," + std::to_string(l.hyper.in_channels) + ",H,W], got " +
                                                 shape_str(x.shape()));
                auto g = geometry(l, x.dim(2), x.dim(3));
                if (g.out_h() <= 0 || g.out_w() <= 0)
                    throw ShapeError(l.name, "input " + shape_str(x.shape()) + " too small for kernel");
                const int n = x.dim(0);
                out = Tensor<T>({n, g.out_channels, g.out_h(), g.out_w()});
                const T* w = params_[static_cast<std::size_t>(l.weight)].value.data();
                const T* b = l.bias >= 0 ? params_[static_cast<std::size_t>(l.bias)].value.data() : nullptr;
                const std::size_t in_step = per_sample(x.shape()), out_step = per_sample(out.shape());
#pragma omp parallel for schedule(static) if (n > 1)
                for (int i = 0; i < n; ++i)
                    ops::conv2d_forward(g, x.data() + i * in_step, w, b, out.data() + i * out_step);
                break;
            }
            case LayerKind::MaxPool2: {
                const auto& x = src(0);
                if (x.rank() != 4 || x.dim(2) % 2 || x.dim(3) % 2)
                    throw ShapeError(l.name, "maxpool2 needs even spatial extents, got " + shape_str(x.shape()));
                const int n = x.dim(0), c = x.dim(1), h = x.dim(2) / 2, w = x.dim(3) / 2;
                out = Tensor<T>({n, c, h, w});
                auto& arg = tape.argmax[id];
                if (keep_argmax) arg.assign(out.size(), 0);
                const int iw = x.dim(3);
                for (int p = 0; p < n * c; ++p) {
                    const T* ip = x.data() + static_cast<std::size_t>(p) * x.dim(2) * iw;
                    T* op = out.data() + static_cast<std::size_t>(p) * h * w;
                    for (int yy = 0; yy < h; ++yy) {
                        for (int xx = 0; xx < w; ++xx) {
                            const T* q = ip + static_cast<std::size_t>(2 * yy) * iw + 2 * xx;
                            const T v[4] = {q[0], q[1], q[iw], q[iw + 1]};
                            std::uint8_t best = 0;
                            for (std::uint8_t k = 1; k < 4; ++k)
                                if (v[k] > v[best]) best = k;
                            op[yy * w + xx] = v[best];
                            if (keep_argmax) arg[static_cast<std::size_t>(p) * h * w + yy * w + xx] = best;
                        }
                    }
                }
                break;
            }
            case LayerKind::Upsample2: {
                const auto& x = src(0);
                if (x.rank() != 4) throw ShapeError(l.name, "upsample2 needs NCHW input");
                const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
                out = Tensor<T>({n, c, 2 * h, 2 * w});
                for (int p = 0; p < n * c; ++p) {
                    const T* ip = x.data() + static_cast<std::size_t>(p) * h * w;
                    T* op = out.data() + static_cast<std::size_t>(p) * 4 * h * w;
                    for (int yy = 0; yy < 2 * h; ++yy)
                        for (int xx = 0; xx < 2 * w; ++xx) op[yy * 2 * w + xx] = ip[(yy / 2) * w + xx / 2];
                }
                break;
            }
            case LayerKind::Relu: {
                out = src(0);
                for (auto& v : out.vec()) v = v > T(0) ? v : T(0);
                break;
            }
            case LayerKind::Concat: {
                const auto& first = src(0);
                Shape shape = first.shape();
                int channels = 0;
                for (std::size_t k = 0; k < l.inputs.size(); ++k) {
                    const auto& x = src(k);
                    if (x.rank() != first.rank() || x.dim(0) != first.dim(0) ||
                        !std::equal(x.shape().begin() + 2, x.shape().end(), first.shape().begin() + 2))
                        throw ShapeError(l.name, "cannot concatenate " + shape_str(x.shape()) + " with " +
                                                     shape_str(first.shape()));
                    channels += x.dim(1);
                }
                shape[1] = channels;
                out = Tensor<T>(shape);
                const std::size_t inner = per_sample(first.shape()) / static_cast<std::size_t>(first.dim(1));
                for (int i = 0; i < first.dim(0); ++i) {
                    T* dst = out.data() + static_cast<std::size_t>(i) * channels * inner;
                    for (std::size_t k = 0; k < l.inputs.size(); ++k) {
                        const auto& x = src(k);
                        const std::size_t len = static_cast<std::size_t>(x.dim(1)) * inner;
                        std::memcpy(dst, x.data() + i * len, len * sizeof(T));
                        dst += len;
                    }
                }
                break;
            }
            case LayerKind::Crop: {
                const auto& x = src(0);
                const auto& hp = l.hyper;
                if (x.rank() != 4 || hp.crop_y + hp.crop_h > x.dim(2) || hp.crop_x + hp.crop_w > x.dim(3))
                    throw ShapeError(l.name, "crop window exceeds input " + shape_str(x.shape()));
                const int n = x.dim(0), c = x.dim(1), ih = x.dim(2), iw = x.dim(3);
                out = Tensor<T>({n, c, hp.crop_h, hp.crop_w});
                for (int p = 0; p < n * c; ++p)
                    for (int yy = 0; yy < hp.crop_h; ++yy)
                        std::memcpy(out.data() + (static_cast<std::size_t>(p) * hp.crop_h + yy) * hp.crop_w,
                                    x.data() + (static_cast<std::size_t>(p) * ih + hp.crop_y + yy) * iw + hp.crop_x,
                                    static_cast<std::size_t>(hp.crop_w) * sizeof(T));
                break;
            }
            case LayerKind::Linear: {
                const auto& x = src(0);
                const std::size_t fin = per_sample(x.shape());
                if (static_cast<int>(fin) != l.hyper.in_channels)
                    throw ShapeError(l.name, "expected " + std::to_string(l.hyper.in_channels) +
                                                 " features per sample, got " + shape_str(x.shape()));
                const int n = x.dim(0), fout = l.hyper.out_channels;
                out = Tensor<T>({n, fout});
                const T* w = params_[static_cast<std::size_t>(l.weight)].value.data();
                const T* b = l.bias >= 0 ? params_[static_cast<std::size_t>(l.bias)].value.data() : nullptr;
                for (int i = 0; i < n; ++i) {
                    const T* xi = x.data() + i * fin;
                    for (int o = 0; o < fout; ++o) {
                        T acc = b ? b[o] : T(0);
                        const T* wr = w + static_cast<std::size_t>(o) * fin;
                        for (std::size_t k = 0; k < fin; ++k) acc += wr[k] * xi[k];
                        out.data()[static_cast<std::size_t>(i) * fout + o] = acc;
                    }
                }
                break;
            }
        }
    }
    tape.output = output_;
}

template <typename T>
Tensor<T> Network<T>::forward(const std::vector<Tensor<T>>& inputs) const {
    Tape<T> tape;
    run(inputs, tape, false);
    return std::move(tape.values[static_cast<std::size_t>(output_)]);
}

template <typename T>
Tape<T> Network<T>::forward_recorded(const std::vector<Tensor<T>>& inputs) const {
    Tape<T> tape;
    run(inputs, tape, true);
    return tape;
}

template <typename T>
Gradients<T> Network<T>::backward(const Tape<T>& tape, const Tensor<T>& output_grad, bool param_grads,
                                  bool input_grads) const {
    if (!tape.recorded() || tape.values.size() != layers_.size())
        throw std::logic_error("backward called without a recorded forward pass");
    if (output_grad.shape() != tape.result().shape())
        throw ShapeError(node(output_).name, "loss gradient " + shape_str(output_grad.shape()) +
                                                 " does not match output " + shape_str(tape.result().shape()));

    // Which nodes need a gradient at all: ancestors of the output, excluding
    // inputs unless requested.
    std::vector<char> needed(layers_.size(), 0);
    needed[static_cast<std::size_t>(output_)] = 1;
    for (int id = output_; id >= 0; --id) {
        if (!needed[static_cast<std::size_t>(id)]) continue;
        for (int s : layers_[static_cast<std::size_t>(id)].inputs) needed[static_cast<std::size_t>(s)] = 1;
    }

    Gradients<T> result;
    if (param_grads)
        for (const auto& p : params_) result.params.emplace_back(p.value.shape());

    std::vector<Tensor<T>> grad(layers_.size());
    grad[static_cast<std::size_t>(output_)] = output_grad;
    auto wants = [&](int id) {
        const auto& l = layers_[static_cast<std::size_t>(id)];
        return needed[static_cast<std::size_t>(id)] && (l.kind != LayerKind::Input || input_grads);
    };
    auto grad_of = [&](int id) -> Tensor<T>& {
        auto& g = grad[static_cast<std::size_t>(id)];
        if (g.empty()) g = Tensor<T>(tape.values[static_cast<std::size_t>(id)].shape());
        return g;
    };

    for (int id = output_; id >= 0; --id) {
        const Layer& l = layers_[static_cast<std::size_t>(id)];
        const auto& gy = grad[static_cast<std::size_t>(id)];
        if (gy.empty() || l.kind == LayerKind::Input) continue;
        const int src0 = l.inputs.empty() ? -1 : l.inputs[0];
        switch (l.kind) {
            case LayerKind::Input: break;
            case LayerKind::Conv2d: {
                const auto& x = tape.values[static_cast<std::size_t>(src0)];
                auto g = geometry(l, x.dim(2), x.dim(3));
                T* dw = param_grads ? result.params[static_cast<std::size_t>(l.weight)].data() : nullptr;
                T* db = (param_grads && l.bias >= 0) ? result.params[static_cast<std::size_t>(l.bias)].data()
                                                     : nullptr;
                T* dx = wants(src0) ? grad_of(src0).data() : nullptr;
                const T* w = params_[static_cast<std::size_t>(l.weight)].value.data();
                const std::size_t in_step = per_sample(x.shape()), out_step = per_sample(gy.shape());
                for (int i = 0; i < x.dim(0); ++i)
                    ops::conv2d_backward(g, x.data() + i * in_step, w, gy.data() + i * out_step, dw, db,
                                         dx ? dx + i * in_step : nullptr);
                break;
            }
            case LayerKind::MaxPool2: {
                if (!wants(src0)) break;
                auto& dx = grad_of(src0);
                const auto& arg = tape.argmax[static_cast<std::size_t>(id)];
                const int n = gy.dim(0), c = gy.dim(1), h = gy.dim(2), w = gy.dim(3), iw = 2 * w;
                for (int p = 0; p < n * c; ++p) {
                    T* ip = dx.data() + static_cast<std::size_t>(p) * 4 * h * w;
                    const T* op = gy.data() + static_cast<std::size_t>(p) * h * w;
                    for (int yy = 0; yy < h; ++yy)
                        for (int xx = 0; xx < w; ++xx) {
                            const std::size_t o = static_cast<std::size_t>(p) * h * w + yy * w + xx;
                            const int k = arg[o];
                            ip[(2 * yy + k / 2) * iw + 2 * xx + k % 2] += op[yy * w + xx];
                        }
                }
                break;
            }
            case LayerKind::Upsample2: {
                if (!wants(src0)) break;
                auto& dx = grad_of(src0);
                const int n = dx.dim(0), c = dx.dim(1), h = dx.dim(2), w = dx.dim(3);
                for (int p = 0; p < n * c; ++p) {
                    T* ip = dx.data() + static_cast<std::size_t>(p) * h * w;
                    const T* op = gy.data() + static_cast<std::size_t>(p) * 4 * h * w;
                    for (int yy = 0; yy < 2 * h; ++yy)
                        for (int xx = 0; xx < 2 * w; ++xx) ip[(yy / 2) * w + xx / 2] += op[yy * 2 * w + xx];
                }
                break;
            }
            case LayerKind::Relu: {
                if (!wants(src0)) break;
                auto& dx = grad_of(src0);
                const auto& x = tape.values[static_cast<std::size_t>(src0)];
                for (std::size_t i = 0; i < dx.size(); ++i)
                    if (x[i] > T(0)) dx[i] += gy[i];
                break;
            }
            case LayerKind::Concat: {
                const std::size_t inner = per_sample(gy.shape()) / static_cast<std::size_t>(gy.dim(1));
                std::size_t offset = 0;
                for (int s : l.inputs) {
                    const auto& x = tape.values[static_cast<std::size_t>(s)];
                    const std::size_t len = static_cast<std::size_t>(x.dim(1)) * inner;
                    if (wants(s)) {
                        auto& dx = grad_of(s);
                        for (int i = 0; i < gy.dim(0); ++i) {
                            const T* from = gy.data() + static_cast<std::size_t>(i) * gy.dim(1) * inner + offset;
                            T* to = dx.data() + i * len;
                            for (std::size_t k = 0; k < len; ++k) to[k] += from[k];
                        }
                    }
                    offset += len;
                }
                break;
            }
            case LayerKind::Crop: {
                if (!wants(src0)) break;
                auto& dx = grad_of(src0);
                const auto& hp = l.hyper;
                const int ih = dx.dim(2), iw = dx.dim(3);
                for (int p = 0; p < gy.dim(0) * gy.dim(1); ++p)
                    for (int yy = 0; yy < hp.crop_h; ++yy) {
                        const T* from = gy.data() + (static_cast<std::size_t>(p) * hp.crop_h + yy) * hp.crop_w;
                        T* to = dx.data() + (static_cast<std::size_t>(p) * ih + hp.crop_y + yy) * iw + hp.crop_x;
                        for (int xx = 0; xx < hp.crop_w; ++xx) to[xx] += from[xx];
                    }
                break;
            }
            case LayerKind::Linear: {
                const auto& x = tape.values[static_cast<std::size_t>(src0)];
                const std::size_t fin = per_sample(x.shape());
                const int n = x.dim(0), fout = l.hyper.out_channels;
                const T* w = params_[static_cast<std::size_t>(l.weight)].value.data();
                T* dw = param_grads ? result.params[static_cast<std::size_t>(l.weight)].data() : nullptr;
                T* db = (param_grads && l.bias >= 0) ? result.params[static_cast<std::size_t>(l.bias)].data()
                                                     : nullptr;
                T* dx = wants(src0) ? grad_of(src0).data() : nullptr;
                for (int i = 0; i < n; ++i) {
                    const T* xi = x.data() + i * fin;
                    const T* gi = gy.data() + static_cast<std::size_t>(i) * fout;
                    for (int o = 0; o < fout; ++o) {
                        const T go = gi[o];
                        if (db) db[o] += go;
                        if (dw) {
                            T* wr = dw + static_cast<std::size_t>(o) * fin;
                            for (std::size_t k = 0; k < fin; ++k) wr[k] += go * xi[k];
                        }
                        if (dx) {
                            const T* wr = w + static_cast<std::size_t>(o) * fin;
                            T* di = dx + i * fin;
                            for (std::size_t k = 0; k < fin; ++k) di[k] += go * wr[k];
                        }
                    }
                }
                break;
            }
        }
    }

    if (input_grads) {
        for (int id : inputs_) {
            auto& g = grad[static_cast<std::size_t>(id)];
            result.inputs.push_back(g.empty() ? Tensor<T>(tape.values[static_cast<std::size_t>(id)].shape())
                                              : std::move(g));
        }
    }
    return result;
}

template <typename T>
nlohmann::json Network<T>::graph() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& l : layers_) {
        nlohmann::json j = {{"kind", to_string(l.kind)}, {"name", l.name}, {"inputs", l.inputs},
                            {"channels", l.channels}};
        if (l.kind == LayerKind::Conv2d || l.kind == LayerKind::Linear) {
            j["kernel"] = l.hyper.kernel;
            j["stride"] = l.hyper.stride;
            j["padding"] = l.hyper.padding;
            j["in_channels"] = l.hyper.in_channels;
            j["out_channels"] = l.hyper.out_channels;
            j["bias"] = l.hyper.bias;
        }
        if (l.kind == LayerKind::Crop)
            j["window"] = {l.hyper.crop_y, l.hyper.crop_x, l.hyper.crop_h, l.hyper.crop_w};
        nodes.push_back(std::move(j));
    }
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : params_) params.push_back({{"name", p.name}, {"shape", p.value.shape()}});
    return {{"nodes", nodes}, {"output", output_}, {"params", params}};
}

template <typename T>
Network<T> Network<T>::from_graph(const nlohmann::json& graph) {
    Network<T> net;
    for (const auto& j : graph.at("nodes")) {
        const auto kind = layer_kind_from_string(j.at("kind").get<std::string>());
        const auto name = j.at("name").get<std::string>();
        const auto ins = j.at("inputs").get<std::vector<int>>();
        switch (kind) {
            case LayerKind::Input: net.input(name, j.at("channels").get<int>()); break;
            case LayerKind::Conv2d:
                net.conv2d(ins.at(0), j.at("out_channels").get<int>(), j.at("kernel").get<int>(), name,
                           j.at("stride").get<int>(), j.at("padding").get<int>(), j.at("bias").get<bool>());
                break;
            case LayerKind::MaxPool2: net.maxpool2(ins.at(0), name); break;
            case LayerKind::Upsample2: net.upsample2(ins.at(0), name); break;
            case LayerKind::Relu: net.relu(ins.at(0), name); break;
            case LayerKind::Concat: net.concat(ins, name); break;
            case LayerKind::Crop: {
                const auto win = j.at("window").get<std::vector<int>>();
                net.crop(ins.at(0), win.at(0), win.at(1), win.at(2), win.at(3), name);
                break;
            }
            case LayerKind::Linear:
                net.linear(ins.at(0), j.at("in_channels").get<int>(), j.at("out_channels").get<int>(), name,
                           j.at("bias").get<bool>());
                break;
        }
    }
    net.set_output(graph.at("output").get<int>());
    return net;
}

template class Network<float>;
template class Network<double>;

}  // namespace uwstereo::nn
