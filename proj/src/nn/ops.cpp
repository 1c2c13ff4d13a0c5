#include "uwstereo/nn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <vector>

namespace uwstereo::nn::ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

// Bound on im2col scratch (elements) per chunk.
constexpr std::size_t kColBudget = std::size_t{1} << 22;

int rows_per_chunk(const ConvGeometry& g) {
    const std::size_t k = static_cast<std::size_t>(g.in_channels) * g.kernel * g.kernel;
    const std::size_t per_row = k * static_cast<std::size_t>(g.out_w());
    return static_cast<int>(std::clamp<std::size_t>(kColBudget / std::max<std::size_t>(per_row, 1), 1,
                                                    static_cast<std::size_t>(g.out_h())));
}

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1 && g.padding == 0; }

template <typename T>
void im2col(const ConvGeometry& g, const T* in, int y0, int rows, T* col) {
    const int wo = g.out_w();
    const std::size_t n = static_cast<std::size_t>(rows) * wo;
    for (int c = 0; c < g.in_channels; ++c) {
        const T* plane = in + static_cast<std::size_t>(c) * g.in_h * g.in_w;
        for (int ky = 0; ky < g.kernel; ++ky) {
            for (int kx = 0; kx < g.kernel; ++kx) {
                T* dst = col + ((static_cast<std::size_t>(c) * g.kernel + ky) * g.kernel + kx) * n;
                for (int oy = 0; oy < rows; ++oy) {
                    const int iy = (y0 + oy) * g.stride - g.padding + ky * g.dilation;
                    T* d = dst + static_cast<std::size_t>(oy) * wo;
                    if (iy < 0 || iy >= g.in_h) {
                        std::fill(d, d + wo, T(0));
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(iy) * g.in_w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * g.stride - g.padding + kx * g.dilation;
                        d[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* col, int y0, int rows, T* din) {
    const int wo = g.out_w();
    const std::size_t n = static_cast<std::size_t>(rows) * wo;
    for (int c = 0; c < g.in_channels; ++c) {
        T* plane = din + static_cast<std::size_t>(c) * g.in_h * g.in_w;
        for (int ky = 0; ky < g.kernel; ++ky) {
            for (int kx = 0; kx < g.kernel; ++kx) {
                const T* src = col + ((static_cast<std::size_t>(c) * g.kernel + ky) * g.kernel + kx) * n;
                for (int oy = 0; oy < rows; ++oy) {
                    const int iy = (y0 + oy) * g.stride - g.padding + ky * g.dilation;
                    if (iy < 0 || iy >= g.in_h) continue;
                    T* d = plane + static_cast<std::size_t>(iy) * g.in_w;
                    const T* s = src + static_cast<std::size_t>(oy) * wo;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * g.stride - g.padding + kx * g.dilation;
                        if (ix >= 0 && ix < g.in_w) d[ix] += s[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* in, const T* weight, const T* bias, T* out) {
    const int ho = g.out_h();
    const int wo = g.out_w();
    const std::size_t plane = static_cast<std::size_t>(ho) * wo;
    const int k = g.in_channels * g.kernel * g.kernel;
    Eigen::Map<const RowMat<T>> w(weight, g.out_channels, k);

    if (is_pointwise(g)) {
        Eigen::Map<const RowMat<T>> x(in, g.in_channels, static_cast<Eigen::Index>(plane));
        Eigen::Map<RowMat<T>> y(out, g.out_channels, static_cast<Eigen::Index>(plane));
        y.noalias() = w * x;
    } else {
        const int chunk = rows_per_chunk(g);
        std::vector<T> col(static_cast<std::size_t>(k) * chunk * wo);
        for (int y0 = 0; y0 < ho; y0 += chunk) {
            const int rows = std::min(chunk, ho - y0);
            const Eigen::Index n = static_cast<Eigen::Index>(rows) * wo;
            im2col(g, in, y0, rows, col.data());
            Eigen::Map<const RowMat<T>> x(col.data(), k, n);
            StridedMap<T> y(out + static_cast<std::size_t>(y0) * wo, g.out_channels, n,
                            Eigen::OuterStride<>(static_cast<Eigen::Index>(plane)));
            y.noalias() = w * x;
        }
    }
    if (bias) {
        for (int c = 0; c < g.out_channels; ++c) {
            T* p = out + static_cast<std::size_t>(c) * plane;
            const T b = bias[c];
            for (std::size_t i = 0; i < plane; ++i) p[i] += b;
        }
    }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* in, const T* weight, const T* dout, T* dweight, T* dbias,
                     T* din) {
    const int ho = g.out_h();
    const int wo = g.out_w();
    const std::size_t plane = static_cast<std::size_t>(ho) * wo;
    const int k = g.in_channels * g.kernel * g.kernel;
    Eigen::Map<const RowMat<T>> w(weight, g.out_channels, k);

    if (dbias) {
        for (int c = 0; c < g.out_channels; ++c) {
            const T* p = dout + static_cast<std::size_t>(c) * plane;
            T acc = 0;
            for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            dbias[c] += acc;
        }
    }
    if (!dweight && !din) return;

    if (is_pointwise(g)) {
        Eigen::Map<const RowMat<T>> x(in, g.in_channels, static_cast<Eigen::Index>(plane));
        Eigen::Map<const RowMat<T>> dy(dout, g.out_channels, static_cast<Eigen::Index>(plane));
        if (dweight) {
            Eigen::Map<RowMat<T>> dw(dweight, g.out_channels, k);
            dw.noalias() += dy * x.transpose();
        }
        if (din) {
            Eigen::Map<RowMat<T>> dx(din, g.in_channels, static_cast<Eigen::Index>(plane));
            dx.noalias() += w.transpose() * dy;
        }
        return;
    }

    const int chunk = rows_per_chunk(g);
    std::vector<T> col(static_cast<std::size_t>(k) * chunk * wo);
    for (int y0 = 0; y0 < ho; y0 += chunk) {
        const int rows = std::min(chunk, ho - y0);
        const Eigen::Index n = static_cast<Eigen::Index>(rows) * wo;
        ConstStridedMap<T> dy(dout + static_cast<std::size_t>(y0) * wo, g.out_channels, n,
                              Eigen::OuterStride<>(static_cast<Eigen::Index>(plane)));
        if (dweight) {
            im2col(g, in, y0, rows, col.data());
            Eigen::Map<const RowMat<T>> x(col.data(), k, n);
            Eigen::Map<RowMat<T>> dw(dweight, g.out_channels, k);
            dw.noalias() += dy * x.transpose();
        }
        if (din) {
            Eigen::Map<RowMat<T>> dx(col.data(), k, n);
            dx.noalias() = w.transpose() * dy;
            col2im(g, col.data(), y0, rows, din);
        }
    }
}

template void conv2d_forward<float>(const ConvGeometry&, const float*, const float*, const float*, float*);
template void conv2d_forward<double>(const ConvGeometry&, const double*, const double*, const double*, double*);
template void conv2d_backward<float>(const ConvGeometry&, const float*, const float*, const float*, float*, float*,
                                     float*);
template void conv2d_backward<double>(const ConvGeometry&, const double*, const double*, const double*, double*,
                                      double*, double*);

}  // namespace uwstereo::nn::ops
