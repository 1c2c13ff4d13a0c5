#include "uwstereo/nn/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace uwstereo::nn {

template <typename T>
LossValue<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("mse: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    LossValue<T> out{0.0, Tensor<T>(a.shape())};
    if (a.empty()) return out;
    const double n = static_cast<double>(a.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
        out.grad[i] = static_cast<T>(2.0 * d / n);
    }
    out.value = acc / n;
    return out;
}

template <typename T>
LossValue<T> cross_entropy(const Tensor<T>& logits, const Tensor<T>& labels) {
    if (logits.shape() != labels.shape())
        throw std::invalid_argument("cross_entropy: shape " + shape_str(logits.shape()) + " vs " +
                                    shape_str(labels.shape()));
    LossValue<T> out{0.0, Tensor<T>(logits.shape())};
    if (logits.empty()) return out;
    const double n = static_cast<double>(logits.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double z = logits[i], y = labels[i];
        if (y < 0.0 || y > 1.0) throw std::invalid_argument("cross_entropy: labels must lie in [0,1]");
        acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
        out.grad[i] = static_cast<T>((sigmoid(z) - y) / n);
    }
    out.value = acc / n;
    return out;
}

template <typename T>
Cosine<T> cosine_similarity(std::span<const T> u, std::span<const T> v) {
    if (u.size() != v.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
    double uv = 0, uu = 0, vv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        uv += static_cast<double>(u[i]) * v[i];
        uu += static_cast<double>(u[i]) * u[i];
        vv += static_cast<double>(v[i]) * v[i];
    }
    if (uu == 0.0 || vv == 0.0) return {0.0, true};
    const double c = uv / std::sqrt(uu * vv);
    return {std::clamp(c, -1.0, 1.0), false};
}

template <typename T>
void cosine_similarity_grad(std::span<const T> u, std::span<const T> v, std::span<T> du, std::span<T> dv) {
    double uv = 0, uu = 0, vv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        uv += static_cast<double>(u[i]) * v[i];
        uu += static_cast<double>(u[i]) * u[i];
        vv += static_cast<double>(v[i]) * v[i];
    }
    if (uu == 0.0 || vv == 0.0) {
        std::fill(du.begin(), du.end(), T(0));
        std::fill(dv.begin(), dv.end(), T(0));
        return;
    }
    const double inv = 1.0 / std::sqrt(uu * vv);
    const double c = uv * inv;
    for (std::size_t i = 0; i < u.size(); ++i) {
        du[i] = static_cast<T>(v[i] * inv - c * u[i] / uu);
        dv[i] = static_cast<T>(u[i] * inv - c * v[i] / vv);
    }
}

template LossValue<float> mse(const Tensor<float>&, const Tensor<float>&);
template LossValue<double> mse(const Tensor<double>&, const Tensor<double>&);
template LossValue<float> cross_entropy(const Tensor<float>&, const Tensor<float>&);
template LossValue<double> cross_entropy(const Tensor<double>&, const Tensor<double>&);
template Cosine<float> cosine_similarity(std::span<const float>, std::span<const float>);
template Cosine<double> cosine_similarity(std::span<const double>, std::span<const double>);
template void cosine_similarity_grad(std::span<const float>, std::span<const float>, std::span<float>,
                                     std::span<float>);
template void cosine_similarity_grad(std::span<const double>, std::span<const double>, std::span<double>,
                                     std::span<double>);

}  // namespace uwstereo::nn
