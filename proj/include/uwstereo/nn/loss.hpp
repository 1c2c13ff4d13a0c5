#pragma once

#include "uwstereo/nn/tensor.hpp"

#include <span>

namespace uwstereo::nn {

template <typename T>
struct LossValue {
    double value = 0.0;
    Tensor<T> grad;  // d loss / d first argument
};

/// Mean squared error over all elements.
template <typename T>
LossValue<T> mse(const Tensor<T>& a, const Tensor<T>& b);

/// Binary cross entropy on logits (sigmoid folded in), averaged over elements.
/// labels must be in [0, 1].
template <typename T>
LossValue<T> cross_entropy(const Tensor<T>& logits, const Tensor<T>& labels);

template <typename T>
struct Cosine {
    double value = 0.0;
    bool degenerate = false;  // one of the vectors had zero norm; value is 0
};

template <typename T>
Cosine<T> cosine_similarity(std::span<const T> u, std::span<const T> v);

/// Gradients of cosine(u, v) w.r.t. u and v, written to du/dv (overwritten).
/// Zero when either vector has zero norm.
template <typename T>
void cosine_similarity_grad(std::span<const T> u, std::span<const T> v, std::span<T> du, std::span<T> dv);

template <typename T>
inline T sigmoid(T z) {
    return z >= T(0) ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
}

}  // namespace uwstereo::nn
