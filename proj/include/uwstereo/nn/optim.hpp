#pragma once

#include "uwstereo/nn/network.hpp"

#include <string>
#include <vector>

namespace uwstereo::nn {

/// SGD with classical momentum: v <- m v + g; w <- w - lr v.
/// With momentum 0 this is exactly w <- w - lr g.
template <typename T>
class Sgd {
public:
    Sgd(double lr, double momentum);
    void step(Network<T>& net, const Gradients<T>& grads);
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

private:
    double lr_;
    double momentum_;
    std::vector<Tensor<T>> velocity_;
};

template <typename T>
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(Network<T>& net, const Gradients<T>& grads);
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

private:
    double lr_, beta1_, beta2_, eps_;
    long steps_ = 0;
    std::vector<Tensor<T>> m_, v_;
};

/// Single stateless momentum-free step, or a step through a caller-owned
/// Sgd when momentum is needed across calls.
template <typename T>
void sgd_step(Network<T>& net, const Gradients<T>& grads, double lr, double momentum = 0.0);

/// Throws NumericalError if any gradient is non-finite or mis-shaped.
template <typename T>
void check_gradients(const Network<T>& net, const Gradients<T>& grads);

/// Elementwise sum of gradients (for accumulating over several backward calls).
template <typename T>
void accumulate(Gradients<T>& into, const Gradients<T>& from);

}  // namespace uwstereo::nn
