#include "uwstereo/nn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace uwstereo::nn {

template <typename T>
void check_gradients(const Network<T>& net, const Gradients<T>& grads) {
    const auto& params = net.params();
    if (grads.params.size() != params.size())
        throw std::invalid_argument("gradient count " + std::to_string(grads.params.size()) +
                                    " does not match parameter count " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads.params[i].shape() != params[i].value.shape())
            throw ShapeError(params[i].name, "gradient shape " + shape_str(grads.params[i].shape()) +
                                                 " vs parameter " + shape_str(params[i].value.shape()));
        if (!grads.params[i].all_finite())
            throw NumericalError("non-finite gradient for parameter '" + params[i].name + "'; step rejected");
    }
}

template <typename T>
Sgd<T>::Sgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {
    if (!(lr >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0,1)");
}

template <typename T>
void Sgd<T>::step(Network<T>& net, const Gradients<T>& grads) {
    check_gradients(net, grads);
    auto& params = net.params();
    if (velocity_.size() != params.size()) {
        velocity_.clear();
        for (const auto& p : params) velocity_.emplace_back(p.value.shape());
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& w = params[i].value;
        auto& v = velocity_[i];
        const auto& g = grads.params[i];
        if (momentum_ == 0.0) {
            for (std::size_t k = 0; k < w.size(); ++k) w[k] -= static_cast<T>(lr_) * g[k];
        } else {
            for (std::size_t k = 0; k < w.size(); ++k) {
                v[k] = static_cast<T>(momentum_) * v[k] + g[k];
                w[k] -= static_cast<T>(lr_) * v[k];
            }
        }
    }
}

template <typename T>
Adam<T>::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(lr >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
}

template <typename T>
void Adam<T>::step(Network<T>& net, const Gradients<T>& grads) {
    check_gradients(net, grads);
    auto& params = net.params();
    if (m_.size() != params.size()) {
        m_.clear();
        v_.clear();
        for (const auto& p : params) {
            m_.emplace_back(p.value.shape());
            v_.emplace_back(p.value.shape());
        }
    }
    ++steps_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& w = params[i].value;
        const auto& g = grads.params[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double gk = g[k];
            const double m = beta1_ * m_[i][k] + (1.0 - beta1_) * gk;
            const double v = beta2_ * v_[i][k] + (1.0 - beta2_) * gk * gk;
            m_[i][k] = static_cast<T>(m);
            v_[i][k] = static_cast<T>(v);
            w[k] -= static_cast<T>(lr_ * (m / c1) / (std::sqrt(v / c2) + eps_));
        }
    }
}

template <typename T>
void sgd_step(Network<T>& net, const Gradients<T>& grads, double lr, double momentum) {
    Sgd<T> opt(lr, momentum);
    opt.step(net, grads);
}

template <typename T>
void accumulate(Gradients<T>& into, const Gradients<T>& from) {
    if (into.params.empty()) {
        into.params = from.params;
        return;
    }
    if (into.params.size() != from.params.size()) throw std::invalid_argument("gradient sets differ in size");
    for (std::size_t i = 0; i < into.params.size(); ++i)
        for (std::size_t k = 0; k < into.params[i].size(); ++k) into.params[i][k] += from.params[i][k];
}

template class Sgd<float>;
template class Sgd<double>;
template class Adam<float>;
template class Adam<double>;
template void sgd_step(Network<float>&, const Gradients<float>&, double, double);
template void sgd_step(Network<double>&, const Gradients<double>&, double, double);
template void check_gradients(const Network<float>&, const Gradients<float>&);
template void check_gradients(const Network<double>&, const Gradients<double>&);
template void accumulate(Gradients<float>&, const Gradients<float>&);
template void accumulate(Gradients<double>&, const Gradients<double>&);

}  // namespace uwstereo::nn
