#pragma once

// Central finite-difference oracle for networks and scalar objectives. Test-only.

#include "uwstereo/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace uwstereo::oracle {

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::sqrt(std::max(na, nb));
    return scale == 0.0 ? std::sqrt(diff) : std::sqrt(diff) / scale;
}

/// Numerical gradient of objective() w.r.t. every value in `values`.
inline std::vector<double> numeric_gradient(std::vector<double>& values, const std::function<double()>& objective,
                                            double step) {
    std::vector<double> g(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double keep = values[i];
        values[i] = keep + step;
        const double up = objective();
        values[i] = keep - step;
        const double down = objective();
        values[i] = keep;
        g[i] = (up - down) / (2 * step);
    }
    return g;
}

inline nn::Tensor<double> random_tensor(nn::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    nn::Tensor<double> t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.vec()) v = dist(rng);
    return t;
}

struct GradCheckResult {
    double param_error = 0.0;
    double input_error = 0.0;
};

/// Loss = sum(output * probe) for a fixed random probe, so d loss / d output = probe.
inline GradCheckResult check_network(const nn::Network<double>& net_in, const std::vector<nn::Tensor<double>>& inputs,
                                     std::uint64_t seed, double step = 1e-6) {
    nn::Network<double> net = net_in;
    std::mt19937_64 rng(seed);
    auto out = net.forward(inputs);
    auto probe = random_tensor(out.shape(), rng);

    auto tape = net.forward_recorded(inputs);
    auto grads = net.backward(tape, probe, true, true);

    auto loss_of = [&](const std::vector<nn::Tensor<double>>& xs) {
        auto y = net.forward(xs);
        double acc = 0;
        for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * probe[i];
        return acc;
    };

    GradCheckResult res;
    {
        std::vector<double> analytic, numeric;
        for (std::size_t p = 0; p < net.params().size(); ++p) {
            auto& vals = net.params()[p].value.vec();
            auto num = numeric_gradient(vals, [&] { return loss_of(inputs); }, step);
            numeric.insert(numeric.end(), num.begin(), num.end());
            analytic.insert(analytic.end(), grads.params[p].vec().begin(), grads.params[p].vec().end());
        }
        res.param_error = relative_error(analytic, numeric);
    }
    {
        std::vector<double> analytic, numeric;
        auto xs = inputs;
        for (std::size_t k = 0; k < xs.size(); ++k) {
            auto num = numeric_gradient(xs[k].vec(), [&] { return loss_of(xs); }, step);
            numeric.insert(numeric.end(), num.begin(), num.end());
            analytic.insert(analytic.end(), grads.inputs[k].vec().begin(), grads.inputs[k].vec().end());
        }
        res.input_error = relative_error(analytic, numeric);
    }
    return res;
}

}  // namespace uwstereo::oracle
