#pragma once

#include "uwstereo/nn/optim.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace uwstereo::nn {

struct TrainConfig {
    int epochs = 10;
    int batch = 16;
    double lr = 1e-3;
    std::string optimizer = "adam";  // "adam" or "sgd"
    double momentum = 0.9;           // sgd only
    std::uint64_t seed = 1;

    static TrainConfig from_json(const nlohmann::json& j, const TrainConfig& defaults);
    static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }
    nlohmann::json to_json() const;
};

/// Optimizer chosen at run time from a TrainConfig.
template <typename T>
class Optimizer {
public:
    explicit Optimizer(const TrainConfig& cfg);
    void step(Network<T>& net, const Gradients<T>& grads);

private:
    std::unique_ptr<Sgd<T>> sgd_;
    std::unique_ptr<Adam<T>> adam_;
};

/// Per-epoch mean training loss.
struct LossCurve {
    std::vector<double> epoch_loss;
    void write_csv(const std::string& path) const;
};

}  // namespace uwstereo::nn
