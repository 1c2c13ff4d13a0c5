#include "uwstereo/nn/train.hpp"

#include <fstream>
#include <stdexcept>

namespace uwstereo::nn {

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const TrainConfig& defaults) {
    TrainConfig c = defaults;
    c.epochs = j.value("epochs", c.epochs);
    c.batch = j.value("batch", c.batch);
    c.lr = j.value("lr", c.lr);
    c.optimizer = j.value("optimizer", c.optimizer);
    c.momentum = j.value("momentum", c.momentum);
    c.seed = j.value("seed", c.seed);
    if (c.epochs < 0) throw std::invalid_argument("epochs must be non-negative");
    if (c.batch < 1) throw std::invalid_argument("batch must be at least 1");
    if (!(c.lr >= 0)) throw std::invalid_argument("learning rate must be non-negative");
    if (c.optimizer != "adam" && c.optimizer != "sgd")
        throw std::invalid_argument("optimizer must be 'adam' or 'sgd', got '" + c.optimizer + "'");
    return c;
}

nlohmann::json TrainConfig::to_json() const {
    return {{"epochs", epochs}, {"batch", batch}, {"lr", lr}, {"optimizer", optimizer}, {"momentum", momentum},
            {"seed", seed}};
}

template <typename T>
Optimizer<T>::Optimizer(const TrainConfig& cfg) {
    if (cfg.optimizer == "sgd")
        sgd_ = std::make_unique<Sgd<T>>(cfg.lr, cfg.momentum);
    else
        adam_ = std::make_unique<Adam<T>>(cfg.lr);
}

template <typename T>
void Optimizer<T>::step(Network<T>& net, const Gradients<T>& grads) {
    if (sgd_)
        sgd_->step(net, grads);
    else
        adam_->step(net, grads);
}

void LossCurve::write_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "epoch,loss\n";
    for (std::size_t i = 0; i < epoch_loss.size(); ++i) os << i + 1 << ',' << epoch_loss[i] << '\n';
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace uwstereo::nn
