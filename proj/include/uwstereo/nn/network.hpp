#pragma once

#include "uwstereo/nn/tensor.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace uwstereo::nn {

enum class LayerKind { Input, Conv2d, MaxPool2, Upsample2, Relu, Concat, Linear, Crop };

const char* to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& s);

struct LayerHyper {
    int kernel = 0;
    int stride = 1;
    int padding = 0;
    int in_channels = 0;   // conv: input channels; linear: input features
    int out_channels = 0;  // conv: output channels; linear: output features
    bool bias = true;
    int crop_y = 0, crop_x = 0, crop_h = 0, crop_w = 0;  // crop window
};

struct Layer {
    LayerKind kind = LayerKind::Input;
    std::string name;
    std::vector<int> inputs;  // producer node ids
    LayerHyper hyper;
    int channels = 0;  // output channels (features for linear)
    int weight = -1;   // parameter index, -1 when absent
    int bias = -1;
};

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
};

/// Activations kept from a forward pass; consumed by Network::backward.
template <typename T>
struct Tape {
    std::vector<Tensor<T>> values;              // one per node
    std::vector<std::vector<std::uint8_t>> argmax;  // maxpool routing, per node
    int output = -1;

    bool recorded() const { return output >= 0; }
    const Tensor<T>& result() const { return values.at(static_cast<std::size_t>(output)); }
};

template <typename T>
struct Gradients {
    std::vector<Tensor<T>> params;  // aligned with Network::params(); empty when not requested
    std::vector<Tensor<T>> inputs;  // aligned with the network's input nodes
};

/// Directed acyclic graph of layers. Nodes are appended in topological order:
/// a layer can only consume nodes created before it, so the graph is acyclic
/// by construction. Spatial extents are dynamic; channel counts are fixed.
template <typename T>
class Network {
public:
    int input(const std::string& name, int channels);
    int conv2d(int src, int out_channels, int kernel, const std::string& name = {}, int stride = 1, int padding = -1,
               bool bias = true);
    int maxpool2(int src, const std::string& name = {});
    int upsample2(int src, const std::string& name = {});
    int relu(int src, const std::string& name = {});
    int concat(const std::vector<int>& srcs, const std::string& name = {});
    int linear(int src, int in_features, int out_features, const std::string& name = {}, bool bias = true);
    /// Spatial window [y, y + h) x [x, x + w) of an NCHW tensor.
    int crop(int src, int y, int x, int h, int w, const std::string& name = {});
    void set_output(int node);

    int output() const { return output_; }
    const std::vector<Layer>& layers() const { return layers_; }
    const std::vector<int>& input_nodes() const { return inputs_; }
    std::vector<Parameter<T>>& params() { return params_; }
    const std::vector<Parameter<T>>& params() const { return params_; }
    std::size_t parameter_count() const;

    /// Uniform in +-sqrt(6 / (fan_in + fan_out)); biases zero.
    void init_xavier(std::uint64_t seed);
    void zero_params();

    Tensor<T> forward(const std::vector<Tensor<T>>& inputs) const;
    Tape<T> forward_recorded(const std::vector<Tensor<T>>& inputs) const;
    Gradients<T> backward(const Tape<T>& tape, const Tensor<T>& output_grad, bool param_grads = true,
                          bool input_grads = false) const;

    nlohmann::json graph() const;
    static Network from_graph(const nlohmann::json& graph);

    template <typename U>
    Network<U> cast() const {
        Network<U> out = Network<U>::from_graph(graph());
        for (std::size_t i = 0; i < params_.size(); ++i) out.params()[i].value = params_[i].value.template cast<U>();
        return out;
    }

private:
    int add(Layer layer);
    int add_param(const std::string& name, Shape shape);
    const Layer& node(int id) const;
    void run(const std::vector<Tensor<T>>& inputs, Tape<T>& tape, bool keep_argmax) const;

    std::vector<Layer> layers_;
    std::vector<int> inputs_;
    std::vector<Parameter<T>> params_;
    int output_ = -1;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace uwstereo::nn
