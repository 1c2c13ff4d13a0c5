#pragma once

#include "uwstereo/image.hpp"
#include "uwstereo/nn/network.hpp"
#include "uwstereo/nn/train.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace uwstereo::texture {

struct TextureConfig {
    int channels = 16;    // per conv layer
    int convs = 3;        // conv3x3 + ReLU layers per resolution
    double lambda = 1.0;  // detector weight of the unsupervised loss
    int crop = 48;        // training crop, a multiple of 4
    int tile = 128;       // inference tile
    int overlap = 16;     // linear feather between tiles
    bool match_brightness = true;

    static TextureConfig from_json(const nlohmann::json& j, const TextureConfig& defaults);
    static TextureConfig from_json(const nlohmann::json& j) { return from_json(j, TextureConfig{}); }
    nlohmann::json to_json() const;
};

/// Three-resolution network: full, 1/2 and 1/4 (max pooled). Each resolution
/// has its own conv stack; the coarser output is upsampled and concatenated
/// with the next finer input. A 1x1 head gives one output channel at full
/// resolution. Restoration uses it as a residual added to the input; the
/// detector uses it directly. Dimensions must be multiples of 4.
nn::Network<float> build_pyramid_net(const TextureConfig& cfg);

/// Xavier init with the head zeroed, so the residual restorer starts as the identity.
nn::Network<float> create_net(const TextureConfig& cfg, std::uint64_t seed);

/// Raw network output over any image size: tiles with edge-replicated
/// padding to a multiple of 4, blended with a linear feather in the overlap.
Image run_tiled(const nn::Network<float>& net, const Image& img, int tile, int overlap);

/// clamp(in + R(in), 0, 1) on the gray image.
Image restore(const nn::Network<float>& r, const Image& img, const TextureConfig& cfg);
/// D(in): estimated pattern difference image.
Image detect(const nn::Network<float>& d, const Image& img, const TextureConfig& cfg);

/// Least-squares gain and bias applied to `clean` so it best matches `reference`.
Image match_brightness(const Image& clean, const Image& reference);

struct Pair {
    Image input;
    Image target;
};

/// MSE(in + R(in), clean) on random crops; pairs are (degraded, clean).
nn::LossCurve train_supervised(nn::Network<float>& r, const std::vector<Pair>& pairs, const TextureConfig& tcfg,
                               const nn::TrainConfig& cfg);

/// MSE(D(in), difference) on random crops; pairs are (degraded, degraded - clean).
nn::LossCurve train_detector(nn::Network<float>& d, const std::vector<Pair>& pairs, const TextureConfig& tcfg,
                             const nn::TrainConfig& cfg);

/// (degraded, degraded - clean) from (degraded, clean).
std::vector<Pair> difference_pairs(const std::vector<Pair>& pairs);

template <typename T>
struct UnsupervisedLoss {
    double value = 0;     // fidelity + lambda * detector
    double fidelity = 0;  // MSE(in, R(in))
    double detector = 0;  // MSE(D(R(in)), 0)
    nn::Gradients<T> grads;  // for R only
};

/// MSE(in, R(in)) + lambda * MSE(D(R(in)), 0) on a batch [N, 1, H, W], where
/// R(in) = in + residual. Gradients are computed for R's parameters; D is
/// only differentiated with respect to its input. lambda < 0 is rejected.
template <typename T>
UnsupervisedLoss<T> unsupervised_loss(const nn::Network<T>& r, const nn::Network<T>& d, const nn::Tensor<T>& in,
                                      double lambda, bool want_grads = true);

/// Fine-tunes R on unlabeled images with the unsupervised loss; D is frozen.
nn::LossCurve train_unsupervised(nn::Network<float>& r, const nn::Network<float>& d, const std::vector<Image>& images,
                                 const TextureConfig& tcfg, const nn::TrainConfig& cfg);

/// Mean squared error of restore() against the targets.
double restore_mse(const nn::Network<float>& r, const std::vector<Pair>& pairs, const TextureConfig& cfg);
/// Mean of D(x)^2 over the images.
double detector_energy(const nn::Network<float>& d, const std::vector<Image>& images, const TextureConfig& cfg);

/// Additive sinusoidal stripes: amplitude * sin(2 pi (x cos a + y sin a) / period + phase).
struct StripeSpec {
    double period = 8;
    double angle = 0;  // radians
    double phase = 0;
    double amplitude = 0.15;
};
Image stripe_image(int width, int height, const StripeSpec& s);

/// Smooth natural-looking texture in [0.2, 0.8].
Image texture_image(int width, int height, std::uint64_t seed);

struct StripeSample {
    Image degraded;  // clamp(clean + stripes)
    Image clean;
    StripeSpec stripes;
};
/// Period in [6, 10] px, vertical stripes, random phase, amplitude in [0.1, 0.2].
StripeSample stripe_sample(int size, std::uint64_t seed);

/// Texture with and without the projector dot pattern (added and clamped, as the synthesizer renders it).
Pair pattern_pair(int size, std::uint64_t seed);

void save_net(const std::string& path, const nn::Network<float>& net, const std::string& kind,
              const TextureConfig& cfg, const nlohmann::json& extra = {});
/// Returns the network and fills cfg from the checkpoint; kind must match.
nn::Network<float> load_net(const std::string& path, const std::string& kind, TextureConfig* cfg = nullptr);

}  // namespace uwstereo::texture
