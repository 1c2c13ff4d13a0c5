#pragma once

#include "uwstereo/image.hpp"
#include "uwstereo/nn/network.hpp"
#include "uwstereo/nn/train.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace uwstereo::seg {

struct SegConfig {
    int levels = 5;
    int base_channels = 16;  // doubles per level
    float threshold = 0.5f;
    int dilation = 4;        // margin applied before the mask constrains stereo

    static SegConfig from_json(const nlohmann::json& j, const SegConfig& defaults);
    static SegConfig from_json(const nlohmann::json& j) { return from_json(j, SegConfig{}); }
    nlohmann::json to_json() const;
};

struct AugmentConfig {
    int factor = 10;  // output pairs per source pair, the source included
    bool scale = true;
    bool rotate = true;
    bool translate = true;
    double max_scale = 0.2;      // relative
    double max_rotation = 30.0;  // degrees
    double max_shift = 0.1;      // fraction of the image size

    static AugmentConfig from_json(const nlohmann::json& j, const AugmentConfig& defaults);
    static AugmentConfig from_json(const nlohmann::json& j) { return from_json(j, AugmentConfig{}); }
    nlohmann::json to_json() const;
};

using Sample = std::pair<Image, Mask>;

/// Each source contributes itself plus factor - 1 random similarity warps
/// (bilinear for the image, nearest for the mask).
std::vector<Sample> augment(const std::vector<Sample>& sources, const AugmentConfig& cfg, std::uint64_t seed);

/// U-Net: two 3x3 conv + ReLU per level, maxpool down, upsample + skip concat
/// up, 1x1 conv to one logit.
nn::Network<float> build_unet(const SegConfig& cfg);

class Segmenter {
public:
    Segmenter() = default;
    Segmenter(SegConfig cfg, nn::Network<float> net);
    static Segmenter create(const SegConfig& cfg, std::uint64_t seed);

    const SegConfig& config() const { return cfg_; }
    nn::Network<float>& net() { return net_; }
    const nn::Network<float>& net() const { return net_; }
    int levels() const { return cfg_.levels; }

    /// Per-pixel target probability; any size, padded internally to a
    /// multiple of 2^(levels-1) and cropped back.
    Image probabilities(const Image& img) const;
    Mask segment(const Image& img) const;
    /// segment() followed by the configured dilation.
    Mask stereo_mask(const Image& img) const;

    void save(const std::string& path, const nlohmann::json& extra = {}) const;
    /// Rebuilds the U-Net from the stored config and checks the graph matches.
    static Segmenter load(const std::string& path);

private:
    SegConfig cfg_;
    nn::Network<float> net_;
};

/// Binary cross-entropy training on (image, mask) pairs.
nn::LossCurve train_segmenter(Segmenter& seg, const std::vector<Sample>& samples, const nn::TrainConfig& cfg);

double iou(const Mask& a, const Mask& b);

/// Synthetic target-segmentation task: a bright disc (radius 15-40 % of the size) on a dark
/// field lit by a strong random illumination ramp, so the disc is brighter
/// than its surroundings but not brighter than every background pixel.
Sample disc_sample(int size, std::uint64_t seed);

}  // namespace uwstereo::seg
