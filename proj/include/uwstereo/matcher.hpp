#pragma once

#include "uwstereo/costvol.hpp"
#include "uwstereo/image.hpp"
#include "uwstereo/nn/checkpoint.hpp"
#include "uwstereo/nn/network.hpp"
#include "uwstereo/nn/train.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace uwstereo::stereo {

struct MatcherConfig {
    int scales = 3;
    int patch = 0;            // 0: 11 * 2^(scales - 1), i.e. 44 for three scales
    int channels = 16;        // per conv layer in every scale
    int layers_per_scale = 3;
    int hidden = 112;
    int features = 112;

    int patch_size() const { return patch > 0 ? patch : 11 << (scales - 1); }
    /// Throws std::invalid_argument unless the patch is divisible by
    /// 2^(scales-1) and every scale's receptive field fits inside it.
    void validate() const;

    static MatcherConfig from_json(const nlohmann::json& j, const MatcherConfig& defaults);
    static MatcherConfig from_json(const nlohmann::json& j) { return from_json(j, MatcherConfig{}); }
    nlohmann::json to_json() const;
};

/// Zero-mean / unit-variance normalization of every pixel over the patch
/// window around it (the in-image part of [x - w/2, x - w/2 + w)), with
/// sigma = sqrt(var + 1e-4). Applied to the whole image before patches are taken.
Image normalize_local(const Image& img, int window);

/// Multi-scale patch network. Both views run through the same instance, so
/// the two branches share one weight store by construction.
///
/// Patch route: patch -> maxpool pyramid -> per-scale conv stacks -> centre
/// vector of every scale, concatenated -> integration layers -> descriptor.
/// Only the centre's receptive field is evaluated: each scale is cropped to
/// a (2L+1)^2 window and run through unpadded convolutions, which equals
/// upsampling the padded full-size maps and reading the centre column
/// (see full_maps). The dense route evaluates the same function at every
/// pixel with dilated convolutions.
class Matcher {
public:
    Matcher() = default;
    static Matcher create(const MatcherConfig& cfg, std::uint64_t seed);

    const MatcherConfig& config() const { return cfg_; }
    int patch_size() const { return cfg_.patch_size(); }
    int concat_channels() const { return cfg_.scales * cfg_.channels; }
    int features() const { return cfg_.features; }

    nn::Network<float>& net() { return net_; }
    const nn::Network<float>& net() const { return net_; }
    std::size_t parameter_count() const { return net_.parameter_count(); }
    /// Node holding the concatenated per-scale centre vectors [N, S*C, 1, 1].
    int concat_node() const { return concat_node_; }

    /// Per-scale maps of padded convolutions over the whole patch, upsampled
    /// to P x P and concatenated: [N, S*C, P, P].
    nn::Tensor<float> full_maps(const nn::Tensor<float>& patches) const;

    /// Raw (unnormalized) descriptors for a batch of normalized patches
    /// [N, 1, P, P] -> [N, features]. Other sizes are rejected.
    nn::Tensor<float> describe(const nn::Tensor<float>& patches) const;
    std::vector<float> describe(const Image& patch) const;

    /// Cosine similarity of the two descriptors; zero-norm -> 0 with flag.
    double similarity(const Image& left_patch, const Image& right_patch, bool* degenerate = nullptr) const;

    /// Raw descriptor at every pixel of an already normalized gray image.
    DescriptorMap describe_dense(const Image& normalized) const;

    /// gray + normalize_local + describe_dense + normalize_descriptors.
    DescriptorMap descriptors(const Image& img) const;

    nlohmann::json meta() const;
    void save(const std::string& path, const nlohmann::json& extra = {}) const;
    static Matcher load(const std::string& path);
    static Matcher from_checkpoint(const nn::Checkpoint& ckpt);

private:
    static nn::Network<float> build(const MatcherConfig& cfg, int* concat_node);

    MatcherConfig cfg_;
    nn::Network<float> net_;
    int concat_node_ = -1;
};

/// Patch of size P centred at (x, y) (centre index P / 2) from a normalized
/// image, bilinear at sub-pixel x, zero outside the image.
void extract_patch(const Image& normalized, double x, int y, int size, float* dst);

struct PairSamplingConfig {
    double margin = 0.2;
    int neg_min = 4;
    int neg_max = 16;
    int pairs_per_frame = 2000;

    static PairSamplingConfig from_json(const nlohmann::json& j, const PairSamplingConfig& defaults);
    static PairSamplingConfig from_json(const nlohmann::json& j) { return from_json(j, PairSamplingConfig{}); }
    nlohmann::json to_json() const;
};

/// Training examples: left patch, right patch at GT, right patch at GT +- offset.
struct TripletSet {
    int patch = 0;
    std::vector<float> anchor, positive, negative;  // each count * patch * patch
    std::size_t count() const { return patch ? anchor.size() / static_cast<std::size_t>(patch * patch) : 0; }
};

/// Samples triplets from frames with left GT (and left mask, when present).
/// Frames without GT are skipped with a warning.
TripletSet sample_triplets(const std::vector<StereoFrame>& frames, int patch, const PairSamplingConfig& cfg,
                           std::uint64_t seed);

struct HingeStats {
    double loss = 0;
    double mean_pos = 0;
    double mean_neg = 0;
};

/// Mean hinge max(0, m - s+ + s-) over the selected triplets; fills the
/// parameter gradients when grads is non-null.
HingeStats hinge_batch(const Matcher& m, const TripletSet& set, std::span<const std::size_t> idx, double margin,
                       nn::Gradients<float>* grads);

/// Scores a held-out triplet set without training.
HingeStats evaluate_triplets(const Matcher& m, const TripletSet& set, double margin);

/// Trains in place; returns per-epoch loss. Zero epochs leaves the weights untouched.
nn::LossCurve train_matcher(Matcher& m, const TripletSet& set, const PairSamplingConfig& sampling,
                            const nn::TrainConfig& cfg);

}  // namespace uwstereo::stereo
