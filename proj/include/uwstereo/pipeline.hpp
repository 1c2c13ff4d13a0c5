#pragma once

#include "uwstereo/costvol.hpp"
#include "uwstereo/image.hpp"
#include "uwstereo/matcher.hpp"

#include <nlohmann/json.hpp>

namespace uwstereo::stereo {

struct StereoConfig {
    int d_min = 0;
    int d_max = 256;
    SgmParams sgm;
    float lr_tol = 1.0f;
    bool subpixel = true;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    static StereoConfig from_json(const nlohmann::json& j, const StereoConfig& defaults);
    static StereoConfig from_json(const nlohmann::json& j) { return from_json(j, StereoConfig{}); }
    nlohmann::json to_json() const;
};

struct MatchTimings {
    double descriptors = 0;  // seconds
    double cost = 0;
    double sgm = 0;
    double select = 0;  // WTA, LR check, subpixel
};

struct MatchOutput {
    DisparityMap disparity;  // final, left view
    DisparityMap left;       // WTA before the LR check
    DisparityMap right;
    std::size_t degenerate_pixels = 0;
    std::size_t lr_rejected = 0;
    MatchTimings timings;
};

/// Descriptors of both views -> masked cost volume -> SGM -> WTA for both
/// views -> LR check -> subpixel refinement. The frame must be rectified;
/// masks may be null. The disparity range is clipped to the image width.
MatchOutput match(const StereoFrame& frame, const Matcher& matcher, const StereoConfig& cfg,
                  const Mask* left_mask = nullptr, const Mask* right_mask = nullptr);

/// Same, from precomputed descriptor maps.
MatchOutput match(const DescriptorMap& left, const DescriptorMap& right, const StereoConfig& cfg,
                  const Mask* left_mask = nullptr, const Mask* right_mask = nullptr);

}  // namespace uwstereo::stereo
