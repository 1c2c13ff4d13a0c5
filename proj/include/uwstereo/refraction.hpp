#pragma once

#include "uwstereo/image.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <array>
#include <filesystem>
#include <vector>

namespace uwstereo::rectify {

/// Distortion fitted at one calibration distance.
struct DepthAnchor {
    double depth = 1.0;  // meters
    double k1 = 0.0;
    double k2 = 0.0;
    double focal = 0.0;  // pixels
};

struct Coefficients {
    double k1 = 0.0;
    double k2 = 0.0;
    double focal = 0.0;
};

/// Underwater camera pair approximated as two identical central-projection
/// cameras whose radial distortion and focal length vary with working depth.
/// left_rotation / right_rotation rotate each camera frame into the common
/// rectified frame.
struct CameraModel {
    double focal = 1000.0;
    double cx = 0.0;
    double cy = 0.0;
    double baseline = 0.1;
    int width = 0;
    int height = 0;
    std::vector<DepthAnchor> anchors;
    Eigen::Matrix3d left_rotation = Eigen::Matrix3d::Identity();
    Eigen::Matrix3d right_rotation = Eigen::Matrix3d::Identity();

    /// Throws std::invalid_argument when the invariants do not hold.
    void validate() const;

    /// Linear interpolation of the anchor triplets, constant beyond the end
    /// anchors. Hints outside [first * 0.5, last * 2] are clamped to that range
    /// with a warning.
    Coefficients at_depth(double depth) const;

    Eigen::Matrix3d intrinsics(double f) const;
};

struct Pixel {
    double u = 0.0;
    double v = 0.0;
};

/// Applies x' = x (1 + k1 r^2 + k2 r^4) in coordinates normalized by the focal
/// length at `depth`.
Pixel distort(const CameraModel& model, double depth, Pixel p);

/// Inverse of distort, by Newton iteration on the radius.
Pixel undistort(const CameraModel& model, double depth, Pixel p);

struct RectifiedPairMeta {
    Eigen::Matrix3d left_homography;   // undistorted left pixel -> rectified pixel
    Eigen::Matrix3d right_homography;
    double focal = 0.0;                // focal of the rectified pair
    std::array<int, 4> valid_region{};  // x0, y0, x1, y1 (exclusive)
};

/// Maps a raw (distorted) pixel of one camera into the rectified image.
Pixel rectify_point(const CameraModel& model, const RectifiedPairMeta& meta, double depth, Pixel raw, bool right);

RectifiedPairMeta rectification(const CameraModel& model, double depth);

struct RectifiedPair {
    StereoFrame frame;
    RectifiedPairMeta meta;
};

/// Undistorts and row-aligns a raw pair with bilinear resampling. Pixels whose
/// source falls outside the raw image are set to 0.
RectifiedPair rectify_pair(const CameraModel& model, const Image& left, const Image& right, double depth);

/// Least-squares (k1, k2) from ideal and observed (distorted) pixel positions.
Coefficients fit_radial(const std::vector<Pixel>& ideal, const std::vector<Pixel>& observed, double focal, double cx,
                        double cy);

nlohmann::json to_json(const CameraModel& model);
CameraModel camera_from_json(const nlohmann::json& j);
CameraModel load_calibration(const std::filesystem::path& path);
void save_calibration(const std::filesystem::path& path, const CameraModel& model);

}  // namespace uwstereo::rectify
