#pragma once

#include "uwstereo/image.hpp"
#include "uwstereo/refraction.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

namespace uwstereo::recon {

/// Rectified pinhole geometry used for triangulation.
struct Pinhole {
    double focal = 1000.0;  // px
    double cx = 0.0;
    double cy = 0.0;
    double baseline = 0.1;  // m

    static Pinhole from(const rectify::CameraModel& model, double rectified_focal = 0.0);
};

struct PointCloud {
    std::vector<Eigen::Vector3f> points;  // meters, camera frame
    std::vector<Eigen::Vector3f> normals;  // empty until estimated
    std::vector<std::array<std::uint8_t, 3>> colors;
    std::vector<std::array<int, 2>> pixels;  // source pixel (x, y)

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    /// Keeps the points whose flag is set, in order.
    PointCloud select(const std::vector<std::uint8_t>& keep) const;
};

struct TriangulationStats {
    std::size_t points = 0;
    std::size_t non_positive = 0;  // valid pixels with d <= 0, dropped
};

/// z = f b / d; x = (u - cx) z / f; y = (v - cy) z / f. Colors come from
/// `color` (gray or RGB, [0, 1]) when given.
PointCloud triangulate(const DisparityMap& disp, const Pinhole& cam, const Image* color = nullptr,
                       TriangulationStats* stats = nullptr);

/// Inverse of triangulate for one point: pixel (u, v) and disparity.
std::array<double, 3> project(const Eigen::Vector3f& p, const Pinhole& cam);

/// Uniform grid for exact k-nearest-neighbour queries.
class KnnGrid {
public:
    explicit KnnGrid(const std::vector<Eigen::Vector3f>& points, int target_per_cell = 8);
    /// Indices of the k nearest points to q (sorted by distance); `skip` is excluded.
    std::vector<int> query(const Eigen::Vector3f& q, int k, int skip = -1) const;

private:
    std::vector<Eigen::Vector3f> pts_;
    Eigen::Vector3f origin_;
    float cell_ = 1.0f;
    std::array<int, 3> dims_{1, 1, 1};
    std::vector<int> start_;  // cell -> first entry in order_
    std::vector<int> order_;
    std::array<int, 3> cell_of(const Eigen::Vector3f& p) const;
};

/// Statistical filter: drops points whose mean distance to their k nearest
/// neighbours exceeds median + sigma * max(1.4826 MAD, median / 2). Clouds with at most k
/// points are returned unchanged (with a warning).
PointCloud remove_outliers(const PointCloud& cloud, int k = 16, double sigma = 2.0);

/// Normals from a k-NN plane fit, oriented towards the camera centre.
void estimate_normals(PointCloud& cloud, int k = 16);

/// Binary little-endian PLY: x y z nx ny nz (float) red green blue (uchar).
void write_ply(const std::filesystem::path& path, const PointCloud& cloud);

struct Plane {
    Eigen::Vector3d normal;  // unit
    double offset = 0;       // normal . p + offset = 0
    /// Depth where the optical axis (x = y = 0) meets the plane.
    double depth_on_axis() const { return -offset / normal.z(); }
};
Plane fit_plane(const PointCloud& cloud);

struct DisparityErrors {
    double rmse = 0;            // over pixels valid in both maps
    double bad_rate = 0;        // |error| > threshold or missing estimate, over GT-valid pixels
    std::size_t compared = 0;   // pixels valid in both
    std::size_t gt_pixels = 0;  // GT-valid pixels inside the mask
    std::size_t bad = 0;
    double squared_error = 0;   // sum over compared pixels
    double coverage() const { return gt_pixels ? double(compared) / double(gt_pixels) : 0.0; }
};

class NoOverlap : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Left pixels whose correspondence x - d lies inside the right image and, when
/// the right GT is given, is not hidden there (|dR(x - round(d)) - d| <= tol).
Mask nonoccluded(const DisparityMap& gt_left, const DisparityMap* gt_right = nullptr, double tol = 1.0);

/// Error sums without the overlap check; rmse is 0 when nothing was compared.
DisparityErrors disparity_errors(const DisparityMap& est, const DisparityMap& gt, double threshold = 1.0,
                                 const Mask* mask = nullptr);

/// Throws NoOverlap when no pixel is valid in both maps (inside the mask, if given).
DisparityErrors eval_disparity(const DisparityMap& est, const DisparityMap& gt, double threshold = 1.0,
                               const Mask* mask = nullptr);

/// RMSE of each estimated point to its nearest ground-truth point.
double eval_cloud_rmse(const PointCloud& est, const PointCloud& gt);

}  // namespace uwstereo::recon
