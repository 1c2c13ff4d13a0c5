#pragma once

#include "uwstereo/image.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace uwstereo::stereo {

/// Cells at or above this value are invalid and never win a minimum.
inline constexpr float kInvalidCost = 1e30f;

inline bool valid_cost(float c) { return c < kInvalidCost; }

/// Matching cost per (x, y, d), disparity innermost: index ((y * W + x) * D + (d - d_min)).
struct CostVolume {
    int width = 0;
    int height = 0;
    int d_min = 0;
    int d_max = 0;  // inclusive
    std::vector<float> cost;

    CostVolume() = default;
    CostVolume(int w, int h, int dmin, int dmax, float fill = kInvalidCost);

    int disparities() const { return d_max - d_min + 1; }
    std::size_t offset(int x, int y) const {
        return (static_cast<std::size_t>(y) * width + x) * static_cast<std::size_t>(disparities());
    }
    float& at(int x, int y, int d) { return cost[offset(x, y) + static_cast<std::size_t>(d - d_min)]; }
    float at(int x, int y, int d) const { return cost[offset(x, y) + static_cast<std::size_t>(d - d_min)]; }
    bool valid(int x, int y, int d) const { return valid_cost(at(x, y, d)); }
    std::size_t valid_cells() const;
};

/// Dense unit-normalized descriptors, pixel-major: [y][x][feature].
struct DescriptorMap {
    int width = 0;
    int height = 0;
    int features = 0;
    std::vector<float> data;
    std::vector<std::uint8_t> degenerate;  // 1 where the raw descriptor had zero norm

    const float* at(int x, int y) const {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * static_cast<std::size_t>(features);
    }
};

/// Normalizes raw descriptors in place to unit length; zero vectors are
/// flagged and left at zero (their cosine similarity is 0). Returns the
/// number of flagged pixels.
std::size_t normalize_descriptors(DescriptorMap& map);

struct CostStats {
    std::size_t degenerate_pixels = 0;
};

/// cost(x, y, d) = 1 - cos(left(x, y), right(x - d, y)). A cell is invalid when
/// the left pixel is outside left_mask, x - d leaves the image, or the right
/// pixel is outside right_mask. Masks may be null (everything allowed).
CostVolume build_cost_volume(const DescriptorMap& left, const DescriptorMap& right, const Mask* left_mask,
                             const Mask* right_mask, int d_min, int d_max, CostStats* stats = nullptr);

struct SgmParams {
    float p1 = 0.03f;
    float p2 = 0.5f;
    int paths = 8;  // 1 (left-to-right only), 4 or 8
    /// Subtract min_k L_r(p-r, k) at every step. Off gives the exact path
    /// energies; on keeps sums comparable between pixels (needed for the
    /// right-view disparity) with the same per-pixel argmin.
    bool normalize = true;
};

/// Path directions (dx, dy) used for a given path count, in aggregation order.
std::vector<std::pair<int, int>> sgm_directions(int paths);

/// Sum over path directions r of
///   L_r(p, d) = C(p, d) + min(L_r(p-r, d), L_r(p-r, d+-1) + p1, min_k L_r(p-r, k) + p2)
/// optionally minus min_k L_r(p-r, k). Without normalization each L_r equals the
/// exact minimum path energy.
/// Invalid cells stay invalid and are never used as predecessors; a path whose
/// predecessor has no valid cell restarts at C.
CostVolume sgm_aggregate(const CostVolume& vol, const SgmParams& params);

/// Aggregation along a single direction (exposed for testing against oracles).
CostVolume sgm_path(const CostVolume& vol, int dx, int dy, float p1, float p2);

/// Lowest-cost disparity per pixel; ties go to the smaller disparity. Pixels
/// without a valid cell are invalid.
DisparityMap winner_take_all(const CostVolume& vol);

/// Right-view disparity from a left-referenced volume: argmin_d C(xr + d, y, d).
DisparityMap right_disparity(const CostVolume& vol);

/// Keeps pixel (x, y) iff |dL(x, y) - dR(x - round(dL), y)| <= tol.
DisparityMap lr_check(const DisparityMap& left, const DisparityMap& right, float tol);

/// Parabola through (d-1, d, d+1); offset (c- - c+) / (2 (c- + c+ - 2 c0)),
/// limited to +-0.5. Pixels at the range boundary or with an invalid neighbour
/// are left as they are.
DisparityMap subpixel_refine(const CostVolume& vol, const DisparityMap& disp);

}  // namespace uwstereo::stereo
