#include "uwstereo/costvol.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uwstereo::stereo {

CostVolume::CostVolume(int w, int h, int dmin, int dmax, float fill)
    : width(w), height(h), d_min(dmin), d_max(dmax) {
    if (w < 0 || h < 0) throw std::invalid_argument("cost volume extents must be non-negative");
    if (dmax < dmin) throw std::invalid_argument("disparity range is empty");
    cost.assign(static_cast<std::size_t>(w) * h * static_cast<std::size_t>(dmax - dmin + 1), fill);
}

std::size_t CostVolume::valid_cells() const {
    return static_cast<std::size_t>(std::count_if(cost.begin(), cost.end(), valid_cost));
}

std::size_t normalize_descriptors(DescriptorMap& map) {
    const std::size_t n = static_cast<std::size_t>(map.width) * map.height;
    const auto f = static_cast<std::size_t>(map.features);
    map.degenerate.assign(n, 0);
    std::size_t flagged = 0;
    for (std::size_t i = 0; i < n; ++i) {
        float* v = map.data.data() + i * f;
        double ss = 0;
        for (std::size_t k = 0; k < f; ++k) ss += static_cast<double>(v[k]) * v[k];
        if (ss == 0.0) {
            map.degenerate[i] = 1;
            ++flagged;
            continue;
        }
        const float inv = static_cast<float>(1.0 / std::sqrt(ss));
        for (std::size_t k = 0; k < f; ++k) v[k] *= inv;
    }
    return flagged;
}

CostVolume build_cost_volume(const DescriptorMap& left, const DescriptorMap& right, const Mask* left_mask,
                             const Mask* right_mask, int d_min, int d_max, CostStats* stats) {
    if (left.width != right.width || left.height != right.height || left.features != right.features)
        throw std::invalid_argument("descriptor maps differ in size");
    if (left_mask && (left_mask->width != left.width || left_mask->height != left.height))
        throw std::invalid_argument("left mask size does not match descriptor map");
    if (right_mask && (right_mask->width != right.width || right_mask->height != right.height))
        throw std::invalid_argument("right mask size does not match descriptor map");
    if (d_min < 0) throw std::invalid_argument("negative minimum disparity");

    const int w = left.width, h = left.height, f = left.features;
    CostVolume vol(w, h, d_min, d_max);
    const int nd = vol.disparities();
    constexpr int kBlock = 64;
    using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

#pragma omp parallel
    {
        RowMat sim;
#pragma omp for schedule(dynamic, 4)
        for (int y = 0; y < h; ++y) {
            for (int x0 = 0; x0 < w; x0 += kBlock) {
                const int x1 = std::min(x0 + kBlock, w);  // exclusive
                // Right pixels touched by this block: [x0 - d_max, x1 - 1 - d_min] clipped.
                const int r0 = std::max(0, x0 - d_max);
                const int r1 = x1 - 1 - d_min;  // inclusive
                if (r1 < r0) continue;
                Eigen::Map<const RowMat> lmat(left.at(x0, y), x1 - x0, f);
                Eigen::Map<const RowMat> rmat(right.at(r0, y), r1 - r0 + 1, f);
                sim.noalias() = lmat * rmat.transpose();
                for (int x = x0; x < x1; ++x) {
                    if (left_mask && !left_mask->at(x, y)) continue;
                    float* c = vol.cost.data() + vol.offset(x, y);
                    for (int k = 0; k < nd; ++k) {
                        const int xr = x - (d_min + k);
                        if (xr < r0 || xr > r1) continue;
                        if (right_mask && !right_mask->at(xr, y)) continue;
                        c[k] = 1.0f - sim(x - x0, xr - r0);
                    }
                }
            }
        }
    }
    if (stats) {
        stats->degenerate_pixels = 0;
        for (auto v : left.degenerate) stats->degenerate_pixels += v;
        for (auto v : right.degenerate) stats->degenerate_pixels += v;
    }
    return vol;
}

std::vector<std::pair<int, int>> sgm_directions(int paths) {
    switch (paths) {
        case 1: return {{1, 0}};
        case 4: return {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
        case 8: return {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {-1, -1}, {1, -1}, {-1, 1}};
        default: throw std::invalid_argument("SGM path count must be 1, 4 or 8");
    }
}

namespace {

// Buffers hold D + 2 floats with sentinel guards at both ends, so the
// d +- 1 neighbours need no bounds checks.
// With `normalize` the predecessor minimum is subtracted, which keeps values
// bounded and comparable across pixels without changing any argmin.
inline void path_step(const float* c, const float* prev, float* cur, int nd, float p1, float p2, bool normalize) {
    if (prev) {
        float mp = kInvalidCost;
        for (int k = 1; k <= nd; ++k) mp = std::min(mp, prev[k]);
        if (mp < kInvalidCost) {
            const float jump = mp + p2;
            const float base = normalize ? mp : 0.0f;
            for (int k = 1; k <= nd; ++k) {
                const float v = std::min(std::min(prev[k], std::min(prev[k - 1], prev[k + 1]) + p1), jump) - base;
                const float ck = c[k - 1];
                cur[k] = ck < kInvalidCost ? ck + v : kInvalidCost;
            }
            return;
        }
    }
    for (int k = 1; k <= nd; ++k) cur[k] = c[k - 1];
}

// Runs one direction and hands every pixel's path costs to sink(x, y, L) where L
// points at D values.
template <typename Sink>
void run_direction(const CostVolume& vol, int dx, int dy, float p1, float p2, bool normalize, Sink&& sink) {
    const int w = vol.width, h = vol.height, nd = vol.disparities();
    const std::size_t stride = static_cast<std::size_t>(nd) + 2;
    if (w == 0 || h == 0) return;

    if (dy == 0) {
#pragma omp parallel
        {
            std::vector<float> a(stride, kInvalidCost), b(stride, kInvalidCost);
#pragma omp for schedule(static)
            for (int y = 0; y < h; ++y) {
                float* prev = a.data();
                float* cur = b.data();
                bool first = true;
                for (int i = 0; i < w; ++i) {
                    const int x = dx > 0 ? i : w - 1 - i;
                    path_step(vol.cost.data() + vol.offset(x, y), first ? nullptr : prev, cur, nd, p1, p2, normalize);
                    sink(x, y, cur + 1);
                    std::swap(prev, cur);
                    first = false;
                }
            }
        }
        return;
    }

    std::vector<float> prev_row(stride * w, kInvalidCost), cur_row(stride * w, kInvalidCost);
    for (int j = 0; j < h; ++j) {
        const int y = dy > 0 ? j : h - 1 - j;
#pragma omp parallel for schedule(static)
        for (int x = 0; x < w; ++x) {
            const int px = x - dx;
            const float* prev = (j == 0 || px < 0 || px >= w) ? nullptr : prev_row.data() + stride * px;
            float* cur = cur_row.data() + stride * x;
            path_step(vol.cost.data() + vol.offset(x, y), prev, cur, nd, p1, p2, normalize);
            sink(x, y, cur + 1);
        }
        std::swap(prev_row, cur_row);
    }
}

}  // namespace

CostVolume sgm_path(const CostVolume& vol, int dx, int dy, float p1, float p2) {
    CostVolume out(vol.width, vol.height, vol.d_min, vol.d_max);
    const int nd = vol.disparities();
    run_direction(vol, dx, dy, p1, p2, false, [&](int x, int y, const float* l) {
        std::copy(l, l + nd, out.cost.data() + out.offset(x, y));
    });
    return out;
}

CostVolume sgm_aggregate(const CostVolume& vol, const SgmParams& params) {
    if (!(params.p1 >= 0.0f) || !(params.p2 >= params.p1))
        throw std::invalid_argument("SGM penalties must satisfy p2 >= p1 >= 0");
    CostVolume sum(vol.width, vol.height, vol.d_min, vol.d_max, 0.0f);
    const int nd = vol.disparities();
    for (auto [dx, dy] : sgm_directions(params.paths)) {
        run_direction(vol, dx, dy, params.p1, params.p2, params.normalize, [&](int x, int y, const float* l) {
            float* s = sum.cost.data() + sum.offset(x, y);
            for (int k = 0; k < nd; ++k) s[k] += l[k];
        });
    }
    for (std::size_t i = 0; i < sum.cost.size(); ++i)
        if (!valid_cost(vol.cost[i])) sum.cost[i] = kInvalidCost;
    return sum;
}

DisparityMap winner_take_all(const CostVolume& vol) {
    DisparityMap out(vol.width, vol.height);
    const int nd = vol.disparities();
#pragma omp parallel for schedule(static)
    for (int y = 0; y < vol.height; ++y)
        for (int x = 0; x < vol.width; ++x) {
            const float* c = vol.cost.data() + vol.offset(x, y);
            int best = -1;
            float bc = kInvalidCost;
            for (int k = 0; k < nd; ++k)
                if (c[k] < bc) bc = c[k], best = k;
            if (best >= 0) out.at(x, y) = static_cast<float>(vol.d_min + best);
        }
    return out;
}

DisparityMap right_disparity(const CostVolume& vol) {
    DisparityMap out(vol.width, vol.height);
    const int nd = vol.disparities();
#pragma omp parallel for schedule(static)
    for (int y = 0; y < vol.height; ++y)
        for (int xr = 0; xr < vol.width; ++xr) {
            int best = -1;
            float bc = kInvalidCost;
            for (int k = 0; k < nd; ++k) {
                const int xl = xr + vol.d_min + k;
                if (xl >= vol.width) break;
                const float c = vol.cost[vol.offset(xl, y) + static_cast<std::size_t>(k)];
                if (c < bc) bc = c, best = k;
            }
            if (best >= 0) out.at(xr, y) = static_cast<float>(vol.d_min + best);
        }
    return out;
}

DisparityMap lr_check(const DisparityMap& left, const DisparityMap& right, float tol) {
    if (left.width != right.width || left.height != right.height)
        throw std::invalid_argument("lr_check: disparity maps differ in size");
    DisparityMap out(left.width, left.height);
    for (int y = 0; y < left.height; ++y)
        for (int x = 0; x < left.width; ++x) {
            const float dl = left.at(x, y);
            if (!valid_disparity(dl)) continue;
            const int xr = x - static_cast<int>(std::lround(dl));
            if (xr < 0 || xr >= left.width) continue;
            const float dr = right.at(xr, y);
            if (valid_disparity(dr) && std::abs(dl - dr) <= tol) out.at(x, y) = dl;
        }
    return out;
}

DisparityMap subpixel_refine(const CostVolume& vol, const DisparityMap& disp) {
    if (disp.width != vol.width || disp.height != vol.height)
        throw std::invalid_argument("subpixel_refine: disparity map does not match volume");
    DisparityMap out = disp;
    for (int y = 0; y < vol.height; ++y)
        for (int x = 0; x < vol.width; ++x) {
            const float d = disp.at(x, y);
            if (!valid_disparity(d)) continue;
            const int di = static_cast<int>(std::lround(d));
            if (di <= vol.d_min || di >= vol.d_max) continue;
            const double cm = vol.at(x, y, di - 1), c0 = vol.at(x, y, di), cp = vol.at(x, y, di + 1);
            if (!valid_cost(static_cast<float>(cm)) || !valid_cost(static_cast<float>(cp))) continue;
            const double denom = 2.0 * (cm + cp - 2.0 * c0);
            if (!(denom > 0.0)) continue;
            const double off = std::clamp((cm - cp) / denom, -0.5, 0.5);
            out.at(x, y) = static_cast<float>(di + off);
        }
    return out;
}

}  // namespace uwstereo::stereo
