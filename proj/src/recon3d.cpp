#include "uwstereo/recon3d.hpp"

#include <Eigen/Eigenvalues>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>

namespace uwstereo::recon {

Pinhole Pinhole::from(const rectify::CameraModel& model, double rectified_focal) {
    return {rectified_focal > 0 ? rectified_focal : model.focal, model.cx, model.cy, model.baseline};
}

PointCloud PointCloud::select(const std::vector<std::uint8_t>& keep) const {
    PointCloud out;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!keep[i]) continue;
        out.points.push_back(points[i]);
        if (!normals.empty()) out.normals.push_back(normals[i]);
        if (!colors.empty()) out.colors.push_back(colors[i]);
        if (!pixels.empty()) out.pixels.push_back(pixels[i]);
    }
    return out;
}

PointCloud triangulate(const DisparityMap& disp, const Pinhole& cam, const Image* color, TriangulationStats* stats) {
    if (!(cam.focal > 0) || !(cam.baseline > 0)) throw std::invalid_argument("triangulate needs positive focal and baseline");
    if (color && (color->width != disp.width || color->height != disp.height))
        throw std::invalid_argument("triangulate: color image size differs from the disparity map");
    PointCloud cloud;
    TriangulationStats st;
    const double fb = cam.focal * cam.baseline;
    for (int y = 0; y < disp.height; ++y)
        for (int x = 0; x < disp.width; ++x) {
            const float d = disp.at(x, y);
            if (!valid_disparity(d)) continue;
            if (d <= 0) {
                ++st.non_positive;
                continue;
            }
            const double z = fb / d;
            cloud.points.emplace_back(static_cast<float>((x - cam.cx) * z / cam.focal),
                                      static_cast<float>((y - cam.cy) * z / cam.focal), static_cast<float>(z));
            cloud.pixels.push_back({x, y});
            std::array<std::uint8_t, 3> rgb{200, 200, 200};
            if (color)
                for (int c = 0; c < 3; ++c)
                    rgb[static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(
                        std::lround(255.0f * std::clamp(color->at(x, y, std::min(c, color->channels - 1)), 0.0f, 1.0f)));
            cloud.colors.push_back(rgb);
        }
    st.points = cloud.size();
    if (st.non_positive) spdlog::warn("triangulate: dropped {} pixels with non-positive disparity", st.non_positive);
    if (stats) *stats = st;
    return cloud;
}

std::array<double, 3> project(const Eigen::Vector3f& p, const Pinhole& cam) {
    const double z = p.z();
    return {cam.focal * p.x() / z + cam.cx, cam.focal * p.y() / z + cam.cy, cam.focal * cam.baseline / z};
}

KnnGrid::KnnGrid(const std::vector<Eigen::Vector3f>& points, int target_per_cell) : pts_(points) {
    if (pts_.empty()) return;
    Eigen::Vector3f lo = pts_[0], hi = pts_[0];
    for (const auto& p : pts_) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    origin_ = lo;
    const Eigen::Vector3f ext = hi - lo;
    const double emax = std::max(1e-9, static_cast<double>(ext.maxCoeff()));
    double volume = 1;
    for (int i = 0; i < 3; ++i) volume *= std::max(static_cast<double>(ext[i]), 1e-3 * emax);
    const double n = static_cast<double>(pts_.size());
    double cell = std::cbrt(volume * std::max(1, target_per_cell) / n);
    auto count_cells = [&](double c) {
        double cells = 1;
        for (int i = 0; i < 3; ++i) cells *= std::floor(ext[i] / c) + 1;
        return cells;
    };
    while (count_cells(cell) > 4 * n + 8) cell *= 1.5;
    cell_ = static_cast<float>(cell);
    for (int i = 0; i < 3; ++i) dims_[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(ext[i] / cell)) + 1;
    const std::size_t ncell = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
    std::vector<int> id(pts_.size());
    start_.assign(ncell + 1, 0);
    for (std::size_t i = 0; i < pts_.size(); ++i) {
        const auto c = cell_of(pts_[i]);
        id[i] = (c[2] * dims_[1] + c[1]) * dims_[0] + c[0];
        ++start_[static_cast<std::size_t>(id[i]) + 1];
    }
    for (std::size_t c = 0; c < ncell; ++c) start_[c + 1] += start_[c];
    order_.resize(pts_.size());
    std::vector<int> fill(start_.begin(), start_.end() - 1);
    for (std::size_t i = 0; i < pts_.size(); ++i) order_[static_cast<std::size_t>(fill[static_cast<std::size_t>(id[i])]++)] = static_cast<int>(i);
}

std::array<int, 3> KnnGrid::cell_of(const Eigen::Vector3f& p) const {
    std::array<int, 3> c{};
    for (int i = 0; i < 3; ++i)
        c[static_cast<std::size_t>(i)] = std::clamp(static_cast<int>(std::floor((p[i] - origin_[i]) / cell_)), 0,
                                                    dims_[static_cast<std::size_t>(i)] - 1);
    return c;
}

std::vector<int> KnnGrid::query(const Eigen::Vector3f& q, int k, int skip) const {
    std::vector<int> result;
    if (pts_.empty() || k <= 0) return result;
    const auto c = cell_of(q);
    std::priority_queue<std::pair<float, int>> heap;  // max-heap on squared distance
    const int max_r = std::max({dims_[0], dims_[1], dims_[2]});
    for (int r = 0; r <= max_r; ++r) {
        for (int z = c[2] - r; z <= c[2] + r; ++z) {
            if (z < 0 || z >= dims_[2]) continue;
            for (int y = c[1] - r; y <= c[1] + r; ++y) {
                if (y < 0 || y >= dims_[1]) continue;
                const bool face = std::abs(z - c[2]) == r || std::abs(y - c[1]) == r;
                for (int x = c[0] - r; x <= c[0] + r; x += (face || r == 0) ? 1 : 2 * r) {
                    if (x < 0 || x >= dims_[0]) continue;
                    const std::size_t cell = (static_cast<std::size_t>(z) * dims_[1] + y) * dims_[0] + x;
                    for (int e = start_[cell]; e < start_[cell + 1]; ++e) {
                        const int i = order_[static_cast<std::size_t>(e)];
                        if (i == skip) continue;
                        const float d2 = (pts_[static_cast<std::size_t>(i)] - q).squaredNorm();
                        if (static_cast<int>(heap.size()) < k) {
                            heap.emplace(d2, i);
                        } else if (d2 < heap.top().first) {
                            heap.pop();
                            heap.emplace(d2, i);
                        }
                    }
                }
            }
        }
        // Unvisited points are at least r cells away.
        const float reach = static_cast<float>(r) * cell_;
        if (static_cast<int>(heap.size()) == k && heap.top().first <= reach * reach) break;
    }
    result.resize(heap.size());
    for (auto i = static_cast<std::ptrdiff_t>(heap.size()) - 1; i >= 0; --i) {
        result[static_cast<std::size_t>(i)] = heap.top().second;
        heap.pop();
    }
    return result;
}

PointCloud remove_outliers(const PointCloud& cloud, int k, double sigma) {
    if (k < 1) throw std::invalid_argument("remove_outliers needs k >= 1");
    if (cloud.size() <= static_cast<std::size_t>(k)) {
        if (!cloud.empty()) spdlog::warn("remove_outliers: {} points, need more than k = {}; unchanged", cloud.size(), k);
        return cloud;
    }
    const KnnGrid grid(cloud.points);
    const auto n = static_cast<long>(cloud.size());
    std::vector<double> mean_dist(cloud.size());
#pragma omp parallel for schedule(dynamic, 256)
    for (long i = 0; i < n; ++i) {
        const auto& p = cloud.points[static_cast<std::size_t>(i)];
        double s = 0;
        const auto nn = grid.query(p, k, static_cast<int>(i));
        for (int j : nn) s += (cloud.points[static_cast<std::size_t>(j)] - p).norm();
        mean_dist[static_cast<std::size_t>(i)] = s / static_cast<double>(nn.size());
    }
    // Median/MAD instead of mean/std: the gross outliers we want to drop would
    // otherwise inflate the spread. The scale is floored at half the median so a
    // regular grid (MAD ~ 0) does not lose its border rows.
    auto sorted = mean_dist;
    const auto mid = sorted.begin() + n / 2;
    std::nth_element(sorted.begin(), mid, sorted.end());
    const double med = *mid;
    for (auto& d : sorted) d = std::abs(d - med);
    std::nth_element(sorted.begin(), mid, sorted.end());
    const double scale = std::max(1.4826 * *mid, 0.5 * med);
    const double limit = med + sigma * scale;
    std::vector<std::uint8_t> keep(cloud.size());
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = mean_dist[i] <= limit;
    return cloud.select(keep);
}

void estimate_normals(PointCloud& cloud, int k) {
    cloud.normals.assign(cloud.size(), Eigen::Vector3f::Zero());
    if (cloud.size() < 3) return;
    const KnnGrid grid(cloud.points);
    const auto n = static_cast<long>(cloud.size());
#pragma omp parallel for schedule(dynamic, 256)
    for (long i = 0; i < n; ++i) {
        const auto& p = cloud.points[static_cast<std::size_t>(i)];
        const auto nn = grid.query(p, std::min<int>(k, static_cast<int>(n)));
        Eigen::Vector3d mean = Eigen::Vector3d::Zero();
        for (int j : nn) mean += cloud.points[static_cast<std::size_t>(j)].cast<double>();
        mean /= static_cast<double>(nn.size());
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (int j : nn) {
            const Eigen::Vector3d d = cloud.points[static_cast<std::size_t>(j)].cast<double>() - mean;
            cov += d * d.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
        Eigen::Vector3d normal = es.eigenvectors().col(0);
        if (normal.dot(p.cast<double>()) > 0) normal = -normal;
        cloud.normals[static_cast<std::size_t>(i)] = normal.cast<float>();
    }
}

void write_ply(const std::filesystem::path& path, const PointCloud& cloud) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "ply\nformat binary_little_endian 1.0\nelement vertex " << cloud.size()
        << "\nproperty float x\nproperty float y\nproperty float z\nproperty float nx\nproperty float ny\n"
           "property float nz\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Eigen::Vector3f nrm = cloud.normals.empty() ? Eigen::Vector3f::Zero() : cloud.normals[i];
        const float v[6] = {cloud.points[i].x(), cloud.points[i].y(), cloud.points[i].z(), nrm.x(), nrm.y(), nrm.z()};
        out.write(reinterpret_cast<const char*>(v), sizeof v);
        const std::array<std::uint8_t, 3> rgb = cloud.colors.empty() ? std::array<std::uint8_t, 3>{200, 200, 200}
                                                                      : cloud.colors[i];
        out.write(reinterpret_cast<const char*>(rgb.data()), 3);
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

Plane fit_plane(const PointCloud& cloud) {
    if (cloud.size() < 3) throw std::invalid_argument("fit_plane needs at least 3 points");
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& p : cloud.points) mean += p.cast<double>();
    mean /= static_cast<double>(cloud.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& p : cloud.points) {
        const Eigen::Vector3d d = p.cast<double>() - mean;
        cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    Plane pl;
    pl.normal = es.eigenvectors().col(0).normalized();
    if (pl.normal.z() < 0) pl.normal = -pl.normal;
    pl.offset = -pl.normal.dot(mean);
    return pl;
}

Mask nonoccluded(const DisparityMap& gt_left, const DisparityMap* gt_right, double tol) {
    if (gt_right && (gt_right->width != gt_left.width || gt_right->height != gt_left.height))
        throw std::invalid_argument("nonoccluded: ground-truth maps differ in size");
    Mask m(gt_left.width, gt_left.height, 0);
    for (int y = 0; y < gt_left.height; ++y)
        for (int x = 0; x < gt_left.width; ++x) {
            const float d = gt_left.at(x, y);
            if (!valid_disparity(d)) continue;
            const long xr = x - std::lround(d);
            if (xr < 0 || xr >= gt_left.width) continue;
            if (gt_right) {
                const float dr = gt_right->at(static_cast<int>(xr), y);
                if (!valid_disparity(dr) || std::abs(dr - d) > tol) continue;
            }
            m.at(x, y) = 1;
        }
    return m;
}

DisparityErrors disparity_errors(const DisparityMap& est, const DisparityMap& gt, double threshold, const Mask* mask) {
    if (est.width != gt.width || est.height != gt.height) throw std::invalid_argument("eval: disparity sizes differ");
    if (mask && (mask->width != gt.width || mask->height != gt.height))
        throw std::invalid_argument("eval: mask size differs");
    DisparityErrors e;
    for (std::size_t i = 0; i < gt.data.size(); ++i) {
        if (!valid_disparity(gt.data[i]) || (mask && !mask->data[i])) continue;
        ++e.gt_pixels;
        if (!valid_disparity(est.data[i])) {
            ++e.bad;
            continue;
        }
        const double err = static_cast<double>(est.data[i]) - gt.data[i];
        e.squared_error += err * err;
        ++e.compared;
        if (std::abs(err) > threshold) ++e.bad;
    }
    if (e.compared) e.rmse = std::sqrt(e.squared_error / static_cast<double>(e.compared));
    if (e.gt_pixels) e.bad_rate = static_cast<double>(e.bad) / static_cast<double>(e.gt_pixels);
    return e;
}

DisparityErrors eval_disparity(const DisparityMap& est, const DisparityMap& gt, double threshold, const Mask* mask) {
    auto e = disparity_errors(est, gt, threshold, mask);
    if (e.compared == 0) throw NoOverlap("no pixel is valid in both disparity maps");
    return e;
}

double eval_cloud_rmse(const PointCloud& est, const PointCloud& gt) {
    if (est.empty() || gt.empty()) throw NoOverlap("cloud RMSE needs two non-empty clouds");
    const KnnGrid grid(gt.points);
    double sq = 0;
    for (const auto& p : est.points) {
        const auto nn = grid.query(p, 1);
        sq += (gt.points[static_cast<std::size_t>(nn[0])] - p).squaredNorm();
    }
    return std::sqrt(sq / static_cast<double>(est.size()));
}

}  // namespace uwstereo::recon
