#include "uwstereo/refraction.hpp"

#include "uwstereo/io.hpp"

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace uwstereo::rectify {

void CameraModel::validate() const {
    if (!(focal > 0.0)) throw std::invalid_argument("camera focal must be positive");
    if (anchors.empty()) throw std::invalid_argument("camera model needs at least one depth anchor");
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        if (!(anchors[i].focal > 0.0)) throw std::invalid_argument("anchor focal must be positive");
        if (i > 0 && !(anchors[i].depth > anchors[i - 1].depth))
            throw std::invalid_argument("depth anchors must be strictly increasing");
    }
    if (width <= 0 || height <= 0) throw std::invalid_argument("camera image size must be positive");
}

Coefficients CameraModel::at_depth(double depth) const {
    if (anchors.empty()) throw std::invalid_argument("camera model needs at least one depth anchor");
    const double lo = anchors.front().depth * 0.5, hi = anchors.back().depth * 2.0;
    if (depth < lo || depth > hi) {
        spdlog::warn("depth hint {} m outside calibrated range [{}, {}], clamped", depth, lo, hi);
        depth = std::clamp(depth, lo, hi);
    }
    auto pack = [](const DepthAnchor& a) { return Coefficients{a.k1, a.k2, a.focal}; };
    if (depth <= anchors.front().depth) return pack(anchors.front());
    if (depth >= anchors.back().depth) return pack(anchors.back());
    auto hi_it = std::upper_bound(anchors.begin(), anchors.end(), depth,
                                  [](double d, const DepthAnchor& a) { return d < a.depth; });
    const DepthAnchor& b = *hi_it;
    const DepthAnchor& a = *(hi_it - 1);
    const double t = (depth - a.depth) / (b.depth - a.depth);
    return {a.k1 + t * (b.k1 - a.k1), a.k2 + t * (b.k2 - a.k2), a.focal + t * (b.focal - a.focal)};
}

Eigen::Matrix3d CameraModel::intrinsics(double f) const {
    Eigen::Matrix3d k;
    k << f, 0, cx, 0, f, cy, 0, 0, 1;
    return k;
}

Pixel distort(const CameraModel& model, double depth, Pixel p) {
    const Coefficients c = model.at_depth(depth);
    const double x = (p.u - model.cx) / c.focal, y = (p.v - model.cy) / c.focal;
    const double r2 = x * x + y * y;
    const double s = 1.0 + c.k1 * r2 + c.k2 * r2 * r2;
    return {model.cx + c.focal * x * s, model.cy + c.focal * y * s};
}

Pixel undistort(const CameraModel& model, double depth, Pixel p) {
    const Coefficients c = model.at_depth(depth);
    const double xd = (p.u - model.cx) / c.focal, yd = (p.v - model.cy) / c.focal;
    const double rd = std::hypot(xd, yd);
    if (rd == 0.0) return p;
    double r = rd;
    for (int it = 0; it < 50; ++it) {
        const double r2 = r * r;
        const double g = r * (1.0 + c.k1 * r2 + c.k2 * r2 * r2) - rd;
        const double dg = 1.0 + 3.0 * c.k1 * r2 + 5.0 * c.k2 * r2 * r2;
        if (dg == 0.0) break;
        const double step = g / dg;
        r -= step;
        if (std::abs(step) < 1e-15) break;
    }
    const double s = r / rd;
    return {model.cx + c.focal * xd * s, model.cy + c.focal * yd * s};
}

namespace {

Eigen::Vector3d apply(const Eigen::Matrix3d& h, Pixel p) { return h * Eigen::Vector3d(p.u, p.v, 1.0); }

Pixel dehomogenize(const Eigen::Vector3d& q) { return {q.x() / q.z(), q.y() / q.z()}; }

}  // namespace

RectifiedPairMeta rectification(const CameraModel& model, double depth) {
    model.validate();
    const Coefficients c = model.at_depth(depth);
    const Eigen::Matrix3d k = model.intrinsics(c.focal);
    RectifiedPairMeta meta;
    meta.focal = c.focal;
    meta.left_homography = k * model.left_rotation * k.inverse();
    meta.right_homography = k * model.right_rotation * k.inverse();
    for (const auto* h : {&meta.left_homography, &meta.right_homography})
        if (!std::isfinite(h->determinant()) || std::abs(h->determinant()) < 1e-12)
            throw std::invalid_argument("degenerate rectifying homography");
    meta.valid_region = {0, 0, model.width, model.height};
    return meta;
}

Pixel rectify_point(const CameraModel& model, const RectifiedPairMeta& meta, double depth, Pixel raw, bool right) {
    const Pixel ideal = undistort(model, depth, raw);
    return dehomogenize(apply(right ? meta.right_homography : meta.left_homography, ideal));
}

namespace {

// Shrinks [x0, x1) x [y0, y1) until every pixel inside is valid, dropping the
// border line with the most invalid pixels first.
std::array<int, 4> valid_rectangle(const Mask& valid) {
    int x0 = 0, y0 = 0, x1 = valid.width, y1 = valid.height;
    auto bad_row = [&](int y) {
        int n = 0;
        for (int x = x0; x < x1; ++x) n += !valid.at(x, y);
        return n;
    };
    auto bad_col = [&](int x) {
        int n = 0;
        for (int y = y0; y < y1; ++y) n += !valid.at(x, y);
        return n;
    };
    while (x0 < x1 && y0 < y1) {
        const int t = bad_row(y0), b = bad_row(y1 - 1), l = bad_col(x0), r = bad_col(x1 - 1);
        const int worst = std::max({t, b, l, r});
        if (worst == 0) break;
        if (worst == t)
            ++y0;
        else if (worst == b)
            --y1;
        else if (worst == l)
            ++x0;
        else
            --x1;
    }
    if (x0 >= x1 || y0 >= y1) return {0, 0, 0, 0};
    return {x0, y0, x1, y1};
}

}  // namespace

RectifiedPair rectify_pair(const CameraModel& model, const Image& left, const Image& right, double depth) {
    if (left.width != model.width || left.height != model.height || right.width != model.width ||
        right.height != model.height)
        throw std::invalid_argument("rectify_pair: images do not match the calibrated image size");
    RectifiedPair out;
    out.meta = rectification(model, depth);
    const Coefficients c = model.at_depth(depth);
    Mask valid(model.width, model.height, 1);

    auto warp = [&](const Image& src, const Eigen::Matrix3d& h) {
        const Eigen::Matrix3d hinv = h.inverse();
        Image dst(src.width, src.height, src.channels);
#pragma omp parallel for schedule(static)
        for (int y = 0; y < src.height; ++y)
            for (int x = 0; x < src.width; ++x) {
                const Pixel ideal = dehomogenize(apply(hinv, {static_cast<double>(x), static_cast<double>(y)}));
                const double nx = (ideal.u - model.cx) / c.focal, ny = (ideal.v - model.cy) / c.focal;
                const double r2 = nx * nx + ny * ny;
                const double s = 1.0 + c.k1 * r2 + c.k2 * r2 * r2;
                const float su = static_cast<float>(model.cx + c.focal * nx * s);
                const float sv = static_cast<float>(model.cy + c.focal * ny * s);
                const bool inside = su >= 0.0f && sv >= 0.0f && su <= src.width - 1 && sv <= src.height - 1;
                if (!inside) valid.at(x, y) = 0;
                for (int ch = 0; ch < src.channels; ++ch) dst.at(x, y, ch) = src.sample_or(su, sv, 0.0f, ch);
            }
        return dst;
    };
    out.frame.left = warp(left, out.meta.left_homography);
    out.frame.right = warp(right, out.meta.right_homography);
    out.meta.valid_region = valid_rectangle(valid);
    return out;
}

Coefficients fit_radial(const std::vector<Pixel>& ideal, const std::vector<Pixel>& observed, double focal, double cx,
                        double cy) {
    if (ideal.size() != observed.size() || ideal.empty())
        throw std::invalid_argument("fit_radial needs matching, non-empty correspondence lists");
    // x_d - x = x (k1 r^2 + k2 r^4), two equations per correspondence.
    Eigen::MatrixXd a(2 * ideal.size(), 2);
    Eigen::VectorXd b(2 * ideal.size());
    for (std::size_t i = 0; i < ideal.size(); ++i) {
        const double x = (ideal[i].u - cx) / focal, y = (ideal[i].v - cy) / focal;
        const double xd = (observed[i].u - cx) / focal, yd = (observed[i].v - cy) / focal;
        const double r2 = x * x + y * y;
        a.row(2 * i) << x * r2, x * r2 * r2;
        a.row(2 * i + 1) << y * r2, y * r2 * r2;
        b(2 * i) = xd - x;
        b(2 * i + 1) = yd - y;
    }
    const Eigen::Vector2d k = a.colPivHouseholderQr().solve(b);
    return {k(0), k(1), focal};
}

namespace {

nlohmann::json matrix_json(const Eigen::Matrix3d& m) {
    nlohmann::json j = nlohmann::json::array();
    for (int r = 0; r < 3; ++r) j.push_back({m(r, 0), m(r, 1), m(r, 2)});
    return j;
}

Eigen::Matrix3d matrix_from(const nlohmann::json& j) {
    Eigen::Matrix3d m;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = j.at(r).at(c).get<double>();
    return m;
}

}  // namespace

nlohmann::json to_json(const CameraModel& m) {
    nlohmann::json anchors = nlohmann::json::array();
    for (const auto& a : m.anchors) anchors.push_back({{"depth", a.depth}, {"k1", a.k1}, {"k2", a.k2}, {"focal", a.focal}});
    return {{"focal", m.focal},
            {"principal", {m.cx, m.cy}},
            {"baseline", m.baseline},
            {"image_size", {m.width, m.height}},
            {"anchors", anchors},
            {"left_rotation", matrix_json(m.left_rotation)},
            {"right_rotation", matrix_json(m.right_rotation)}};
}

CameraModel camera_from_json(const nlohmann::json& j) {
    CameraModel m;
    m.focal = j.at("focal").get<double>();
    m.cx = j.at("principal").at(0).get<double>();
    m.cy = j.at("principal").at(1).get<double>();
    m.baseline = j.at("baseline").get<double>();
    m.width = j.at("image_size").at(0).get<int>();
    m.height = j.at("image_size").at(1).get<int>();
    for (const auto& a : j.at("anchors"))
        m.anchors.push_back({a.at("depth").get<double>(), a.value("k1", 0.0), a.value("k2", 0.0),
                             a.value("focal", m.focal)});
    if (j.contains("left_rotation")) m.left_rotation = matrix_from(j["left_rotation"]);
    if (j.contains("right_rotation")) m.right_rotation = matrix_from(j["right_rotation"]);
    m.validate();
    return m;
}

CameraModel load_calibration(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw io::DataError("cannot open calibration " + path.string());
    try {
        return camera_from_json(nlohmann::json::parse(is));
    } catch (const nlohmann::json::exception& e) {
        throw io::DataError("bad calibration " + path.string() + ": " + e.what());
    }
}

void save_calibration(const std::filesystem::path& path, const CameraModel& model) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw io::DataError("cannot write calibration " + path.string());
    os << to_json(model).dump(2) << '\n';
}

}  // namespace uwstereo::rectify
