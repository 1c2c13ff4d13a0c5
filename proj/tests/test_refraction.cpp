#include "uwstereo/refraction.hpp"

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace uwstereo;
using namespace uwstereo::rectify;

namespace {

CameraModel make_model(double k1, double k2 = 0.0) {
    CameraModel m;
    m.focal = 1000;
    m.cx = 511.5;
    m.cy = 383.5;
    m.width = 1024;
    m.height = 768;
    m.baseline = 0.1;
    m.anchors = {{0.6, k1, k2, 1000}};
    return m;
}

Eigen::Matrix3d rot(double ax, double ay, double az) {
    return (Eigen::AngleAxisd(az, Eigen::Vector3d::UnitZ()) * Eigen::AngleAxisd(ay, Eigen::Vector3d::UnitY()) *
            Eigen::AngleAxisd(ax, Eigen::Vector3d::UnitX()))
        .toRotationMatrix();
}

// Raw observation of rectified-frame point X by the camera centred at c whose
// frame is rotated into the rectified frame by r.
Pixel observe(const CameraModel& m, double depth, const Eigen::Matrix3d& r, const Eigen::Vector3d& c,
              const Eigen::Vector3d& x) {
    const Eigen::Vector3d p = r.transpose() * (x - c);
    const Pixel ideal{m.cx + m.focal * p.x() / p.z(), m.cy + m.focal * p.y() / p.z()};
    return distort(m, depth, ideal);
}

}  // namespace

TEST(Undistort, PrincipalPointFixed) {
    auto m = make_model(-0.25, 0.05);
    auto p = undistort(m, 0.6, {m.cx, m.cy});
    EXPECT_EQ(p.u, m.cx);
    EXPECT_EQ(p.v, m.cy);
}

TEST(Undistort, ZeroCoefficientsAreIdentity) {
    auto m = make_model(0.0);
    for (double u : {0.0, 100.5, 1023.0})
        for (double v : {0.0, 383.5, 767.0}) {
            auto p = undistort(m, 0.6, {u, v});
            EXPECT_NEAR(p.u, u, 1e-12);
            EXPECT_NEAR(p.v, v, 1e-12);
        }
}

TEST(Undistort, HundredPointGridRoundTrip) {
    auto m = make_model(-0.1, 0.02);
    double worst = 0;
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) {
            const Pixel p{i * 113.0, j * 85.0};
            const Pixel q = undistort(m, 0.6, distort(m, 0.6, p));
            worst = std::max({worst, std::abs(q.u - p.u), std::abs(q.v - p.v)});
        }
    EXPECT_LT(worst, 1e-6);
}

TEST(UndistortProperty, FullImageRoundTripForModerateK1) {
    for (double k1 : {-0.3, -0.15, 0.1, 0.3}) {
        auto m = make_model(k1);
        double worst = 0;
        for (int v = 0; v < m.height; v += 7)
            for (int u = 0; u < m.width; u += 7) {
                const Pixel p{static_cast<double>(u), static_cast<double>(v)};
                const Pixel q = distort(m, 0.6, undistort(m, 0.6, p));
                worst = std::max({worst, std::abs(q.u - p.u), std::abs(q.v - p.v)});
            }
        EXPECT_LT(worst, 1e-6) << "k1 = " << k1;
    }
}

TEST(CameraModel, InterpolatesAnchorsLinearly) {
    CameraModel m = make_model(0);
    m.anchors = {{0.5, -0.1, 0.01, 990}, {0.7, -0.2, 0.03, 1010}};
    auto c = m.at_depth(0.6);
    EXPECT_NEAR(c.k1, -0.15, 1e-12);
    EXPECT_NEAR(c.k2, 0.02, 1e-12);
    EXPECT_NEAR(c.focal, 1000, 1e-9);
    EXPECT_EQ(m.at_depth(0.3).k1, -0.1);
    EXPECT_EQ(m.at_depth(0.1).k1, -0.1);  // clamped with a warning
    EXPECT_EQ(m.at_depth(5.0).k1, -0.2);
}

TEST(CameraModelProperty, InterpolationIsContinuous) {
    CameraModel m = make_model(0);
    m.anchors = {{0.5, -0.1, 0.0, 990}, {0.6, 0.05, 0.01, 1005}, {0.7, -0.2, 0.03, 1010}};
    for (double d = 0.3; d < 1.3; d += 1e-3) {
        auto a = m.at_depth(d), b = m.at_depth(d + 1e-6);
        EXPECT_LT(std::abs(a.k1 - b.k1), 1e-4);
        EXPECT_LT(std::abs(a.focal - b.focal), 1e-3);
    }
}

TEST(CameraModel, ValidationRejectsBadModels) {
    auto m = make_model(0);
    m.focal = 0;
    EXPECT_THROW(m.validate(), std::invalid_argument);
    m = make_model(0);
    m.anchors.clear();
    EXPECT_THROW(m.validate(), std::invalid_argument);
    m = make_model(0);
    m.anchors = {{0.6, 0, 0, 1000}, {0.6, 0, 0, 1000}};
    EXPECT_THROW(m.validate(), std::invalid_argument);
}

TEST(Rectify, DistortionFreeRectifiedPairUnchanged) {
    CameraModel m = make_model(0);
    m.width = 64;
    m.height = 48;
    m.cx = 31.5;
    m.cy = 23.5;
    Image l(64, 48), r(64, 48);
    std::mt19937 rng(3);
    std::uniform_real_distribution<float> u(0, 1);
    for (auto& v : l.data) v = u(rng);
    for (auto& v : r.data) v = u(rng);
    auto out = rectify_pair(m, l, r, 0.6);
    for (std::size_t i = 0; i < l.data.size(); ++i) {
        EXPECT_LT(std::abs(out.frame.left.data[i] - l.data[i]), 1.0f / 255.0f);
        EXPECT_LT(std::abs(out.frame.right.data[i] - r.data[i]), 1.0f / 255.0f);
    }
    EXPECT_EQ(out.meta.valid_region, (std::array<int, 4>{0, 0, 64, 48}));
}

TEST(Rectify, KnownDistortionAndTiltGiveRowAlignedCorrespondences) {
    CameraModel m = make_model(-0.1);
    m.left_rotation = rot(0.01, -0.004, 0.006);
    m.right_rotation = rot(-0.008, 0.005, -0.01);
    const auto meta = rectification(m, 0.6);
    const Eigen::Vector3d cl(0, 0, 0), cr(m.baseline, 0, 0);
    std::mt19937 rng(4);
    std::uniform_real_distribution<double> ux(-0.25, 0.25), uy(-0.18, 0.18), uz(0.5, 0.7);
    double worst = 0;
    int used = 0;
    for (int i = 0; i < 500; ++i) {
        const Eigen::Vector3d x(ux(rng), uy(rng), uz(rng));
        const Pixel pl = observe(m, 0.6, m.left_rotation, cl, x);
        const Pixel pr = observe(m, 0.6, m.right_rotation, cr, x);
        if (pl.u < 0 || pl.u > 1023 || pr.u < 0 || pr.u > 1023 || pl.v < 0 || pl.v > 767 || pr.v < 0 || pr.v > 767)
            continue;
        ++used;
        const Pixel ql = rectify_point(m, meta, 0.6, pl, false);
        const Pixel qr = rectify_point(m, meta, 0.6, pr, true);
        worst = std::max(worst, std::abs(ql.v - qr.v));
    }
    EXPECT_GT(used, 300);
    EXPECT_LT(worst, 0.5);
}

TEST(Rectify, ImageLevelRowAlignmentOfRenderedDot) {
    CameraModel m = make_model(-0.1);
    m.width = 320;
    m.height = 240;
    m.cx = 159.5;
    m.cy = 119.5;
    m.focal = 300;
    m.anchors = {{0.6, -0.1, 0.0, 300}};
    m.right_rotation = rot(0.02, 0.0, 0.01);
    // Rectified-frame scene: a bright Gaussian dot on the plane z = 0.6.
    const Eigen::Vector3d dot(0.05, -0.04, 0.6);
    auto render = [&](const Eigen::Matrix3d& r, const Eigen::Vector3d& c) {
        Image img(m.width, m.height);
        const Pixel centre = observe(m, 0.6, r, c, dot);
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x) {
                const double d2 = (x - centre.u) * (x - centre.u) + (y - centre.v) * (y - centre.v);
                img.at(x, y) = static_cast<float>(std::exp(-d2 / (2 * 2.0 * 2.0)));
            }
        return img;
    };
    const Image l = render(m.left_rotation, {0, 0, 0});
    const Image r = render(m.right_rotation, {m.baseline, 0, 0});
    auto out = rectify_pair(m, l, r, 0.6);
    auto row_centroid = [](const Image& img) {
        double s = 0, sy = 0;
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) s += img.at(x, y), sy += y * img.at(x, y);
        return sy / s;
    };
    EXPECT_GT(std::abs(row_centroid(l) - row_centroid(r)), 2.0);
    EXPECT_LT(std::abs(row_centroid(out.frame.left) - row_centroid(out.frame.right)), 0.5);
}

TEST(RectifyProperty, ValidRegionKeepsNinetyPercentOfArea) {
    CameraModel m = make_model(-0.1);
    m.width = 256;
    m.height = 192;
    m.cx = 127.5;
    m.cy = 95.5;
    m.focal = 250;
    m.anchors = {{0.6, -0.1, 0.0, 250}};
    m.left_rotation = rot(0.005, 0.004, -0.003);
    m.right_rotation = rot(-0.004, -0.006, 0.004);
    Image l(256, 192, 1, 0.5f), r(256, 192, 1, 0.5f);
    auto out = rectify_pair(m, l, r, 0.6);
    const auto& v = out.meta.valid_region;
    const double area = static_cast<double>(v[2] - v[0]) * (v[3] - v[1]);
    EXPECT_GT(area, 0.9 * 256 * 192);
}

TEST(Rectify, RejectsDegenerateHomographyAndSizeMismatch) {
    CameraModel m = make_model(0);
    m.right_rotation = Eigen::Matrix3d::Zero();
    EXPECT_THROW(rectification(m, 0.6), std::invalid_argument);
    CameraModel ok = make_model(0);
    EXPECT_THROW(rectify_pair(ok, Image(10, 10), Image(10, 10), 0.6), std::invalid_argument);
}

TEST(FitRadial, RecoversCoefficientsFromCorrespondences) {
    auto m = make_model(-0.12, 0.03);
    std::vector<Pixel> ideal, observed;
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 9; ++j) {
            ideal.push_back({i * 90.0 + 10, j * 90.0 + 5});
            observed.push_back(distort(m, 0.6, ideal.back()));
        }
    auto c = fit_radial(ideal, observed, m.focal, m.cx, m.cy);
    EXPECT_NEAR(c.k1, -0.12, 1e-9);
    EXPECT_NEAR(c.k2, 0.03, 1e-9);
}

TEST(Calibration, JsonRoundTrip) {
    CameraModel m = make_model(-0.1);
    m.anchors.push_back({0.8, -0.05, 0.01, 1002});
    m.right_rotation = rot(0.01, 0.02, 0.03);
    const auto p = std::filesystem::temp_directory_path() / "uwstereo_calib.json";
    save_calibration(p, m);
    auto back = load_calibration(p);
    EXPECT_EQ(back.anchors.size(), 2u);
    EXPECT_EQ(back.anchors[1].focal, 1002);
    EXPECT_TRUE(back.right_rotation.isApprox(m.right_rotation, 1e-15));
    EXPECT_EQ(back.width, 1024);
}
