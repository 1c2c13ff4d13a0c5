#include "uwstereo/bubbles.hpp"
#include "uwstereo/costvol.hpp"
#include "uwstereo/harness.hpp"
#include "uwstereo/io.hpp"
#include "uwstereo/matcher.hpp"
#include "uwstereo/pipeline.hpp"
#include "uwstereo/recon3d.hpp"
#include "uwstereo/segmenter.hpp"
#include "uwstereo/synth.hpp"
#include "uwstereo/texture.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

namespace py = pybind11;
using namespace uwstereo;

namespace {

using F32 = py::array_t<float, py::array::c_style | py::array::forcecast>;
using U8 = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

// (H, W) or (H, W, C) in, planar Image out.
Image to_image(const F32& a) {
    if (a.ndim() != 2 && a.ndim() != 3) throw std::invalid_argument("image must be (H, W) or (H, W, C)");
    const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
    Image img(w, h, c);
    const float* src = a.data();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int k = 0; k < c; ++k)
                img.data[k * img.plane() + static_cast<std::size_t>(y) * w + x] =
                    src[(static_cast<std::size_t>(y) * w + x) * c + k];
    return img;
}

py::array_t<float> from_image(const Image& img) {
    if (img.channels == 1) {
        py::array_t<float> out({img.height, img.width});
        std::memcpy(out.mutable_data(), img.data.data(), img.data.size() * sizeof(float));
        return out;
    }
    py::array_t<float> out({img.height, img.width, img.channels});
    float* dst = out.mutable_data();
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int k = 0; k < img.channels; ++k)
                dst[(static_cast<std::size_t>(y) * img.width + x) * img.channels + k] = img.at(x, y, k);
    return out;
}

DisparityMap to_disparity(const F32& a) {
    if (a.ndim() != 2) throw std::invalid_argument("disparity must be (H, W)");
    DisparityMap d(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::memcpy(d.data.data(), a.data(), d.data.size() * sizeof(float));
    return d;
}

py::array_t<float> from_disparity(const DisparityMap& d) {
    py::array_t<float> out({d.height, d.width});
    std::memcpy(out.mutable_data(), d.data.data(), d.data.size() * sizeof(float));
    return out;
}

Mask to_mask(const U8& a) {
    if (a.ndim() != 2) throw std::invalid_argument("mask must be (H, W)");
    Mask m(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    const std::uint8_t* src = a.data();
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = src[i] ? 1 : 0;
    return m;
}

py::array_t<std::uint8_t> from_mask(const Mask& m) {
    py::array_t<std::uint8_t> out({m.height, m.width});
    std::memcpy(out.mutable_data(), m.data.data(), m.data.size());
    return out;
}

std::optional<Mask> opt_mask(const std::optional<U8>& a) {
    if (!a) return std::nullopt;
    return to_mask(*a);
}

py::dict frame_dict(const StereoFrame& f) {
    py::dict d;
    d["id"] = f.id;
    d["left"] = from_image(f.left);
    d["right"] = from_image(f.right);
    if (f.left_mask) d["left_mask"] = from_mask(*f.left_mask);
    if (f.right_mask) d["right_mask"] = from_mask(*f.right_mask);
    if (f.gt_left) d["gt_left"] = from_disparity(*f.gt_left);
    if (f.gt_right) d["gt_right"] = from_disparity(*f.gt_right);
    return d;
}

StereoFrame dict_frame(const py::dict& d) {
    StereoFrame f;
    if (d.contains("id")) f.id = d["id"].cast<std::string>();
    f.left = to_image(d["left"].cast<F32>());
    f.right = to_image(d["right"].cast<F32>());
    if (d.contains("left_mask")) f.left_mask = to_mask(d["left_mask"].cast<U8>());
    if (d.contains("right_mask")) f.right_mask = to_mask(d["right_mask"].cast<U8>());
    if (d.contains("gt_left")) f.gt_left = to_disparity(d["gt_left"].cast<F32>());
    if (d.contains("gt_right")) f.gt_right = to_disparity(d["gt_right"].cast<F32>());
    return f;
}

py::dict scene_dict(const synth::SceneRender& r) {
    auto d = frame_dict(r.frame);
    d["max_disparity"] = r.max_disparity;
    return d;
}

// (N, 3) float array of points.
py::array_t<float> points_array(const recon::PointCloud& c) {
    py::array_t<float> out({static_cast<py::ssize_t>(c.size()), py::ssize_t{3}});
    float* dst = out.mutable_data();
    for (std::size_t i = 0; i < c.size(); ++i)
        for (int k = 0; k < 3; ++k) dst[i * 3 + k] = c.points[i][k];
    return out;
}

recon::PointCloud cloud_from(const F32& pts) {
    if (pts.ndim() != 2 || pts.shape(1) != 3) throw std::invalid_argument("points must be (N, 3)");
    recon::PointCloud c;
    const float* p = pts.data();
    for (py::ssize_t i = 0; i < pts.shape(0); ++i) c.points.emplace_back(p[i * 3], p[i * 3 + 1], p[i * 3 + 2]);
    return c;
}

stereo::CostVolume to_volume(const F32& a, int d_min) {
    if (a.ndim() != 3) throw std::invalid_argument("cost volume must be (H, W, D)");
    stereo::CostVolume v(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), d_min,
                 d_min + static_cast<int>(a.shape(2)) - 1);
    std::memcpy(v.cost.data(), a.data(), v.cost.size() * sizeof(float));
    return v;
}

py::array_t<float> from_volume(const stereo::CostVolume& v) {
    py::array_t<float> out({v.height, v.width, v.disparities()});
    std::memcpy(out.mutable_data(), v.cost.data(), v.cost.size() * sizeof(float));
    return out;
}

py::dict errors_dict(const recon::DisparityErrors& e) {
    py::dict d;
    d["rmse"] = e.rmse;
    d["bad_rate"] = e.bad_rate;
    d["coverage"] = e.coverage();
    d["gt_pixels"] = e.gt_pixels;
    d["compared"] = e.compared;
    d["bad"] = e.bad;
    return d;
}

}  // namespace

PYBIND11_MODULE(_uwstereo, m) {
    m.doc() = "Dense stereo for underwater scenes with bubbles";

    py::register_exception<io::DataError>(m, "DataError", PyExc_IOError);
    py::register_exception<harness::ConfigError>(m, "ConfigError", PyExc_ValueError);

    // io
    m.def("read_pfm", [](const std::filesystem::path& p) { return from_disparity(io::read_pfm(p)); }, py::arg("path"));
    m.def("write_pfm", [](const std::filesystem::path& p, const F32& d) { io::write_pfm(p, to_disparity(d)); },
          py::arg("path"), py::arg("disparity"));
    m.def("read_png", [](const std::filesystem::path& p) { return from_image(io::read_png(p)); }, py::arg("path"));
    m.def("write_png", [](const std::filesystem::path& p, const F32& img) { io::write_png(p, to_image(img)); },
          py::arg("path"), py::arg("image"));

    // synthetic scenes
    m.def("fronto_parallel_plane",
          [](int w, int h, double d, std::uint64_t seed) {
              return scene_dict(synth::render_scene(synth::fronto_parallel_plane(w, h, d, seed)));
          },
          py::arg("width"), py::arg("height"), py::arg("disparity"), py::arg("seed") = 1);
    m.def("two_plane_scene",
          [](int w, int h, double back, double front, int x0, int x1, std::uint64_t seed) {
              return scene_dict(synth::render_scene(synth::two_plane_scene(w, h, back, front, x0, x1, seed)));
          },
          py::arg("width"), py::arg("height"), py::arg("d_back"), py::arg("d_front"), py::arg("x0"), py::arg("x1"),
          py::arg("seed") = 1);
    m.def("random_scene",
          [](int w, int h, double d_min, double d_max, std::uint64_t seed) {
              return scene_dict(synth::render_scene(synth::random_scene(w, h, d_min, d_max, seed)));
          },
          py::arg("width"), py::arg("height"), py::arg("d_min"), py::arg("d_max"), py::arg("seed") = 1);

    // bubbles
    m.def("conditions",
          [] {
              std::vector<std::string> out;
              for (const auto& c : bubbles::Condition::grid()) out.push_back(c.name());
              return out;
          },
          "The clean scene followed by the eight bubble classes.");
    m.def("render_bubbles",
          [](const py::dict& frame, const std::string& condition, std::uint64_t seed, double max_disparity) {
              const auto f = dict_frame(frame);
              const auto c = bubbles::Condition::parse(condition);
              const bubbles::ClassParams p;
              const auto field = bubbles::sample_field(c, f.left.width, f.left.height, seed, p, max_disparity);
              const auto s = bubbles::render_bubbles(f, field, p);
              auto d = frame_dict(s.degraded);
              d["left_bubbles"] = from_mask(s.left_bubbles);
              d["right_bubbles"] = from_mask(s.right_bubbles);
              d["condition"] = condition;
              d["bubbles"] = field.bubbles.size();
              return d;
          },
          py::arg("frame"), py::arg("condition"), py::arg("seed") = 1, py::arg("max_disparity") = 0.0);

    // matching
    py::class_<stereo::Matcher>(m, "Matcher")
        .def_static(
            "create",
            [](int scales, int channels, int features, std::uint64_t seed) {
                stereo::MatcherConfig c;
                c.scales = scales;
                c.channels = channels;
                c.features = features;
                c.hidden = features;
                return stereo::Matcher::create(c, seed);
            },
            py::arg("scales") = 3, py::arg("channels") = 16, py::arg("features") = 112, py::arg("seed") = 1)
        .def_static("load", [](const std::string& p) { return stereo::Matcher::load(p); }, py::arg("path"))
        .def("save", [](const stereo::Matcher& mt, const std::string& p) { mt.save(p); }, py::arg("path"))
        .def_property_readonly("patch_size", &stereo::Matcher::patch_size)
        .def(
            "descriptors",
            [](const stereo::Matcher& mt, const F32& img) {
                const auto d = mt.descriptors(to_image(img));
                py::array_t<float> out({d.height, d.width, d.features});
                std::memcpy(out.mutable_data(), d.data.data(), d.data.size() * sizeof(float));
                return out;
            },
            py::arg("image"), "Unit-length descriptors, (H, W, F).");

    m.def("match",
          [](const F32& left, const F32& right, const stereo::Matcher& matcher, int d_min, int d_max, float p1, float p2,
             int paths, double lr_tol, bool subpixel, const std::optional<U8>& left_mask,
             const std::optional<U8>& right_mask) {
              StereoFrame f;
              f.left = to_image(left);
              f.right = to_image(right);
              stereo::StereoConfig cfg;
              cfg.d_min = d_min;
              cfg.d_max = d_max;
              cfg.sgm.p1 = p1;
              cfg.sgm.p2 = p2;
              cfg.sgm.paths = paths;
              cfg.lr_tol = lr_tol;
              cfg.subpixel = subpixel;
              const auto lm = opt_mask(left_mask), rm = opt_mask(right_mask);
              stereo::MatchOutput out;
              {
                  py::gil_scoped_release release;
                  out = stereo::match(f, matcher, cfg, lm ? &*lm : nullptr, rm ? &*rm : nullptr);
              }
              return from_disparity(out.disparity);
          },
          py::arg("left"), py::arg("right"), py::arg("matcher"), py::arg("d_min") = 0, py::arg("d_max") = 64,
          py::arg("p1") = 0.03f, py::arg("p2") = 0.5f, py::arg("paths") = 8, py::arg("lr_tol") = 1.0,
          py::arg("subpixel") = true, py::arg("left_mask") = py::none(), py::arg("right_mask") = py::none(),
          "Disparity of the left view; invalid pixels are +inf.");

    m.def("sgm_aggregate",
          [](const F32& cost, int d_min, float p1, float p2, int paths, bool normalize) {
              stereo::SgmParams p;
              p.p1 = p1;
              p.p2 = p2;
              p.paths = paths;
              p.normalize = normalize;
              return from_volume(stereo::sgm_aggregate(to_volume(cost, d_min), p));
          },
          py::arg("cost"), py::arg("d_min") = 0, py::arg("p1") = 0.03f, py::arg("p2") = 0.5f, py::arg("paths") = 8,
          py::arg("normalize") = true, "Aggregated (H, W, D) volume; invalid cells hold a large sentinel.");
    m.def("winner_take_all",
          [](const F32& cost, int d_min) { return from_disparity(stereo::winner_take_all(to_volume(cost, d_min))); },
          py::arg("cost"), py::arg("d_min") = 0);
    m.attr("INVALID_COST") = stereo::kInvalidCost;

    // segmentation and texture recovery
    py::class_<seg::Segmenter>(m, "Segmenter")
        .def_static("load", [](const std::string& p) { return seg::Segmenter::load(p); }, py::arg("path"))
        .def("probabilities", [](const seg::Segmenter& s, const F32& img) { return from_image(s.probabilities(to_image(img))); },
             py::arg("image"))
        .def("segment", [](const seg::Segmenter& s, const F32& img) { return from_mask(s.segment(to_image(img))); },
             py::arg("image"))
        .def("stereo_mask", [](const seg::Segmenter& s, const F32& img) { return from_mask(s.stereo_mask(to_image(img))); },
             py::arg("image"));
    m.def("disc_sample",
          [](int size, std::uint64_t seed) {
              const auto [img, mask] = seg::disc_sample(size, seed);
              return py::make_tuple(from_image(img), from_mask(mask));
          },
          py::arg("size"), py::arg("seed"));
    m.def("iou", [](const U8& a, const U8& b) { return seg::iou(to_mask(a), to_mask(b)); });

    m.def("restore",
          [](const std::string& checkpoint, const F32& img) {
              texture::TextureConfig cfg;
              const auto r = texture::load_net(checkpoint, "restore", &cfg);
              return from_image(texture::restore(r, to_image(img), cfg));
          },
          py::arg("checkpoint"), py::arg("image"));

    // reconstruction and evaluation
    m.def("triangulate",
          [](const F32& disp, double focal, double baseline, double cx, double cy) {
              recon::Pinhole cam{focal, cx, cy, baseline};
              return points_array(recon::triangulate(to_disparity(disp), cam));
          },
          py::arg("disparity"), py::arg("focal"), py::arg("baseline"), py::arg("cx"), py::arg("cy"),
          "(N, 3) points in metres; invalid and non-positive disparities are dropped.");
    m.def("remove_outliers",
          [](const F32& pts, int k, double sigma) { return points_array(recon::remove_outliers(cloud_from(pts), k, sigma)); },
          py::arg("points"), py::arg("k") = 16, py::arg("sigma") = 2.0);
    m.def("write_ply",
          [](const std::filesystem::path& p, const F32& pts) {
              auto c = cloud_from(pts);
              recon::write_ply(p, c);
          },
          py::arg("path"), py::arg("points"));
    m.def("nonoccluded",
          [](const F32& gt_left, const std::optional<F32>& gt_right, double tol) {
              const auto l = to_disparity(gt_left);
              std::optional<DisparityMap> r;
              if (gt_right) r = to_disparity(*gt_right);
              return from_mask(recon::nonoccluded(l, r ? &*r : nullptr, tol));
          },
          py::arg("gt_left"), py::arg("gt_right") = py::none(), py::arg("tol") = 1.0);
    m.def("disparity_errors",
          [](const F32& est, const F32& gt, double threshold, const std::optional<U8>& mask) {
              const auto mk = opt_mask(mask);
              return errors_dict(recon::disparity_errors(to_disparity(est), to_disparity(gt), threshold, mk ? &*mk : nullptr));
          },
          py::arg("estimate"), py::arg("gt"), py::arg("threshold") = 1.0, py::arg("mask") = py::none());
}
