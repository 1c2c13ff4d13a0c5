#include "uwstereo/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <stdexcept>

namespace uwstereo::stereo {

namespace {

double since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void StereoConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
    if (d_min < 0) fail("stereo.d_min: must be >= 0");
    if (d_max < d_min) fail("stereo.d_max: must be >= stereo.d_min");
    if (d_max > 1024) fail("stereo.d_max: must be <= 1024");
    if (!(sgm.p1 >= 0.0f)) fail("stereo.p1: must be >= 0");
    if (!(sgm.p2 >= sgm.p1)) fail("stereo.p2: must be >= stereo.p1");
    if (sgm.paths != 1 && sgm.paths != 4 && sgm.paths != 8) fail("stereo.paths: must be 1, 4 or 8");
    if (!(lr_tol >= 0.0f)) fail("stereo.lr_tol: must be >= 0");
}

StereoConfig StereoConfig::from_json(const nlohmann::json& j, const StereoConfig& d) {
    StereoConfig c = d;
    c.d_min = j.value("d_min", c.d_min);
    c.d_max = j.value("d_max", c.d_max);
    c.sgm.p1 = j.value("p1", c.sgm.p1);
    c.sgm.p2 = j.value("p2", c.sgm.p2);
    c.sgm.paths = j.value("paths", c.sgm.paths);
    c.lr_tol = j.value("lr_tol", c.lr_tol);
    c.subpixel = j.value("subpixel", c.subpixel);
    c.validate();
    return c;
}

nlohmann::json StereoConfig::to_json() const {
    return {{"d_min", d_min}, {"d_max", d_max}, {"p1", sgm.p1},         {"p2", sgm.p2},
            {"paths", sgm.paths}, {"lr_tol", lr_tol}, {"subpixel", subpixel}};
}

MatchOutput match(const DescriptorMap& left, const DescriptorMap& right, const StereoConfig& cfg,
                  const Mask* left_mask, const Mask* right_mask) {
    cfg.validate();
    MatchOutput out;
    const int d_max = std::min(cfg.d_max, std::max(left.width - 1, cfg.d_min));
    auto t0 = std::chrono::steady_clock::now();
    CostStats stats;
    CostVolume vol = build_cost_volume(left, right, left_mask, right_mask, cfg.d_min, d_max, &stats);
    out.timings.cost = since(t0);

    t0 = std::chrono::steady_clock::now();
    vol = sgm_aggregate(vol, cfg.sgm);
    out.timings.sgm = since(t0);

    t0 = std::chrono::steady_clock::now();
    out.left = winner_take_all(vol);
    out.right = right_disparity(vol);
    DisparityMap checked = lr_check(out.left, out.right, cfg.lr_tol);
    out.lr_rejected = out.left.valid_count() - checked.valid_count();
    out.disparity = cfg.subpixel ? subpixel_refine(vol, checked) : std::move(checked);
    out.timings.select = since(t0);
    out.degenerate_pixels = left.degenerate.empty() && right.degenerate.empty()
                                ? 0
                                : static_cast<std::size_t>(std::count(left.degenerate.begin(), left.degenerate.end(), 1) +
                                                           std::count(right.degenerate.begin(), right.degenerate.end(), 1));
    return out;
}

MatchOutput match(const StereoFrame& frame, const Matcher& matcher, const StereoConfig& cfg, const Mask* left_mask,
                  const Mask* right_mask) {
    if (!frame.left.same_size(frame.right)) throw std::invalid_argument("left and right images differ in size");
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const DescriptorMap l = matcher.descriptors(frame.left);
    const DescriptorMap r = matcher.descriptors(frame.right);
    const double td = since(t0);
    MatchOutput out = match(l, r, cfg, left_mask, right_mask);
    out.timings.descriptors = td;
    if (out.degenerate_pixels)
        spdlog::warn("match: {} pixels had zero-norm descriptors (similarity 0)", out.degenerate_pixels);
    spdlog::debug("match {}: descriptors {:.2f}s cost {:.2f}s sgm {:.2f}s select {:.2f}s", frame.id, td,
                  out.timings.cost, out.timings.sgm, out.timings.select);
    return out;
}

}  // namespace uwstereo::stereo
