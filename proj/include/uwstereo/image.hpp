#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace uwstereo {

/// Planar float image, intensities normalized to [0, 1].
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<float> data;  // [c][y][x]

    Image() = default;
    Image(int w, int h, int c = 1, float fill = 0.0f)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {
        if (w < 0 || h < 0 || c <= 0) throw std::invalid_argument("bad image dimensions");
    }

    bool empty() const { return data.empty(); }
    std::size_t plane() const { return static_cast<std::size_t>(width) * height; }
    float& at(int x, int y, int c = 0) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
    float at(int x, int y, int c = 0) const { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
    bool same_size(const Image& o) const { return width == o.width && height == o.height; }

    /// Bilinear sample with clamp-to-edge addressing.
    float sample(float x, float y, int c = 0) const;
    /// Bilinear sample; returns `outside` when (x, y) leaves the pixel grid.
    float sample_or(float x, float y, float outside, int c = 0) const;

    Image gray() const;
    bool operator==(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels && data == o.data;
    }
};

/// Binary per-pixel mask (0 / 1).
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    Mask() = default;
    Mask(int w, int h, std::uint8_t fill = 1) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::size_t count() const;
    bool operator==(const Mask& o) const = default;
};

/// Square-neighbourhood dilation by `radius` pixels.
Mask dilate(const Mask& m, int radius);

inline constexpr float kInvalidDisparity = std::numeric_limits<float>::infinity();

inline bool valid_disparity(float d) { return std::isfinite(d); }

/// Per-pixel disparity; invalid pixels hold kInvalidDisparity (PFM convention).
struct DisparityMap {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    DisparityMap() = default;
    DisparityMap(int w, int h, float fill = kInvalidDisparity)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::size_t valid_count() const;
};

/// Rectified stereo pair plus whatever annotations are available.
struct StereoFrame {
    std::string id;
    Image left;
    Image right;
    std::optional<Mask> left_mask;
    std::optional<Mask> right_mask;
    std::optional<DisparityMap> gt_left;   // left-view disparity
    std::optional<DisparityMap> gt_right;  // right-view disparity, when known
};

}  // namespace uwstereo
