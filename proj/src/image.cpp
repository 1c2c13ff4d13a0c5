#include "uwstereo/image.hpp"

#include <algorithm>

namespace uwstereo {

float Image::sample(float x, float y, int c) const {
    x = std::clamp(x, 0.0f, static_cast<float>(width - 1));
    y = std::clamp(y, 0.0f, static_cast<float>(height - 1));
    const int x0 = std::min(static_cast<int>(x), width - 1), y0 = std::min(static_cast<int>(y), height - 1);
    const int x1 = std::min(x0 + 1, width - 1), y1 = std::min(y0 + 1, height - 1);
    const float fx = x - x0, fy = y - y0;
    const float top = at(x0, y0, c) + fx * (at(x1, y0, c) - at(x0, y0, c));
    const float bot = at(x0, y1, c) + fx * (at(x1, y1, c) - at(x0, y1, c));
    return top + fy * (bot - top);
}

float Image::sample_or(float x, float y, float outside, int c) const {
    if (!(x >= 0.0f && y >= 0.0f && x <= static_cast<float>(width - 1) && y <= static_cast<float>(height - 1)))
        return outside;
    return sample(x, y, c);
}

Image Image::gray() const {
    if (channels == 1) return *this;
    Image g(width, height, 1);
    for (std::size_t i = 0; i < plane(); ++i) {
        g.data[i] = channels >= 3 ? 0.299f * data[i] + 0.587f * data[plane() + i] + 0.114f * data[2 * plane() + i]
                                  : data[i];
    }
    return g;
}

std::size_t Mask::count() const {
    return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

Mask dilate(const Mask& m, int radius) {
    if (radius <= 0) return m;
    // Separable: horizontal then vertical max.
    Mask tmp(m.width, m.height, 0), out(m.width, m.height, 0);
    for (int y = 0; y < m.height; ++y) {
        int last = -radius - 1;  // last set column seen so far
        for (int x = 0; x < m.width + radius; ++x) {
            if (x < m.width && m.at(x, y)) last = x;
            const int xo = x - radius;
            if (xo >= 0 && last >= xo - radius) tmp.at(xo, y) = 1;
        }
    }
    for (int x = 0; x < m.width; ++x) {
        int last = -radius - 1;
        for (int y = 0; y < m.height + radius; ++y) {
            if (y < m.height && tmp.at(x, y)) last = y;
            const int yo = y - radius;
            if (yo >= 0 && last >= yo - radius) out.at(x, yo) = 1;
        }
    }
    return out;
}

std::size_t DisparityMap::valid_count() const {
    return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), valid_disparity));
}

}  // namespace uwstereo
