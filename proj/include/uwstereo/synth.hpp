#pragma once

#include "uwstereo/image.hpp"

#include <cstdint>
#include <vector>

namespace uwstereo::synth {

/// Stateless hash used for all procedural content.
std::uint64_t mix(std::uint64_t a, std::uint64_t b);
double hash_unit(std::uint64_t seed, std::int64_t i, std::int64_t j);  // [0, 1)

/// Smooth fractal value noise in [0, 1], continuous in (x, y).
double value_noise(double x, double y, double scale, int octaves, std::uint64_t seed);

/// Pseudo-random dot pattern (projector slide), values in [0, 1]: a Gaussian
/// dot of the given radius in a fraction `density` of the cells of a grid with
/// pitch `spacing`.
double dot_pattern(double x, double y, double spacing, double radius, double density, std::uint64_t seed);

/// Vertical-stripe pattern in [0, 1] with the given period (pixels).
double stripes(double x, double period, double phase = 0.0);

/// One textured planar patch. Disparity in left-view coordinates:
/// d(x, y) = d0 + dx * x + dy * y. Shapes are expressed in left-view pixels.
struct Layer {
    enum class Shape { Full, Rect, Ellipse };
    Shape shape = Shape::Full;
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // bounding box for Rect / Ellipse
    double d0 = 0, dx = 0, dy = 0;
    std::uint64_t texture_seed = 1;
    double texture_scale = 24.0;
    double contrast = 0.6;
    bool target = true;

    double disparity(double x, double y) const { return d0 + dx * x + dy * y; }
    bool covers(double x, double y) const;
};

struct SceneSpec {
    int width = 256;
    int height = 192;
    std::vector<Layer> layers;  // back to front; nearer layers must have larger disparity
    bool pattern = true;
    double pattern_spacing = 4.0;
    double pattern_radius = 0.9;
    double pattern_density = 0.5;
    double pattern_strength = 0.45;
    std::uint64_t pattern_seed = 7;
    double noise_sigma = 0.0;  // additive Gaussian sensor noise
    std::uint64_t noise_seed = 11;
};

struct SceneRender {
    StereoFrame frame;  // left/right images, target masks, GT disparities for both views
    Image left_plain;   // the same views without the projected pattern
    Image right_plain;
    float max_disparity = 0;
};

/// Renders both views with exact GT. Pixels not covered by any layer get
/// intensity 0 and invalid disparity.
SceneRender render_scene(const SceneSpec& spec);

/// Single fronto-parallel textured plane at constant disparity.
SceneSpec fronto_parallel_plane(int width, int height, double disparity, std::uint64_t seed);

/// Background plane plus a nearer rectangular plane spanning full height
/// between columns [x0, x1).
SceneSpec two_plane_scene(int width, int height, double d_back, double d_front, int x0, int x1,
                          std::uint64_t seed);

/// Randomized layered scene: slanted background and a few nearer objects.
/// Disparities lie in [d_min, d_max].
SceneSpec random_scene(int width, int height, double d_min, double d_max, std::uint64_t seed);

}  // namespace uwstereo::synth
