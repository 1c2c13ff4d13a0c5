#pragma once

#include "uwstereo/image.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace uwstereo::bubbles {

enum class SizeClass { Small, Large };
enum class DensityClass { Little, Much };
enum class PositionClass { Near, Far };

struct Condition {
    bool clean = true;
    SizeClass size = SizeClass::Small;
    DensityClass density = DensityClass::Little;
    PositionClass position = PositionClass::Far;

    std::string name() const;  // "clean" or e.g. "near_much_large"
    static Condition parse(const std::string& name);
    /// The clean scene followed by the 8 bubble combinations.
    static std::vector<Condition> grid();
    bool operator==(const Condition&) const = default;
};

struct ClassParams {
    double small_min = 3, small_max = 8;
    double large_min = 12, large_max = 40;
    double little_rate = 10;  // bubbles per megapixel
    double much_rate = 60;
    double near_extra_parallax_min = 16;  // beyond the scene's maximum disparity
    double near_extra_parallax_max = 48;
    double far_parallax_max = 4;
    double near_blur = 2.0;  // soft edge width (px) for near bubbles
    double far_blur = 0.75;
    double opacity_min = 0.45, opacity_max = 0.95;
    double highlight = 1.0;          // specular colour
    double highlight_sigma = 0.35;   // relative to radius
    double rim_darkening = 0.45;
    double warp_amplitude = 0.0;     // px; 0 disables the fluctuation warp
    double warp_wavelength = 64.0;

    static ClassParams from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct Bubble {
    double x = 0, y = 0;  // left-view centre
    double radius = 1;
    double opacity = 1;   // (0, 1]
    double hx = 0, hy = 0;  // highlight offset from centre
    double parallax = 0;    // right-view centre is (x - parallax, y)
    double blur = 0;        // soft edge width
};

struct BubbleField {
    Condition condition;
    std::uint64_t seed = 0;
    int width = 0;
    int height = 0;
    std::vector<Bubble> bubbles;
};

double rate_for(const Condition& c, const ClassParams& p);

/// Poisson count with mean rate * area / 1e6; centres uniform in the image
/// inflated by the radius.
BubbleField sample_field(const Condition& c, int width, int height, std::uint64_t seed, const ClassParams& p,
                         double scene_max_disparity);

struct AugmentedSample {
    StereoFrame clean;
    StereoFrame degraded;
    Mask left_bubbles;
    Mask right_bubbles;
    Condition condition;
    bool warped = false;
};

/// Alpha-composites every bubble into both views. GT and target masks are
/// carried over unchanged.
AugmentedSample render_bubbles(const StereoFrame& frame, const BubbleField& field, const ClassParams& p);

/// Smooth displacement field with magnitude <= amplitude everywhere.
struct Displacement {
    int width = 0, height = 0;
    std::vector<float> dx, dy;
    double max_magnitude() const;
};
Displacement fluctuation_field(int width, int height, double amplitude, double wavelength, std::uint64_t seed);
Image apply_displacement(const Image& img, const Displacement& d);
Image fluctuation_warp(const Image& img, double amplitude, double wavelength, std::uint64_t seed);

/// Stream seed for one (root seed, frame, condition) triple.
std::uint64_t sample_seed(std::uint64_t root, const std::string& frame_id, const Condition& c);

struct DatasetEntry {
    std::string id;
    std::string frame;
    std::string condition;
    std::string dir;  // relative to the manifest
    std::size_t bubbles = 0;
};

struct Manifest {
    std::vector<DatasetEntry> entries;
    nlohmann::json to_json() const;
    static Manifest from_json(const nlohmann::json& j);
};

/// Writes one sample directory per (frame, condition): im0.png, im1.png
/// (degraded), clean0.png, clean1.png, disp0.pfm, disp1.pfm when known,
/// mask0.png, mask1.png (target), bubble0.png, bubble1.png, meta.json.
/// Frames without GT are skipped with a warning. Returns the manifest, which
/// is also saved as out_dir/manifest.json.
Manifest build_transfer_dataset(const std::vector<StereoFrame>& base, const std::vector<Condition>& conditions,
                                std::uint64_t seed, const ClassParams& params, const std::filesystem::path& out_dir);

}  // namespace uwstereo::bubbles
