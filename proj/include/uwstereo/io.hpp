#pragma once

#include "uwstereo/image.hpp"

#include <filesystem>
#include <stdexcept>

namespace uwstereo::io {

/// Unreadable or malformed data on disk.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 8- or 16-bit gray / gray+alpha / RGB / RGBA PNG. Alpha is dropped.
Image read_png(const std::filesystem::path& path);
/// Writes 8-bit gray or RGB, values clamped to [0,1] and rounded.
void write_png(const std::filesystem::path& path, const Image& img);

/// Masks are 8-bit PNGs, 0 / 255; any nonzero value reads as set.
Mask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);

/// Portable float map, Middlebury convention: "Pf" header, negative scale for
/// little-endian, rows stored bottom to top, invalid pixels as +inf.
DisparityMap read_pfm(const std::filesystem::path& path);
void write_pfm(const std::filesystem::path& path, const DisparityMap& disp);

/// 8-bit quantization used for PNG output (round half away from zero).
inline std::uint8_t to_u8(float v) {
    const float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    return static_cast<std::uint8_t>(c * 255.0f + 0.5f);
}

}  // namespace uwstereo::io
