#include "uwstereo/io.hpp"

#include <png.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace uwstereo::io {

Image read_png(const std::filesystem::path& path) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str()))
        throw DataError("cannot read PNG " + path.string() + ": " + png.message);
    const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
    png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const int channels = color ? 3 : 1;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
        const std::string msg = png.message;
        png_image_free(&png);
        throw DataError("corrupt PNG " + path.string() + ": " + msg);
    }
    Image img(static_cast<int>(png.width), static_cast<int>(png.height), channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(x, y, c) = buf[(static_cast<std::size_t>(y) * img.width + x) * channels + c] / 255.0f;
    return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("write_png supports 1 or 3 channels, got " + std::to_string(img.channels));
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::vector<png_byte> buf(img.plane() * img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                buf[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] = to_u8(img.at(x, y, c));
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width);
    png.height = static_cast<png_uint_32>(img.height);
    png.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&png, path.c_str(), 0, buf.data(), 0, nullptr))
        throw DataError("cannot write PNG " + path.string() + ": " + png.message);
}

Mask read_mask_png(const std::filesystem::path& path) {
    const Image img = read_png(path).gray();
    Mask m(img.width, img.height, 0);
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = img.data[i] > 0.0f ? 1 : 0;
    return m;
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
    Image img(mask.width, mask.height, 1);
    for (std::size_t i = 0; i < mask.data.size(); ++i) img.data[i] = mask.data[i] ? 1.0f : 0.0f;
    write_png(path, img);
}

DisparityMap read_pfm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open PFM " + path.string());
    std::string magic;
    int w = 0, h = 0;
    double scale = 0;
    is >> magic >> w >> h >> scale;
    if (!is || (magic != "Pf" && magic != "PF")) throw DataError("bad PFM header in " + path.string());
    if (magic == "PF") throw DataError("colour PFM not supported: " + path.string());
    if (w <= 0 || h <= 0 || scale == 0.0) throw DataError("bad PFM dimensions in " + path.string());
    is.get();  // single whitespace byte after the scale
    const bool little = scale < 0;
    DisparityMap d(w, h);
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 4);
    for (int y = h - 1; y >= 0; --y) {
        if (!is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size())))
            throw DataError("truncated PFM " + path.string());
        for (int x = 0; x < w; ++x) {
            unsigned char b[4];
            std::memcpy(b, row.data() + 4 * x, 4);
            if (little != (std::endian::native == std::endian::little)) std::swap(b[0], b[3]), std::swap(b[1], b[2]);
            float v;
            std::memcpy(&v, b, 4);
            d.at(x, y) = v;
        }
    }
    return d;
}

void write_pfm(const std::filesystem::path& path, const DisparityMap& disp) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write PFM " + path.string());
    os << "Pf\n" << disp.width << ' ' << disp.height << "\n-1\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(disp.width) * 4);
    for (int y = disp.height - 1; y >= 0; --y) {
        for (int x = 0; x < disp.width; ++x) {
            unsigned char b[4];
            const float v = disp.at(x, y);
            std::memcpy(b, &v, 4);
            if constexpr (std::endian::native == std::endian::big) std::swap(b[0], b[3]), std::swap(b[1], b[2]);
            std::memcpy(row.data() + 4 * x, b, 4);
        }
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!os) throw DataError("error writing PFM " + path.string());
}

}  // namespace uwstereo::io
