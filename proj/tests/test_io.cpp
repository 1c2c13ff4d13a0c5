#include "uwstereo/io.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

using namespace uwstereo;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "uwstereo_io_tests";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST(Pfm, RoundTripKeepsValuesAndInvalidSentinel) {
    DisparityMap d(7, 5);
    std::mt19937 rng(1);
    std::uniform_real_distribution<float> u(0.0f, 256.0f);
    for (auto& v : d.data) v = u(rng);
    d.at(3, 2) = kInvalidDisparity;
    const auto p = scratch("rt.pfm");
    io::write_pfm(p, d);
    const auto back = io::read_pfm(p);
    ASSERT_EQ(back.width, 7);
    ASSERT_EQ(back.height, 5);
    for (std::size_t i = 0; i < d.data.size(); ++i) {
        if (std::isinf(d.data[i]))
            EXPECT_TRUE(std::isinf(back.data[i]));
        else
            EXPECT_EQ(back.data[i], d.data[i]);
    }
}

TEST(Pfm, StoresRowsBottomToTop) {
    DisparityMap d(2, 2);
    d.at(0, 0) = 1;
    d.at(1, 0) = 2;
    d.at(0, 1) = 3;
    d.at(1, 1) = 4;
    const auto p = scratch("order.pfm");
    io::write_pfm(p, d);
    std::ifstream is(p, std::ios::binary);
    std::string header((std::istreambuf_iterator<char>(is)), {});
    ASSERT_EQ(header.substr(0, 10), "Pf\n2 2\n-1\n");
    float first;
    std::memcpy(&first, header.data() + 10, 4);
    EXPECT_EQ(first, 3.0f);
}

TEST(Pfm, TruncatedAndGarbageFilesRejected) {
    const auto p = scratch("bad.pfm");
    {
        std::ofstream os(p, std::ios::binary);
        os << "Pf\n4 4\n-1\n" << "abc";
    }
    EXPECT_THROW(io::read_pfm(p), io::DataError);
    {
        std::ofstream os(p, std::ios::binary);
        os << "P6\n1 1\n255\n";
    }
    EXPECT_THROW(io::read_pfm(p), io::DataError);
    EXPECT_THROW(io::read_pfm(scratch("missing.pfm")), io::DataError);
}

TEST(Png, GrayAndRgbRoundTripAt8Bits) {
    for (int channels : {1, 3}) {
        Image img(9, 4, channels);
        for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(i % 256) / 255.0f;
        const auto p = scratch("rt" + std::to_string(channels) + ".png");
        io::write_png(p, img);
        EXPECT_EQ(io::read_png(p), img);
    }
}

TEST(Png, MaskRoundTrip) {
    Mask m(6, 3, 0);
    m.at(1, 1) = 1;
    m.at(5, 2) = 1;
    const auto p = scratch("mask.png");
    io::write_mask_png(p, m);
    EXPECT_EQ(io::read_mask_png(p), m);
}

TEST(Png, ToU8RoundsHalfUp) {
    EXPECT_EQ(io::to_u8(0.5f), 128);
    EXPECT_EQ(io::to_u8(-1.0f), 0);
    EXPECT_EQ(io::to_u8(2.0f), 255);
    EXPECT_EQ(io::to_u8(100.0f / 255.0f), 100);
}

TEST(ImageOps, DilateGrowsSquareNeighbourhood) {
    Mask m(9, 9, 0);
    m.at(4, 4) = 1;
    auto d = dilate(m, 2);
    EXPECT_EQ(d.count(), 25u);
    EXPECT_TRUE(d.at(2, 2));
    EXPECT_FALSE(d.at(1, 4));
    EXPECT_EQ(dilate(m, 0), m);
}

TEST(ImageOps, BilinearSampleInterpolates) {
    Image img(2, 1);
    img.at(0, 0) = 0.0f;
    img.at(1, 0) = 1.0f;
    EXPECT_FLOAT_EQ(img.sample(0.25f, 0.0f), 0.25f);
    EXPECT_FLOAT_EQ(img.sample(5.0f, 0.0f), 1.0f);
    EXPECT_FLOAT_EQ(img.sample_or(5.0f, 0.0f, -1.0f), -1.0f);
}
