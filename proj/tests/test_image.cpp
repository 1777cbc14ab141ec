#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "fsw/errors.hpp"
#include "fsw/image.hpp"
#include "fsw/prng.hpp"
#include "test_util.hpp"

using namespace fsw;

namespace {

void be32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(uint8_t(x >> 24));
    v.push_back(uint8_t(x >> 16));
    v.push_back(uint8_t(x >> 8));
    v.push_back(uint8_t(x));
}

// Assembles a PNG with the given IHDR fields and raw (unfiltered) scanlines,
// independent of the production encoder.
std::vector<uint8_t> make_png(uint32_t w, uint32_t h, int depth, int color_type,
                              const std::vector<uint8_t>& scanlines) {
    std::vector<uint8_t> out = {137, 80, 78, 71, 13, 10, 26, 10};
    auto chunk = [&out](const char* type, const std::vector<uint8_t>& data) {
        be32(out, uint32_t(data.size()));
        size_t pos = out.size();
        out.insert(out.end(), type, type + 4);
        out.insert(out.end(), data.begin(), data.end());
        be32(out, uint32_t(::crc32(0, &out[pos], uInt(4 + data.size()))));
    };
    std::vector<uint8_t> ihdr;
    be32(ihdr, w);
    be32(ihdr, h);
    ihdr.push_back(uint8_t(depth));
    ihdr.push_back(uint8_t(color_type));
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    chunk("IHDR", ihdr);
    uLongf len = compressBound(scanlines.size());
    std::vector<uint8_t> comp(len);
    REQUIRE(::compress2(comp.data(), &len, scanlines.data(), scanlines.size(), 9) == Z_OK);
    comp.resize(len);
    chunk("IDAT", comp);
    chunk("IEND", {});
    return out;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

}  // namespace

TEST_CASE("png round-trip is lossless") {
    fswtest::TempDir tmp;
    DetRng rng(1);
    const RasterImage img = fswtest::random_rgb(rng, 64, 64);
    save_png(img, tmp.file("a.png"));
    const RasterImage back = load_png(tmp.file("a.png"));
    CHECK(back.space == ColorSpace::RGB);
    CHECK(back.samples == img.samples);
}

TEST_CASE("png round-trip on 1x1 and 2x2 black") {
    fswtest::TempDir tmp;
    RasterImage one = RasterImage::filled(1, 1, 77);
    save_png(one, tmp.file("one.png"));
    CHECK(load_png(tmp.file("one.png")) == one);

    RasterImage black = RasterImage::filled(2, 2, 0);
    save_png(black, tmp.file("black.png"));
    const RasterImage back = load_png(tmp.file("black.png"));
    for (uint8_t s : back.samples) CHECK(s == 0);
}

TEST_CASE("grayscale png is replicated to rgb") {
    fswtest::TempDir tmp;
    // 2x2 gray, rows prefixed with filter byte 0
    std::vector<uint8_t> rows = {0, 200, 10, 0, 0, 255};
    write_file(tmp.file("g.png"), make_png(2, 2, 8, 0, rows));
    const RasterImage img = load_png(tmp.file("g.png"));
    CHECK(img.at(0, 0, 0) == 200);
    CHECK(img.at(0, 0, 1) == 200);
    CHECK(img.at(0, 0, 2) == 200);
    CHECK(img.at(1, 1, 0) == 255);
}

TEST_CASE("rgba png loads with alpha stripped") {
    fswtest::TempDir tmp;
    std::vector<uint8_t> rows = {0, 1, 2, 3, 99, 4, 5, 6, 0};
    write_file(tmp.file("a.png"), make_png(2, 1, 8, 6, rows));
    const RasterImage img = load_png(tmp.file("a.png"));
    CHECK(img.at(0, 0, 0) == 1);
    CHECK(img.at(0, 0, 2) == 3);
    CHECK(img.at(0, 1, 1) == 5);
}

TEST_CASE("png reader survives filtered input") {
    fswtest::TempDir tmp;
    // 2x2 RGB with Sub and Up filters
    std::vector<uint8_t> rows = {1, 10, 20, 30, 5, 5, 5, 2, 1, 1, 1, 0, 0, 0};
    write_file(tmp.file("f.png"), make_png(2, 2, 8, 2, rows));
    const RasterImage img = load_png(tmp.file("f.png"));
    CHECK(img.at(0, 0, 0) == 10);
    CHECK(img.at(0, 1, 0) == 15);  // sub filter adds left pixel
    CHECK(img.at(1, 0, 0) == 11);  // up filter adds row above
}

TEST_CASE("png error paths") {
    fswtest::TempDir tmp;
    SUBCASE("missing file") { CHECK_THROWS_AS(load_png(tmp.file("nope.png")), IoError); }
    SUBCASE("truncated file") {
        RasterImage img = RasterImage::filled(8, 8, 9);
        save_png(img, tmp.file("t.png"));
        std::ifstream in(tmp.file("t.png"), std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        bytes.resize(bytes.size() / 2);
        std::ofstream out(tmp.file("t.png"), std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), std::streamsize(bytes.size()));
        out.close();
        CHECK_THROWS_AS(load_png(tmp.file("t.png")), IoError);
    }
    SUBCASE("not a png") {
        write_file(tmp.file("junk.png"), {1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
        CHECK_THROWS_AS(load_png(tmp.file("junk.png")), FormatError);
    }
    SUBCASE("16-bit rejected") {
        std::vector<uint8_t> rows = {0, 0, 1, 0, 2, 0, 3};
        write_file(tmp.file("deep.png"), make_png(1, 1, 16, 2, rows));
        CHECK_THROWS_AS(load_png(tmp.file("deep.png")), FormatError);
    }
    SUBCASE("palette rejected") {
        std::vector<uint8_t> rows = {0, 0};
        write_file(tmp.file("pal.png"), make_png(1, 1, 8, 3, rows));
        CHECK_THROWS_AS(load_png(tmp.file("pal.png")), FormatError);
    }
    SUBCASE("save to unwritable path") {
        RasterImage img = RasterImage::filled(2, 2, 0);
        CHECK_THROWS_AS(save_png(img, "/nonexistent_dir_zz/x.png"), IoError);
    }
    SUBCASE("save rejects non-RGB space") {
        RasterImage img = RasterImage::filled(2, 2, 0);
        img.space = ColorSpace::YUV;
        CHECK_THROWS_AS(save_png(img, tmp.file("yuv.png")), SpaceError);
    }
}

TEST_CASE("rgb_to_yuv fixed points and hand-evaluated case") {
    RasterImage gray = RasterImage::filled(1, 1, 128);
    const RasterImage yuv = rgb_to_yuv(gray);
    CHECK(yuv.space == ColorSpace::YUV);
    CHECK(yuv.at(0, 0, 0) == 128);
    CHECK(yuv.at(0, 0, 1) == 128);
    CHECK(yuv.at(0, 0, 2) == 128);

    RasterImage white = RasterImage::filled(1, 1, 255);
    const RasterImage wy = rgb_to_yuv(white);
    CHECK(wy.at(0, 0, 0) == 255);
    CHECK(wy.at(0, 0, 1) == 128);
    CHECK(wy.at(0, 0, 2) == 128);

    RasterImage red = RasterImage::filled(1, 1, 0);
    red.at(0, 0, 0) = 255;
    const RasterImage ry = rgb_to_yuv(red);
    // 0.299*255 = 76.245; -0.169*255+128 = 84.905; 0.5*255+128 = 255.5 -> clamp
    CHECK(ry.at(0, 0, 0) == 76);
    CHECK(ry.at(0, 0, 1) == 85);
    CHECK(ry.at(0, 0, 2) == 255);

    CHECK_THROWS_AS(rgb_to_yuv(ry), SpaceError);
}

TEST_CASE("yuv_to_rgb fixed points") {
    RasterImage gray = RasterImage::filled(1, 1, 128, ColorSpace::YUV);
    const RasterImage rgb = yuv_to_rgb(gray);
    CHECK(rgb.space == ColorSpace::RGB);
    CHECK(rgb.at(0, 0, 0) == 128);

    RasterImage black = RasterImage::filled(1, 1, 128, ColorSpace::YUV);
    black.at(0, 0, 0) = 0;
    const RasterImage rb = yuv_to_rgb(black);
    CHECK(rb.at(0, 0, 0) == 0);
    CHECK(rb.at(0, 0, 1) == 0);
    CHECK(rb.at(0, 0, 2) == 0);

    CHECK_THROWS_AS(yuv_to_rgb(rb), SpaceError);
}

TEST_CASE("color round-trip changes no channel by more than 1") {
    DetRng rng(3);
    RasterImage img = fswtest::random_rgb(rng, 40, 40);
    // include the saturated corners
    const uint8_t corners[8][3] = {{0, 0, 0},     {255, 255, 255}, {255, 0, 0}, {0, 255, 0},
                                   {0, 0, 255},   {255, 255, 0},   {0, 255, 255}, {255, 0, 255}};
    for (int i = 0; i < 8; ++i) {
        for (int c = 0; c < 3; ++c) img.at(0, i, c) = corners[i][c];
    }
    const RasterImage back = yuv_to_rgb(rgb_to_yuv(img));
    int max_delta = 0;
    for (size_t i = 0; i < img.samples.size(); ++i) {
        max_delta = std::max(max_delta, std::abs(int(img.samples[i]) - int(back.samples[i])));
    }
    CHECK(max_delta <= 1);
}

TEST_CASE("float yuv planes invert exactly") {
    DetRng rng(4);
    const RasterImage img = fswtest::random_rgb(rng, 16, 16);
    const RasterImage back = yuv_planes_to_rgb(rgb_to_yuv_planes(img));
    CHECK(back.samples == img.samples);
}

TEST_CASE("resize identity and constancy") {
    DetRng rng(5);
    const RasterImage img = fswtest::random_rgb(rng, 32, 32);
    CHECK(resize_bilinear(img, 32, 32).samples == img.samples);

    const RasterImage flat = RasterImage::filled(2, 2, 99);
    const RasterImage up = resize_bilinear(flat, 4, 4);
    for (uint8_t s : up.samples) CHECK(s == 99);
}

TEST_CASE("resize hand-evaluated half-pixel centers") {
    RasterImage col = RasterImage::filled(2, 1, 0);
    for (int c = 0; c < 3; ++c) col.at(1, 0, c) = 255;
    const RasterImage out = resize_bilinear(col, 4, 1);
    CHECK(out.at(0, 0, 0) == 0);
    CHECK(out.at(1, 0, 0) == 64);
    CHECK(out.at(2, 0, 0) == 191);
    CHECK(out.at(3, 0, 0) == 255);
}

TEST_CASE("resize preserves value range") {
    DetRng rng(6);
    const RasterImage img = fswtest::random_rgb(rng, 17, 23);
    const RasterImage out = resize_bilinear(img, 40, 9);
    uint8_t lo = 255, hi = 0;
    for (uint8_t s : img.samples) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    for (uint8_t s : out.samples) {
        CHECK(s >= lo);
        CHECK(s <= hi);
    }
}

TEST_CASE("plane resize of constant mask stays constant") {
    Plane m(32, 32, 1.0f);
    const Plane up = resize_bilinear(m, 100, 64);
    for (float v : up.values) CHECK(v == doctest::Approx(1.0f));
}
