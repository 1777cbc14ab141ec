#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace fsw {

enum class ColorSpace { RGB, BGR, YUV };

const char* to_string(ColorSpace space);

// 8-bit 3-channel raster, row-major interleaved. The space tag tracks what
// the samples mean; conversions update it.
struct RasterImage {
    int height = 0;
    int width = 0;
    static constexpr int channels = 3;
    std::vector<uint8_t> samples;  // height * width * 3
    ColorSpace space = ColorSpace::RGB;

    static RasterImage filled(int height, int width, uint8_t value, ColorSpace space = ColorSpace::RGB);

    uint8_t at(int y, int x, int c) const { return samples[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    uint8_t& at(int y, int x, int c) { return samples[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    size_t pixel_count() const { return static_cast<size_t>(height) * width; }

    bool operator==(const RasterImage&) const = default;
};

// Single-channel float working buffer (Y/B channels, residuals, masks).
struct Plane {
    int height = 0;
    int width = 0;
    std::vector<float> values;  // height * width

    Plane() = default;
    Plane(int h, int w, float fill = 0.0f)
        : height(h), width(w), values(static_cast<size_t>(h) * w, fill) {}

    float at(int y, int x) const { return values[static_cast<size_t>(y) * width + x]; }
    float& at(int y, int x) { return values[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return values.size(); }
};

// PNG I/O (8-bit, RGB or grayscale). Grayscale is replicated to 3 channels;
// an alpha channel is stripped with a warning on stderr. 16-bit, palette and
// interlaced files are rejected with FormatError.
RasterImage load_png(const std::string& path);

// Lossless: load_png(save_png(img)) returns identical samples.
// Throws SpaceError unless img.space == RGB.
void save_png(const RasterImage& img, const std::string& path);

// BT.601 full-range with +128 chroma offset, clamped to [0,255] and rounded
// half-away-from-zero. The exact matrix is a documented convention of this
// workbench so embedder outputs are bit-reproducible.
RasterImage rgb_to_yuv(const RasterImage& img);
RasterImage yuv_to_rgb(const RasterImage& img);

// Float variant used by the embedding paths: no clamping, no rounding.
struct YuvPlanes {
    Plane y, u, v;
};
YuvPlanes rgb_to_yuv_planes(const RasterImage& img);
RasterImage yuv_planes_to_rgb(const YuvPlanes& planes);

// Half-pixel-center bilinear resize: src = (i + 0.5) * scale - 0.5, clamped.
// A same-size call returns identical samples.
RasterImage resize_bilinear(const RasterImage& img, int out_h, int out_w);
Plane resize_bilinear(const Plane& plane, int out_h, int out_w);

// Extracts channel c as floats / writes it back with clamp+round.
Plane channel_plane(const RasterImage& img, int c);
void set_channel(RasterImage& img, int c, const Plane& plane);

uint8_t clamp_round_u8(double v);

}  // namespace fsw
