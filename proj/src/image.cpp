#include "fsw/image.hpp"

#include <algorithm>
#include <cmath>

#include "fsw/errors.hpp"

namespace fsw {

namespace {

// Forward matrix (documented convention, applied to full-range RGB):
//   Y =  0.299 R + 0.587 G + 0.114 B
//   U = -0.169 R - 0.331 G + 0.5   B + 128
//   V =  0.5   R - 0.419 G - 0.081 B + 128
constexpr double kFwd[3][3] = {
    {0.299, 0.587, 0.114},
    {-0.169, -0.331, 0.5},
    {0.5, -0.419, -0.081},
};

struct InverseMatrix {
    double m[3][3];
};

InverseMatrix compute_inverse() {
    const auto& a = kFwd;
    const double det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
                       a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
                       a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    InverseMatrix inv;
    inv.m[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) / det;
    inv.m[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) / det;
    inv.m[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) / det;
    inv.m[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) / det;
    inv.m[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) / det;
    inv.m[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) / det;
    inv.m[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) / det;
    inv.m[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) / det;
    inv.m[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / det;
    return inv;
}

const InverseMatrix& inverse_matrix() {
    static const InverseMatrix inv = compute_inverse();
    return inv;
}

}  // namespace

const char* to_string(ColorSpace space) {
    switch (space) {
        case ColorSpace::RGB: return "RGB";
        case ColorSpace::BGR: return "BGR";
        case ColorSpace::YUV: return "YUV";
    }
    return "?";
}

RasterImage RasterImage::filled(int height, int width, uint8_t value, ColorSpace space) {
    RasterImage img;
    img.height = height;
    img.width = width;
    img.samples.assign(static_cast<size_t>(height) * width * 3, value);
    img.space = space;
    return img;
}

uint8_t clamp_round_u8(double v) {
    v = std::clamp(v, 0.0, 255.0);
    return static_cast<uint8_t>(std::lround(v));  // lround: half away from zero
}

RasterImage rgb_to_yuv(const RasterImage& img) {
    if (img.space != ColorSpace::RGB) throw SpaceError("rgb_to_yuv expects RGB input");
    RasterImage out = img;
    out.space = ColorSpace::YUV;
    const size_t n = img.pixel_count();
    for (size_t i = 0; i < n; ++i) {
        const double r = img.samples[i * 3 + 0];
        const double g = img.samples[i * 3 + 1];
        const double b = img.samples[i * 3 + 2];
        out.samples[i * 3 + 0] = clamp_round_u8(kFwd[0][0] * r + kFwd[0][1] * g + kFwd[0][2] * b);
        out.samples[i * 3 + 1] = clamp_round_u8(kFwd[1][0] * r + kFwd[1][1] * g + kFwd[1][2] * b + 128.0);
        out.samples[i * 3 + 2] = clamp_round_u8(kFwd[2][0] * r + kFwd[2][1] * g + kFwd[2][2] * b + 128.0);
    }
    return out;
}

RasterImage yuv_to_rgb(const RasterImage& img) {
    if (img.space != ColorSpace::YUV) throw SpaceError("yuv_to_rgb expects YUV input");
    const auto& inv = inverse_matrix();
    RasterImage out = img;
    out.space = ColorSpace::RGB;
    const size_t n = img.pixel_count();
    for (size_t i = 0; i < n; ++i) {
        const double y = img.samples[i * 3 + 0];
        const double u = img.samples[i * 3 + 1] - 128.0;
        const double v = img.samples[i * 3 + 2] - 128.0;
        for (int c = 0; c < 3; ++c) {
            out.samples[i * 3 + c] = clamp_round_u8(inv.m[c][0] * y + inv.m[c][1] * u + inv.m[c][2] * v);
        }
    }
    return out;
}

YuvPlanes rgb_to_yuv_planes(const RasterImage& img) {
    if (img.space != ColorSpace::RGB) throw SpaceError("rgb_to_yuv_planes expects RGB input");
    YuvPlanes p{Plane(img.height, img.width), Plane(img.height, img.width), Plane(img.height, img.width)};
    const size_t n = img.pixel_count();
    for (size_t i = 0; i < n; ++i) {
        const double r = img.samples[i * 3 + 0];
        const double g = img.samples[i * 3 + 1];
        const double b = img.samples[i * 3 + 2];
        p.y.values[i] = static_cast<float>(kFwd[0][0] * r + kFwd[0][1] * g + kFwd[0][2] * b);
        p.u.values[i] = static_cast<float>(kFwd[1][0] * r + kFwd[1][1] * g + kFwd[1][2] * b + 128.0);
        p.v.values[i] = static_cast<float>(kFwd[2][0] * r + kFwd[2][1] * g + kFwd[2][2] * b + 128.0);
    }
    return p;
}

RasterImage yuv_planes_to_rgb(const YuvPlanes& planes) {
    const int h = planes.y.height, w = planes.y.width;
    if (planes.u.height != h || planes.u.width != w || planes.v.height != h || planes.v.width != w) {
        throw ShapeError("YUV planes disagree on dimensions");
    }
    const auto& inv = inverse_matrix();
    RasterImage out;
    out.height = h;
    out.width = w;
    out.space = ColorSpace::RGB;
    out.samples.resize(static_cast<size_t>(h) * w * 3);
    const size_t n = out.pixel_count();
    for (size_t i = 0; i < n; ++i) {
        const double y = planes.y.values[i];
        const double u = planes.u.values[i] - 128.0;
        const double v = planes.v.values[i] - 128.0;
        for (int c = 0; c < 3; ++c) {
            out.samples[i * 3 + c] = clamp_round_u8(inv.m[c][0] * y + inv.m[c][1] * u + inv.m[c][2] * v);
        }
    }
    return out;
}

namespace {

struct AxisSample {
    int lo, hi;
    double frac;
};

std::vector<AxisSample> axis_samples(int in_n, int out_n) {
    std::vector<AxisSample> s(out_n);
    const double scale = static_cast<double>(in_n) / out_n;
    for (int i = 0; i < out_n; ++i) {
        double src = (i + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
        const int lo = static_cast<int>(std::floor(src));
        s[i] = {lo, std::min(lo + 1, in_n - 1), src - lo};
    }
    return s;
}

}  // namespace

RasterImage resize_bilinear(const RasterImage& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw ShapeError("resize target must be at least 1x1");
    if (out_h == img.height && out_w == img.width) return img;
    const auto ys = axis_samples(img.height, out_h);
    const auto xs = axis_samples(img.width, out_w);
    RasterImage out;
    out.height = out_h;
    out.width = out_w;
    out.space = img.space;
    out.samples.resize(static_cast<size_t>(out_h) * out_w * 3);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double top = (1.0 - xs[x].frac) * img.at(ys[y].lo, xs[x].lo, c) +
                                   xs[x].frac * img.at(ys[y].lo, xs[x].hi, c);
                const double bot = (1.0 - xs[x].frac) * img.at(ys[y].hi, xs[x].lo, c) +
                                   xs[x].frac * img.at(ys[y].hi, xs[x].hi, c);
                out.at(y, x, c) = clamp_round_u8((1.0 - ys[y].frac) * top + ys[y].frac * bot);
            }
        }
    }
    return out;
}

Plane resize_bilinear(const Plane& plane, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw ShapeError("resize target must be at least 1x1");
    if (out_h == plane.height && out_w == plane.width) return plane;
    const auto ys = axis_samples(plane.height, out_h);
    const auto xs = axis_samples(plane.width, out_w);
    Plane out(out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            const double top = (1.0 - xs[x].frac) * plane.at(ys[y].lo, xs[x].lo) +
                               xs[x].frac * plane.at(ys[y].lo, xs[x].hi);
            const double bot = (1.0 - xs[x].frac) * plane.at(ys[y].hi, xs[x].lo) +
                               xs[x].frac * plane.at(ys[y].hi, xs[x].hi);
            out.at(y, x) = static_cast<float>((1.0 - ys[y].frac) * top + ys[y].frac * bot);
        }
    }
    return out;
}

Plane channel_plane(const RasterImage& img, int c) {
    Plane p(img.height, img.width);
    const size_t n = img.pixel_count();
    for (size_t i = 0; i < n; ++i) p.values[i] = img.samples[i * 3 + c];
    return p;
}

void set_channel(RasterImage& img, int c, const Plane& plane) {
    if (plane.height != img.height || plane.width != img.width) {
        throw ShapeError("set_channel: plane dimensions disagree with image");
    }
    const size_t n = img.pixel_count();
    for (size_t i = 0; i < n; ++i) img.samples[i * 3 + c] = clamp_round_u8(plane.values[i]);
}

}  // namespace fsw
