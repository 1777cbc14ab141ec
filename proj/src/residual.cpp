#include "fsw/residual.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "fsw/errors.hpp"

namespace fsw {

int64_t BitPlane::popcount() const {
    int64_t n = 0;
    for (uint8_t b : bits) n += b;
    return n;
}

ResidualMap absolute_residual(const RasterImage& a, const RasterImage& b) {
    if (a.height != b.height || a.width != b.width) {
        throw ShapeError("absolute_residual: image dimensions disagree");
    }
    if (a.space != b.space) throw ShapeError("absolute_residual: color spaces disagree");
    ResidualMap r;
    r.height = a.height;
    r.width = a.width;
    r.values.resize(a.pixel_count());
    for (size_t i = 0; i < r.values.size(); ++i) {
        int m = 0;
        for (int c = 0; c < 3; ++c) {
            m = std::max(m, std::abs(int(a.samples[i * 3 + c]) - int(b.samples[i * 3 + c])));
        }
        r.values[i] = static_cast<uint8_t>(m);
    }
    return r;
}

BitPlane binarize_extremum(const ResidualMap& r) {
    BitPlane p;
    p.height = r.height;
    p.width = r.width;
    p.bits.resize(r.values.size());
    for (size_t i = 0; i < r.values.size(); ++i) p.bits[i] = r.values[i] > 0 ? 1 : 0;
    return p;
}

SparsityReport sparsity_stats(const ResidualMap& r) {
    SparsityReport rep;
    double sum = 0.0;
    for (uint8_t v : r.values) {
        if (v > 0) {
            ++rep.l0;
            sum += v;
        }
        rep.max_amp = std::max(rep.max_amp, int(v));
    }
    const size_t n = r.values.size();
    rep.density = n > 0 ? static_cast<double>(rep.l0) / static_cast<double>(n) : 0.0;
    rep.mean_amp_nonzero = rep.l0 > 0 ? sum / static_cast<double>(rep.l0) : 0.0;
    return rep;
}

namespace {

void write_pgm(const std::vector<double>& values, int height, int width, const std::string& path) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<uint8_t> bytes(values.size(), 0);
    if (hi > lo) {
        for (size_t i = 0; i < values.size(); ++i) {
            bytes[i] = static_cast<uint8_t>(std::lround((values[i] - lo) / (hi - lo) * 255.0));
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << "P5\n" << width << " " << height << "\n255\n";
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write to " + path);
}

}  // namespace

void save_heatmap_pgm(const Plane& plane, const std::string& path) {
    write_pgm(std::vector<double>(plane.values.begin(), plane.values.end()), plane.height, plane.width, path);
}

void save_heatmap_pgm(const ResidualMap& map, const std::string& path) {
    write_pgm(std::vector<double>(map.values.begin(), map.values.end()), map.height, map.width, path);
}

void save_heatmap_pgm(const BitPlane& plane, const std::string& path) {
    write_pgm(std::vector<double>(plane.bits.begin(), plane.bits.end()), plane.height, plane.width, path);
}

Plane load_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    f >> magic >> w >> h >> maxval;
    if (magic != "P5" || maxval != 255 || w < 1 || h < 1) throw FormatError("not an 8-bit P5 PGM: " + path);
    f.get();  // single whitespace after header
    std::vector<uint8_t> bytes(static_cast<size_t>(w) * h);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("truncated PGM: " + path);
    Plane p(h, w);
    for (size_t i = 0; i < bytes.size(); ++i) p.values[i] = bytes[i];
    return p;
}

std::string sparsity_csv_row(const SparsityReport& r) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%lld,%.9g,%d,%.9g", static_cast<long long>(r.l0), r.density,
                  r.max_amp, r.mean_amp_nonzero);
    return buf;
}

double psnr(const RasterImage& a, const RasterImage& b) {
    if (a.height != b.height || a.width != b.width) throw ShapeError("psnr: image dimensions disagree");
    double se = 0.0;
    for (size_t i = 0; i < a.samples.size(); ++i) {
        const double d = double(a.samples[i]) - double(b.samples[i]);
        se += d * d;
    }
    if (se == 0.0) return std::numeric_limits<double>::infinity();
    const double mse = se / static_cast<double>(a.samples.size());
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace fsw
