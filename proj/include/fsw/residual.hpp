#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fsw/image.hpp"

namespace fsw {

// Per-pixel max over channels of |a - b|; zero wherever the images agree.
struct ResidualMap {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> values;

    uint8_t at(int y, int x) const { return values[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return values.size(); }
};

struct SparsityReport {
    int64_t l0 = 0;           // nonzero residual pixels
    double density = 0.0;     // l0 / (H*W)
    int max_amp = 0;
    double mean_amp_nonzero = 0.0;
};

struct BitPlane {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> bits;  // 0 or 1

    int64_t popcount() const;
};

// Symmetric in its arguments. Throws ShapeError on dimension or space mismatch.
ResidualMap absolute_residual(const RasterImage& a, const RasterImage& b);

// 1 where the residual is nonzero; any minute perturbation counts.
BitPlane binarize_extremum(const ResidualMap& r);

SparsityReport sparsity_stats(const ResidualMap& r);

// 8-bit binary PGM (P5), min-max normalized to [0,255]; constant input maps
// to all-zero output.
void save_heatmap_pgm(const Plane& plane, const std::string& path);
void save_heatmap_pgm(const ResidualMap& map, const std::string& path);
void save_heatmap_pgm(const BitPlane& plane, const std::string& path);

// Minimal P5 reader used by tests and inspection tooling.
Plane load_pgm(const std::string& path);

// One CSV row of the report fields: l0,density,max_amp,mean_amp_nonzero
std::string sparsity_csv_row(const SparsityReport& r);

// Imperceptibility proxy over all samples of an image pair, in dB.
// Identical images yield +infinity.
double psnr(const RasterImage& a, const RasterImage& b);

}  // namespace fsw
