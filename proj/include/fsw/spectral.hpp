#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "fsw/image.hpp"

namespace fsw {

// Orthonormal 2D DCT-II coefficients, row-major. Parseval holds: the sum of
// squared coefficients equals the sum of squared spatial values.
struct Spectrum2D {
    int height = 0;
    int width = 0;
    std::vector<float> coeffs;

    Spectrum2D() = default;
    Spectrum2D(int h, int w) : height(h), width(w), coeffs(static_cast<size_t>(h) * w, 0.0f) {}

    float at(int u, int v) const { return coeffs[static_cast<size_t>(u) * width + v]; }
    float& at(int u, int v) { return coeffs[static_cast<size_t>(u) * width + v]; }
};

// Two-level (by default) orthonormal Haar decomposition. Odd dimensions are
// edge-replicated up to the next multiple of 2^levels before analysis; the
// recorded original size drives de-padding on synthesis.
struct DwtLevel {
    Plane ll, hl, lh, hh;
    int in_h = 0;  // dimensions of this level's input, before padding
    int in_w = 0;
};

struct DwtPyramid {
    int original_height = 0;
    int original_width = 0;
    std::vector<DwtLevel> levels;  // levels[0] is the finest

    const Plane& deepest_ll() const { return levels.back().ll; }
    Plane& deepest_ll() { return levels.back().ll; }
};

// Separable orthonormal DCT-II (scale sqrt(1/N) for k=0, sqrt(2/N) otherwise,
// per axis). Internals run in double; results are stored as float.
Spectrum2D dct2(const Plane& p);
Plane idct2(const Spectrum2D& s);

// Raw cosine product basis evaluated on an H_b x W_b grid:
//   B[h,w] = cos(pi*h*(u+0.5)/H_b) * cos(pi*w*(v+0.5)/W_b)
// Note the (u+0.5) factor rides with the spatial index h; this is the exact
// form the multi-spectral attention branches use, distinct from the
// orthonormal DCT-II above.
Plane dct_basis(int u, int v, int basis_h, int basis_w);

DwtPyramid haar_dwt2(const Plane& p, int levels);
Plane haar_idwt2(const DwtPyramid& pyr);

// Standard JPEG zig-zag traversal of an H x W index grid, starting at (0,0).
// Covers every (u,v) exactly once.
std::vector<std::pair<int, int>> zigzag_order(int height, int width);

// Shared cosine-matrix cache (orthonormal DCT-II matrix for size N, row-major
// C[k*N+n]). Read-only after construction, safe for concurrent readers.
std::shared_ptr<const std::vector<double>> dct_matrix(int n);

// Buffer-level kernels shared with the tensor layer. in/out must not alias.
void dct2_raw(const float* in, float* out, int height, int width);
void idct2_raw(const float* in, float* out, int height, int width);

}  // namespace fsw
