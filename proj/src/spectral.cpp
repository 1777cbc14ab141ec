#include "fsw/spectral.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "fsw/errors.hpp"

namespace fsw {

std::shared_ptr<const std::vector<double>> dct_matrix(int n) {
    static std::mutex mu;
    static std::map<int, std::shared_ptr<const std::vector<double>>> cache;
    std::lock_guard lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    auto m = std::make_shared<std::vector<double>>(static_cast<size_t>(n) * n);
    const double s0 = std::sqrt(1.0 / n);
    const double sk = std::sqrt(2.0 / n);
    for (int k = 0; k < n; ++k) {
        const double scale = k == 0 ? s0 : sk;
        for (int i = 0; i < n; ++i) {
            (*m)[static_cast<size_t>(k) * n + i] =
                scale * std::cos(std::numbers::pi * (2.0 * i + 1.0) * k / (2.0 * n));
        }
    }
    cache[n] = m;
    return m;
}

namespace {

// out[u][v] = sum_h C[u][h] * in[h][v]  (apply transform matrix on the left)
void left_apply(const std::vector<double>& c, int n, const std::vector<double>& in, int cols,
                std::vector<double>& out, bool transpose_c) {
    out.assign(static_cast<size_t>(n) * cols, 0.0);
    for (int u = 0; u < n; ++u) {
        double* dst = &out[static_cast<size_t>(u) * cols];
        for (int h = 0; h < n; ++h) {
            const double w = transpose_c ? c[static_cast<size_t>(h) * n + u] : c[static_cast<size_t>(u) * n + h];
            const double* src = &in[static_cast<size_t>(h) * cols];
            for (int v = 0; v < cols; ++v) dst[v] += w * src[v];
        }
    }
}

// out[h][v] = sum_w in[h][w] * C[v][w]  (apply transform matrix on the right, transposed)
void right_apply(const std::vector<double>& c, int n, const std::vector<double>& in, int rows,
                 std::vector<double>& out, bool transpose_c) {
    out.assign(static_cast<size_t>(rows) * n, 0.0);
    for (int h = 0; h < rows; ++h) {
        const double* src = &in[static_cast<size_t>(h) * n];
        double* dst = &out[static_cast<size_t>(h) * n];
        for (int w = 0; w < n; ++w) {
            const double x = src[w];
            if (x == 0.0) continue;
            if (transpose_c) {
                for (int v = 0; v < n; ++v) dst[v] += x * c[static_cast<size_t>(w) * n + v];
            } else {
                for (int v = 0; v < n; ++v) dst[v] += x * c[static_cast<size_t>(v) * n + w];
            }
        }
    }
}

}  // namespace

void dct2_raw(const float* in, float* out, int height, int width) {
    const auto ch = dct_matrix(height);
    const auto cw = dct_matrix(width);
    std::vector<double> x(in, in + static_cast<size_t>(height) * width);
    std::vector<double> tmp, res;
    right_apply(*cw, width, x, height, tmp, /*transpose_c=*/false);  // X * Cw^T
    left_apply(*ch, height, tmp, width, res, /*transpose_c=*/false);  // Ch * (X * Cw^T)
    for (size_t i = 0; i < res.size(); ++i) out[i] = static_cast<float>(res[i]);
}

void idct2_raw(const float* in, float* out, int height, int width) {
    const auto ch = dct_matrix(height);
    const auto cw = dct_matrix(width);
    std::vector<double> s(in, in + static_cast<size_t>(height) * width);
    std::vector<double> tmp, res;
    left_apply(*ch, height, s, width, tmp, /*transpose_c=*/true);   // Ch^T * S
    right_apply(*cw, width, tmp, height, res, /*transpose_c=*/true);  // (Ch^T * S) * Cw
    for (size_t i = 0; i < res.size(); ++i) out[i] = static_cast<float>(res[i]);
}

Spectrum2D dct2(const Plane& p) {
    if (p.height < 1 || p.width < 1) throw ShapeError("dct2: empty plane");
    Spectrum2D s(p.height, p.width);
    dct2_raw(p.values.data(), s.coeffs.data(), p.height, p.width);
    return s;
}

Plane idct2(const Spectrum2D& s) {
    if (s.height < 1 || s.width < 1) throw ShapeError("idct2: empty spectrum");
    Plane p(s.height, s.width);
    idct2_raw(s.coeffs.data(), p.values.data(), s.height, s.width);
    return p;
}

Plane dct_basis(int u, int v, int basis_h, int basis_w) {
    if (u < 0 || u >= basis_h || v < 0 || v >= basis_w) {
        throw ShapeError("dct_basis: frequency index out of range");
    }
    Plane b(basis_h, basis_w);
    for (int h = 0; h < basis_h; ++h) {
        const double ch = std::cos(std::numbers::pi * h * (u + 0.5) / basis_h);
        for (int w = 0; w < basis_w; ++w) {
            const double cw = std::cos(std::numbers::pi * w * (v + 0.5) / basis_w);
            b.at(h, w) = static_cast<float>(ch * cw);
        }
    }
    return b;
}

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

Plane pad_even(const Plane& p) {
    const int h = p.height + (p.height & 1);
    const int w = p.width + (p.width & 1);
    if (h == p.height && w == p.width) return p;
    Plane out(h, w);
    for (int y = 0; y < h; ++y) {
        const int sy = std::min(y, p.height - 1);
        for (int x = 0; x < w; ++x) out.at(y, x) = p.at(sy, std::min(x, p.width - 1));
    }
    return out;
}

DwtLevel haar_level(const Plane& input) {
    DwtLevel lvl;
    lvl.in_h = input.height;
    lvl.in_w = input.width;
    const Plane p = pad_even(input);
    const int h2 = p.height / 2, w2 = p.width / 2;
    // rows: low/high along width
    Plane lo(p.height, w2), hi(p.height, w2);
    for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < w2; ++x) {
            const double a = p.at(y, 2 * x), b = p.at(y, 2 * x + 1);
            lo.at(y, x) = static_cast<float>((a + b) * kInvSqrt2);
            hi.at(y, x) = static_cast<float>((a - b) * kInvSqrt2);
        }
    }
    // columns: low/high along height
    lvl.ll = Plane(h2, w2);
    lvl.hl = Plane(h2, w2);
    lvl.lh = Plane(h2, w2);
    lvl.hh = Plane(h2, w2);
    for (int y = 0; y < h2; ++y) {
        for (int x = 0; x < w2; ++x) {
            const double la = lo.at(2 * y, x), lb = lo.at(2 * y + 1, x);
            const double ha = hi.at(2 * y, x), hb = hi.at(2 * y + 1, x);
            lvl.ll.at(y, x) = static_cast<float>((la + lb) * kInvSqrt2);
            lvl.lh.at(y, x) = static_cast<float>((la - lb) * kInvSqrt2);
            lvl.hl.at(y, x) = static_cast<float>((ha + hb) * kInvSqrt2);
            lvl.hh.at(y, x) = static_cast<float>((ha - hb) * kInvSqrt2);
        }
    }
    return lvl;
}

Plane haar_level_inverse(const DwtLevel& lvl, const Plane& ll) {
    const int h2 = ll.height, w2 = ll.width;
    Plane lo(h2 * 2, w2), hi(h2 * 2, w2);
    for (int y = 0; y < h2; ++y) {
        for (int x = 0; x < w2; ++x) {
            const double l = ll.at(y, x), v = lvl.lh.at(y, x);
            const double h = lvl.hl.at(y, x), d = lvl.hh.at(y, x);
            lo.at(2 * y, x) = static_cast<float>((l + v) * kInvSqrt2);
            lo.at(2 * y + 1, x) = static_cast<float>((l - v) * kInvSqrt2);
            hi.at(2 * y, x) = static_cast<float>((h + d) * kInvSqrt2);
            hi.at(2 * y + 1, x) = static_cast<float>((h - d) * kInvSqrt2);
        }
    }
    Plane padded(h2 * 2, w2 * 2);
    for (int y = 0; y < h2 * 2; ++y) {
        for (int x = 0; x < w2; ++x) {
            const double l = lo.at(y, x), h = hi.at(y, x);
            padded.at(y, 2 * x) = static_cast<float>((l + h) * kInvSqrt2);
            padded.at(y, 2 * x + 1) = static_cast<float>((l - h) * kInvSqrt2);
        }
    }
    if (padded.height == lvl.in_h && padded.width == lvl.in_w) return padded;
    Plane out(lvl.in_h, lvl.in_w);
    for (int y = 0; y < lvl.in_h; ++y) {
        for (int x = 0; x < lvl.in_w; ++x) out.at(y, x) = padded.at(y, x);
    }
    return out;
}

}  // namespace

DwtPyramid haar_dwt2(const Plane& p, int levels) {
    if (levels < 1) throw ShapeError("haar_dwt2: levels must be >= 1");
    if (p.height < 1 || p.width < 1) throw ShapeError("haar_dwt2: empty plane");
    DwtPyramid pyr;
    pyr.original_height = p.height;
    pyr.original_width = p.width;
    Plane current = p;
    for (int l = 0; l < levels; ++l) {
        DwtLevel lvl = haar_level(current);
        current = lvl.ll;
        pyr.levels.push_back(std::move(lvl));
    }
    return pyr;
}

Plane haar_idwt2(const DwtPyramid& pyr) {
    if (pyr.levels.empty()) throw ShapeError("haar_idwt2: empty pyramid");
    Plane current = pyr.deepest_ll();
    for (int l = static_cast<int>(pyr.levels.size()) - 1; l >= 0; --l) {
        current = haar_level_inverse(pyr.levels[l], current);
    }
    return current;
}

std::vector<std::pair<int, int>> zigzag_order(int height, int width) {
    if (height < 1 || width < 1) throw ShapeError("zigzag_order: empty grid");
    std::vector<std::pair<int, int>> order;
    order.reserve(static_cast<size_t>(height) * width);
    for (int s = 0; s <= height + width - 2; ++s) {
        const int u_min = std::max(0, s - width + 1);
        const int u_max = std::min(s, height - 1);
        if (s % 2 == 1) {
            for (int u = u_min; u <= u_max; ++u) order.emplace_back(u, s - u);
        } else {
            for (int u = u_max; u >= u_min; --u) order.emplace_back(u, s - u);
        }
    }
    return order;
}

}  // namespace fsw
