#include <algorithm>
#include <cmath>
#include <limits>

#include "fsw/autodiff.hpp"
#include "fsw/errors.hpp"
#include "fsw/parallel.hpp"
#include "fsw/spectral.hpp"

namespace fsw::ad {

namespace detail {

struct OpAccess {
    static NodePtr node(const Tensor& t) { return t.node_; }
    static Tensor make(NodePtr n) { return Tensor(std::move(n)); }
};

}  // namespace detail

namespace {

using detail::Node;
using detail::NodePtr;
using detail::OpAccess;

Tensor make_output(std::vector<int> shape, std::vector<float> data, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    node->leaf = false;
    return OpAccess::make(std::move(node));
}

void maybe_record(const Tensor& out, std::function<void()> backward_fn) {
    if (Tape* t = Tape::current(); t != nullptr && out.requires_grad()) {
        t->record(std::move(backward_fn), out);
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) throw ShapeError(std::string(op) + ": shapes disagree");
}

// c[m,n] += a[m,k] * b[k,n]
void sgemm_acc(const float* a, const float* b, float* c, int m, int k, int n) {
    parallel_for(m, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const float* arow = a + i * k;
            float* crow = c + i * n;
            for (int kk = 0; kk < k; ++kk) {
                const float av = arow[kk];
                const float* brow = b + static_cast<int64_t>(kk) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    });
}

// c[m,n] += a[m,p] * b[n,p]^T
void sgemm_abt_acc(const float* a, const float* b, float* c, int m, int p, int n) {
    parallel_for(m, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const float* arow = a + i * p;
            float* crow = c + i * n;
            for (int j = 0; j < n; ++j) {
                const float* brow = b + static_cast<int64_t>(j) * p;
                // eight independent lanes; fixed summation order
                float lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
                int kk = 0;
                for (; kk + 8 <= p; kk += 8) {
                    for (int u = 0; u < 8; ++u) lane[u] += arow[kk + u] * brow[kk + u];
                }
                float acc = ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
                            ((lane[4] + lane[5]) + (lane[6] + lane[7]));
                for (; kk < p; ++kk) acc += arow[kk] * brow[kk];
                crow[j] += acc;
            }
        }
    });
}

// c[k,n] += a[m,k]^T * b[m,n]
void sgemm_atb_acc(const float* a, const float* b, float* c, int m, int k, int n) {
    parallel_for(k, [&](int64_t lo, int64_t hi) {
        for (int64_t kk = lo; kk < hi; ++kk) {
            float* crow = c + kk * n;
            for (int i = 0; i < m; ++i) {
                const float av = a[static_cast<int64_t>(i) * k + kk];
                const float* brow = b + static_cast<int64_t>(i) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    });
}

struct ConvView {
    int batch, channels, height, width;
    bool batched;  // false when the input was rank 3
};

ConvView conv_view(const Tensor& x, const char* op) {
    if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3), true};
    if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2), false};
    throw ShapeError(std::string(op) + ": expected a [B,C,H,W] or [C,H,W] tensor");
}

// cols[(c*9 + ky*3 + kx), y*W + x] = x[c, y+ky-1, x+kx-1] (zero padded)
void im2col_3x3(const float* x, int channels, int h, int w, float* cols) {
    const int64_t hw = static_cast<int64_t>(h) * w;
    for (int c = 0; c < channels; ++c) {
        const float* plane = x + static_cast<int64_t>(c) * hw;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                float* row = cols + (static_cast<int64_t>(c) * 9 + ky * 3 + kx) * hw;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - 1;
                    float* dst = row + static_cast<int64_t>(y) * w;
                    if (sy < 0 || sy >= h) {
                        std::fill(dst, dst + w, 0.0f);
                        continue;
                    }
                    const float* src = plane + static_cast<int64_t>(sy) * w;
                    const int dx = kx - 1;
                    for (int xx = 0; xx < w; ++xx) {
                        const int sx = xx + dx;
                        dst[xx] = (sx >= 0 && sx < w) ? src[sx] : 0.0f;
                    }
                }
            }
        }
    }
}

// rows[y*W + x, c*9 + ky*3 + kx] = x[c, y+ky-1, x+kx-1]; the transposed patch
// matrix, so the weight gradient is a plain row-major GEMM
void im2row_3x3(const float* x, int channels, int h, int w, float* rows) {
    const int64_t hw = static_cast<int64_t>(h) * w;
    const int width9 = channels * 9;
    for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
            float* dst = rows + (static_cast<int64_t>(y) * w + xx) * width9;
            for (int c = 0; c < channels; ++c) {
                const float* plane = x + static_cast<int64_t>(c) * hw;
                for (int ky = 0; ky < 3; ++ky) {
                    const int sy = y + ky - 1;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int sx = xx + kx - 1;
                        dst[c * 9 + ky * 3 + kx] =
                            (sy >= 0 && sy < h && sx >= 0 && sx < w)
                                ? plane[static_cast<int64_t>(sy) * w + sx]
                                : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im_3x3_acc(const float* cols, int channels, int h, int w, float* x) {
    const int64_t hw = static_cast<int64_t>(h) * w;
    for (int c = 0; c < channels; ++c) {
        float* plane = x + static_cast<int64_t>(c) * hw;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const float* row = cols + (static_cast<int64_t>(c) * 9 + ky * 3 + kx) * hw;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= h) continue;
                    float* dst = plane + static_cast<int64_t>(sy) * w;
                    const float* src = row + static_cast<int64_t>(y) * w;
                    const int dx = kx - 1;
                    for (int xx = 0; xx < w; ++xx) {
                        const int sx = xx + dx;
                        if (sx >= 0 && sx < w) dst[sx] += src[xx];
                    }
                }
            }
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<float> out(a.data().begin(), a.data().end());
    for (size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
    Tensor res = make_output(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
    maybe_record(res, [an = OpAccess::node(a), bn = OpAccess::node(b), on = OpAccess::node(res)] {
        for (NodePtr n : {an, bn}) {
            if (!n->requires_grad) continue;
            n->ensure_grad();
            for (size_t i = 0; i < n->grad.size(); ++i) n->grad[i] += on->grad[i];
        }
    });
    return res;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<float> out(a.data().begin(), a.data().end());
    for (size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
    Tensor res = make_output(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
    maybe_record(res, [an = OpAccess::node(a), bn = OpAccess::node(b), on = OpAccess::node(res)] {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += on->grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < bn->grad.size(); ++i) bn->grad[i] -= on->grad[i];
        }
    });
    return res;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<float> out(a.data().begin(), a.data().end());
    for (size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
    Tensor res = make_output(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
    maybe_record(res, [an = OpAccess::node(a), bn = OpAccess::node(b), on = OpAccess::node(res)] {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += on->grad[i] * bn->data[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < bn->grad.size(); ++i) bn->grad[i] += on->grad[i] * an->data[i];
        }
    });
    return res;
}

Tensor maximum(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "maximum");
    std::vector<float> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(a.data()[i], b.data()[i]);
    Tensor res = make_output(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
    maybe_record(res, [an = OpAccess::node(a), bn = OpAccess::node(b), on = OpAccess::node(res)] {
        if (an->requires_grad) an->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        for (size_t i = 0; i < on->grad.size(); ++i) {
            Node* n = an->data[i] >= bn->data[i] ? an.get() : bn.get();
            if (n->requires_grad) n->grad[i] += on->grad[i];
        }
    });
    return res;
}

Tensor scale(const Tensor& a, double s) {
    std::vector<float> out(a.data().begin(), a.data().end());
    for (auto& v : out) v = static_cast<float>(v * s);
    Tensor res = make_output(a.shape(), std::move(out), a.requires_grad());
    maybe_record(res, [an = OpAccess::node(a), on = OpAccess::node(res), s] {
        an->ensure_grad();
        for (size_t i = 0; i < an->grad.size(); ++i) {
            an->grad[i] += static_cast<float>(on->grad[i] * s);
        }
    });
    return res;
}

Tensor neg(const Tensor& a) {
    return scale(a, -1.0);
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (float v : a.data()) acc += v;
    Tensor res = make_output({1}, {static_cast<float>(acc)}, a.requires_grad());
    maybe_record(res, [an = OpAccess::node(a), on = OpAccess::node(res)] {
        an->ensure_grad();
        const float g = on->grad[0];
        for (auto& v : an->grad) v += g;
    });
    return res;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: need [m,k] x [k,n]");
    }
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<float> out(static_cast<size_t>(m) * n, 0.0f);
    sgemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
    Tensor res = make_output({m, n}, std::move(out), a.requires_grad() || b.requires_grad());
    maybe_record(res, [an = OpAccess::node(a), bn = OpAccess::node(b), on = OpAccess::node(res), m, k, n] {
        if (an->requires_grad) {
            an->ensure_grad();
            sgemm_abt_acc(on->grad.data(), bn->data.data(), an->grad.data(), m, n, k);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            sgemm_atb_acc(an->data.data(), on->grad.data(), bn->grad.data(), m, k, n);
        }
    });
    return res;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0)) {
        throw ShapeError("linear: need x[m,k] and w[k,n]");
    }
    const int m = x.dim(0), k = x.dim(1), n = w.dim(1);
    if (bias.numel() != n) throw ShapeError("linear: bias length must equal output width");
    std::vector<float> out(static_cast<size_t>(m) * n);
    for (int i = 0; i < m; ++i) {
        std::copy(bias.data().begin(), bias.data().end(), out.begin() + static_cast<size_t>(i) * n);
    }
    sgemm_acc(x.data().data(), w.data().data(), out.data(), m, k, n);
    Tensor res = make_output({m, n}, std::move(out),
                             x.requires_grad() || w.requires_grad() || bias.requires_grad());
    maybe_record(res, [xn = OpAccess::node(x), wn = OpAccess::node(w), bn = OpAccess::node(bias),
                       on = OpAccess::node(res), m, k, n] {
        if (xn->requires_grad) {
            xn->ensure_grad();
            sgemm_abt_acc(on->grad.data(), wn->data.data(), xn->grad.data(), m, n, k);
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            sgemm_atb_acc(xn->data.data(), on->grad.data(), wn->grad.data(), m, k, n);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int i = 0; i < m; ++i) {
                const float* g = on->grad.data() + static_cast<size_t>(i) * n;
                for (int j = 0; j < n; ++j) bn->grad[j] += g[j];
            }
        }
    });
    return res;
}

Tensor conv2d_3x3(const Tensor& x, const Tensor& w, const Tensor& bias) {
    const ConvView v = conv_view(x, "conv2d_3x3");
    if (w.rank() != 4 || w.dim(2) != 3 || w.dim(3) != 3) {
        throw ShapeError("conv2d_3x3: weights must be [Cout,Cin,3,3]");
    }
    const int c_out = w.dim(0), c_in = w.dim(1);
    if (c_in != v.channels) throw ShapeError("conv2d_3x3: input channels disagree with weights");
    if (bias.numel() != c_out) throw ShapeError("conv2d_3x3: bias length must equal Cout");

    const int64_t hw = static_cast<int64_t>(v.height) * v.width;
    const int64_t in_plane = static_cast<int64_t>(v.channels) * hw;
    const int64_t out_plane = static_cast<int64_t>(c_out) * hw;
    std::vector<float> out(static_cast<size_t>(v.batch) * out_plane);

    parallel_for(v.batch, [&](int64_t lo, int64_t hi) {
        std::vector<float> cols(static_cast<size_t>(c_in) * 9 * hw);
        for (int64_t b = lo; b < hi; ++b) {
            im2col_3x3(x.data().data() + b * in_plane, c_in, v.height, v.width, cols.data());
            float* dst = out.data() + b * out_plane;
            for (int co = 0; co < c_out; ++co) {
                std::fill(dst + co * hw, dst + (co + 1) * hw, bias.data()[co]);
            }
            sgemm_acc(w.data().data(), cols.data(), dst, c_out, c_in * 9, static_cast<int>(hw));
        }
    });

    std::vector<int> out_shape = v.batched ? std::vector<int>{v.batch, c_out, v.height, v.width}
                                           : std::vector<int>{c_out, v.height, v.width};
    Tensor res = make_output(std::move(out_shape), std::move(out),
                             x.requires_grad() || w.requires_grad() || bias.requires_grad());
    maybe_record(res, [xn = OpAccess::node(x), wn = OpAccess::node(w), bn = OpAccess::node(bias),
                       on = OpAccess::node(res), v, c_out, c_in, hw, in_plane, out_plane] {
        const int64_t wsize = static_cast<int64_t>(c_out) * c_in * 9;
        std::vector<float> gw_scratch;
        std::vector<float> gb_scratch;
        if (wn->requires_grad) gw_scratch.assign(static_cast<size_t>(v.batch) * wsize, 0.0f);
        if (bn->requires_grad) gb_scratch.assign(static_cast<size_t>(v.batch) * c_out, 0.0f);
        if (xn->requires_grad) xn->ensure_grad();

        parallel_for(v.batch, [&](int64_t lo, int64_t hi) {
            std::vector<float> rows;
            std::vector<float> gcols;
            for (int64_t b = lo; b < hi; ++b) {
                const float* gout = on->grad.data() + b * out_plane;
                if (wn->requires_grad) {
                    rows.resize(static_cast<size_t>(c_in) * 9 * hw);
                    im2row_3x3(xn->data.data() + b * in_plane, c_in, v.height, v.width, rows.data());
                    sgemm_acc(gout, rows.data(), gw_scratch.data() + b * wsize, c_out,
                              static_cast<int>(hw), c_in * 9);
                }
                if (bn->requires_grad) {
                    float* gb = gb_scratch.data() + b * c_out;
                    for (int co = 0; co < c_out; ++co) {
                        float acc = 0.0f;
                        const float* row = gout + static_cast<int64_t>(co) * hw;
                        for (int64_t i = 0; i < hw; ++i) acc += row[i];
                        gb[co] = acc;
                    }
                }
                if (xn->requires_grad) {
                    gcols.assign(static_cast<size_t>(c_in) * 9 * hw, 0.0f);
                    sgemm_atb_acc(wn->data.data(), gout, gcols.data(), c_out, c_in * 9,
                                  static_cast<int>(hw));
                    col2im_3x3_acc(gcols.data(), c_in, v.height, v.width,
                                   xn->grad.data() + b * in_plane);
                }
            }
        });

        // deterministic reduction in batch order, independent of thread count
        if (wn->requires_grad) {
            wn->ensure_grad();
            for (int64_t b = 0; b < v.batch; ++b) {
                const float* src = gw_scratch.data() + b * wsize;
                for (int64_t i = 0; i < wsize; ++i) wn->grad[i] += src[i];
            }
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t b = 0; b < v.batch; ++b) {
                const float* src = gb_scratch.data() + b * c_out;
                for (int i = 0; i < c_out; ++i) bn->grad[i] += src[i];
            }
        }
    });
    return res;
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

namespace {

Tensor maxpool_common(const Tensor& x, int out_h, int out_w,
                      const std::function<void(int, int, int&, int&)>& h_bounds,
                      const std::function<void(int, int, int&, int&)>& w_bounds) {
    const ConvView v = conv_view(x, "maxpool");
    const int64_t hw = static_cast<int64_t>(v.height) * v.width;
    const int64_t planes = static_cast<int64_t>(v.batch) * v.channels;
    const int64_t ohw = static_cast<int64_t>(out_h) * out_w;
    std::vector<float> out(static_cast<size_t>(planes) * ohw);
    auto argmax = std::make_shared<std::vector<int32_t>>(out.size());

    parallel_for(planes, [&](int64_t lo, int64_t hi) {
        for (int64_t p = lo; p < hi; ++p) {
            const float* src = x.data().data() + p * hw;
            float* dst = out.data() + p * ohw;
            int32_t* amx = argmax->data() + p * ohw;
            for (int oy = 0; oy < out_h; ++oy) {
                int y0, y1;
                h_bounds(oy, v.height, y0, y1);
                for (int ox = 0; ox < out_w; ++ox) {
                    int x0, x1;
                    w_bounds(ox, v.width, x0, x1);
                    float best = -std::numeric_limits<float>::infinity();
                    int32_t best_idx = -1;
                    for (int yy = y0; yy < y1; ++yy) {
                        for (int xx = x0; xx < x1; ++xx) {
                            const float val = src[static_cast<int64_t>(yy) * v.width + xx];
                            if (val > best) {
                                best = val;
                                best_idx = static_cast<int32_t>(yy * v.width + xx);
                            }
                        }
                    }
                    dst[oy * out_w + ox] = best;
                    amx[oy * out_w + ox] = best_idx;
                }
            }
        }
    });

    std::vector<int> out_shape = v.batched ? std::vector<int>{v.batch, v.channels, out_h, out_w}
                                           : std::vector<int>{v.channels, out_h, out_w};
    Tensor res = make_output(std::move(out_shape), std::move(out), x.requires_grad());
    maybe_record(res, [xn = OpAccess::node(x), on = OpAccess::node(res), argmax, planes, hw, ohw] {
        xn->ensure_grad();
        parallel_for(planes, [&](int64_t lo, int64_t hi) {
            for (int64_t p = lo; p < hi; ++p) {
                float* gx = xn->grad.data() + p * hw;
                const float* go = on->grad.data() + p * ohw;
                const int32_t* amx = argmax->data() + p * ohw;
                for (int64_t i = 0; i < ohw; ++i) {
                    if (amx[i] >= 0) gx[amx[i]] += go[i];
                }
            }
        });
    });
    return res;
}

}  // namespace

Tensor maxpool2d(const Tensor& x, int window, int stride, int pad) {
    if (window < 1 || stride < 1 || pad < 0 || pad >= window) {
        throw ShapeError("maxpool2d: invalid window/stride/pad");
    }
    const ConvView v = conv_view(x, "maxpool2d");
    const int out_h = (v.height + 2 * pad - window) / stride + 1;
    const int out_w = (v.width + 2 * pad - window) / stride + 1;
    if (out_h < 1 || out_w < 1) throw ShapeError("maxpool2d: window larger than padded input");
    auto bounds = [window, stride, pad](int o, int n, int& lo, int& hi) {
        lo = std::max(0, o * stride - pad);
        hi = std::min(n, o * stride - pad + window);
    };
    return maxpool_common(x, out_h, out_w, bounds, bounds);
}

Tensor adaptive_maxpool2d(const Tensor& x, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw ShapeError("adaptive_maxpool2d: invalid output size");
    const ConvView v = conv_view(x, "adaptive_maxpool2d");
    if (out_h > v.height || out_w > v.width) {
        throw ShapeError("adaptive_maxpool2d: output larger than input");
    }
    auto bounds_h = [out_h](int o, int n, int& lo, int& hi) {
        lo = (o * n) / out_h;
        hi = ((o + 1) * n + out_h - 1) / out_h;
    };
    auto bounds_w = [out_w](int o, int n, int& lo, int& hi) {
        lo = (o * n) / out_w;
        hi = ((o + 1) * n + out_w - 1) / out_w;
    };
    return maxpool_common(x, out_h, out_w, bounds_h, bounds_w);
}

Tensor avgpool_global(const Tensor& x) {
    if (x.rank() != 4) throw ShapeError("avgpool_global: expected [B,C,H,W]");
    const int b = x.dim(0), c = x.dim(1);
    const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    std::vector<float> out(static_cast<size_t>(b) * c);
    for (int64_t p = 0; p < static_cast<int64_t>(b) * c; ++p) {
        const float* src = x.data().data() + p * hw;
        double acc = 0.0;
        for (int64_t i = 0; i < hw; ++i) acc += src[i];
        out[p] = static_cast<float>(acc / static_cast<double>(hw));
    }
    Tensor res = make_output({b, c}, std::move(out), x.requires_grad());
    maybe_record(res, [xn = OpAccess::node(x), on = OpAccess::node(res), hw] {
        xn->ensure_grad();
        const float inv = 1.0f / static_cast<float>(hw);
        for (size_t p = 0; p < on->grad.size(); ++p) {
            const float g = on->grad[p] * inv;
            float* gx = xn->grad.data() + p * hw;
            for (int64_t i = 0; i < hw; ++i) gx[i] += g;
        }
    });
    return res;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x) {
    std::vector<float> out(x.data().begin(), x.data().end());
    for (auto& v : out) v = v > 0.0f ? v : 0.0f;
    Tensor res = make_output(x.shape(), std::move(out), x.requires_grad());
    maybe_record(res, [xn = OpAccess::node(x), on = OpAccess::node(res)] {
        xn->ensure_grad();
        for (size_t i = 0; i < xn->grad.size(); ++i) {
            if (xn->data[i] > 0.0f) xn->grad[i] += on->grad[i];
        }
    });
    return res;
}

Tensor sigmoid(const Tensor& x) {
    std::vector<float> out(x.numel());
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<float>(1.0 / (1.0 + std::exp(-double(x.data()[i]))));
    }
    Tensor res = make_output(x.shape(), std::move(out), x.requires_grad());
    maybe_record(res, [xn = OpAccess::node(x), on = OpAccess::node(res)] {
        xn->ensure_grad();
        for (size_t i = 0; i < xn->grad.size(); ++i) {
            const float y = on->data[i];
            xn->grad[i] += on->grad[i] * y * (1.0f - y);
        }
    });
    return res;
}

// ---------------------------------------------------------------------------
// Normalization / regularization
// ---------------------------------------------------------------------------

namespace {

struct BnLayout {
    int features;
    int64_t reduce;       // elements averaged per feature
    int64_t outer, inner;  // x[outer, features, inner]
};

BnLayout bn_layout(const Tensor& x) {
    if (x.rank() == 2) return {x.dim(1), x.dim(0), x.dim(0), 1};
    if (x.rank() == 4) {
        const int64_t inner = static_cast<int64_t>(x.dim(2)) * x.dim(3);
        return {x.dim(1), x.dim(0) * inner, x.dim(0), inner};
    }
    throw ShapeError("batchnorm: expected [B,F] or [B,C,H,W]");
}

}  // namespace

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                 bool train, double momentum, double eps) {
    const BnLayout lay = bn_layout(x);
    if (gamma.numel() != lay.features || beta.numel() != lay.features) {
        throw ShapeError("batchnorm: gamma/beta length must equal feature count");
    }
    if (static_cast<int>(state.running_mean.size()) != lay.features) {
        throw ShapeError("batchnorm: running stats length must equal feature count");
    }
    if (train && x.dim(0) < 2) throw BatchTooSmall("batchnorm train mode needs batch >= 2");

    std::vector<float> mean(lay.features), invstd(lay.features);
    if (train) {
        std::vector<double> sum(lay.features, 0.0), sumsq(lay.features, 0.0);
        for (int64_t o = 0; o < lay.outer; ++o) {
            for (int f = 0; f < lay.features; ++f) {
                const float* src = x.data().data() + (o * lay.features + f) * lay.inner;
                double s = 0.0, sq = 0.0;
                for (int64_t i = 0; i < lay.inner; ++i) {
                    s += src[i];
                    sq += double(src[i]) * src[i];
                }
                sum[f] += s;
                sumsq[f] += sq;
            }
        }
        for (int f = 0; f < lay.features; ++f) {
            const double n = static_cast<double>(lay.reduce);
            const double mu = sum[f] / n;
            const double var = std::max(0.0, sumsq[f] / n - mu * mu);
            mean[f] = static_cast<float>(mu);
            invstd[f] = static_cast<float>(1.0 / std::sqrt(var + eps));
            const double unbiased = lay.reduce > 1 ? var * n / (n - 1.0) : var;
            state.running_mean[f] = static_cast<float>((1.0 - momentum) * state.running_mean[f] + momentum * mu);
            state.running_var[f] = static_cast<float>((1.0 - momentum) * state.running_var[f] + momentum * unbiased);
        }
    } else {
        for (int f = 0; f < lay.features; ++f) {
            mean[f] = state.running_mean[f];
            invstd[f] = static_cast<float>(1.0 / std::sqrt(double(state.running_var[f]) + eps));
        }
    }

    auto xhat = std::make_shared<std::vector<float>>(x.numel());
    std::vector<float> out(x.numel());
    for (int64_t o = 0; o < lay.outer; ++o) {
        for (int f = 0; f < lay.features; ++f) {
            const int64_t base = (o * lay.features + f) * lay.inner;
            const float g = gamma.data()[f], b = beta.data()[f];
            for (int64_t i = 0; i < lay.inner; ++i) {
                const float xi = (x.data()[base + i] - mean[f]) * invstd[f];
                (*xhat)[base + i] = xi;
                out[base + i] = g * xi + b;
            }
        }
    }

    Tensor res = make_output(x.shape(), std::move(out),
                             x.requires_grad() || gamma.requires_grad() || beta.requires_grad());
    maybe_record(res, [xn = OpAccess::node(x), gn = OpAccess::node(gamma), bn = OpAccess::node(beta),
                       on = OpAccess::node(res), xhat, invstd, lay, train] {
        // per-feature sums of grad and grad*xhat feed both the affine grads
        // and (in train mode) the batch-statistic terms
        std::vector<double> sum_g(lay.features, 0.0), sum_gx(lay.features, 0.0);
        for (int64_t o = 0; o < lay.outer; ++o) {
            for (int f = 0; f < lay.features; ++f) {
                const int64_t base = (o * lay.features + f) * lay.inner;
                for (int64_t i = 0; i < lay.inner; ++i) {
                    sum_g[f] += on->grad[base + i];
                    sum_gx[f] += double(on->grad[base + i]) * (*xhat)[base + i];
                }
            }
        }
        if (gn->requires_grad) {
            gn->ensure_grad();
            for (int f = 0; f < lay.features; ++f) gn->grad[f] += static_cast<float>(sum_gx[f]);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int f = 0; f < lay.features; ++f) bn->grad[f] += static_cast<float>(sum_g[f]);
        }
        if (xn->requires_grad) {
            xn->ensure_grad();
            const double n = static_cast<double>(lay.reduce);
            for (int64_t o = 0; o < lay.outer; ++o) {
                for (int f = 0; f < lay.features; ++f) {
                    const int64_t base = (o * lay.features + f) * lay.inner;
                    const double g = gn->data[f], is = invstd[f];
                    for (int64_t i = 0; i < lay.inner; ++i) {
                        const double go = on->grad[base + i];
                        double gx;
                        if (train) {
                            gx = g * is * (go - sum_g[f] / n - (*xhat)[base + i] * sum_gx[f] / n);
                        } else {
                            gx = g * is * go;
                        }
                        xn->grad[base + i] += static_cast<float>(gx);
                    }
                }
            }
        }
    });
    return res;
}

Tensor dropout(const Tensor& x, double p, bool train, DetRng& rng) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must be in [0,1)");
    if (!train) {
        std::vector<float> out(x.data().begin(), x.data().end());
        Tensor res = make_output(x.shape(), std::move(out), x.requires_grad());
        maybe_record(res, [xn = OpAccess::node(x), on = OpAccess::node(res)] {
            xn->ensure_grad();
            for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += on->grad[i];
        });
        return res;
    }
    const float keep_scale = static_cast<float>(1.0 / (1.0 - p));
    auto mask = std::make_shared<std::vector<float>>(x.numel());
    std::vector<float> out(x.numel());
    for (size_t i = 0; i < out.size(); ++i) {
        const float m = rng.uniform_f64() < p ? 0.0f : keep_scale;
        (*mask)[i] = m;
        out[i] = x.data()[i] * m;
    }
    Tensor res = make_output(x.shape(), std::move(out), x.requires_grad());
    maybe_record(res, [xn = OpAccess::node(x), on = OpAccess::node(res), mask] {
        xn->ensure_grad();
        for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += on->grad[i] * (*mask)[i];
    });
    return res;
}

Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw ShapeError("cross_entropy_logits: expected [B,N] logits");
    const int b = logits.dim(0), n = logits.dim(1);
    if (static_cast<int>(labels.size()) != b) {
        throw ShapeError("cross_entropy_logits: one label per batch row required");
    }
    for (int label : labels) {
        if (label < 0 || label >= n) throw ConfigError("label out of range");
    }
    auto probs = std::make_shared<std::vector<float>>(logits.numel());
    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
        const float* row = logits.data().data() + static_cast<size_t>(i) * n;
        float m = row[0];
        for (int j = 1; j < n; ++j) m = std::max(m, row[j]);
        double denom = 0.0;
        for (int j = 0; j < n; ++j) denom += std::exp(double(row[j]) - m);
        for (int j = 0; j < n; ++j) {
            (*probs)[static_cast<size_t>(i) * n + j] = static_cast<float>(std::exp(double(row[j]) - m) / denom);
        }
        loss += std::log(denom) - (double(row[labels[i]]) - m);
    }
    Tensor res = make_output({1}, {static_cast<float>(loss / b)}, logits.requires_grad());
    maybe_record(res, [ln = OpAccess::node(logits), on = OpAccess::node(res), probs, labels, b, n] {
        ln->ensure_grad();
        const float g = on->grad[0] / static_cast<float>(b);
        for (int i = 0; i < b; ++i) {
            for (int j = 0; j < n; ++j) {
                const float delta = (*probs)[static_cast<size_t>(i) * n + j] - (j == labels[i] ? 1.0f : 0.0f);
                ln->grad[static_cast<size_t>(i) * n + j] += g * delta;
            }
        }
    });
    return res;
}

// ---------------------------------------------------------------------------
// Spectral
// ---------------------------------------------------------------------------

namespace {

// Applies fn(plane_in, plane_out) over the last two dims.
template <typename Kernel>
Tensor plane_transform(const Tensor& x, const char* op, Kernel&& forward_kernel,
                       void (*backward_kernel)(const float*, float*, int, int)) {
    if (x.rank() < 2) throw ShapeError(std::string(op) + ": rank must be >= 2");
    const int h = x.dim(x.rank() - 2);
    const int w = x.dim(x.rank() - 1);
    const int64_t hw = static_cast<int64_t>(h) * w;
    const int64_t planes = x.numel() / hw;
    std::vector<float> out(x.numel());
    parallel_for(planes, [&](int64_t lo, int64_t hi) {
        for (int64_t p = lo; p < hi; ++p) {
            forward_kernel(x.data().data() + p * hw, out.data() + p * hw, h, w);
        }
    });
    Tensor res = make_output(x.shape(), std::move(out), x.requires_grad());
    maybe_record(res, [xn = OpAccess::node(x), on = OpAccess::node(res), backward_kernel, planes, hw,
                       h, w] {
        xn->ensure_grad();
        parallel_for(planes, [&](int64_t lo, int64_t hi) {
            std::vector<float> tmp(static_cast<size_t>(hw));
            for (int64_t p = lo; p < hi; ++p) {
                backward_kernel(on->grad.data() + p * hw, tmp.data(), h, w);
                float* gx = xn->grad.data() + p * hw;
                for (int64_t i = 0; i < hw; ++i) gx[i] += tmp[i];
            }
        });
    });
    return res;
}

}  // namespace

Tensor dct2(const Tensor& x) {
    // orthonormal transform: the adjoint of dct2 is idct2
    return plane_transform(x, "dct2", dct2_raw, idct2_raw);
}

Tensor idct2(const Tensor& x) {
    return plane_transform(x, "idct2", idct2_raw, dct2_raw);
}

// ---------------------------------------------------------------------------
// Shape / broadcast helpers
// ---------------------------------------------------------------------------

namespace {

struct LerpAxis {
    std::vector<int> lo, hi;
    std::vector<float> frac;
};

LerpAxis lerp_axis(int in_n, int out_n) {
    LerpAxis a;
    a.lo.resize(out_n);
    a.hi.resize(out_n);
    a.frac.resize(out_n);
    const double scale = static_cast<double>(in_n) / out_n;
    for (int i = 0; i < out_n; ++i) {
        double src = (i + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
        const int lo = static_cast<int>(std::floor(src));
        a.lo[i] = lo;
        a.hi[i] = std::min(lo + 1, in_n - 1);
        a.frac[i] = static_cast<float>(src - lo);
    }
    return a;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w) {
    if (x.rank() != 2) throw ShapeError("upsample_bilinear: expected a [h,w] tensor");
    if (out_h < 1 || out_w < 1) throw ShapeError("upsample_bilinear: invalid target size");
    const int in_h = x.dim(0), in_w = x.dim(1);
    const auto ay = lerp_axis(in_h, out_h);
    const auto ax = lerp_axis(in_w, out_w);
    std::vector<float> out(static_cast<size_t>(out_h) * out_w);
    for (int y = 0; y < out_h; ++y) {
        for (int xx = 0; xx < out_w; ++xx) {
            const float fy = ay.frac[y], fx = ax.frac[xx];
            const float v00 = x.data()[static_cast<size_t>(ay.lo[y]) * in_w + ax.lo[xx]];
            const float v01 = x.data()[static_cast<size_t>(ay.lo[y]) * in_w + ax.hi[xx]];
            const float v10 = x.data()[static_cast<size_t>(ay.hi[y]) * in_w + ax.lo[xx]];
            const float v11 = x.data()[static_cast<size_t>(ay.hi[y]) * in_w + ax.hi[xx]];
            out[static_cast<size_t>(y) * out_w + xx] =
                (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
        }
    }
    Tensor res = make_output({out_h, out_w}, std::move(out), x.requires_grad());
    maybe_record(res, [xn = OpAccess::node(x), on = OpAccess::node(res), ay, ax, in_w, out_h, out_w] {
        xn->ensure_grad();
        for (int y = 0; y < out_h; ++y) {
            for (int xx = 0; xx < out_w; ++xx) {
                const float g = on->grad[static_cast<size_t>(y) * out_w + xx];
                const float fy = ay.frac[y], fx = ax.frac[xx];
                xn->grad[static_cast<size_t>(ay.lo[y]) * in_w + ax.lo[xx]] += (1 - fy) * (1 - fx) * g;
                xn->grad[static_cast<size_t>(ay.lo[y]) * in_w + ax.hi[xx]] += (1 - fy) * fx * g;
                xn->grad[static_cast<size_t>(ay.hi[y]) * in_w + ax.lo[xx]] += fy * (1 - fx) * g;
                xn->grad[static_cast<size_t>(ay.hi[y]) * in_w + ax.hi[xx]] += fy * fx * g;
            }
        }
    });
    return res;
}

Tensor mul_plane(const Tensor& x, const Tensor& plane) {
    const ConvView v = conv_view(x, "mul_plane");
    if (plane.rank() != 2 || plane.dim(0) != v.height || plane.dim(1) != v.width) {
        throw ShapeError("mul_plane: plane must match the spatial dims");
    }
    const int64_t hw = static_cast<int64_t>(v.height) * v.width;
    const int64_t planes = static_cast<int64_t>(v.batch) * v.channels;
    std::vector<float> out(x.numel());
    for (int64_t p = 0; p < planes; ++p) {
        const float* src = x.data().data() + p * hw;
        float* dst = out.data() + p * hw;
        for (int64_t i = 0; i < hw; ++i) dst[i] = src[i] * plane.data()[i];
    }
    Tensor res = make_output(x.shape(), std::move(out), x.requires_grad() || plane.requires_grad());
    maybe_record(res, [xn = OpAccess::node(x), pn = OpAccess::node(plane), on = OpAccess::node(res),
                       planes, hw] {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (int64_t p = 0; p < planes; ++p) {
                float* gx = xn->grad.data() + p * hw;
                const float* go = on->grad.data() + p * hw;
                for (int64_t i = 0; i < hw; ++i) gx[i] += go[i] * pn->data[i];
            }
        }
        if (pn->requires_grad) {
            pn->ensure_grad();
            for (int64_t p = 0; p < planes; ++p) {
                const float* go = on->grad.data() + p * hw;
                const float* src = xn->data.data() + p * hw;
                for (int64_t i = 0; i < hw; ++i) pn->grad[i] += go[i] * src[i];
            }
        }
    });
    return res;
}

Tensor mul_channel(const Tensor& x, const Tensor& v) {
    if (x.rank() != 4) throw ShapeError("mul_channel: expected [B,C,H,W]");
    if (v.rank() != 2 || v.dim(0) != x.dim(0) || v.dim(1) != x.dim(1)) {
        throw ShapeError("mul_channel: multiplier must be [B,C]");
    }
    const int64_t planes = static_cast<int64_t>(x.dim(0)) * x.dim(1);
    const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    std::vector<float> out(x.numel());
    for (int64_t p = 0; p < planes; ++p) {
        const float s = v.data()[p];
        const float* src = x.data().data() + p * hw;
        float* dst = out.data() + p * hw;
        for (int64_t i = 0; i < hw; ++i) dst[i] = src[i] * s;
    }
    Tensor res = make_output(x.shape(), std::move(out), x.requires_grad() || v.requires_grad());
    maybe_record(res, [xn = OpAccess::node(x), vn = OpAccess::node(v), on = OpAccess::node(res),
                       planes, hw] {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (int64_t p = 0; p < planes; ++p) {
                const float s = vn->data[p];
                float* gx = xn->grad.data() + p * hw;
                const float* go = on->grad.data() + p * hw;
                for (int64_t i = 0; i < hw; ++i) gx[i] += go[i] * s;
            }
        }
        if (vn->requires_grad) {
            vn->ensure_grad();
            for (int64_t p = 0; p < planes; ++p) {
                const float* go = on->grad.data() + p * hw;
                const float* src = xn->data.data() + p * hw;
                double acc = 0.0;
                for (int64_t i = 0; i < hw; ++i) acc += double(go[i]) * src[i];
                vn->grad[p] += static_cast<float>(acc);
            }
        }
    });
    return res;
}

Tensor reshape(const Tensor& x, std::vector<int> new_shape) {
    int64_t n = 1;
    for (int d : new_shape) n *= d;
    if (n != x.numel()) throw ShapeError("reshape: element count must be preserved");
    std::vector<float> out(x.data().begin(), x.data().end());
    Tensor res = make_output(std::move(new_shape), std::move(out), x.requires_grad());
    maybe_record(res, [xn = OpAccess::node(x), on = OpAccess::node(res)] {
        xn->ensure_grad();
        for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += on->grad[i];
    });
    return res;
}

Tensor mean_last(const Tensor& x) {
    if (x.rank() < 2) throw ShapeError("mean_last: rank must be >= 2");
    const int k = x.dim(x.rank() - 1);
    const int64_t rows = x.numel() / k;
    std::vector<float> out(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const float* src = x.data().data() + r * k;
        double acc = 0.0;
        for (int i = 0; i < k; ++i) acc += src[i];
        out[r] = static_cast<float>(acc / k);
    }
    std::vector<int> shape(x.shape().begin(), x.shape().end() - 1);
    Tensor res = make_output(std::move(shape), std::move(out), x.requires_grad());
    maybe_record(res, [xn = OpAccess::node(x), on = OpAccess::node(res), rows, k] {
        xn->ensure_grad();
        const float inv = 1.0f / static_cast<float>(k);
        for (int64_t r = 0; r < rows; ++r) {
            const float g = on->grad[r] * inv;
            float* gx = xn->grad.data() + r * k;
            for (int i = 0; i < k; ++i) gx[i] += g;
        }
    });
    return res;
}

Tensor max_last(const Tensor& x) {
    if (x.rank() < 2) throw ShapeError("max_last: rank must be >= 2");
    const int k = x.dim(x.rank() - 1);
    const int64_t rows = x.numel() / k;
    std::vector<float> out(static_cast<size_t>(rows));
    auto argmax = std::make_shared<std::vector<int32_t>>(rows);
    for (int64_t r = 0; r < rows; ++r) {
        const float* src = x.data().data() + r * k;
        int best = 0;
        for (int i = 1; i < k; ++i) {
            if (src[i] > src[best]) best = i;
        }
        out[r] = src[best];
        (*argmax)[r] = best;
    }
    std::vector<int> shape(x.shape().begin(), x.shape().end() - 1);
    Tensor res = make_output(std::move(shape), std::move(out), x.requires_grad());
    maybe_record(res, [xn = OpAccess::node(x), on = OpAccess::node(res), argmax, rows, k] {
        xn->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            xn->grad[r * k + (*argmax)[r]] += on->grad[r];
        }
    });
    return res;
}

std::vector<float> softmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("softmax_rows: expected [B,N]");
    const int b = logits.dim(0), n = logits.dim(1);
    std::vector<float> out(logits.numel());
    for (int i = 0; i < b; ++i) {
        const float* row = logits.data().data() + static_cast<size_t>(i) * n;
        float m = row[0];
        for (int j = 1; j < n; ++j) m = std::max(m, row[j]);
        double denom = 0.0;
        for (int j = 0; j < n; ++j) denom += std::exp(double(row[j]) - m);
        for (int j = 0; j < n; ++j) {
            out[static_cast<size_t>(i) * n + j] = static_cast<float>(std::exp(double(row[j]) - m) / denom);
        }
    }
    return out;
}

}  // namespace fsw::ad
