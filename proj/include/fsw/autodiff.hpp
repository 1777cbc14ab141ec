#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fsw/prng.hpp"

namespace fsw::ad {

namespace detail {

struct Node {
    std::vector<int> shape;
    std::vector<float> data;
    std::vector<float> grad;  // allocated on first use
    bool requires_grad = false;
    bool leaf = true;

    int64_t numel() const {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0f);
    }
};

using NodePtr = std::shared_ptr<Node>;
struct OpAccess;

}  // namespace detail

// Dense float32 tensor, row-major. A value-semantic handle: copies share the
// underlying buffer. Leaf tensors (created directly) accumulate gradients
// across backward passes; op outputs are recomputed each pass.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, float value, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<float> data, bool requires_grad = false);
    static Tensor randn(std::vector<int> shape, DetRng& rng, double stddev = 1.0,
                        bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[i]; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int64_t numel() const { return node_->numel(); }

    std::span<const float> data() const { return node_->data; }
    std::span<float> data_mut() { return node_->data; }
    std::span<const float> grad() const;  // empty until touched by backward
    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->leaf; }
    void zero_grad();

    float item() const;
    double grad_norm() const;

private:
    friend struct detail::OpAccess;
    friend class Tape;
    explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
    detail::NodePtr node_;
};

// Reverse-mode tape. Constructing a Tape makes it the active tape for the
// current thread; destruction restores the previous one. Ops record onto the
// active tape whenever their output needs gradients.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* current();

    // Propagates d(loss)/d(x) into every reachable tensor. Leaf gradients
    // accumulate across calls; intermediate gradients are reset per call.
    void backward(const Tensor& loss);

    void record(std::function<void()> backward_fn, const Tensor& output);
    size_t size() const { return records_.size(); }

private:
    struct Record {
        std::function<void()> backward_fn;
        detail::NodePtr out;
    };
    std::vector<Record> records_;
    Tape* prev_ = nullptr;
};

// Suspends recording for the current thread while alive; ops behave exactly
// as if no tape were active.
struct NoTape {
    NoTape();
    ~NoTape();
    NoTape(const NoTape&) = delete;
    NoTape& operator=(const NoTape&) = delete;

private:
    Tape* saved_;
};

// ---------------------------------------------------------------------------
// Operations. All record onto the active tape when gradients are required and
// are bit-identical with or without an active tape.
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);    // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);    // elementwise
Tensor maximum(const Tensor& a, const Tensor& b);  // ties route gradient to a
Tensor scale(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor sum(const Tensor& a);  // scalar

Tensor matmul(const Tensor& a, const Tensor& b);              // [m,k] x [k,n]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);  // x*w + bias (row broadcast)

// 3x3 cross-correlation, stride 1, padding 1; x is [B,C,H,W] or [C,H,W],
// w is [Cout,Cin,3,3], bias is [Cout].
Tensor conv2d_3x3(const Tensor& x, const Tensor& w, const Tensor& bias);

// Max over window x window patches with the given stride; pad cells act as
// -inf. Gradient flows to the first argmax in row-major window order.
Tensor maxpool2d(const Tensor& x, int window, int stride, int pad = 0);

// Partitions each spatial axis into out bins with floor/ceil bounds.
Tensor adaptive_maxpool2d(const Tensor& x, int out_h, int out_w);

Tensor avgpool_global(const Tensor& x);  // [B,C,H,W] -> [B,C]

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

struct BatchNormState {
    std::vector<float> running_mean;
    std::vector<float> running_var;

    explicit BatchNormState(int features)
        : running_mean(features, 0.0f), running_var(features, 1.0f) {}
};

// Per-feature standardization over the batch (and spatial dims for 4D input).
// Train mode requires batch >= 2, uses batch statistics and updates the
// running stats with the given momentum; eval mode uses the running stats.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                 bool train, double momentum = 0.1, double eps = 1e-5);

// Train mode: zeroes entries with probability p and scales survivors by
// 1/(1-p), consuming one uniform draw per element; eval mode is the identity
// and consumes nothing.
Tensor dropout(const Tensor& x, double p, bool train, DetRng& rng);

// Mean over the batch of -log softmax(logits)[label]; max-stabilized.
// labels must be 0 or 1 for [B,2] logits.
Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& labels);

// Orthonormal DCT-II / inverse over the last two dimensions.
Tensor dct2(const Tensor& x);
Tensor idct2(const Tensor& x);

// Bilinear upsample of a [h,w] tensor to [out_h,out_w], half-pixel centers.
Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w);

Tensor mul_plane(const Tensor& x, const Tensor& plane);   // [B,C,H,W] * [H,W]
Tensor mul_channel(const Tensor& x, const Tensor& v);     // [B,C,H,W] * [B,C]

Tensor reshape(const Tensor& x, std::vector<int> new_shape);

Tensor mean_last(const Tensor& x);  // [..., K] -> [...]
Tensor max_last(const Tensor& x);

// Utility: softmax of a [B,N] tensor row-wise, plain values (no grad).
std::vector<float> softmax_rows(const Tensor& logits);

}  // namespace fsw::ad
