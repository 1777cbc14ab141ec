#include "fsw/autodiff.hpp"

#include <cmath>

#include "fsw/errors.hpp"

namespace fsw::ad {

namespace {

thread_local Tape* g_current_tape = nullptr;

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d < 1) throw ShapeError("tensor dimensions must be positive");
        n *= d;
    }
    return n;
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, float value, bool requires_grad) {
    auto node = std::make_shared<detail::Node>();
    const int64_t n = shape_numel(shape);
    node->shape = std::move(shape);
    node->data.assign(static_cast<size_t>(n), value);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<float> data, bool requires_grad) {
    const int64_t n = shape_numel(shape);
    if (n != static_cast<int64_t>(data.size())) {
        throw ShapeError("from_data: buffer size does not match shape");
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::randn(std::vector<int> shape, DetRng& rng, double stddev, bool requires_grad) {
    const int64_t n = shape_numel(shape);
    std::vector<float> data(static_cast<size_t>(n));
    for (auto& v : data) v = static_cast<float>(rng.standard_normal() * stddev);
    return from_data(std::move(shape), std::move(data), requires_grad);
}

std::span<const float> Tensor::grad() const {
    return node_->grad;
}

void Tensor::zero_grad() {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

float Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() requires a scalar tensor");
    return node_->data[0];
}

double Tensor::grad_norm() const {
    double s = 0.0;
    for (float g : node_->grad) s += double(g) * double(g);
    return std::sqrt(s);
}

Tape::Tape() {
    prev_ = g_current_tape;
    g_current_tape = this;
}

Tape::~Tape() {
    g_current_tape = prev_;
}

Tape* Tape::current() {
    return g_current_tape;
}

NoTape::NoTape() : saved_(g_current_tape) {
    g_current_tape = nullptr;
}

NoTape::~NoTape() {
    g_current_tape = saved_;
}

void Tape::record(std::function<void()> backward_fn, const Tensor& output) {
    records_.push_back({std::move(backward_fn), output.node_});
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) throw ShapeError("backward expects a scalar loss");
    // Intermediate (op output) gradients restart from zero on every pass;
    // leaf gradients accumulate until explicitly zeroed.
    for (auto& r : records_) {
        std::fill(r.out->grad.begin(), r.out->grad.end(), 0.0f);
    }
    loss.node_->ensure_grad();
    loss.node_->grad[0] = 1.0f;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        it->backward_fn();
    }
}

}  // namespace fsw::ad
