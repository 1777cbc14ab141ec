#pragma once

#include <string>
#include <vector>

#include "fsw/autodiff.hpp"

namespace fsw {

// A named learnable tensor plus its weight-decay eligibility. Biases, batch
// norm affine parameters and other scale/shift terms are registered with
// decay = false; weight matrices and the spectral mask decay.
struct ParamRef {
    std::string name;
    ad::Tensor tensor;
    bool decay = true;
};

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// AdamW with decoupled weight decay:
//   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
// Moment buffers are keyed by parameter order, which must stay stable across
// steps.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    void step(const std::vector<ParamRef>& params);
    static void zero_grad(const std::vector<ParamRef>& params);

    int64_t steps() const { return step_count_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    AdamWConfig cfg_;
    int64_t step_count_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

}  // namespace fsw
