#include "fsw/optim.hpp"

#include <cmath>

#include "fsw/errors.hpp"

namespace fsw {

void AdamW::step(const std::vector<ParamRef>& params) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i].tensor.numel(), 0.0f);
            v_[i].assign(params[i].tensor.numel(), 0.0f);
        }
    }
    if (m_.size() != params.size()) throw ConfigError("optimizer was created for a different parameter set");

    ++step_count_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));

    for (size_t i = 0; i < params.size(); ++i) {
        ad::Tensor t = params[i].tensor;
        auto data = t.data_mut();
        const auto grad = t.grad();
        const double wd = params[i].decay ? cfg_.weight_decay : 0.0;
        for (size_t j = 0; j < data.size(); ++j) {
            const double g = grad.empty() ? 0.0 : double(grad[j]);
            const double m = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g;
            const double v = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g * g;
            m_[i][j] = static_cast<float>(m);
            v_[i][j] = static_cast<float>(v);
            const double m_hat = m / bc1;
            const double v_hat = v / bc2;
            data[j] = static_cast<float>(data[j] - cfg_.lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps) + wd * data[j]));
        }
    }
}

void AdamW::zero_grad(const std::vector<ParamRef>& params) {
    for (const auto& p : params) {
        ad::Tensor t = p.tensor;
        t.zero_grad();
    }
}

}  // namespace fsw
