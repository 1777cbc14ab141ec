#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fsw/autodiff.hpp"

namespace fsw {

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// Compares the tape gradient of loss = sum(forward() * R) against central
// differences with step h, where R is a fixed seeded weight tensor. For each
// checked tensor a seeded subset of coordinates is probed. The error measure
// is |numeric - analytic| / max(1, |numeric|, |analytic|) so large gradients
// are compared relatively and small ones absolutely.
double gradcheck_max_rel_err(const std::function<ad::Tensor()>& forward,
                             const std::vector<ad::Tensor>& checked, uint64_t seed,
                             double h = 1e-3, int coords_per_tensor = 12);

// Finite-difference checks for every differentiable op plus the FSNet
// assemblies on a micro model (3x16x16 input). Runs in well under the
// two-minute budget.
std::vector<GradCheckResult> run_gradcheck_suite(uint64_t seed = 17);

bool gradcheck_all_passed(const std::vector<GradCheckResult>& results);

}  // namespace fsw
