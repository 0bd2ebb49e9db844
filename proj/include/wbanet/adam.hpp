#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wbanet/tensor.hpp"

namespace wbanet {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment buffers, one pair per parameter, plus the step count.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::int64_t t = 0;
};

/// One bias-corrected Adam update. Increments state.t before use, so the first
/// call runs with t = 1. Every parameter must carry a gradient.
void adam_step(std::span<Tensor> params, AdamState& state, const AdamOptions& options = {});

}  // namespace wbanet
