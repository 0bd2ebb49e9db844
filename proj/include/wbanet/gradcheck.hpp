#pragma once

#include <functional>
#include <vector>

#include "wbanet/tensor.hpp"

namespace wbanet {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::vector<double> rel_error;  // one entry per checked tensor
};

/// Compares reverse-mode gradients with central finite differences.
/// `loss_fn` must rebuild the scalar loss from the current values of `wrt`
/// (leaf tensors with requires_grad). The per-tensor error is
/// ||g_auto - g_fd|| / max(||g_auto||, ||g_fd||), or 0 when both vanish.
/// Existing gradients on `wrt` are cleared.
GradCheckResult gradcheck(const std::function<Tensor()>& loss_fn, std::vector<Tensor> wrt, double h = 1e-5);

}  // namespace wbanet
