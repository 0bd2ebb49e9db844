#include "wbanet/adam.hpp"

#include <cmath>

#include "wbanet/error.hpp"

namespace wbanet {

void adam_step(std::span<Tensor> params, AdamState& state, const AdamOptions& options) {
    for (const auto& p : params) {
        if (!p.has_grad()) throw ContractError("adam_step: parameter without gradient");
    }
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
            state.v.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
        }
    }
    if (state.m.size() != params.size()) {
        throw ContractError("adam_step: state was built for a different parameter list");
    }
    ++state.t;
    const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto values = params[i].mutable_data();
        const auto grad = params[i].grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < values.size(); ++j) {
            m[j] = options.beta1 * m[j] + (1.0 - options.beta1) * grad[j];
            v[j] = options.beta2 * v[j] + (1.0 - options.beta2) * grad[j] * grad[j];
            const double m_hat = m[j] / c1;
            const double v_hat = v[j] / c2;
            values[j] -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
        }
    }
}

}  // namespace wbanet
