#include "wbanet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "wbanet/error.hpp"

namespace wbanet {

GradCheckResult gradcheck(const std::function<Tensor()>& loss_fn, std::vector<Tensor> wrt, double h) {
    for (auto& t : wrt) {
        if (!t.is_leaf() || !t.requires_grad()) throw ContractError("gradcheck: inputs must be leaves requiring grad");
        t.zero_grad();
    }
    backward(loss_fn());

    GradCheckResult result;
    NoGradGuard no_grad;
    for (auto& t : wrt) {
        const std::vector<double> analytic = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                                          : std::vector<double>(static_cast<std::size_t>(t.numel()), 0.0);
        auto values = t.mutable_data();
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + h;
            const double up = loss_fn().item();
            values[i] = saved - h;
            const double down = loss_fn().item();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
            a2 += analytic[i] * analytic[i];
            n2 += numeric * numeric;
        }
        const double denom = std::sqrt(std::max(a2, n2));
        const double err = denom == 0.0 ? 0.0 : std::sqrt(diff2) / denom;
        result.rel_error.push_back(err);
        result.max_rel_error = std::max(result.max_rel_error, err);
    }
    return result;
}

}  // namespace wbanet
