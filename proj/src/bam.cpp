#include "wbanet/bam.hpp"

#include <cmath>

#include "wbanet/error.hpp"
#include "wbanet/ops.hpp"

namespace wbanet {

void BamParams::validate() const {
    if (!fc_c1.defined() || fc_c1.rank() != 2) throw ConfigError("bam: fc_c1 must be (C, C/r)");
    const auto c = channels();
    if (reduction < 1 || c % reduction != 0) {
        throw ConfigError("bam: channel count " + std::to_string(c) + " not divisible by r = " +
                          std::to_string(reduction));
    }
    const auto cr = c / reduction;
    if (fc_c1.shape() != Shape{c, cr} || fc_c2.shape() != Shape{cr, c} || fc_s1.shape() != Shape{c, cr} ||
        fc_s2.shape() != Shape{2 * cr, 1}) {
        throw ConfigError("bam: parameter shapes inconsistent with C = " + std::to_string(c));
    }
}

BamParams BamParams::init(std::int64_t channels, std::uint64_t seed, std::int64_t reduction) {
    if (reduction < 1 || channels % reduction != 0) throw ConfigError("bam: channel count not divisible by r");
    const auto cr = channels / reduction;
    auto u = [seed](const Shape& s, std::uint64_t stream) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(s[0]));
        return Tensor::uniform(s, -bound, bound, derive_seed(seed, stream), true);
    };
    BamParams p;
    p.reduction = reduction;
    p.fc_c1 = u({channels, cr}, 0);
    p.fc_c2 = u({cr, channels}, 1);
    p.fc_s1 = u({channels, cr}, 2);
    p.fc_s2 = u({2 * cr, 1}, 3);
    return p;
}

std::vector<std::pair<std::string, Tensor>> BamParams::named(const std::string& prefix) const {
    return {{prefix + "fc_c1", fc_c1}, {prefix + "fc_c2", fc_c2}, {prefix + "fc_s1", fc_s1}, {prefix + "fc_s2", fc_s2}};
}

ChannelAggregate channel_aggregate(const Tensor& x, const BamParams& p) {
    p.validate();
    if (x.rank() != 3 || x.extent(2) != p.channels()) {
        throw ShapeError("channel_aggregate: input " + shape_str(x.shape()) + " does not match C");
    }
    Tensor x_hat = gelu(linear(global_avg_pool(x), p.fc_c1));
    Tensor x_c = sigmoid(linear(x_hat, p.fc_c2));
    return {std::move(x_c), std::move(x_hat)};
}

Tensor spatial_aggregate(const Tensor& x, const Tensor& x_hat, const BamParams& p) {
    p.validate();
    const auto cr = p.channels() / p.reduction;
    if (x.rank() != 3 || x.extent(2) != p.channels()) {
        throw ShapeError("spatial_aggregate: input " + shape_str(x.shape()) + " does not match C");
    }
    if (x_hat.shape() != Shape{1, 1, cr}) {
        throw ShapeError("spatial_aggregate: x_hat must be (1, 1, C/r), got " + shape_str(x_hat.shape()));
    }
    const auto h = x.extent(0), w = x.extent(1);
    const Tensor x_tilde = gelu(linear(x, p.fc_s1));
    const Tensor joined = concat(2, {x_tilde, broadcast_to(x_hat, {h, w, cr})});
    return sigmoid(linear(joined, p.fc_s2));
}

Tensor bam_forward(const Tensor& x, const BamParams& p, BamTrace* trace) {
    auto [x_c, x_hat] = channel_aggregate(x, p);
    const Tensor x_s = spatial_aggregate(x, x_hat, p);
    const Tensor gate = add(x_c, x_s);
    if (trace) *trace = BamTrace{x_c, x_s, gate};
    return mul(x, gate);
}

}  // namespace wbanet
