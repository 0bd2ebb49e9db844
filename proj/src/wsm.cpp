#include "wbanet/wsm.hpp"

#include <cmath>

#include "wbanet/error.hpp"
#include "wbanet/ops.hpp"
#include "wbanet/wavelet.hpp"

namespace wbanet {

namespace {

Tensor init_uniform(const Shape& shape, std::uint64_t seed) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(shape[0]));
    return Tensor::uniform(shape, -bound, bound, seed, true);
}

}  // namespace

void WsmParams::validate() const {
    if (!w_q.defined() || w_q.rank() != 2 || w_q.extent(0) != w_q.extent(1)) {
        throw ConfigError("wsm: w_q must be (C, C)");
    }
    const auto c = channels();
    if (c % 4 != 0) throw ConfigError("wsm: channel count " + std::to_string(c) + " not divisible by 4");
    if (n_heads < 1 || c % n_heads != 0) {
        throw ConfigError("wsm: channel count " + std::to_string(c) + " not divisible by " +
                          std::to_string(n_heads) + " heads");
    }
    if (w_d.shape() != Shape{c, c / 4}) throw ConfigError("wsm: w_d must be (C, C/4)");
    if (kv_conv.shape() != Shape{c, 2 * c}) throw ConfigError("wsm: kv_conv must be (C, 2C)");
    if (w_o.shape() != Shape{c + c / 4, c}) throw ConfigError("wsm: w_o must be (C + C/4, C)");
}

WsmParams WsmParams::init(std::int64_t channels, std::int64_t n_heads, std::uint64_t seed) {
    if (channels < 4 || channels % 4 != 0) {
        throw ConfigError("wsm: channel count " + std::to_string(channels) + " not divisible by 4");
    }
    if (n_heads < 1 || channels % n_heads != 0) {
        throw ConfigError("wsm: channel count not divisible by head count");
    }
    WsmParams p;
    p.n_heads = n_heads;
    p.w_d = init_uniform({channels, channels / 4}, derive_seed(seed, 0));
    std::vector<double> eye(static_cast<std::size_t>(channels * channels), 0.0);
    for (std::int64_t i = 0; i < channels; ++i) eye[i * channels + i] = 1.0;
    p.w_q = Tensor({channels, channels}, std::move(eye), true);
    p.kv_conv = init_uniform({channels, 2 * channels}, derive_seed(seed, 1));
    p.w_o = init_uniform({channels + channels / 4, channels}, derive_seed(seed, 2));
    return p;
}

std::vector<std::pair<std::string, Tensor>> WsmParams::named(const std::string& prefix) const {
    return {{prefix + "w_d", w_d}, {prefix + "w_q", w_q}, {prefix + "kv_conv", kv_conv}, {prefix + "w_o", w_o}};
}

Tensor wavelet_downsample(const Tensor& x, const Tensor& w_d) {
    if (x.rank() != 3) throw ShapeError("wavelet_downsample: expected (H, W, C), got " + shape_str(x.shape()));
    const auto c = x.extent(2);
    if (c % 4 != 0) throw ConfigError("wavelet_downsample: channel count not divisible by 4");
    if (w_d.shape() != Shape{c, c / 4}) throw ConfigError("wavelet_downsample: w_d must be (C, C/4)");
    return dwt2_haar_packed(linear(x, w_d));
}

Tensor wave_attention(const Tensor& x, const WsmParams& p, WsmTrace* trace, bool use_reconstruction) {
    p.validate();
    if (x.rank() != 3) throw ConfigError("wave_attention: expected (H, W, C), got " + shape_str(x.shape()));
    const auto h = x.extent(0), w = x.extent(1), c = x.extent(2);
    if (c != p.channels()) throw ConfigError("wave_attention: input channels do not match params");
    if (h % 2 != 0 || w % 2 != 0) throw ConfigError("wave_attention: H and W must be even");

    const std::int64_t n_q = h * w;
    const std::int64_t n_kv = n_q / 4;
    const std::int64_t dh = p.head_dim();

    const Tensor x_hat = wavelet_downsample(x, p.w_d);
    const Tensor q = linear(reshape(x, {n_q, c}), p.w_q);
    const Tensor kv = linear(reshape(x_hat, {n_kv, c}), p.kv_conv);
    if (kv.extent(0) * 4 != q.extent(0)) throw ShapeError("wave_attention: KV token count is not N_q / 4");

    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> pieces;
    pieces.reserve(static_cast<std::size_t>(p.n_heads) + 1);
    for (std::int64_t i = 0; i < p.n_heads; ++i) {
        const Tensor qi = slice(q, 1, i * dh, (i + 1) * dh);
        const Tensor ki = slice(kv, 1, i * dh, (i + 1) * dh);
        const Tensor vi = slice(kv, 1, c + i * dh, c + (i + 1) * dh);
        const Tensor attn = softmax_rows(scale(matmul(qi, transpose(ki)), inv_sqrt_dh));
        if (trace) trace->attention.push_back(attn);
        pieces.push_back(matmul(attn, vi));
    }

    Tensor w_o = p.w_o;
    if (use_reconstruction) {
        const Tensor x_r = idwt2_haar_packed(x_hat);
        if (trace) trace->reconstruction = x_r;
        pieces.push_back(reshape(x_r, {n_q, c / 4}));
    } else {
        w_o = slice(p.w_o, 0, 0, c);
    }
    if (trace) trace->x_hat = x_hat;
    return reshape(linear(concat(1, pieces), w_o), {h, w, c});
}

}  // namespace wbanet
