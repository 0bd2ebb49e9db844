#pragma once

// Wavelet-based self-attention. Queries come from every pixel of the input;
// keys and values come from the Haar-downsampled, channel-reduced map, which
// carries the same information at a quarter of the token count.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wbanet/tensor.hpp"

namespace wbanet {

struct WsmParams {
    Tensor w_d;      // (C, C/4) channel reduction
    Tensor w_q;      // (C, C), initialized to identity
    Tensor kv_conv;  // (C, 2C): columns [0, C) give K, [C, 2C) give V
    Tensor w_o;      // (C + C/4, C): heads then reconstructed channels
    std::int64_t n_heads = 1;

    std::int64_t channels() const { return w_q.extent(0); }
    std::int64_t head_dim() const { return channels() / n_heads; }

    /// Throws ConfigError when the tensors disagree with C and n_heads.
    void validate() const;

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) except w_q = identity.
    static WsmParams init(std::int64_t channels, std::int64_t n_heads, std::uint64_t seed);

    std::vector<std::pair<std::string, Tensor>> named(const std::string& prefix) const;
};

/// Optional outputs recorded during a forward pass.
struct WsmTrace {
    std::vector<Tensor> attention;  // one (H*W, H*W/4) matrix per head
    Tensor x_hat;                   // (H/2, W/2, C)
    Tensor reconstruction;          // X^r, (H, W, C/4)
};

/// Channel reduction by w_d followed by a Haar DWT whose four subbands are
/// concatenated on the channel axis: (H, W, C) -> (H/2, W/2, C).
Tensor wavelet_downsample(const Tensor& x, const Tensor& w_d);

/// Multi-head attention with wavelet-domain keys/values, fused with the
/// IDWT reconstruction through w_o. Output shape equals input shape.
/// With `use_reconstruction = false` the X^r path is dropped and only the
/// first C rows of w_o are used.
Tensor wave_attention(const Tensor& x, const WsmParams& p, WsmTrace* trace = nullptr,
                      bool use_reconstruction = true);

}  // namespace wbanet
