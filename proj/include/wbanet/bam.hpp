#pragma once

// Bi-dimensional aggregation: a global channel branch and a local spatial
// branch, summed by broadcast into an (H, W, C) gate that multiplies the input.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wbanet/tensor.hpp"

namespace wbanet {

struct BamParams {
    Tensor fc_c1;  // (C, C/r)
    Tensor fc_c2;  // (C/r, C)
    Tensor fc_s1;  // (C, C/r)
    Tensor fc_s2;  // (2C/r, 1)
    std::int64_t reduction = 2;

    std::int64_t channels() const { return fc_c1.extent(0); }
    void validate() const;
    static BamParams init(std::int64_t channels, std::uint64_t seed, std::int64_t reduction = 2);
    std::vector<std::pair<std::string, Tensor>> named(const std::string& prefix) const;
};

struct ChannelAggregate {
    Tensor x_c;    // (1, 1, C), entries in (0, 1)
    Tensor x_hat;  // (1, 1, C/r)
};

ChannelAggregate channel_aggregate(const Tensor& x, const BamParams& p);

/// x_hat is replicated at every pixel and concatenated with the per-pixel
/// reduction of x. Result (H, W, 1), entries in (0, 1).
Tensor spatial_aggregate(const Tensor& x, const Tensor& x_hat, const BamParams& p);

struct BamTrace {
    Tensor x_c;
    Tensor x_s;
    Tensor gate;  // x_c + x_s broadcast to (H, W, C), entries in (0, 2)
};

Tensor bam_forward(const Tensor& x, const BamParams& p, BamTrace* trace = nullptr);

}  // namespace wbanet
