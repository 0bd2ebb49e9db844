#pragma once

// Single-level orthonormal 2-D Haar transform on (H, W, C) feature maps,
// applied independently per channel.
//
// Rows are filtered first with f_L = (1, 1)/sqrt2 and f_H = (1, -1)/sqrt2,
// then columns. Subband X_AB uses filter A along the rows and B along the
// columns, so for a 2x2 block [[a, b], [c, d]]:
//   LL = (a + b + c + d)/2    LH = (a + b - c - d)/2
//   HL = (a - b + c - d)/2    HH = (a - b - c + d)/2
// The 4x4 map is symmetric and orthogonal, hence its own inverse.

#include "wbanet/tensor.hpp"

namespace wbanet {

struct SubbandSet {
    Tensor ll;
    Tensor lh;
    Tensor hl;
    Tensor hh;
    Shape source_shape;  // (H, W, C)
};

/// Requires even H and W; there is no boundary padding.
SubbandSet dwt2_haar(const Tensor& x);
Tensor idwt2_haar(const SubbandSet& s);

/// (H, W, C) -> (H/2, W/2, 4C) with channel blocks [LL | LH | HL | HH].
Tensor dwt2_haar_packed(const Tensor& x);
/// Exact inverse of dwt2_haar_packed; channel count must be divisible by 4.
Tensor idwt2_haar_packed(const Tensor& packed);

double energy(const Tensor& x);

}  // namespace wbanet
