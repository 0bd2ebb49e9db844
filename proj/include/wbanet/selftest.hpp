#pragma once

// Invariant suites behind `wbanet selftest`. Each suite is a plain function
// so tests can run it against deliberately broken components.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wbanet/tensor.hpp"

namespace wbanet {

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

struct WaveletPair {
    std::function<Tensor(const Tensor&)> analysis;   // (H, W, C) -> (H/2, W/2, 4C)
    std::function<Tensor(const Tensor&)> synthesis;  // inverse
};

WaveletPair haar_wavelet_pair();

/// Perfect reconstruction in both directions and energy preservation on
/// random even-sized inputs, tolerance 1e-9.
SuiteResult reconstruction_suite(const WaveletPair& wavelet, int cases = 200, std::uint64_t seed = 1);

/// One differentiable op (or composite) under finite-difference checking.
/// `run(seed)` builds random small inputs and returns the max relative error.
struct GradientCase {
    std::string name;
    double tolerance = 1e-4;
    std::function<double(std::uint64_t)> run;
};

std::vector<GradientCase> gradient_cases();

/// Finite-difference checks of every differentiable op and of a miniature
/// model (P = 4, C = 8, two heads, one block).
SuiteResult gradient_suite(int seeds = 50, std::uint64_t base_seed = 1);

/// OE = FP + FN, PCC + 100 OE / N = 100, KC worked example.
SuiteResult metrics_suite();

/// Attention rows sum to one over H*W/4 keys; BAM shapes and gate range.
SuiteResult structure_suite(std::uint64_t seed = 1);

std::vector<SuiteResult> run_selftest();

}  // namespace wbanet
