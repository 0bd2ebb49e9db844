#pragma once

// Pre-classification: log-ratio difference image, two-stage fuzzy c-means
// three-way labeling, and balanced training patch sampling.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wbanet/tensor.hpp"

namespace wbanet {

struct DifferenceImage {
    Tensor values;  // (H, W, 1), nonnegative
};

/// |ln(i2 + 1) - ln(i1 + 1)| per pixel. Inputs are (H, W, 1), nonnegative.
DifferenceImage log_ratio(const Tensor& i1, const Tensor& i2);

struct FcmOptions {
    int k = 2;
    double m = 2.0;
    int max_iter = 300;
    double tol = 1e-6;
    std::uint64_t seed = 0;
};

struct FcmResult {
    std::vector<double> centers;      // ascending
    std::vector<double> memberships;  // n x k, row-major, columns follow `centers`
    std::vector<double> objective;    // J after every iteration
    int iterations = 0;
    bool converged = false;
    bool degenerate = false;  // all values equal: single cluster fallback
    int k = 0;

    double membership(std::size_t i, int j) const { return memberships[i * static_cast<std::size_t>(k) + j]; }
    /// Index of the cluster with the largest membership for sample i.
    int assignment(std::size_t i) const;
};

/// Standard fuzzy c-means on scalars with random (seeded) initial memberships.
FcmResult fcm(std::span<const double> values, const FcmOptions& options);

enum class PixelClass : std::uint8_t { kUnchanged = 0, kChanged = 1, kIntermediate = 2 };

struct LabelMap {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<PixelClass> labels;
    bool degenerate = false;
    std::vector<std::string> flags;

    PixelClass at(std::int64_t r, std::int64_t c) const { return labels[static_cast<std::size_t>(r * width + c)]; }
    std::int64_t count(PixelClass cls) const;
};

struct HfcmOptions {
    double m = 2.0;
    int max_iter = 300;
    double tol = 1e-6;
    std::uint64_t seed = 0;
};

/// Two-stage partition: FCM with five clusters, then FCM with three clusters
/// on the middle three. See the implementation for the exact assignment rule.
LabelMap hfcm_partition(const DifferenceImage& di, const HfcmOptions& options = {});

struct PixelCoord {
    std::int64_t row = 0;
    std::int64_t col = 0;
    bool operator==(const PixelCoord&) const = default;
};

struct PatchBatch {
    Tensor patches;  // (n, P, P, 2): channel 0 from i1, channel 1 from i2
    std::vector<int> labels;  // 1 = changed, 0 = unchanged; empty for inference batches
    std::vector<PixelCoord> coords;
    std::int64_t patch_size = 0;
    bool shortfall = false;  // a class had fewer than n_per_class pixels

    std::int64_t size() const { return static_cast<std::int64_t>(coords.size()); }
    /// Sample i as a (P, P, 2) leaf tensor.
    Tensor patch(std::int64_t i) const;
};

/// P x P patch "centered" at (r, c): rows r - P/2 .. r + P/2 - 1, reflected at borders.
void extract_patch(const Tensor& i1, const Tensor& i2, PixelCoord center, std::int64_t patch_size,
                   std::span<double> out);

PatchBatch extract_patches(const Tensor& i1, const Tensor& i2, std::span<const PixelCoord> coords,
                           std::int64_t patch_size);

/// Draws n_per_class CHANGED and n_per_class UNCHANGED centers without
/// replacement. A class with fewer pixels contributes all of them and sets
/// `shortfall`; an empty class throws SamplingError.
PatchBatch sample_patches(const Tensor& i1, const Tensor& i2, const LabelMap& labels,
                          std::int64_t patch_size, std::int64_t n_per_class, std::uint64_t seed);

}  // namespace wbanet
