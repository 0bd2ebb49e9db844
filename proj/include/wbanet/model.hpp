#pragma once

// WBANet: a per-pixel lift of the two acquisitions to C channels, N stacked
// wavelet bi-dimensional aggregation blocks, spatial average pooling and a
// two-way fully connected classifier.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wbanet/bam.hpp"
#include "wbanet/grid.hpp"
#include "wbanet/preclass.hpp"
#include "wbanet/tensor.hpp"
#include "wbanet/wsm.hpp"

namespace wbanet {

struct ModelConfig {
    std::int64_t patch_size = 8;
    std::int64_t embed_dim = 32;
    std::int64_t n_heads = 4;
    std::int64_t n_blocks = 5;
    double lr = 1e-3;
    std::int64_t epochs = 30;
    std::int64_t batch_size = 64;
    std::int64_t n_per_class = 1000;
    std::uint64_t seed = 0;

    /// Throws ConfigError on an even/divisibility/range violation.
    void validate() const;

    static ModelConfig chao_lake();     // N = 5
    static ModelConfig sulzberger();    // N = 2
    static ModelConfig yellow_river();  // N = 4

    bool operator==(const ModelConfig&) const = default;
};

struct WbaBlockParams {
    WsmParams wsm;
    BamParams bam;
};

struct ModelParams {
    Tensor embed;  // (2, C)
    std::vector<WbaBlockParams> blocks;
    Tensor head_w;  // (C, 2)
    Tensor head_b;  // (2)

    static ModelParams init(const ModelConfig& cfg);
    /// Stable, checkpoint-facing names in a fixed order.
    std::vector<std::pair<std::string, Tensor>> named() const;
    std::vector<Tensor> tensors() const;
};

Tensor embed(const Tensor& patch, const Tensor& w_e);

/// X1 = X + WaveAttn(X); Y = X1 + BAM(X1).
Tensor block_forward(const Tensor& x, const WbaBlockParams& p);

/// Logits (1, 2) for one (P, P, 2) patch.
Tensor classify_patch(const Tensor& patch, const ModelParams& params);

/// Logits (n, 2); class 1 is "changed".
Tensor forward(const PatchBatch& batch, const ModelParams& params);

/// Maps both acquisitions to ln(1 + I) / s, with s the largest ln(1 + I)
/// over the pair, so the network sees a shared [0, 1] log-intensity scale.
std::pair<Tensor, Tensor> normalize_pair(const Tensor& i1, const Tensor& i2);

struct TrainHistory {
    std::vector<double> loss;      // mean cross-entropy per epoch
    std::vector<double> accuracy;  // training accuracy per epoch, in [0, 1]
};

struct TrainResult {
    ModelParams params;
    TrainHistory history;
    std::int64_t n_samples = 0;
    bool shortfall = false;
};

/// Mini-batch Adam on an already extracted batch (labels required).
TrainResult train_on_batch(const PatchBatch& batch, const ModelConfig& cfg);

/// Samples balanced patches from the confident pseudo-labels and trains.
TrainResult train(const Tensor& i1, const Tensor& i2, const LabelMap& labels, const ModelConfig& cfg);

/// Confident pixels keep their pseudo-label; intermediate pixels take the
/// network argmax.
ChangeMap predict_map(const Tensor& i1, const Tensor& i2, const LabelMap& labels, const ModelParams& params,
                      const ModelConfig& cfg);

/// Network-free variant: intermediate pixels are changed when their DI is at
/// least midway between the largest UNCHANGED and smallest CHANGED DI.
ChangeMap predict_map_threshold(const DifferenceImage& di, const LabelMap& labels);

}  // namespace wbanet
