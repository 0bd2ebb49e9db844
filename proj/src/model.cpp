#include "wbanet/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "wbanet/adam.hpp"
#include "wbanet/error.hpp"
#include "wbanet/ops.hpp"

namespace wbanet {

namespace {

constexpr std::int64_t kInferenceChunk = 256;

}  // namespace

void ModelConfig::validate() const {
    if (patch_size < 2 || patch_size % 2 != 0) throw ConfigError("patch size must be even and >= 2");
    if (embed_dim < 4 || embed_dim % 4 != 0) throw ConfigError("embedding dim must be divisible by 4");
    if (n_heads < 1 || embed_dim % n_heads != 0) throw ConfigError("embedding dim must be divisible by head count");
    if (n_blocks < 1 || n_blocks > 8) throw ConfigError("block count must be in [1, 8]");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (n_per_class < 1) throw ConfigError("samples per class must be >= 1");
}

ModelConfig ModelConfig::chao_lake() {
    ModelConfig c;
    c.n_blocks = 5;
    return c;
}

ModelConfig ModelConfig::sulzberger() {
    ModelConfig c;
    c.n_blocks = 2;
    return c;
}

ModelConfig ModelConfig::yellow_river() {
    ModelConfig c;
    c.n_blocks = 4;
    return c;
}

ModelParams ModelParams::init(const ModelConfig& cfg) {
    cfg.validate();
    const auto c = cfg.embed_dim;
    ModelParams p;
    p.embed = Tensor::uniform({2, c}, -1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0), derive_seed(cfg.seed, 1000), true);
    for (std::int64_t b = 0; b < cfg.n_blocks; ++b) {
        const auto block_seed = derive_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(b));
        p.blocks.push_back({WsmParams::init(c, cfg.n_heads, derive_seed(block_seed, 0)),
                            BamParams::init(c, derive_seed(block_seed, 1))});
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(c));
    p.head_w = Tensor::uniform({c, 2}, -bound, bound, derive_seed(cfg.seed, 3000), true);
    p.head_b = Tensor::zeros({2}, true);
    return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
    std::vector<std::pair<std::string, Tensor>> out{{"embed.w", embed}};
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const std::string prefix = "blocks." + std::to_string(b) + ".";
        for (auto& kv : blocks[b].wsm.named(prefix + "wsm.")) out.push_back(std::move(kv));
        for (auto& kv : blocks[b].bam.named(prefix + "bam.")) out.push_back(std::move(kv));
    }
    out.emplace_back("head.w", head_w);
    out.emplace_back("head.b", head_b);
    return out;
}

std::vector<Tensor> ModelParams::tensors() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
}

Tensor embed(const Tensor& patch, const Tensor& w_e) { return linear(patch, w_e); }

Tensor block_forward(const Tensor& x, const WbaBlockParams& p) {
    const Tensor x1 = add(x, wave_attention(x, p.wsm));
    return add(x1, bam_forward(x1, p.bam));
}

Tensor classify_patch(const Tensor& patch, const ModelParams& params) {
    Tensor x = embed(patch, params.embed);
    for (const auto& block : params.blocks) x = block_forward(x, block);
    const auto c = x.extent(2);
    return linear(reshape(global_avg_pool(x), {1, c}), params.head_w, params.head_b);
}

Tensor forward(const PatchBatch& batch, const ModelParams& params) {
    std::vector<Tensor> rows;
    rows.reserve(static_cast<std::size_t>(batch.size()));
    for (std::int64_t i = 0; i < batch.size(); ++i) rows.push_back(classify_patch(batch.patch(i), params));
    return concat(0, rows);
}

std::pair<Tensor, Tensor> normalize_pair(const Tensor& i1, const Tensor& i2) {
    if (i1.shape() != i2.shape()) throw InputError("normalize_pair: image extents differ");
    double top = 0.0;
    for (double v : i1.data()) top = std::max(top, std::log1p(std::max(v, 0.0)));
    for (double v : i2.data()) top = std::max(top, std::log1p(std::max(v, 0.0)));
    const double inv = top > 0.0 ? 1.0 / top : 0.0;
    auto map = [inv](const Tensor& t) {
        std::vector<double> out(t.data().begin(), t.data().end());
        for (auto& v : out) v = std::log1p(std::max(v, 0.0)) * inv;
        return Tensor(t.shape(), std::move(out));
    };
    return {map(i1), map(i2)};
}

TrainResult train_on_batch(const PatchBatch& batch, const ModelConfig& cfg) {
    cfg.validate();
    if (batch.patch_size != cfg.patch_size) throw ConfigError("train: batch patch size differs from config");
    if (static_cast<std::int64_t>(batch.labels.size()) != batch.size() || batch.size() == 0) {
        throw ContractError("train: batch must carry one label per patch");
    }
    TrainResult result;
    result.params = ModelParams::init(cfg);
    result.n_samples = batch.size();
    result.shortfall = batch.shortfall;
    std::vector<Tensor> params = result.params.tensors();
    AdamState state;
    const AdamOptions adam{cfg.lr, 0.9, 0.999, 1e-8};

    std::vector<std::int64_t> order(static_cast<std::size_t>(batch.size()));
    std::iota(order.begin(), order.end(), 0);
    for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::mt19937_64 gen(derive_seed(cfg.seed, 5000 + static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[gen() % i]);

        double loss_sum = 0.0;
        std::int64_t correct = 0;
        for (std::int64_t start = 0; start < batch.size(); start += cfg.batch_size) {
            const std::int64_t end = std::min(batch.size(), start + cfg.batch_size);
            std::vector<Tensor> rows;
            std::vector<int> labels;
            for (std::int64_t j = start; j < end; ++j) {
                const auto idx = order[static_cast<std::size_t>(j)];
                rows.push_back(classify_patch(batch.patch(idx), result.params));
                labels.push_back(batch.labels[static_cast<std::size_t>(idx)]);
            }
            const Tensor logits = concat(0, rows);
            const Tensor loss = cross_entropy(logits, labels);
            const auto d = logits.data();
            for (std::size_t r = 0; r < labels.size(); ++r) {
                const int pred = d[2 * r + 1] > d[2 * r] ? 1 : 0;
                correct += pred == labels[r];
            }
            loss_sum += loss.item() * static_cast<double>(end - start);
            for (auto& p : params) p.zero_grad();
            backward(loss);
            adam_step(params, state, adam);
        }
        result.history.loss.push_back(loss_sum / static_cast<double>(batch.size()));
        result.history.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(batch.size()));
    }
    for (auto& p : params) p.zero_grad();
    return result;
}

TrainResult train(const Tensor& i1, const Tensor& i2, const LabelMap& labels, const ModelConfig& cfg) {
    cfg.validate();
    const auto [n1, n2] = normalize_pair(i1, i2);
    const PatchBatch batch =
        sample_patches(n1, n2, labels, cfg.patch_size, cfg.n_per_class, derive_seed(cfg.seed, 4000));
    return train_on_batch(batch, cfg);
}

ChangeMap predict_map(const Tensor& i1, const Tensor& i2, const LabelMap& labels, const ModelParams& params,
                      const ModelConfig& cfg) {
    if (i1.extent(0) != labels.height || i1.extent(1) != labels.width) {
        throw InputError("predict_map: label map extents differ from images");
    }
    ChangeMap out;
    out.map = BinaryGrid(labels.height, labels.width);
    out.provenance.assign(labels.labels.size(), Provenance::kPseudoConfident);
    std::vector<PixelCoord> pending;
    for (std::int64_t r = 0; r < labels.height; ++r) {
        for (std::int64_t c = 0; c < labels.width; ++c) {
            switch (labels.at(r, c)) {
                case PixelClass::kChanged: out.map.at(r, c) = 1; break;
                case PixelClass::kUnchanged: out.map.at(r, c) = 0; break;
                case PixelClass::kIntermediate: pending.push_back({r, c}); break;
            }
        }
    }
    if (pending.empty()) return out;

    const auto [n1, n2] = normalize_pair(i1, i2);
    NoGradGuard no_grad;
    for (std::size_t start = 0; start < pending.size(); start += kInferenceChunk) {
        const std::size_t count = std::min<std::size_t>(kInferenceChunk, pending.size() - start);
        const std::span<const PixelCoord> coords(pending.data() + start, count);
        const PatchBatch batch = extract_patches(n1, n2, coords, cfg.patch_size);
        const Tensor logits = forward(batch, params);
        const auto d = logits.data();
        for (std::size_t i = 0; i < count; ++i) {
            const auto& pc = coords[i];
            out.map.at(pc.row, pc.col) = d[2 * i + 1] > d[2 * i] ? 1 : 0;
            out.provenance[static_cast<std::size_t>(pc.row * labels.width + pc.col)] = Provenance::kNetwork;
        }
    }
    return out;
}

ChangeMap predict_map_threshold(const DifferenceImage& di, const LabelMap& labels) {
    const auto values = di.values.data();
    if (static_cast<std::int64_t>(values.size()) != labels.height * labels.width) {
        throw InputError("predict_map_threshold: extents differ");
    }
    double max_unchanged = -std::numeric_limits<double>::infinity();
    double min_changed = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (labels.labels[i] == PixelClass::kUnchanged) max_unchanged = std::max(max_unchanged, values[i]);
        if (labels.labels[i] == PixelClass::kChanged) min_changed = std::min(min_changed, values[i]);
    }
    double threshold = 0.5 * (max_unchanged + min_changed);
    if (!std::isfinite(threshold)) threshold = std::isfinite(min_changed) ? min_changed : max_unchanged;

    ChangeMap out;
    out.map = BinaryGrid(labels.height, labels.width);
    out.provenance.assign(values.size(), Provenance::kPseudoConfident);
    for (std::size_t i = 0; i < values.size(); ++i) {
        switch (labels.labels[i]) {
            case PixelClass::kChanged: out.map.values[i] = 1; break;
            case PixelClass::kUnchanged: out.map.values[i] = 0; break;
            case PixelClass::kIntermediate:
                out.map.values[i] = values[i] >= threshold ? 1 : 0;
                out.provenance[i] = Provenance::kDiThreshold;
                break;
        }
    }
    return out;
}

}  // namespace wbanet
