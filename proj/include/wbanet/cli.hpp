#pragma once

// Command-line front end: synth, run, sweep, selftest.
//
// Exit codes: 0 success, 1 selftest failure, 2 input/config error,
// 3 degenerate data (pre-classification found nothing to learn from).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "wbanet/evalio.hpp"
#include "wbanet/model.hpp"
#include "wbanet/preclass.hpp"

namespace wbanet {

inline constexpr int kExitOk = 0;
inline constexpr int kExitSelftestFailed = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitDegenerate = 3;

/// Everything a command needs. Resolution order: defaults, then the JSON
/// file given by --config, then individual flags.
struct RunConfig {
    ModelConfig model;
    SynthConfig synth = SynthConfig::square(128, 4.0, 0);
    HfcmOptions preclass;
    std::uint64_t seed = 0;  // applied to model, synth and preclass seeds
    std::filesystem::path i1, i2, gt;
    std::filesystem::path out = ".";
    std::int64_t min_blocks = 1;
    std::int64_t max_blocks = 5;

    /// Copies `seed` into the component configs.
    void apply_seed();
    std::string to_json() const;
    /// Overlays the keys present in `json` onto this config.
    void merge_json(const std::string& json);
};

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct PipelineResult {
    LabelMap labels;
    ChangeMap change_map;
    bool has_metrics = false;
    MetricsReport metrics;
    double seconds = 0.0;
};

/// log_ratio -> hfcm_partition -> train -> predict_map (-> metrics if gt given).
/// With n_blocks == 0 the network is skipped and intermediate pixels are
/// resolved by thresholding the difference image.
PipelineResult run_pipeline(const Tensor& i1, const Tensor& i2, const BinaryGrid* gt, const RunConfig& cfg,
                            std::int64_t n_blocks, std::ostream& log, ModelParams* trained = nullptr);

}  // namespace wbanet
