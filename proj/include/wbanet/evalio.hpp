#pragma once

// Change-map metrics, 8-bit PGM (P5) I/O and a synthetic speckled SAR pair
// generator.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "wbanet/grid.hpp"
#include "wbanet/tensor.hpp"

namespace wbanet {

struct Confusion {
    std::int64_t tp = 0;
    std::int64_t tn = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;

    std::int64_t total() const { return tp + tn + fp + fn; }
};

Confusion confusion(const BinaryGrid& pred, const BinaryGrid& gt);
Confusion confusion(const ChangeMap& pred, const BinaryGrid& gt);

struct MetricsReport {
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t oe = 0;
    double pcc = 0.0;  // percent
    double kc = 0.0;   // percent
    std::int64_t n_total = 0;
    bool kc_defined = true;  // false when chance agreement is 1 (single class)
};

/// PCC = 100(TP+TN)/N,
/// PRE = ((TP+FP)(TP+FN) + (FN+TN)(FP+TN)) / N^2,
/// KC  = 100(PCC/100 - PRE)/(1 - PRE).
MetricsReport metrics(const Confusion& counts);

/// {"fp":..,"fn":..,"oe":..,"pcc":..,"kc":..,"n":..}
std::string metrics_json(const MetricsReport& report);

struct Ellipse {
    double center_row = 0.0;
    double center_col = 0.0;
    double radius_row = 1.0;
    double radius_col = 1.0;

    bool contains(std::int64_t r, std::int64_t c) const;
};

struct SynthConfig {
    std::int64_t height = 128;
    std::int64_t width = 128;
    double looks = 4.0;
    Ellipse change;
    double background = 20.0;
    double change_level = 200.0;
    std::uint64_t seed = 0;

    /// Square frame with a centered 3:2 ellipse covering `change_fraction` of it.
    static SynthConfig square(std::int64_t size, double looks, std::uint64_t seed, double change_fraction = 0.05);
    /// Throws ConfigError when the ellipse leaves the frame or looks < 1.
    void validate() const;
};

struct SynthPair {
    Tensor i1;  // (H, W, 1)
    Tensor i2;
    BinaryGrid gt;
    Tensor reflectivity1;  // noise-free fields
    Tensor reflectivity2;
};

/// Each acquisition is its reflectivity field times independent L-look
/// speckle drawn from Gamma(shape L, scale 1/L).
SynthPair synth_pair(const SynthConfig& cfg);

struct Pgm {
    std::int64_t width = 0;
    std::int64_t height = 0;
    int maxval = 255;
    std::vector<std::uint8_t> pixels;
};

/// Parses binary P5 with maxval <= 255. Comments may follow any header token.
Pgm parse_pgm(std::string_view bytes);
std::string encode_pgm(const Pgm& pgm);

/// (H, W, 1) tensor of raw sample values.
Tensor read_pgm(const std::filesystem::path& path);
/// Rounds and clamps to [0, maxval].
void write_pgm(const std::filesystem::path& path, const Tensor& image, int maxval = 255);
/// Binary maps are written as {0, 255}.
void write_pgm(const std::filesystem::path& path, const BinaryGrid& grid);
BinaryGrid read_binary_pgm(const std::filesystem::path& path);

}  // namespace wbanet
