#pragma once

#include <cstdint>
#include <vector>

namespace wbanet {

/// H x W grid of 0/1 values, row-major.
struct BinaryGrid {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<std::uint8_t> values;

    BinaryGrid() = default;
    BinaryGrid(std::int64_t h, std::int64_t w, std::uint8_t fill = 0)
        : height(h), width(w), values(static_cast<std::size_t>(h * w), fill) {}

    std::uint8_t at(std::int64_t r, std::int64_t c) const { return values[static_cast<std::size_t>(r * width + c)]; }
    std::uint8_t& at(std::int64_t r, std::int64_t c) { return values[static_cast<std::size_t>(r * width + c)]; }
    std::int64_t count_ones() const {
        std::int64_t n = 0;
        for (auto v : values) n += v != 0;
        return n;
    }
    bool operator==(const BinaryGrid&) const = default;
};

enum class Provenance : std::uint8_t {
    kPseudoConfident,  // kept from pre-classification
    kNetwork,          // argmax of the trained classifier
    kDiThreshold,      // no network (N = 0): difference-image threshold
};

struct ChangeMap {
    BinaryGrid map;
    std::vector<Provenance> provenance;
};

}  // namespace wbanet
