#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wbanet {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor extents do not satisfy an operation's shape contract.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// API misuse, e.g. backward on a non-scalar or an already consumed graph.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration (indivisible channel counts, ellipse outside the frame, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Invalid input data (negative intensities, mismatched extents).
class InputError : public Error {
public:
    using Error::Error;
};

/// Malformed file. Carries the byte offset at which parsing failed.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class SamplingError : public Error {
public:
    using Error::Error;
};

/// Data that cannot be pre-classified (e.g. a constant difference image).
class DegenerateDataError : public Error {
public:
    using Error::Error;
};

}  // namespace wbanet
