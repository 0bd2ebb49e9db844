#pragma once

// Test-side helpers. The finite-difference routine here is deliberately
// independent of the library's gradcheck so the two can check each other.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "wbanet/tensor.hpp"

namespace wbanet::testing {

/// Central differences of a scalar function with respect to every entry of t.
inline std::vector<double> numeric_grad(const std::function<double()>& f, Tensor& t, double h = 1e-5) {
    NoGradGuard no_grad;
    auto values = t.mutable_data();
    std::vector<double> g(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + h;
        const double up = f();
        values[i] = saved - h;
        const double down = f();
        values[i] = saved;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double rel_error(std::span<const double> a, std::span<const double> b) {
    double d2 = 0.0, a2 = 0.0, b2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d2 += (a[i] - b[i]) * (a[i] - b[i]);
        a2 += a[i] * a[i];
        b2 += b[i] * b[i];
    }
    const double denom = std::sqrt(std::max(a2, b2));
    return denom == 0.0 ? 0.0 : std::sqrt(d2) / denom;
}

/// Reverse-mode gradient of loss_fn with respect to t (cleared first).
inline std::vector<double> autodiff_grad(const std::function<Tensor()>& loss_fn, Tensor& t) {
    t.zero_grad();
    backward(loss_fn());
    if (!t.has_grad()) return std::vector<double>(static_cast<std::size_t>(t.numel()), 0.0);
    return {t.grad().begin(), t.grad().end()};
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
    }
    return true;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("wbanet_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace wbanet::testing
