#include "wbanet/preclass.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "wbanet/error.hpp"

namespace wbanet {

namespace {

void require_image(const Tensor& t, const char* what) {
    if (t.rank() != 3 || t.extent(2) != 1) {
        throw InputError(std::string(what) + " must be (H, W, 1), got " + shape_str(t.shape()));
    }
}

std::int64_t reflect(std::int64_t i, std::int64_t n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return i;
}

template <typename T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(gen() % i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace

DifferenceImage log_ratio(const Tensor& i1, const Tensor& i2) {
    require_image(i1, "log_ratio: i1");
    require_image(i2, "log_ratio: i2");
    if (i1.shape() != i2.shape()) {
        throw InputError("log_ratio: extents differ, " + shape_str(i1.shape()) + " vs " + shape_str(i2.shape()));
    }
    const auto a = i1.data();
    const auto b = i2.data();
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a[i] >= 0.0) || !(b[i] >= 0.0)) throw InputError("log_ratio: negative or NaN intensity");
        out[i] = std::abs(std::log1p(b[i]) - std::log1p(a[i]));
    }
    return DifferenceImage{Tensor(i1.shape(), std::move(out))};
}

int FcmResult::assignment(std::size_t i) const {
    const double* row = memberships.data() + i * static_cast<std::size_t>(k);
    return static_cast<int>(std::max_element(row, row + k) - row);
}

FcmResult fcm(std::span<const double> values, const FcmOptions& options) {
    const int k = options.k;
    const std::size_t n = values.size();
    if (k < 2) throw ConfigError("fcm: need at least two clusters");
    if (n <= static_cast<std::size_t>(k)) throw ConfigError("fcm: need more samples than clusters");
    if (!(options.m > 1.0)) throw ConfigError("fcm: fuzzifier must exceed 1");

    FcmResult r;
    r.k = k;
    r.memberships.assign(n * k, 0.0);
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (*lo == *hi) {
        r.degenerate = true;
        r.converged = true;
        r.centers.assign(k, *lo);
        for (std::size_t i = 0; i < n; ++i) r.memberships[i * k] = 1.0;
        r.objective.push_back(0.0);
        return r;
    }

    std::mt19937_64 gen(options.seed);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < k; ++j) {
            const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53 + 1e-3;
            r.memberships[i * k + j] = u;
            s += u;
        }
        for (int j = 0; j < k; ++j) r.memberships[i * k + j] /= s;
    }

    const double m = options.m;
    const double exponent = 2.0 / (m - 1.0);
    auto powm = [m](double u) { return m == 2.0 ? u * u : std::pow(u, m); };

    std::vector<double> centers(k, 0.0);
    std::vector<double> weights(k);
    for (int it = 0; it < options.max_iter; ++it) {
        std::vector<double> num(k, 0.0), den(k, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (int j = 0; j < k; ++j) {
                const double um = powm(r.memberships[i * k + j]);
                num[j] += um * values[i];
                den[j] += um;
            }
        }
        double shift = 0.0;
        for (int j = 0; j < k; ++j) {
            const double c = num[j] / den[j];
            shift = std::max(shift, std::abs(c - centers[j]));
            centers[j] = c;
        }

        double objective = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double* u = r.memberships.data() + i * k;
            int zeros = 0;
            for (int j = 0; j < k; ++j) zeros += values[i] == centers[j];
            if (zeros > 0) {
                for (int j = 0; j < k; ++j) u[j] = values[i] == centers[j] ? 1.0 / zeros : 0.0;
            } else {
                double s = 0.0;
                for (int j = 0; j < k; ++j) {
                    const double d = std::abs(values[i] - centers[j]);
                    weights[j] = m == 2.0 ? 1.0 / (d * d) : std::pow(d, -exponent);
                    s += weights[j];
                }
                for (int j = 0; j < k; ++j) u[j] = weights[j] / s;
            }
            for (int j = 0; j < k; ++j) {
                const double d = values[i] - centers[j];
                objective += powm(u[j]) * d * d;
            }
        }
        r.objective.push_back(objective);
        r.iterations = it + 1;
        if (it > 0 && shift < options.tol) {
            r.converged = true;
            break;
        }
    }

    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return centers[a] < centers[b]; });
    r.centers.resize(k);
    std::vector<double> sorted(n * k);
    for (int j = 0; j < k; ++j) {
        r.centers[j] = centers[order[j]];
        for (std::size_t i = 0; i < n; ++i) sorted[i * k + j] = r.memberships[i * k + order[j]];
    }
    r.memberships = std::move(sorted);
    return r;
}

std::int64_t LabelMap::count(PixelClass cls) const {
    return std::count(labels.begin(), labels.end(), cls);
}

LabelMap hfcm_partition(const DifferenceImage& di, const HfcmOptions& options) {
    require_image(di.values, "hfcm_partition: difference image");
    LabelMap out;
    out.height = di.values.extent(0);
    out.width = di.values.extent(1);
    const auto values = di.values.data();
    const std::size_t n = values.size();
    out.labels.assign(n, PixelClass::kUnchanged);

    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (*lo == *hi) {
        out.degenerate = true;
        out.flags.push_back("constant difference image: all pixels unchanged");
        return out;
    }
    if (n <= 5) {
        out.degenerate = true;
        out.flags.push_back("too few pixels for five-cluster FCM");
        return out;
    }

    FcmOptions stage1{5, options.m, options.max_iter, options.tol, derive_seed(options.seed, 0)};
    const FcmResult first = fcm(values, stage1);
    std::vector<std::size_t> middle;
    for (std::size_t i = 0; i < n; ++i) {
        const int a = first.assignment(i);
        if (a == 4) {
            out.labels[i] = PixelClass::kChanged;
        } else if (a == 0) {
            out.labels[i] = PixelClass::kUnchanged;
        } else {
            out.labels[i] = PixelClass::kIntermediate;
            middle.push_back(i);
        }
    }

    // Second stage over the middle three clusters: its lowest cluster joins
    // UNCHANGED, the rest stay INTERMEDIATE. Its highest cluster is not merged
    // into CHANGED; under heavy speckle it is dominated by unchanged pixels.
    std::vector<double> mid_values;
    mid_values.reserve(middle.size());
    for (auto i : middle) mid_values.push_back(values[i]);
    const bool mid_constant =
        mid_values.empty() || *std::max_element(mid_values.begin(), mid_values.end()) ==
                                  *std::min_element(mid_values.begin(), mid_values.end());
    if (middle.size() > 3 && !mid_constant) {
        FcmOptions stage2{3, options.m, options.max_iter, options.tol, derive_seed(options.seed, 1)};
        const FcmResult second = fcm(mid_values, stage2);
        for (std::size_t t = 0; t < middle.size(); ++t) {
            if (second.assignment(t) == 0) out.labels[middle[t]] = PixelClass::kUnchanged;
        }
    } else if (!middle.empty()) {
        out.flags.push_back("second FCM stage skipped: middle group too small or constant");
    }

    // Both confident classes must be populated on a non-constant image.
    if (out.count(PixelClass::kChanged) == 0) {
        out.flags.push_back("no changed cluster: maximum-DI pixels promoted");
        for (std::size_t i = 0; i < n; ++i)
            if (values[i] == *hi) out.labels[i] = PixelClass::kChanged;
    }
    if (out.count(PixelClass::kUnchanged) == 0) {
        out.flags.push_back("no unchanged cluster: minimum-DI pixels demoted");
        for (std::size_t i = 0; i < n; ++i)
            if (values[i] == *lo) out.labels[i] = PixelClass::kUnchanged;
    }
    return out;
}

Tensor PatchBatch::patch(std::int64_t i) const {
    const std::int64_t per = patch_size * patch_size * 2;
    const auto d = patches.data();
    return Tensor({patch_size, patch_size, 2},
                  std::vector<double>(d.begin() + i * per, d.begin() + (i + 1) * per));
}

void extract_patch(const Tensor& i1, const Tensor& i2, PixelCoord center, std::int64_t patch_size,
                   std::span<double> out) {
    const auto h = i1.extent(0), w = i1.extent(1);
    const auto a = i1.data();
    const auto b = i2.data();
    const std::int64_t half = patch_size / 2;
    std::size_t o = 0;
    for (std::int64_t dr = 0; dr < patch_size; ++dr) {
        const std::int64_t r = reflect(center.row - half + dr, h);
        for (std::int64_t dc = 0; dc < patch_size; ++dc) {
            const std::int64_t c = reflect(center.col - half + dc, w);
            out[o++] = a[r * w + c];
            out[o++] = b[r * w + c];
        }
    }
}

PatchBatch extract_patches(const Tensor& i1, const Tensor& i2, std::span<const PixelCoord> coords,
                           std::int64_t patch_size) {
    require_image(i1, "extract_patches: i1");
    require_image(i2, "extract_patches: i2");
    if (i1.shape() != i2.shape()) throw InputError("extract_patches: image extents differ");
    if (patch_size < 2 || patch_size % 2 != 0) throw ConfigError("patch size must be even and >= 2");
    if (coords.empty()) throw SamplingError("extract_patches: no coordinates");
    const auto n = static_cast<std::int64_t>(coords.size());
    const std::int64_t per = patch_size * patch_size * 2;
    std::vector<double> data(static_cast<std::size_t>(n * per));
    for (std::int64_t i = 0; i < n; ++i) {
        extract_patch(i1, i2, coords[i], patch_size, std::span<double>(data).subspan(i * per, per));
    }
    PatchBatch batch;
    batch.patches = Tensor({n, patch_size, patch_size, 2}, std::move(data));
    batch.coords.assign(coords.begin(), coords.end());
    batch.patch_size = patch_size;
    return batch;
}

PatchBatch sample_patches(const Tensor& i1, const Tensor& i2, const LabelMap& labels,
                          std::int64_t patch_size, std::int64_t n_per_class, std::uint64_t seed) {
    if (i1.extent(0) != labels.height || i1.extent(1) != labels.width) {
        throw InputError("sample_patches: label map extents differ from images");
    }
    if (n_per_class < 1) throw ConfigError("sample_patches: n_per_class must be >= 1");
    std::vector<PixelCoord> changed, unchanged;
    for (std::int64_t r = 0; r < labels.height; ++r) {
        for (std::int64_t c = 0; c < labels.width; ++c) {
            const auto cls = labels.at(r, c);
            if (cls == PixelClass::kChanged) changed.push_back({r, c});
            if (cls == PixelClass::kUnchanged) unchanged.push_back({r, c});
        }
    }
    if (changed.empty()) throw SamplingError("sample_patches: no CHANGED pixels");
    if (unchanged.empty()) throw SamplingError("sample_patches: no UNCHANGED pixels");
    seeded_shuffle(changed, derive_seed(seed, 0));
    seeded_shuffle(unchanged, derive_seed(seed, 1));
    bool shortfall = false;
    auto take = [&](std::vector<PixelCoord>& v) {
        if (static_cast<std::int64_t>(v.size()) < n_per_class) {
            shortfall = true;
        } else {
            v.resize(static_cast<std::size_t>(n_per_class));
        }
    };
    take(changed);
    take(unchanged);

    std::vector<PixelCoord> coords = changed;
    coords.insert(coords.end(), unchanged.begin(), unchanged.end());
    PatchBatch batch = extract_patches(i1, i2, coords, patch_size);
    batch.labels.assign(changed.size(), 1);
    batch.labels.insert(batch.labels.end(), unchanged.size(), 0);
    batch.shortfall = shortfall;
    return batch;
}

}  // namespace wbanet
