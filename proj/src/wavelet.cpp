#include "wbanet/wavelet.hpp"

#include "wbanet/error.hpp"
#include "wbanet/ops.hpp"

namespace wbanet {

namespace {

// in: (H, W, C); out: (H/2, W/2, 4C)
void haar_analysis(const double* in, double* out, std::int64_t h, std::int64_t w, std::int64_t c,
                   bool accumulate) {
    const std::int64_t h2 = h / 2, w2 = w / 2, c4 = 4 * c;
    for (std::int64_t i = 0; i < h2; ++i) {
        for (std::int64_t j = 0; j < w2; ++j) {
            const double* a = in + ((2 * i) * w + 2 * j) * c;
            const double* b = a + c;
            const double* cc = a + w * c;
            const double* d = cc + c;
            double* o = out + (i * w2 + j) * c4;
            for (std::int64_t k = 0; k < c; ++k) {
                const double ll = 0.5 * (a[k] + b[k] + cc[k] + d[k]);
                const double lh = 0.5 * (a[k] + b[k] - cc[k] - d[k]);
                const double hl = 0.5 * (a[k] - b[k] + cc[k] - d[k]);
                const double hh = 0.5 * (a[k] - b[k] - cc[k] + d[k]);
                if (accumulate) {
                    o[k] += ll;
                    o[c + k] += lh;
                    o[2 * c + k] += hl;
                    o[3 * c + k] += hh;
                } else {
                    o[k] = ll;
                    o[c + k] = lh;
                    o[2 * c + k] = hl;
                    o[3 * c + k] = hh;
                }
            }
        }
    }
}

// in: (H/2, W/2, 4C); out: (H, W, C)
void haar_synthesis(const double* in, double* out, std::int64_t h, std::int64_t w, std::int64_t c,
                    bool accumulate) {
    const std::int64_t h2 = h / 2, w2 = w / 2, c4 = 4 * c;
    for (std::int64_t i = 0; i < h2; ++i) {
        for (std::int64_t j = 0; j < w2; ++j) {
            const double* s = in + (i * w2 + j) * c4;
            double* a = out + ((2 * i) * w + 2 * j) * c;
            double* b = a + c;
            double* cc = a + w * c;
            double* d = cc + c;
            for (std::int64_t k = 0; k < c; ++k) {
                const double ll = s[k], lh = s[c + k], hl = s[2 * c + k], hh = s[3 * c + k];
                const double va = 0.5 * (ll + lh + hl + hh);
                const double vb = 0.5 * (ll + lh - hl - hh);
                const double vc = 0.5 * (ll - lh + hl - hh);
                const double vd = 0.5 * (ll - lh - hl + hh);
                if (accumulate) {
                    a[k] += va;
                    b[k] += vb;
                    cc[k] += vc;
                    d[k] += vd;
                } else {
                    a[k] = va;
                    b[k] = vb;
                    cc[k] = vc;
                    d[k] = vd;
                }
            }
        }
    }
}

void require_map(const Tensor& x, const char* op) {
    if (x.rank() != 3) throw ShapeError(std::string(op) + ": expected (H, W, C), got " + shape_str(x.shape()));
}

}  // namespace

Tensor dwt2_haar_packed(const Tensor& x) {
    require_map(x, "dwt2_haar");
    const auto h = x.extent(0), w = x.extent(1), c = x.extent(2);
    if (h % 2 != 0 || w % 2 != 0) {
        throw ShapeError("dwt2_haar: H and W must be even, got " + shape_str(x.shape()));
    }
    std::vector<double> out(static_cast<std::size_t>(x.numel()));
    haar_analysis(x.data().data(), out.data(), h, w, c, false);
    return make_result({h / 2, w / 2, 4 * c}, std::move(out), {x}, "dwt2_haar",
                       [h, w, c](detail::Node& o) {
                           haar_synthesis(o.grad.data(), o.inputs[0]->grad_buffer().data(), h, w, c, true);
                       });
}

Tensor idwt2_haar_packed(const Tensor& packed) {
    require_map(packed, "idwt2_haar");
    if (packed.extent(2) % 4 != 0) {
        throw ShapeError("idwt2_haar: channel count must be divisible by 4, got " +
                         shape_str(packed.shape()));
    }
    const auto h = 2 * packed.extent(0), w = 2 * packed.extent(1), c = packed.extent(2) / 4;
    std::vector<double> out(static_cast<std::size_t>(packed.numel()));
    haar_synthesis(packed.data().data(), out.data(), h, w, c, false);
    return make_result({h, w, c}, std::move(out), {packed}, "idwt2_haar", [h, w, c](detail::Node& o) {
        haar_analysis(o.grad.data(), o.inputs[0]->grad_buffer().data(), h, w, c, true);
    });
}

SubbandSet dwt2_haar(const Tensor& x) {
    const Tensor packed = dwt2_haar_packed(x);
    const auto c = x.extent(2);
    return SubbandSet{slice(packed, 2, 0, c), slice(packed, 2, c, 2 * c), slice(packed, 2, 2 * c, 3 * c),
                      slice(packed, 2, 3 * c, 4 * c), x.shape()};
}

Tensor idwt2_haar(const SubbandSet& s) {
    const Shape& ref = s.ll.shape();
    for (const Tensor* t : {&s.lh, &s.hl, &s.hh}) {
        if (t->shape() != ref) {
            throw ShapeError("idwt2_haar: subband shapes differ, " + shape_str(ref) + " vs " +
                             shape_str(t->shape()));
        }
    }
    if (ref.size() != 3) throw ShapeError("idwt2_haar: subbands must be (H/2, W/2, C)");
    if (!s.source_shape.empty() && s.source_shape != Shape{2 * ref[0], 2 * ref[1], ref[2]}) {
        throw ShapeError("idwt2_haar: subbands " + shape_str(ref) + " inconsistent with source " +
                         shape_str(s.source_shape));
    }
    return idwt2_haar_packed(concat(2, {s.ll, s.lh, s.hl, s.hh}));
}

double energy(const Tensor& x) {
    double e = 0.0;
    for (double v : x.data()) e += v * v;
    return e;
}

}  // namespace wbanet
