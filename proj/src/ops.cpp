#include "wbanet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "wbanet/error.hpp"

namespace wbanet {

namespace {

using detail::Node;

Node& input(Node& out, std::size_t i) { return *out.inputs[i]; }

void require_rank(const Tensor& t, std::int64_t rank, const char* op) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
    }
}

std::int64_t normalize_axis(std::int64_t axis, std::int64_t rank) {
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw ShapeError("axis out of range");
    return axis;
}

// Row-major strides, with 0 on axes that are broadcast (extent 1 in `in`,
// larger in `out`). `in` is right-aligned against `out`.
std::vector<std::int64_t> broadcast_strides(const Shape& in, const Shape& out) {
    std::vector<std::int64_t> strides(out.size(), 0);
    std::int64_t stride = 1;
    const auto offset = out.size() - in.size();
    for (std::size_t k = in.size(); k-- > 0;) {
        strides[k + offset] = in[k] == 1 && out[k + offset] != 1 ? 0 : stride;
        stride *= in[k];
    }
    return strides;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (std::size_t k = 0; k < rank; ++k) {
        const std::int64_t ea = k + a.size() >= rank ? a[k + a.size() - rank] : 1;
        const std::int64_t eb = k + b.size() >= rank ? b[k + b.size() - rank] : 1;
        if (ea != eb && ea != 1 && eb != 1) {
            throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) +
                             " are not broadcastable");
        }
        out[k] = std::max(ea, eb);
    }
    return out;
}

// Calls fn(out_index, offset_a, offset_b) over every element of `out`.
template <typename Fn>
void for_each_broadcast(const Shape& out, const std::vector<std::int64_t>& sa,
                        const std::vector<std::int64_t>& sb, Fn&& fn) {
    const std::size_t rank = out.size();
    const std::int64_t n = shape_numel(out);
    std::vector<std::int64_t> idx(rank, 0);
    std::int64_t oa = 0;
    std::int64_t ob = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        fn(i, oa, ob);
        for (std::size_t k = rank; k-- > 0;) {
            ++idx[k];
            oa += sa[k];
            ob += sb[k];
            if (idx[k] < out[k]) break;
            oa -= sa[k] * out[k];
            ob -= sb[k] * out[k];
            idx[k] = 0;
        }
    }
}

double gelu_value(double x) {
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    return 0.5 * x * (1.0 + std::tanh(kC * (x + 0.044715 * x * x * x)));
}

double gelu_derivative(double x) {
    constexpr double kC = 0.7978845608028654;
    const double t = std::tanh(kC * (x + 0.044715 * x * x * x));
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kC * (1.0 + 3.0 * 0.044715 * x * x);
}

double sigmoid_value(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// c[m,n] += a[m,k] * b[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
             std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c[m,k] += g[m,n] * b[k,n]^T
void gemm_nt(const double* g, const double* b, double* c, std::int64_t m, std::int64_t n,
             std::int64_t k) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double s = 0.0;
            for (std::int64_t j = 0; j < n; ++j) s += grow[j] * brow[j];
            c[i * k + p] += s;
        }
    }
}

// c[k,n] += a[m,k]^T * g[m,n]
void gemm_tn(const double* a, const double* g, double* c, std::int64_t m, std::int64_t k,
             std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            double* crow = c + p * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * grow[j];
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const auto m = a.extent(0), k = a.extent(1), n = b.extent(1);
    if (b.extent(0) != k) {
        throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
    gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
    return make_result({m, n}, std::move(out), {a, b}, "matmul", [m, k, n](Node& o) {
        Node& na = input(o, 0);
        Node& nb = input(o, 1);
        if (na.requires_grad) gemm_nt(o.grad.data(), nb.data.data(), na.grad_buffer().data(), m, n, k);
        if (nb.requires_grad) gemm_tn(na.data.data(), o.grad.data(), nb.grad_buffer().data(), m, k, n);
    });
}

Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    const auto m = a.extent(0), n = a.extent(1);
    std::vector<double> out(static_cast<std::size_t>(m * n));
    const auto src = a.data();
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) out[j * m + i] = src[i * n + j];
    return make_result({n, m}, std::move(out), {a}, "transpose", [m, n](Node& o) {
        Node& na = input(o, 0);
        auto& g = na.grad_buffer();
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < n; ++j) g[i * n + j] += o.grad[j * m + i];
    });
}

Tensor ew(EwOp op, const Tensor& a, const Tensor& b) {
    const Shape out_shape = broadcast_shape(a.shape(), b.shape());
    const auto sa = broadcast_strides(a.shape(), out_shape);
    const auto sb = broadcast_strides(b.shape(), out_shape);
    std::vector<double> out(static_cast<std::size_t>(shape_numel(out_shape)));
    const auto da = a.data();
    const auto db = b.data();
    if (op == EwOp::kAdd) {
        for_each_broadcast(out_shape, sa, sb,
                           [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { out[i] = da[ia] + db[ib]; });
    } else {
        for_each_broadcast(out_shape, sa, sb,
                           [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { out[i] = da[ia] * db[ib]; });
    }
    return make_result(out_shape, std::move(out), {a, b}, op == EwOp::kAdd ? "add" : "mul",
                       [op, out_shape, sa, sb](Node& o) {
                           Node& na = input(o, 0);
                           Node& nb = input(o, 1);
                           double* ga = na.requires_grad ? na.grad_buffer().data() : nullptr;
                           double* gb = nb.requires_grad ? nb.grad_buffer().data() : nullptr;
                           const double* g = o.grad.data();
                           if (op == EwOp::kAdd) {
                               for_each_broadcast(out_shape, sa, sb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
                                   if (ga) ga[ia] += g[i];
                                   if (gb) gb[ib] += g[i];
                               });
                           } else {
                               const double* va = na.data.data();
                               const double* vb = nb.data.data();
                               for_each_broadcast(out_shape, sa, sb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
                                   if (ga) ga[ia] += g[i] * vb[ib];
                                   if (gb) gb[ib] += g[i] * va[ia];
                               });
                           }
                       });
}

Tensor add(const Tensor& a, const Tensor& b) { return ew(EwOp::kAdd, a, b); }

Tensor mul(const Tensor& a, const Tensor& b) { return ew(EwOp::kMul, a, b); }

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= factor;
    return make_result(a.shape(), std::move(out), {a}, "scale", [factor](Node& o) {
        auto& g = input(o, 0).grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * o.grad[i];
    });
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
    check_shape(shape);
    if (broadcast_shape(a.shape(), shape) != shape) {
        throw ShapeError("cannot broadcast " + shape_str(a.shape()) + " to " + shape_str(shape));
    }
    const auto sa = broadcast_strides(a.shape(), shape);
    const std::vector<std::int64_t> dense(shape.size(), 0);
    std::vector<double> out(static_cast<std::size_t>(shape_numel(shape)));
    const auto da = a.data();
    for_each_broadcast(shape, sa, dense, [&](std::int64_t i, std::int64_t ia, std::int64_t) { out[i] = da[ia]; });
    return make_result(shape, std::move(out), {a}, "broadcast_to", [shape, sa, dense](Node& o) {
        double* g = input(o, 0).grad_buffer().data();
        for_each_broadcast(shape, sa, dense,
                           [&](std::int64_t i, std::int64_t ia, std::int64_t) { g[ia] += o.grad[i]; });
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const std::optional<Tensor>& b) {
    require_rank(w, 2, "linear");
    const auto c_in = w.extent(0), c_out = w.extent(1);
    if (x.extent(-1) != c_in) {
        throw ShapeError("linear: input channels " + std::to_string(x.extent(-1)) +
                         " do not match weight " + shape_str(w.shape()));
    }
    if (b && (b->rank() != 1 || b->extent(0) != c_out)) {
        throw ShapeError("linear: bias shape " + shape_str(b->shape()) + " does not match c_out");
    }
    const auto rows = x.numel() / c_in;
    Shape out_shape = x.shape();
    out_shape.back() = c_out;
    std::vector<double> out(static_cast<std::size_t>(rows * c_out), 0.0);
    if (b) {
        const auto bias = b->data();
        for (std::int64_t r = 0; r < rows; ++r) std::copy(bias.begin(), bias.end(), out.begin() + r * c_out);
    }
    gemm_nn(x.data().data(), w.data().data(), out.data(), rows, c_in, c_out);
    std::vector<Tensor> inputs{x, w};
    if (b) inputs.push_back(*b);
    return make_result(std::move(out_shape), std::move(out), std::move(inputs), "linear",
                       [rows, c_in, c_out](Node& o) {
                           Node& nx = input(o, 0);
                           Node& nw = input(o, 1);
                           if (nx.requires_grad)
                               gemm_nt(o.grad.data(), nw.data.data(), nx.grad_buffer().data(), rows, c_out, c_in);
                           if (nw.requires_grad)
                               gemm_tn(nx.data.data(), o.grad.data(), nw.grad_buffer().data(), rows, c_in, c_out);
                           if (o.inputs.size() > 2 && input(o, 2).requires_grad) {
                               auto& gb = input(o, 2).grad_buffer();
                               for (std::int64_t r = 0; r < rows; ++r)
                                   for (std::int64_t j = 0; j < c_out; ++j) gb[j] += o.grad[r * c_out + j];
                           }
                       });
}

Tensor gelu(const Tensor& x) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (auto& v : out) v = gelu_value(v);
    return make_result(x.shape(), std::move(out), {x}, "gelu", [](Node& o) {
        Node& nx = input(o, 0);
        auto& g = nx.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * gelu_derivative(nx.data[i]);
    });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (auto& v : out) v = sigmoid_value(v);
    return make_result(x.shape(), std::move(out), {x}, "sigmoid", [](Node& o) {
        auto& g = input(o, 0).grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * o.data[i] * (1.0 - o.data[i]);
    });
}

Tensor activation(Activation kind, const Tensor& x) {
    return kind == Activation::kGelu ? gelu(x) : sigmoid(x);
}

Tensor softmax_rows(const Tensor& x) {
    require_rank(x, 2, "softmax_rows");
    const auto n = x.extent(0), m = x.extent(1);
    std::vector<double> out(x.data().begin(), x.data().end());
    for (std::int64_t r = 0; r < n; ++r) {
        double* row = out.data() + r * m;
        const double mx = *std::max_element(row, row + m);
        double s = 0.0;
        for (std::int64_t j = 0; j < m; ++j) {
            row[j] = std::exp(row[j] - mx);
            s += row[j];
        }
        for (std::int64_t j = 0; j < m; ++j) row[j] /= s;
    }
    return make_result(x.shape(), std::move(out), {x}, "softmax_rows", [n, m](Node& o) {
        auto& g = input(o, 0).grad_buffer();
        for (std::int64_t r = 0; r < n; ++r) {
            const double* y = o.data.data() + r * m;
            const double* gy = o.grad.data() + r * m;
            double dot = 0.0;
            for (std::int64_t j = 0; j < m; ++j) dot += gy[j] * y[j];
            for (std::int64_t j = 0; j < m; ++j) g[r * m + j] += y[j] * (gy[j] - dot);
        }
    });
}

Tensor global_avg_pool(const Tensor& x) {
    require_rank(x, 3, "global_avg_pool");
    const auto hw = x.extent(0) * x.extent(1), c = x.extent(2);
    std::vector<double> out(static_cast<std::size_t>(c), 0.0);
    const auto d = x.data();
    for (std::int64_t p = 0; p < hw; ++p)
        for (std::int64_t k = 0; k < c; ++k) out[k] += d[p * c + k];
    for (auto& v : out) v /= static_cast<double>(hw);
    return make_result({1, 1, c}, std::move(out), {x}, "global_avg_pool", [hw, c](Node& o) {
        auto& g = input(o, 0).grad_buffer();
        const double inv = 1.0 / static_cast<double>(hw);
        for (std::int64_t p = 0; p < hw; ++p)
            for (std::int64_t k = 0; k < c; ++k) g[p * c + k] += o.grad[k] * inv;
    });
}

Tensor concat(std::int64_t axis, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat: no parts");
    const auto rank = parts.front().rank();
    axis = normalize_axis(axis, rank);
    Shape out_shape = parts.front().shape();
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        if (p.rank() != rank) throw ShapeError("concat: rank mismatch");
        for (std::int64_t k = 0; k < rank; ++k) {
            if (k != axis && p.shape()[k] != out_shape[k]) {
                throw ShapeError("concat: parts disagree on axis " + std::to_string(k) + ": " +
                                 shape_str(p.shape()) + " vs " + shape_str(parts.front().shape()));
            }
        }
        out_shape[axis] += p.shape()[axis];
    }
    std::int64_t outer = 1, inner = 1;
    for (std::int64_t k = 0; k < axis; ++k) outer *= out_shape[k];
    for (std::int64_t k = axis + 1; k < rank; ++k) inner *= out_shape[k];
    const std::int64_t out_block = out_shape[axis] * inner;

    std::vector<double> out(static_cast<std::size_t>(shape_numel(out_shape)));
    std::vector<std::int64_t> widths;
    std::int64_t offset = 0;
    for (const auto& p : parts) {
        const std::int64_t block = p.shape()[axis] * inner;
        const auto d = p.data();
        for (std::int64_t o = 0; o < outer; ++o)
            std::copy_n(d.begin() + o * block, block, out.begin() + o * out_block + offset);
        widths.push_back(block);
        offset += block;
    }
    return make_result(std::move(out_shape), std::move(out), parts, "concat",
                       [outer, out_block, widths](Node& o) {
                           std::int64_t off = 0;
                           for (std::size_t i = 0; i < widths.size(); ++i) {
                               Node& np = input(o, i);
                               const std::int64_t block = widths[i];
                               if (np.requires_grad) {
                                   auto& g = np.grad_buffer();
                                   for (std::int64_t r = 0; r < outer; ++r)
                                       for (std::int64_t j = 0; j < block; ++j)
                                           g[r * block + j] += o.grad[r * out_block + off + j];
                               }
                               off += block;
                           }
                       });
}

Tensor slice(const Tensor& x, std::int64_t axis, std::int64_t begin, std::int64_t end) {
    axis = normalize_axis(axis, x.rank());
    const auto& shape = x.shape();
    if (begin < 0 || end > shape[axis] || begin >= end) {
        throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + shape_str(shape));
    }
    std::int64_t outer = 1, inner = 1;
    for (std::int64_t k = 0; k < axis; ++k) outer *= shape[k];
    for (std::int64_t k = axis + 1; k < x.rank(); ++k) inner *= shape[k];
    const std::int64_t in_block = shape[axis] * inner;
    const std::int64_t block = (end - begin) * inner;
    const std::int64_t off = begin * inner;
    Shape out_shape = shape;
    out_shape[axis] = end - begin;
    std::vector<double> out(static_cast<std::size_t>(outer * block));
    const auto d = x.data();
    for (std::int64_t o = 0; o < outer; ++o)
        std::copy_n(d.begin() + o * in_block + off, block, out.begin() + o * block);
    return make_result(std::move(out_shape), std::move(out), {x}, "slice",
                       [outer, in_block, block, off](Node& o) {
                           auto& g = input(o, 0).grad_buffer();
                           for (std::int64_t r = 0; r < outer; ++r)
                               for (std::int64_t j = 0; j < block; ++j)
                                   g[r * in_block + off + j] += o.grad[r * block + j];
                       });
}

Tensor reshape(const Tensor& x, const Shape& shape) {
    check_shape(shape);
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    return make_result(shape, std::move(out), {x}, "reshape", [](Node& o) {
        auto& g = input(o, 0).grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    });
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    return make_result({1}, {s}, {x}, "sum", [](Node& o) {
        auto& g = input(o, 0).grad_buffer();
        for (auto& v : g) v += o.grad[0];
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
    require_rank(logits, 2, "cross_entropy");
    const auto n = logits.extent(0), k = logits.extent(1);
    if (static_cast<std::int64_t>(labels.size()) != n) {
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
    }
    const auto d = logits.data();
    std::vector<double> probs(static_cast<std::size_t>(n * k));
    double loss = 0.0;
    for (std::int64_t r = 0; r < n; ++r) {
        const int y = labels[r];
        if (y < 0 || y >= k) throw ContractError("cross_entropy: label out of range");
        const double* row = d.data() + r * k;
        const double mx = *std::max_element(row, row + k);
        double s = 0.0;
        for (std::int64_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
        const double log_z = mx + std::log(s);
        loss += log_z - row[y];
        for (std::int64_t j = 0; j < k; ++j) probs[r * k + j] = std::exp(row[j] - log_z);
    }
    loss /= static_cast<double>(n);
    std::vector<int> y(labels.begin(), labels.end());
    return make_result({1}, {loss}, {logits}, "cross_entropy",
                       [n, k, probs = std::move(probs), y = std::move(y)](Node& o) {
                           auto& g = input(o, 0).grad_buffer();
                           const double scale = o.grad[0] / static_cast<double>(n);
                           for (std::int64_t r = 0; r < n; ++r) {
                               for (std::int64_t j = 0; j < k; ++j) {
                                   const double target = j == y[r] ? 1.0 : 0.0;
                                   g[r * k + j] += scale * (probs[r * k + j] - target);
                               }
                           }
                       });
}

}  // namespace wbanet
