#include <doctest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"
#include "wbanet/adam.hpp"
#include "wbanet/error.hpp"
#include "wbanet/gradcheck.hpp"
#include "wbanet/ops.hpp"

using namespace wbanet;
using namespace wbanet::testing;

namespace {

Tensor weighted_sum(const Tensor& y, const Tensor& r) { return sum(mul(y, r)); }

}  // namespace

TEST_SUITE("tensor") {
    TEST_CASE("factories") {
        const Tensor z = Tensor::zeros({2, 2});
        CHECK(z.shape() == Shape{2, 2});
        for (double v : z.data()) CHECK(v == 0.0);

        const Tensor c = Tensor::constant({3}, 1.5);
        for (double v : c.data()) CHECK(v == 1.5);

        const Tensor u1 = Tensor::uniform({4}, -1.0, 1.0, 7);
        const Tensor u2 = Tensor::uniform({4}, -1.0, 1.0, 7);
        CHECK(bitwise_equal(u1.data(), u2.data()));
        for (double v : u1.data()) {
            CHECK(v >= -1.0);
            CHECK(v < 1.0);
        }
        CHECK_FALSE(bitwise_equal(u1.data(), Tensor::uniform({4}, -1.0, 1.0, 8).data()));
    }

    TEST_CASE("invalid extents are rejected") {
        CHECK_THROWS_AS(Tensor::zeros({0}), ShapeError);
        CHECK_THROWS_AS(Tensor::zeros({2, -1}), ShapeError);
        CHECK_THROWS_AS(Tensor::zeros({}), ShapeError);
        CHECK_THROWS_AS(Tensor::from_values({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
    }

    TEST_CASE("requires_grad is settable on leaves only") {
        Tensor a = Tensor::zeros({2});
        CHECK_FALSE(a.requires_grad());
        a.set_requires_grad(true);
        CHECK(a.requires_grad());
        const Tensor b = scale(a, 2.0);
        CHECK_FALSE(b.is_leaf());
        Tensor b_copy = b;
        CHECK_THROWS_AS(b_copy.set_requires_grad(false), ContractError);
    }

    TEST_CASE("indexing and item") {
        const Tensor t = Tensor::from_values({2, 3}, {0, 1, 2, 3, 4, 5});
        CHECK(t.at({1, 2}) == 5.0);
        CHECK_THROWS_AS((void)t.at({2, 0}), ShapeError);
        CHECK_THROWS_AS((void)t.item(), ContractError);
        CHECK(Tensor::constant({1}, 3.0).item() == 3.0);
    }

    TEST_CASE("derive_seed separates streams") {
        CHECK(derive_seed(0, 1) != derive_seed(0, 2));
        CHECK(derive_seed(1, 1) != derive_seed(0, 1));
        CHECK(derive_seed(5, 9) == derive_seed(5, 9));
    }
}

TEST_SUITE("ops") {
    TEST_CASE("matmul examples") {
        const Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
        const Tensor eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
        CHECK(matmul(a, eye).data()[3] == 4.0);
        CHECK(bitwise_equal(matmul(a, eye).data(), a.data()));
        const Tensor ones = Tensor::from_values({2, 1}, {1, 1});
        const Tensor r = matmul(a, ones);
        CHECK(r.shape() == Shape{2, 1});
        CHECK(r[0] == 3.0);
        CHECK(r[1] == 7.0);
        CHECK_THROWS_AS(matmul(a, Tensor::zeros({3, 1})), ShapeError);
    }

    TEST_CASE("matmul gradient matches finite differences and the closed form") {
        Tensor a = Tensor::uniform({3, 4}, -1, 1, 11, true);
        Tensor b = Tensor::uniform({4, 2}, -1, 1, 12, true);
        auto loss = [&] { return sum(matmul(a, b)); };
        const auto ga = autodiff_grad(loss, a);
        const auto fd = numeric_grad([&] { return loss().item(); }, a);
        CHECK(rel_error(ga, fd) < 1e-5);
        // d/dA sum(AB) = 1 Bt, i.e. each row of the gradient is the row sums of B.
        for (int i = 0; i < 3; ++i) {
            for (int k = 0; k < 4; ++k) CHECK(ga[i * 4 + k] == doctest::Approx(b.at({k, 0}) + b.at({k, 1})));
        }
        const auto gb = autodiff_grad(loss, b);
        CHECK(rel_error(gb, numeric_grad([&] { return loss().item(); }, b)) < 1e-5);
    }

    TEST_CASE("transpose") {
        const Tensor a = Tensor::from_values({2, 3}, {0, 1, 2, 3, 4, 5});
        const Tensor t = transpose(a);
        CHECK(t.shape() == Shape{3, 2});
        CHECK(t.at({2, 1}) == 5.0);
        CHECK(t.at({0, 1}) == 3.0);
    }

    TEST_CASE("elementwise examples") {
        const Tensor s = add(Tensor::from_values({2}, {1, 2}), Tensor::zeros({2}));
        CHECK(s[0] == 1.0);
        CHECK(s[1] == 2.0);

        const Tensor p = mul(Tensor::constant({3, 5, 1}, 0.5), Tensor::constant({1, 1, 4}, 2.0));
        CHECK(p.shape() == Shape{3, 5, 4});
        for (double v : p.data()) CHECK(v == 1.0);

        CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
    }

    TEST_CASE("broadcast gradient is summed over broadcast axes") {
        Tensor a = Tensor::uniform({3, 4, 5}, -1, 1, 21, true);
        Tensor b = Tensor::uniform({1, 4, 1}, -1, 1, 22, true);
        auto loss = [&] { return sum(mul(a, b)); };
        const auto gb = autodiff_grad(loss, b);
        // Summed counterpart: d/db_j = sum over i, k of a_ijk.
        for (int j = 0; j < 4; ++j) {
            double expect = 0.0;
            for (int i = 0; i < 3; ++i) {
                for (int k = 0; k < 5; ++k) expect += a.at({i, j, k});
            }
            CHECK(gb[j] == doctest::Approx(expect).epsilon(1e-12));
        }
        CHECK(rel_error(gb, numeric_grad([&] { return loss().item(); }, b)) < 1e-6);
    }

    TEST_CASE("adding a broadcast zero is a bitwise identity") {
        std::mt19937_64 gen(5);
        for (int trial = 0; trial < 50; ++trial) {
            const Shape shape{1 + static_cast<std::int64_t>(gen() % 5), 1 + static_cast<std::int64_t>(gen() % 5),
                              1 + static_cast<std::int64_t>(gen() % 5)};
            const Tensor x = Tensor::uniform(shape, -10, 10, gen());
            const Tensor y = add(x, Tensor::zeros({1, 1, shape[2]}));
            CHECK(bitwise_equal(x.data(), y.data()));
        }
    }

    TEST_CASE("broadcast_to") {
        const Tensor b = broadcast_to(Tensor::from_values({1, 2}, {3, 4}), {3, 2});
        CHECK(b.shape() == Shape{3, 2});
        CHECK(b.at({2, 1}) == 4.0);
        CHECK_THROWS_AS(broadcast_to(Tensor::zeros({2}), {3}), ShapeError);
    }

    TEST_CASE("linear examples") {
        const Tensor x = Tensor::uniform({2, 4}, -1, 1, 3);
        Tensor eye = Tensor::zeros({4, 4});
        for (int i = 0; i < 4; ++i) eye.mutable_data()[i * 5] = 1.0;
        CHECK(bitwise_equal(linear(x, eye, Tensor::zeros({4})).data(), x.data()));

        const Tensor y = linear(Tensor::from_values({1, 2}, {1, 1}), Tensor::from_values({2, 1}, {1, 1}));
        CHECK(y.shape() == Shape{1, 1});
        CHECK(y.item() == 2.0);

        CHECK_THROWS_AS(linear(x, Tensor::zeros({3, 2})), ShapeError);
        CHECK_THROWS_AS(linear(x, Tensor::zeros({4, 2}), Tensor::zeros({3})), ShapeError);
    }

    TEST_CASE("linear gradient with respect to W and b") {
        Tensor x = Tensor::uniform({3, 3, 4}, -1, 1, 31, true);
        Tensor w = Tensor::uniform({4, 5}, -1, 1, 32, true);
        Tensor b = Tensor::uniform({5}, -1, 1, 33, true);
        const Tensor r = Tensor::uniform({3, 3, 5}, -1, 1, 34);
        auto loss = [&] { return weighted_sum(linear(x, w, b), r); };
        auto f = [&] { return loss().item(); };
        CHECK(rel_error(autodiff_grad(loss, w), numeric_grad(f, w)) < 1e-5);
        CHECK(rel_error(autodiff_grad(loss, b), numeric_grad(f, b)) < 1e-5);
        CHECK(rel_error(autodiff_grad(loss, x), numeric_grad(f, x)) < 1e-5);
    }

    TEST_CASE("activations") {
        CHECK(sigmoid(Tensor::zeros({1})).item() == 0.5);
        CHECK(gelu(Tensor::zeros({1})).item() == 0.0);
        const Tensor s = sigmoid(Tensor::from_values({2}, {50.0, -50.0}));
        CHECK(std::abs(s[0] - 1.0) < 1e-15);
        CHECK(std::abs(s[1]) < 1e-15);
        CHECK(s[1] > 0.0);
        const Tensor extreme = sigmoid(Tensor::from_values({2}, {1000.0, -1000.0}));
        CHECK(std::isfinite(extreme[0]));
        CHECK(std::isfinite(extreme[1]));

        // tanh-form GELU evaluated directly.
        for (double x : {-3.0, -0.7, 0.4, 2.5}) {
            const double c = std::sqrt(2.0 / std::numbers::pi);
            const double expect = 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
            CHECK(gelu(Tensor::constant({1}, x)).item() == doctest::Approx(expect).epsilon(1e-14));
            CHECK(activation(Activation::kGelu, Tensor::constant({1}, x)).item() ==
                  gelu(Tensor::constant({1}, x)).item());
        }
    }

    TEST_CASE("activation gradients") {
        Tensor x = Tensor::uniform({4, 3}, -3, 3, 41, true);
        const Tensor r = Tensor::uniform({4, 3}, -1, 1, 42);
        for (auto kind : {Activation::kGelu, Activation::kSigmoid}) {
            auto loss = [&] { return weighted_sum(activation(kind, x), r); };
            CHECK(rel_error(autodiff_grad(loss, x), numeric_grad([&] { return loss().item(); }, x)) < 1e-6);
        }
    }

    TEST_CASE("softmax rows examples") {
        const Tensor u = softmax_rows(Tensor::zeros({1, 3}));
        for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

        const Tensor big = softmax_rows(Tensor::from_values({1, 2}, {1000.0, 0.0}));
        CHECK(std::abs(big[0] - 1.0) < 1e-12);
        CHECK(std::abs(big[1]) < 1e-12);

        const Tensor l = softmax_rows(Tensor::from_values({1, 3}, {std::log(1.0), std::log(2.0), std::log(3.0)}));
        CHECK(l[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
        CHECK(l[1] == doctest::Approx(2.0 / 6.0).epsilon(1e-14));
        CHECK(l[2] == doctest::Approx(3.0 / 6.0).epsilon(1e-14));
    }

    TEST_CASE("softmax rows sum to one and ignore row shifts") {
        std::mt19937_64 gen(9);
        for (int trial = 0; trial < 20; ++trial) {
            const std::int64_t n = 1 + static_cast<std::int64_t>(gen() % 6);
            const std::int64_t m = 1 + static_cast<std::int64_t>(gen() % 9);
            const Tensor x = Tensor::uniform({n, m}, -20, 20, gen());
            const Tensor s = softmax_rows(x);
            const Tensor shift = Tensor::uniform({n, 1}, -50, 50, gen());
            const Tensor s2 = softmax_rows(add(x, shift));
            for (std::int64_t i = 0; i < n; ++i) {
                double total = 0.0;
                for (std::int64_t j = 0; j < m; ++j) {
                    CHECK(s.at({i, j}) >= 0.0);
                    total += s.at({i, j});
                    CHECK(std::abs(s.at({i, j}) - s2.at({i, j})) < 1e-12);
                }
                CHECK(std::abs(total - 1.0) < 1e-9);
            }
        }
    }

    TEST_CASE("global average pool") {
        const Tensor c = global_avg_pool(Tensor::constant({3, 5, 2}, 4.25));
        CHECK(c.shape() == Shape{1, 1, 2});
        CHECK(c[0] == 4.25);
        CHECK(c[1] == 4.25);
        CHECK(global_avg_pool(Tensor::from_values({2, 2, 1}, {1, 2, 3, 4})).item() == 2.5);

        Tensor x = Tensor::uniform({3, 4, 2}, -1, 1, 51, true);
        auto loss = [&] { return sum(global_avg_pool(x)); };
        const auto g = autodiff_grad(loss, x);
        for (double v : g) CHECK(v == doctest::Approx(1.0 / 12.0).epsilon(1e-15));
        CHECK(rel_error(g, numeric_grad([&] { return loss().item(); }, x)) < 1e-8);
    }

    TEST_CASE("concat and slice") {
        const Tensor a = Tensor::uniform({2, 2, 1}, -1, 1, 61);
        const Tensor b = Tensor::uniform({2, 2, 1}, -1, 1, 62);
        const Tensor ab = concat(2, {a, b});
        CHECK(ab.shape() == Shape{2, 2, 2});
        CHECK(bitwise_equal(slice(ab, 2, 0, 1).data(), a.data()));
        CHECK(bitwise_equal(slice(ab, 2, 1, 2).data(), b.data()));

        std::vector<Tensor> bands;
        for (int i = 0; i < 4; ++i) bands.push_back(Tensor::uniform({4, 4, 4}, -1, 1, 70 + i));
        const Tensor packed = concat(2, bands);
        CHECK(packed.shape() == Shape{4, 4, 16});
        for (int i = 0; i < 4; ++i) CHECK(bitwise_equal(slice(packed, 2, 4 * i, 4 * i + 4).data(), bands[i].data()));

        const Tensor rows = concat(0, {Tensor::zeros({1, 3}), Tensor::constant({2, 3}, 1.0)});
        CHECK(rows.shape() == Shape{3, 3});

        CHECK_THROWS_AS(concat(2, {Tensor::zeros({2, 2, 1}), Tensor::zeros({2, 3, 1})}), ShapeError);
        CHECK_THROWS_AS(slice(ab, 2, 1, 3), ShapeError);
    }

    TEST_CASE("concat and slice gradients split back") {
        Tensor a = Tensor::uniform({2, 3, 2}, -1, 1, 81, true);
        Tensor b = Tensor::uniform({2, 3, 3}, -1, 1, 82, true);
        const Tensor r = Tensor::uniform({2, 3, 5}, -1, 1, 83);
        auto loss = [&] { return weighted_sum(concat(2, {a, b}), r); };
        const auto ga = autodiff_grad(loss, a);
        for (std::int64_t i = 0; i < 2; ++i) {
            for (std::int64_t j = 0; j < 3; ++j) {
                for (std::int64_t k = 0; k < 2; ++k) CHECK(ga[(i * 3 + j) * 2 + k] == r.at({i, j, k}));
            }
        }
        auto sloss = [&] { return sum(slice(b, 1, 1, 3)); };
        const auto gb = autodiff_grad(sloss, b);
        for (std::int64_t i = 0; i < 2; ++i) {
            for (std::int64_t j = 0; j < 3; ++j) {
                for (std::int64_t k = 0; k < 3; ++k) CHECK(gb[(i * 3 + j) * 3 + k] == (j >= 1 ? 1.0 : 0.0));
            }
        }
    }

    TEST_CASE("reshape keeps values") {
        const Tensor x = Tensor::uniform({2, 3, 4}, -1, 1, 91);
        const Tensor y = reshape(x, {6, 4});
        CHECK(y.shape() == Shape{6, 4});
        CHECK(bitwise_equal(x.data(), y.data()));
        CHECK_THROWS_AS(reshape(x, {5, 5}), ShapeError);
    }

    TEST_CASE("mean and sum") {
        const Tensor x = Tensor::from_values({2, 2}, {1, 2, 3, 6});
        CHECK(sum(x).item() == 12.0);
        CHECK(mean(x).item() == 3.0);
        CHECK(sum(x).shape() == Shape{1});
    }

    TEST_CASE("cross entropy value and gradient") {
        const Tensor logits = Tensor::from_values({2, 2}, {0.0, 0.0, 2.0, -1.0});
        const std::vector<int> labels{1, 0};
        const double expect = 0.5 * (std::log(2.0) + std::log1p(std::exp(-3.0)));
        CHECK(cross_entropy(logits, labels).item() == doctest::Approx(expect).epsilon(1e-14));

        Tensor z = Tensor::uniform({3, 2}, -2, 2, 101, true);
        const std::vector<int> y{0, 1, 1};
        auto loss = [&] { return cross_entropy(z, y); };
        CHECK(rel_error(autodiff_grad(loss, z), numeric_grad([&] { return loss().item(); }, z)) < 1e-7);

        const std::vector<int> bad{0, 2, 1};
        CHECK_THROWS_AS(cross_entropy(z, bad), ContractError);
        const std::vector<int> short_labels{0};
        CHECK_THROWS_AS(cross_entropy(z, short_labels), ShapeError);
    }
}

TEST_SUITE("autodiff") {
    TEST_CASE("gradient of sum(W) is all ones") {
        Tensor w = Tensor::uniform({3, 2}, -1, 1, 1, true);
        backward(sum(w));
        for (double g : w.grad()) CHECK(g == 1.0);
    }

    TEST_CASE("sum((XW)^2) matches finite differences") {
        Tensor x = Tensor::uniform({4, 3}, -1, 1, 2, true);
        Tensor w = Tensor::uniform({3, 2}, -1, 1, 3, true);
        auto loss = [&] {
            const Tensor y = matmul(x, w);
            return sum(mul(y, y));
        };
        auto f = [&] { return loss().item(); };
        CHECK(rel_error(autodiff_grad(loss, w), numeric_grad(f, w)) < 1e-4);
        CHECK(rel_error(autodiff_grad(loss, x), numeric_grad(f, x)) < 1e-4);
    }

    TEST_CASE("backward contracts") {
        Tensor w = Tensor::uniform({3}, -1, 1, 4, true);
        const Tensor loss = sum(scale(w, 2.0));
        backward(loss);
        CHECK_THROWS_AS(backward(loss), ContractError);
        CHECK_THROWS_AS(backward(scale(w, 2.0)), ContractError);
        CHECK_THROWS_AS(backward(sum(Tensor::zeros({2}))), ContractError);
    }

    TEST_CASE("shared subgraph reached twice is consumed once") {
        Tensor w = Tensor::uniform({2}, -1, 1, 5, true);
        const Tensor h = scale(w, 3.0);
        const Tensor loss = sum(mul(h, h));
        backward(loss);
        for (int i = 0; i < 2; ++i) CHECK(w.grad()[i] == doctest::Approx(18.0 * w[i]));
        CHECK_THROWS_AS(backward(sum(h)), ContractError);
    }

    TEST_CASE("leaf gradients accumulate across graphs") {
        Tensor w = Tensor::uniform({2}, -1, 1, 6, true);
        backward(sum(w));
        backward(sum(scale(w, 2.0)));
        for (double g : w.grad()) CHECK(g == 3.0);
        w.zero_grad();
        backward(sum(w));
        for (double g : w.grad()) CHECK(g == 1.0);
    }

    TEST_CASE("no-grad guard stops recording") {
        Tensor w = Tensor::uniform({2}, -1, 1, 7, true);
        {
            NoGradGuard guard;
            CHECK_FALSE(grad_enabled());
            CHECK_FALSE(scale(w, 2.0).requires_grad());
        }
        CHECK(grad_enabled());
        CHECK(scale(w, 2.0).requires_grad());
    }

    TEST_CASE("detach disconnects") {
        Tensor w = Tensor::uniform({2}, -1, 1, 8, true);
        const Tensor d = scale(w, 2.0).detach();
        CHECK(d.is_leaf());
        CHECK_FALSE(d.requires_grad());
        CHECK(d[0] == 2.0 * w[0]);
    }

    TEST_CASE("gradcheck flags a wrong backward") {
        Tensor x = Tensor::uniform({5}, -1, 1, 9, true);
        // Forward doubles the input, backward claims a factor of three.
        auto wrong = [](const Tensor& a) {
            std::vector<double> out(a.data().begin(), a.data().end());
            for (auto& v : out) v *= 2.0;
            return make_result(a.shape(), std::move(out), {a}, "wrong", [](detail::Node& o) {
                auto& g = o.inputs[0]->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += 3.0 * o.grad[i];
            });
        };
        const Tensor r = Tensor::uniform({5}, -1, 1, 10);
        const auto bad = gradcheck([&] { return weighted_sum(wrong(x), r); }, {x});
        CHECK(bad.max_rel_error > 0.3);
        const auto good = gradcheck([&] { return weighted_sum(scale(x, 2.0), r); }, {x});
        CHECK(good.max_rel_error < 1e-8);
    }
}

TEST_SUITE("adam") {
    TEST_CASE("zero gradient leaves parameters unchanged") {
        Tensor w = Tensor::uniform({4}, -1, 1, 1, true);
        const std::vector<double> before(w.data().begin(), w.data().end());
        backward(sum(scale(w, 0.0)));
        std::vector<Tensor> params{w};
        AdamState state;
        adam_step(params, state);
        CHECK(bitwise_equal(before, w.data()));
        CHECK(state.t == 1);
    }

    TEST_CASE("single step moves by lr against the gradient sign") {
        Tensor w = Tensor::from_values({3}, {0.5, -0.25, 2.0}, true);
        const Tensor g = Tensor::from_values({3}, {0.3, -7.0, 1e-3});
        const std::vector<double> before(w.data().begin(), w.data().end());
        backward(sum(mul(w, g)));
        std::vector<Tensor> params{w};
        AdamState state;
        const AdamOptions opts;
        adam_step(params, state, opts);
        // m_hat = g and v_hat = g^2 after bias correction, so the step is -lr g / (|g| + eps).
        for (int i = 0; i < 3; ++i) {
            const double delta = w[i] - before[static_cast<std::size_t>(i)];
            const double expect = -opts.lr * g[i] / (std::abs(g[i]) + opts.eps);
            CHECK(delta == doctest::Approx(expect).epsilon(1e-9));
            // Distance from -lr sign(g) is lr eps / (|g| + eps).
            CHECK(std::abs(delta + opts.lr * (g[i] > 0 ? 1.0 : -1.0)) <= 1.01 * opts.lr * opts.eps / std::abs(g[i]));
        }
    }

    TEST_CASE("scalar quadratic descends monotonically") {
        Tensor w = Tensor::constant({1}, 3.0, true);
        std::vector<Tensor> params{w};
        AdamState state;
        AdamOptions opts;
        opts.lr = 1e-2;
        double previous = 9.0;
        for (int step = 0; step < 100; ++step) {
            w.zero_grad();
            const Tensor loss = sum(mul(w, w));
            const double value = loss.item();
            CHECK(value <= previous);
            previous = value;
            backward(loss);
            adam_step(params, state, opts);
        }
        CHECK(w.item() * w.item() < 9.0);
        CHECK(state.t == 100);
    }

    TEST_CASE("missing gradient is a contract error") {
        Tensor w = Tensor::constant({1}, 1.0, true);
        std::vector<Tensor> params{w};
        AdamState state;
        CHECK_THROWS_AS(adam_step(params, state), ContractError);
    }
}
