#include "wbanet/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "wbanet/bam.hpp"
#include "wbanet/evalio.hpp"
#include "wbanet/gradcheck.hpp"
#include "wbanet/model.hpp"
#include "wbanet/ops.hpp"
#include "wbanet/wavelet.hpp"
#include "wbanet/wsm.hpp"

namespace wbanet {

namespace {

using Clock = std::chrono::steady_clock;

Tensor leaf(const Shape& s, std::uint64_t seed, std::uint64_t stream, double lo = -1.0, double hi = 1.0) {
    return Tensor::uniform(s, lo, hi, derive_seed(seed, stream), true);
}

Tensor fixed(const Shape& s, std::uint64_t seed, std::uint64_t stream) {
    return Tensor::uniform(s, -1.0, 1.0, derive_seed(seed, stream), false);
}

// sum(y * r) with a fixed random r, so linear ops still get non-constant gradients.
Tensor weighted_sum(const Tensor& y, const Tensor& r) { return sum(mul(y, r)); }

double check(const std::function<Tensor()>& f, std::vector<Tensor> wrt) {
    return gradcheck(f, std::move(wrt)).max_rel_error;
}

std::int64_t dim(std::mt19937_64& gen, std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(gen() % static_cast<std::uint64_t>(hi - lo + 1));
}

}  // namespace

WaveletPair haar_wavelet_pair() {
    return {[](const Tensor& x) { return dwt2_haar_packed(x); }, [](const Tensor& s) { return idwt2_haar_packed(s); }};
}

SuiteResult reconstruction_suite(const WaveletPair& wavelet, int cases, std::uint64_t seed) {
    const auto start = Clock::now();
    SuiteResult r{"wavelet reconstruction", true, "", 0.0};
    std::mt19937_64 gen(seed);
    double worst_forward = 0.0, worst_inverse = 0.0, worst_energy = 0.0;
    NoGradGuard no_grad;
    for (int i = 0; i < cases; ++i) {
        const auto h = 2 * dim(gen, 1, 16), w = 2 * dim(gen, 1, 16), c = dim(gen, 1, 8);
        const Tensor x = Tensor::uniform({h, w, c}, -1.0, 1.0, gen());
        const Tensor s = wavelet.analysis(x);
        const Tensor back = wavelet.synthesis(s);
        const Tensor sub = Tensor::uniform({h / 2, w / 2, 4 * c}, -1.0, 1.0, gen());
        const Tensor again = wavelet.analysis(wavelet.synthesis(sub));
        if (back.shape() != x.shape() || again.shape() != sub.shape()) {
            r.passed = false;
            r.detail = "shape mismatch";
            break;
        }
        for (std::int64_t k = 0; k < x.numel(); ++k) {
            worst_forward = std::max(worst_forward, std::abs(back[k] - x[k]));
            worst_inverse = std::max(worst_inverse, std::abs(again[k] - sub[k]));
        }
        worst_energy = std::max(worst_energy, std::abs(energy(s) - energy(x)));
    }
    if (r.detail.empty()) {
        r.passed = worst_forward < 1e-9 && worst_inverse < 1e-9 && worst_energy < 1e-9;
        std::ostringstream os;
        os << cases << " cases, max |idwt(dwt(X)) - X| = " << worst_forward << ", max |dwt(idwt(S)) - S| = "
           << worst_inverse << ", max energy drift = " << worst_energy;
        r.detail = os.str();
    }
    r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return r;
}

std::vector<GradientCase> gradient_cases() {
    std::vector<GradientCase> cases;
    auto add_case = [&](std::string name, double tol, std::function<double(std::uint64_t)> fn) {
        cases.push_back({std::move(name), tol, std::move(fn)});
    };

    add_case("matmul", 1e-4, [](std::uint64_t s) {
        auto a = leaf({3, 4}, s, 0), b = leaf({4, 2}, s, 1);
        auto r = fixed({3, 2}, s, 2);
        return check([&] { return weighted_sum(matmul(a, b), r); }, {a, b});
    });
    add_case("transpose", 1e-4, [](std::uint64_t s) {
        auto a = leaf({3, 5}, s, 0);
        auto r = fixed({5, 3}, s, 1);
        return check([&] { return weighted_sum(transpose(a), r); }, {a});
    });
    add_case("ew_add_broadcast", 1e-4, [](std::uint64_t s) {
        auto a = leaf({3, 4, 2}, s, 0), b = leaf({1, 4, 1}, s, 1);
        auto r = fixed({3, 4, 2}, s, 2);
        return check([&] { return weighted_sum(add(a, b), r); }, {a, b});
    });
    add_case("ew_mul_broadcast", 1e-4, [](std::uint64_t s) {
        auto a = leaf({3, 4, 2}, s, 0), b = leaf({1, 1, 2}, s, 1);
        auto r = fixed({3, 4, 2}, s, 2);
        return check([&] { return weighted_sum(mul(a, b), r); }, {a, b});
    });
    add_case("scale", 1e-4, [](std::uint64_t s) {
        auto a = leaf({4}, s, 0);
        auto r = fixed({4}, s, 1);
        return check([&] { return weighted_sum(scale(a, -1.7), r); }, {a});
    });
    add_case("broadcast_to", 1e-4, [](std::uint64_t s) {
        auto a = leaf({1, 1, 3}, s, 0);
        auto r = fixed({2, 3, 3}, s, 1);
        return check([&] { return weighted_sum(broadcast_to(a, {2, 3, 3}), r); }, {a});
    });
    add_case("linear", 1e-4, [](std::uint64_t s) {
        auto x = leaf({2, 3, 4}, s, 0), w = leaf({4, 3}, s, 1), b = leaf({3}, s, 2);
        auto r = fixed({2, 3, 3}, s, 3);
        return check([&] { return weighted_sum(linear(x, w, b), r); }, {x, w, b});
    });
    add_case("gelu", 1e-4, [](std::uint64_t s) {
        auto x = leaf({10}, s, 0, -3.0, 3.0);
        auto r = fixed({10}, s, 1);
        return check([&] { return weighted_sum(gelu(x), r); }, {x});
    });
    add_case("sigmoid", 1e-4, [](std::uint64_t s) {
        auto x = leaf({10}, s, 0, -4.0, 4.0);
        auto r = fixed({10}, s, 1);
        return check([&] { return weighted_sum(sigmoid(x), r); }, {x});
    });
    add_case("softmax_rows", 1e-4, [](std::uint64_t s) {
        auto x = leaf({3, 5}, s, 0, -2.0, 2.0);
        auto r = fixed({3, 5}, s, 1);
        return check([&] { return weighted_sum(softmax_rows(x), r); }, {x});
    });
    add_case("global_avg_pool", 1e-4, [](std::uint64_t s) {
        auto x = leaf({3, 2, 4}, s, 0);
        auto r = fixed({1, 1, 4}, s, 1);
        return check([&] { return weighted_sum(global_avg_pool(x), r); }, {x});
    });
    add_case("concat", 1e-4, [](std::uint64_t s) {
        auto a = leaf({2, 2, 1}, s, 0), b = leaf({2, 2, 3}, s, 1);
        auto r = fixed({2, 2, 4}, s, 2);
        return check([&] { return weighted_sum(concat(2, {a, b}), r); }, {a, b});
    });
    add_case("slice", 1e-4, [](std::uint64_t s) {
        auto a = leaf({4, 6}, s, 0);
        auto r = fixed({4, 3}, s, 1);
        return check([&] { return weighted_sum(slice(a, 1, 2, 5), r); }, {a});
    });
    add_case("reshape", 1e-4, [](std::uint64_t s) {
        auto a = leaf({2, 6}, s, 0);
        auto r = fixed({3, 4}, s, 1);
        return check([&] { return weighted_sum(reshape(a, {3, 4}), r); }, {a});
    });
    add_case("cross_entropy", 1e-4, [](std::uint64_t s) {
        auto x = leaf({4, 2}, s, 0, -2.0, 2.0);
        const std::vector<int> y{0, 1, 1, 0};
        return check([&] { return cross_entropy(x, y); }, {x});
    });
    add_case("dwt2_haar", 1e-4, [](std::uint64_t s) {
        auto x = leaf({4, 6, 2}, s, 0);
        auto r = fixed({2, 3, 8}, s, 1);
        return check([&] { return weighted_sum(dwt2_haar_packed(x), r); }, {x});
    });
    add_case("idwt2_haar", 1e-4, [](std::uint64_t s) {
        auto x = leaf({2, 3, 8}, s, 0);
        auto r = fixed({4, 6, 2}, s, 1);
        return check([&] { return weighted_sum(idwt2_haar_packed(x), r); }, {x});
    });
    add_case("wave_attention", 1e-4, [](std::uint64_t s) {
        auto x = leaf({4, 4, 8}, s, 0);
        WsmParams p = WsmParams::init(8, 2, derive_seed(s, 1));
        auto r = fixed({4, 4, 8}, s, 2);
        return check([&] { return weighted_sum(wave_attention(x, p), r); }, {x, p.w_d, p.w_q, p.kv_conv, p.w_o});
    });
    add_case("bam_forward", 1e-4, [](std::uint64_t s) {
        auto x = leaf({4, 4, 4}, s, 0);
        BamParams p = BamParams::init(4, derive_seed(s, 1));
        auto r = fixed({4, 4, 4}, s, 2);
        return check([&] { return weighted_sum(bam_forward(x, p), r); }, {x, p.fc_c1, p.fc_c2, p.fc_s1, p.fc_s2});
    });
    add_case("model_end_to_end", 1e-3, [](std::uint64_t s) {
        ModelConfig cfg;
        cfg.patch_size = 4;
        cfg.embed_dim = 8;
        cfg.n_heads = 2;
        cfg.n_blocks = 1;
        cfg.seed = s;
        ModelParams params = ModelParams::init(cfg);
        PatchBatch batch;
        batch.patch_size = 4;
        batch.patches = Tensor::uniform({2, 4, 4, 2}, 0.0, 1.0, derive_seed(s, 9));
        batch.coords = {{0, 0}, {0, 1}};
        const std::vector<int> labels{1, 0};
        return check([&] { return cross_entropy(forward(batch, params), labels); }, params.tensors());
    });
    return cases;
}

SuiteResult gradient_suite(int seeds, std::uint64_t base_seed) {
    const auto start = Clock::now();
    SuiteResult r{"gradient check", true, "", 0.0};
    std::ostringstream os;
    for (const auto& c : gradient_cases()) {
        double worst = 0.0;
        for (int i = 0; i < seeds; ++i) worst = std::max(worst, c.run(derive_seed(base_seed, static_cast<std::uint64_t>(i))));
        if (!(worst < c.tolerance)) {
            r.passed = false;
            os << c.name << " rel err " << worst << " >= " << c.tolerance << "; ";
        }
    }
    r.detail = r.passed ? std::to_string(gradient_cases().size()) + " cases x " + std::to_string(seeds) + " seeds"
                        : os.str();
    r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return r;
}

SuiteResult metrics_suite() {
    const auto start = Clock::now();
    SuiteResult r{"metric identities", true, "", 0.0};
    std::ostringstream os;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) {
            r.passed = false;
            os << what << "; ";
        }
    };
    const auto worked = metrics({40, 40, 10, 10});
    expect(std::abs(worked.pcc - 80.0) < 1e-9, "PCC of worked example");
    expect(std::abs(worked.kc - 60.0) < 1e-9, "KC of worked example");
    const auto perfect = metrics({25, 75, 0, 0});
    expect(perfect.pcc == 100.0 && std::abs(perfect.kc - 100.0) < 1e-12, "perfect agreement");
    std::mt19937_64 gen(11);
    for (int i = 0; i < 100; ++i) {
        Confusion c{static_cast<std::int64_t>(gen() % 500), static_cast<std::int64_t>(gen() % 500),
                    static_cast<std::int64_t>(gen() % 500), static_cast<std::int64_t>(gen() % 500) + 1};
        const auto m = metrics(c);
        expect(m.oe == c.fp + c.fn, "OE = FP + FN");
        expect(std::abs(m.pcc + 100.0 * static_cast<double>(m.oe) / static_cast<double>(m.n_total) - 100.0) < 1e-9,
               "PCC + 100 OE / N = 100");
    }
    r.detail = r.passed ? "worked example, perfect agreement, 100 random confusions" : os.str();
    r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return r;
}

SuiteResult structure_suite(std::uint64_t seed) {
    const auto start = Clock::now();
    SuiteResult r{"attention and aggregation structure", true, "", 0.0};
    NoGradGuard no_grad;
    const Tensor x = Tensor::uniform({8, 8, 16}, -1.0, 1.0, seed);
    WsmTrace trace;
    const Tensor y = wave_attention(x, WsmParams::init(16, 4, derive_seed(seed, 1)), &trace);
    double worst_row = 0.0;
    bool shapes_ok = y.shape() == x.shape() && trace.attention.size() == 4;
    for (const auto& a : trace.attention) {
        shapes_ok = shapes_ok && a.shape() == Shape{64, 16};
        for (std::int64_t i = 0; i < a.extent(0); ++i) {
            double s = 0.0;
            for (std::int64_t j = 0; j < a.extent(1); ++j) s += a[i * a.extent(1) + j];
            worst_row = std::max(worst_row, std::abs(s - 1.0));
        }
    }
    BamTrace bt;
    const Tensor z = bam_forward(x, BamParams::init(16, derive_seed(seed, 2)), &bt);
    bool bam_ok = z.shape() == x.shape() && bt.x_c.shape() == Shape{1, 1, 16} && bt.x_s.shape() == Shape{8, 8, 1} &&
                  bt.gate.shape() == x.shape();
    for (double g : bt.gate.data()) bam_ok = bam_ok && g > 0.0 && g < 2.0;
    r.passed = shapes_ok && worst_row < 1e-9 && bam_ok;
    std::ostringstream os;
    os << "attention (64 x 16) shapes " << (shapes_ok ? "ok" : "BAD") << ", max |row sum - 1| = " << worst_row
       << ", BAM " << (bam_ok ? "ok" : "BAD");
    r.detail = os.str();
    r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return r;
}

std::vector<SuiteResult> run_selftest() {
    return {reconstruction_suite(haar_wavelet_pair()), gradient_suite(), metrics_suite(), structure_suite()};
}

}  // namespace wbanet
