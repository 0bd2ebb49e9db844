#include <doctest.h>

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "support.hpp"
#include "wbanet/error.hpp"
#include "wbanet/evalio.hpp"

using namespace wbanet;
using namespace wbanet::testing;

namespace {

BinaryGrid random_grid(std::int64_t h, std::int64_t w, std::mt19937_64& gen, double p = 0.5) {
    std::bernoulli_distribution b(p);
    BinaryGrid g(h, w);
    for (auto& v : g.values) v = b(gen) ? 1 : 0;
    return g;
}

// Lattice points inside the ellipse, counted row by row from the closed-form
// half-width of each chord.
std::int64_t ellipse_lattice_count(const Ellipse& e, std::int64_t h, std::int64_t w) {
    std::int64_t count = 0;
    for (std::int64_t r = 0; r < h; ++r) {
        const double t = (static_cast<double>(r) - e.center_row) / e.radius_row;
        if (t * t > 1.0) continue;
        const double half = e.radius_col * std::sqrt(1.0 - t * t);
        const auto lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(e.center_col - half)));
        const auto hi = std::min<std::int64_t>(w - 1, static_cast<std::int64_t>(std::floor(e.center_col + half)));
        if (hi >= lo) count += hi - lo + 1;
    }
    return count;
}

std::string header_32x32() { return "P5\n32 32\n255\n"; }

}  // namespace

TEST_SUITE("evalio") {
    TEST_CASE("confusion extremes") {
        std::mt19937_64 gen(1);
        const BinaryGrid gt = random_grid(8, 8, gen);
        const Confusion same = confusion(gt, gt);
        CHECK(same.fp == 0);
        CHECK(same.fn == 0);
        BinaryGrid inverted = gt;
        for (auto& v : inverted.values) v = v ? 0 : 1;
        const Confusion inv = confusion(inverted, gt);
        CHECK(inv.tp == 0);
        CHECK(inv.tn == 0);
        CHECK(inv.total() == 64);
        CHECK_THROWS_AS(confusion(BinaryGrid(8, 7), gt), InputError);
    }

    TEST_CASE("confusion matches a double loop on random grids") {
        std::mt19937_64 gen(2);
        for (int trial = 0; trial < 100; ++trial) {
            const double p = static_cast<double>(trial % 10) / 9.0;
            const BinaryGrid pred = random_grid(16, 16, gen, p), gt = random_grid(16, 16, gen, 1.0 - p);
            std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;
            for (std::int64_t r = 0; r < 16; ++r) {
                for (std::int64_t c = 0; c < 16; ++c) {
                    const bool a = pred.at(r, c) != 0, b = gt.at(r, c) != 0;
                    tp += a && b;
                    tn += !a && !b;
                    fp += a && !b;
                    fn += !a && b;
                }
            }
            const Confusion got = confusion(ChangeMap{pred, {}}, gt);
            CHECK(got.tp == tp);
            CHECK(got.tn == tn);
            CHECK(got.fp == fp);
            CHECK(got.fn == fn);
        }
    }

    TEST_CASE("metrics worked examples") {
        const MetricsReport perfect = metrics({50, 50, 0, 0});
        CHECK(perfect.pcc == 100.0);
        CHECK(perfect.kc == 100.0);

        const MetricsReport hand = metrics({40, 40, 10, 10});
        CHECK(std::abs(hand.pcc - 80.0) < 1e-9);
        CHECK(std::abs(hand.kc - 60.0) < 1e-9);
        CHECK(hand.oe == 20);

        const MetricsReport chao = metrics({0, 100000, 1092, 1373});
        CHECK(chao.oe == 2465);

        const MetricsReport single = metrics({0, 100, 0, 0});
        CHECK_FALSE(single.kc_defined);
        CHECK(single.kc == 0.0);
        CHECK(single.pcc == 100.0);
        CHECK_THROWS_AS(metrics({0, 0, 0, 0}), InputError);
    }

    TEST_CASE("metrics identities on random counts") {
        std::mt19937_64 gen(3);
        std::uniform_int_distribution<std::int64_t> d(0, 5000);
        for (int trial = 0; trial < 200; ++trial) {
            const Confusion c{d(gen) + 1, d(gen) + 1, trial % 7 == 0 ? 0 : d(gen), trial % 7 == 0 ? 0 : d(gen)};
            const MetricsReport m = metrics(c);
            CHECK(m.oe == c.fp + c.fn);
            CHECK(m.n_total == c.total());
            CHECK(m.pcc >= 0.0);
            CHECK(m.pcc <= 100.0);
            CHECK(m.kc <= 100.0 + 1e-12);
            CHECK(std::abs(m.pcc + 100.0 * static_cast<double>(m.oe) / static_cast<double>(m.n_total) - 100.0) <
                  1e-9);
            const bool perfect = c.fp == 0 && c.fn == 0;
            CHECK((std::abs(m.kc - 100.0) < 1e-9) == perfect);
        }
    }

    TEST_CASE("metrics json") {
        const auto j = nlohmann::json::parse(metrics_json(metrics({40, 40, 10, 10})));
        CHECK(j.at("fp") == 10);
        CHECK(j.at("fn") == 10);
        CHECK(j.at("oe") == 20);
        CHECK(j.at("n") == 100);
        CHECK(std::abs(j.at("pcc").get<double>() - 80.0) < 1e-12);
        CHECK(std::abs(j.at("kc").get<double>() - 60.0) < 1e-9);
    }

    TEST_CASE("synthetic ground truth equals the rasterized ellipse") {
        for (std::int64_t size : {32, 64, 100, 128}) {
            const SynthConfig cfg = SynthConfig::square(size, 4.0, 1);
            const SynthPair pair = synth_pair(cfg);
            const std::int64_t expect = ellipse_lattice_count(cfg.change, size, size);
            CHECK(pair.gt.count_ones() == expect);
            const double fraction = static_cast<double>(expect) / static_cast<double>(size * size);
            CHECK(std::abs(fraction - 0.05) < 0.005);
            CHECK(cfg.change.radius_col == doctest::Approx(1.5 * cfg.change.radius_row));
        }
    }

    TEST_CASE("near-noiseless speckle reproduces the reflectivity") {
        const SynthPair pair = synth_pair(SynthConfig::square(64, 1e6, 2));
        for (std::size_t i = 0; i < pair.i1.data().size(); ++i) {
            const double ref = pair.reflectivity1.data()[i];
            CHECK(std::abs(pair.i1.data()[i] - ref) <= 0.01 * ref);
            CHECK(std::abs(pair.i2.data()[i] - pair.reflectivity2.data()[i]) <= 0.01 * pair.reflectivity2.data()[i]);
        }
    }

    TEST_CASE("four-look background mean") {
        const SynthConfig cfg = SynthConfig::square(128, 4.0, 3);
        const SynthPair pair = synth_pair(cfg);
        for (const Tensor* img : {&pair.i1, &pair.i2}) {
            double total = 0.0;
            std::int64_t n = 0;
            for (std::size_t i = 0; i < pair.gt.values.size(); ++i) {
                if (pair.gt.values[i] == 0) {
                    total += img->data()[i];
                    ++n;
                }
            }
            CHECK(std::abs(total / static_cast<double>(n) / cfg.background - 1.0) < 0.02);
        }
        // Changed region is brighter only at the second date.
        for (std::size_t i = 0; i < pair.gt.values.size(); ++i) {
            CHECK(pair.reflectivity1.data()[i] == cfg.background);
            CHECK(pair.reflectivity2.data()[i] == (pair.gt.values[i] ? cfg.change_level : cfg.background));
        }
    }

    TEST_CASE("synthesis is deterministic per seed") {
        const SynthPair a = synth_pair(SynthConfig::square(32, 4.0, 7));
        const SynthPair b = synth_pair(SynthConfig::square(32, 4.0, 7));
        const SynthPair c = synth_pair(SynthConfig::square(32, 4.0, 8));
        CHECK(bitwise_equal(a.i1.data(), b.i1.data()));
        CHECK(bitwise_equal(a.i2.data(), b.i2.data()));
        CHECK(a.gt == b.gt);
        CHECK_FALSE(bitwise_equal(a.i1.data(), c.i1.data()));
    }

    TEST_CASE("synthesis configuration errors") {
        SynthConfig cfg = SynthConfig::square(32, 4.0, 0);
        cfg.change.radius_row = 40;
        CHECK_THROWS_AS(synth_pair(cfg), ConfigError);
        SynthConfig few = SynthConfig::square(32, 0.5, 0);
        CHECK_THROWS_AS(few.validate(), ConfigError);
        SynthConfig edge = SynthConfig::square(32, 4.0, 0);
        edge.change.center_col = 2.0;
        CHECK_THROWS_AS(edge.validate(), ConfigError);
    }

    TEST_CASE("pgm length contract") {
        const Pgm ok = parse_pgm(header_32x32() + std::string(1024, '\x07'));
        CHECK(ok.width == 32);
        CHECK(ok.height == 32);
        CHECK(ok.pixels.size() == 1024);
        CHECK(ok.pixels[1023] == 7);
        try {
            parse_pgm(header_32x32() + std::string(1023, '\x07'));
            FAIL("truncated payload accepted");
        } catch (const FormatError& e) {
            CHECK(e.offset() == header_32x32().size() + 1023);
        }
    }

    TEST_CASE("pgm comments and header errors") {
        const Pgm c = parse_pgm("P5\n# foo\n2 # width then height\n# bar\n1\n255\n\x01\x02");
        CHECK(c.width == 2);
        CHECK(c.height == 1);
        CHECK(c.pixels == std::vector<std::uint8_t>{1, 2});

        try {
            parse_pgm("P2\n1 1\n255\n\x01");
            FAIL("bad magic accepted");
        } catch (const FormatError& e) {
            CHECK(e.offset() == 0);
        }
        try {
            parse_pgm("P5\n1 1\n256\n\x01\x01");
            FAIL("wide maxval accepted");
        } catch (const FormatError& e) {
            CHECK(e.offset() == 7);
        }
        CHECK_THROWS_AS(parse_pgm("P5\n1\n"), FormatError);
        CHECK_THROWS_AS(parse_pgm("P5\nx 1 255\n\x01"), FormatError);
    }

    TEST_CASE("pgm file round trips") {
        const auto dir = scratch_dir("pgm");
        std::mt19937_64 gen(11);
        std::vector<double> values;
        for (int i = 0; i < 32 * 32; ++i) values.push_back(static_cast<double>(gen() % 256));
        const Tensor img({32, 32, 1}, values);
        write_pgm(dir / "a.pgm", img);
        CHECK(bitwise_equal(read_pgm(dir / "a.pgm").data(), img.data()));

        const Tensor wide({1, 3, 1}, {-4.0, 12.6, 900.0});
        write_pgm(dir / "b.pgm", wide);
        const Tensor back = read_pgm(dir / "b.pgm");
        CHECK(back[0] == 0.0);
        CHECK(back[1] == 13.0);
        CHECK(back[2] == 255.0);

        const BinaryGrid grid = random_grid(5, 9, gen);
        write_pgm(dir / "g.pgm", grid);
        const Tensor raw = read_pgm(dir / "g.pgm");
        for (std::size_t i = 0; i < grid.values.size(); ++i) CHECK(raw.data()[i] == (grid.values[i] ? 255.0 : 0.0));
        CHECK(read_binary_pgm(dir / "g.pgm") == grid);

        CHECK_THROWS_AS(read_pgm(dir / "missing.pgm"), InputError);
    }
}
