#include "wbanet/evalio.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <sstream>

#include "wbanet/error.hpp"

namespace wbanet {

Confusion confusion(const BinaryGrid& pred, const BinaryGrid& gt) {
    if (pred.height != gt.height || pred.width != gt.width) {
        throw InputError("confusion: prediction is " + std::to_string(pred.height) + "x" +
                         std::to_string(pred.width) + ", ground truth " + std::to_string(gt.height) + "x" +
                         std::to_string(gt.width));
    }
    Confusion c;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const bool p = pred.values[i] != 0;
        const bool g = gt.values[i] != 0;
        if (p && g) ++c.tp;
        else if (!p && !g) ++c.tn;
        else if (p) ++c.fp;
        else ++c.fn;
    }
    return c;
}

Confusion confusion(const ChangeMap& pred, const BinaryGrid& gt) { return confusion(pred.map, gt); }

MetricsReport metrics(const Confusion& counts) {
    const auto n = counts.total();
    if (n <= 0) throw InputError("metrics: empty confusion");
    MetricsReport r;
    r.fp = counts.fp;
    r.fn = counts.fn;
    r.oe = counts.fp + counts.fn;
    r.n_total = n;
    const double nd = static_cast<double>(n);
    const double tp = static_cast<double>(counts.tp), tn = static_cast<double>(counts.tn);
    const double fp = static_cast<double>(counts.fp), fn = static_cast<double>(counts.fn);
    const double accuracy = (tp + tn) / nd;
    r.pcc = 100.0 * accuracy;
    const double pre = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / (nd * nd);
    if (pre >= 1.0) {
        r.kc = 0.0;
        r.kc_defined = false;
    } else {
        r.kc = 100.0 * (accuracy - pre) / (1.0 - pre);
    }
    return r;
}

std::string metrics_json(const MetricsReport& r) {
    std::ostringstream os;
    os.precision(17);
    os << "{\"fp\":" << r.fp << ",\"fn\":" << r.fn << ",\"oe\":" << r.oe << ",\"pcc\":" << r.pcc
       << ",\"kc\":" << r.kc << ",\"n\":" << r.n_total << "}";
    return os.str();
}

bool Ellipse::contains(std::int64_t r, std::int64_t c) const {
    const double dr = (static_cast<double>(r) - center_row) / radius_row;
    const double dc = (static_cast<double>(c) - center_col) / radius_col;
    return dr * dr + dc * dc <= 1.0;
}

SynthConfig SynthConfig::square(std::int64_t size, double looks, std::uint64_t seed, double change_fraction) {
    SynthConfig cfg;
    cfg.height = size;
    cfg.width = size;
    cfg.looks = looks;
    cfg.seed = seed;
    // pi * ry * (1.5 ry) = fraction * size^2
    const double ry = static_cast<double>(size) * std::sqrt(change_fraction / (1.5 * std::numbers::pi));
    cfg.change = Ellipse{(static_cast<double>(size) - 1.0) / 2.0, (static_cast<double>(size) - 1.0) / 2.0, ry,
                         1.5 * ry};
    return cfg;
}

void SynthConfig::validate() const {
    if (height < 2 || width < 2) throw ConfigError("synth: frame must be at least 2x2");
    if (!(looks >= 1.0)) throw ConfigError("synth: looks must be >= 1");
    if (!(background > 0.0) || !(change_level > 0.0)) throw ConfigError("synth: reflectivity levels must be positive");
    const auto& e = change;
    if (!(e.radius_row > 0.0) || !(e.radius_col > 0.0)) throw ConfigError("synth: ellipse radii must be positive");
    if (e.center_row - e.radius_row < 0.0 || e.center_row + e.radius_row > static_cast<double>(height - 1) ||
        e.center_col - e.radius_col < 0.0 || e.center_col + e.radius_col > static_cast<double>(width - 1)) {
        throw ConfigError("synth: change ellipse does not fit inside the " + std::to_string(height) + "x" +
                          std::to_string(width) + " frame");
    }
}

SynthPair synth_pair(const SynthConfig& cfg) {
    cfg.validate();
    const auto h = cfg.height, w = cfg.width;
    const auto n = static_cast<std::size_t>(h * w);
    std::vector<double> f1(n, cfg.background), f2(n, cfg.background);
    BinaryGrid gt(h, w);
    for (std::int64_t r = 0; r < h; ++r) {
        for (std::int64_t c = 0; c < w; ++c) {
            if (cfg.change.contains(r, c)) {
                gt.at(r, c) = 1;
                f2[static_cast<std::size_t>(r * w + c)] = cfg.change_level;
            }
        }
    }
    std::gamma_distribution<double> speckle(cfg.looks, 1.0 / cfg.looks);
    std::mt19937_64 gen1(derive_seed(cfg.seed, 1));
    std::mt19937_64 gen2(derive_seed(cfg.seed, 2));
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = f1[i] * speckle(gen1);
    speckle.reset();
    for (std::size_t i = 0; i < n; ++i) b[i] = f2[i] * speckle(gen2);
    const Shape shape{h, w, 1};
    return SynthPair{Tensor(shape, std::move(a)), Tensor(shape, std::move(b)), std::move(gt),
                     Tensor(shape, std::move(f1)), Tensor(shape, std::move(f2))};
}

namespace {

class HeaderScanner {
public:
    explicit HeaderScanner(std::string_view s) : s_(s) {}

    void skip_space_and_comments() {
        while (pos_ < s_.size()) {
            if (std::isspace(static_cast<unsigned char>(s_[pos_]))) {
                ++pos_;
            } else if (s_[pos_] == '#') {
                while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    std::int64_t number(const char* what) {
        skip_space_and_comments();
        const auto start = pos_;
        token_start_ = start;
        std::int64_t v = 0;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
            v = v * 10 + (s_[pos_] - '0');
            if (v > (1 << 30)) throw FormatError(std::string("PGM ") + what + " too large", start);
            ++pos_;
        }
        if (pos_ == start) throw FormatError(std::string("PGM: expected ") + what, start);
        return v;
    }

    std::size_t pos_ = 0;
    std::size_t token_start_ = 0;  // offset of the most recent number

private:
    std::string_view s_;
};

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("failed writing " + path.string());
}

}  // namespace

Pgm parse_pgm(std::string_view bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError("not a binary PGM (P5)", 0);
    HeaderScanner sc(bytes);
    sc.pos_ = 2;
    Pgm pgm;
    pgm.width = sc.number("width");
    const auto width_at = sc.token_start_;
    pgm.height = sc.number("height");
    const auto maxval = sc.number("maxval");
    const auto maxval_at = sc.token_start_;
    if (pgm.width < 1 || pgm.height < 1) throw FormatError("PGM extents must be positive", width_at);
    if (maxval < 1 || maxval > 255) throw FormatError("PGM maxval must be in [1, 255]", maxval_at);
    pgm.maxval = static_cast<int>(maxval);
    if (sc.pos_ >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[sc.pos_]))) {
        throw FormatError("PGM: missing whitespace after maxval", sc.pos_);
    }
    const std::size_t start = sc.pos_ + 1;
    const auto need = static_cast<std::size_t>(pgm.width * pgm.height);
    if (bytes.size() - start < need) {
        throw FormatError("PGM payload truncated: expected " + std::to_string(need) + " bytes, found " +
                              std::to_string(bytes.size() - start),
                          bytes.size());
    }
    pgm.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                      bytes.begin() + static_cast<std::ptrdiff_t>(start + need));
    return pgm;
}

std::string encode_pgm(const Pgm& pgm) {
    std::string out = "P5\n" + std::to_string(pgm.width) + " " + std::to_string(pgm.height) + "\n" +
                      std::to_string(pgm.maxval) + "\n";
    out.append(pgm.pixels.begin(), pgm.pixels.end());
    return out;
}

Tensor read_pgm(const std::filesystem::path& path) {
    const Pgm pgm = parse_pgm(read_file(path));
    std::vector<double> v(pgm.pixels.begin(), pgm.pixels.end());
    return Tensor({pgm.height, pgm.width, 1}, std::move(v));
}

void write_pgm(const std::filesystem::path& path, const Tensor& image, int maxval) {
    if (image.rank() != 3 || image.extent(2) != 1) throw InputError("write_pgm: expected (H, W, 1) image");
    if (maxval < 1 || maxval > 255) throw InputError("write_pgm: maxval must be in [1, 255]");
    Pgm pgm;
    pgm.height = image.extent(0);
    pgm.width = image.extent(1);
    pgm.maxval = maxval;
    pgm.pixels.reserve(static_cast<std::size_t>(image.numel()));
    for (double v : image.data()) {
        const double clamped = std::clamp(std::round(v), 0.0, static_cast<double>(maxval));
        pgm.pixels.push_back(static_cast<std::uint8_t>(clamped));
    }
    write_file(path, encode_pgm(pgm));
}

void write_pgm(const std::filesystem::path& path, const BinaryGrid& grid) {
    Pgm pgm;
    pgm.height = grid.height;
    pgm.width = grid.width;
    pgm.maxval = 255;
    pgm.pixels.reserve(grid.values.size());
    for (auto v : grid.values) pgm.pixels.push_back(v ? 255 : 0);
    write_file(path, encode_pgm(pgm));
}

BinaryGrid read_binary_pgm(const std::filesystem::path& path) {
    const Pgm pgm = parse_pgm(read_file(path));
    BinaryGrid g(pgm.height, pgm.width);
    const int half = (pgm.maxval + 1) / 2;
    for (std::size_t i = 0; i < pgm.pixels.size(); ++i) g.values[i] = pgm.pixels[i] >= half ? 1 : 0;
    return g;
}

}  // namespace wbanet
