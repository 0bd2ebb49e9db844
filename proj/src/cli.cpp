#include "wbanet/cli.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "wbanet/checkpoint.hpp"
#include "wbanet/error.hpp"
#include "wbanet/selftest.hpp"

namespace wbanet {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

template <typename T>
void overlay(const json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

void overlay_path(const json& j, const char* key, fs::path& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::string>();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open " + path.string() + " for writing");
    out << text;
}

// Flags shared by several subcommands; unset flags leave the config untouched.
struct Flags {
    std::optional<std::string> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::int64_t> size;
    std::optional<double> looks;
    std::vector<double> semi_axes;
    std::optional<double> background, change_level;
    std::optional<std::string> i1, i2, gt;
    std::optional<std::int64_t> patch, dim, heads, blocks, epochs, batch, samples;
    std::optional<double> lr;
    std::optional<std::int64_t> min_blocks, max_blocks;

    void add_common(CLI::App* app) {
        app->add_option("--config", config, "JSON config file (overridden by flags)");
        app->add_option("--seed", seed, "Seed for synthesis, pre-classification and training");
        app->add_option("-o,--out", out, "Output directory");
    }
    void add_synth(CLI::App* app) {
        app->add_option("--size", size, "Frame size (square)");
        app->add_option("--looks", looks, "Number of speckle looks L");
        app->add_option("--semi-axes", semi_axes, "Change ellipse semi-axes (rows cols) in pixels")->expected(2);
        app->add_option("--background", background, "Background reflectivity");
        app->add_option("--change-level", change_level, "Reflectivity inside the change region at t2");
    }
    void add_model(CLI::App* app) {
        app->add_option("--i1", i1, "First acquisition (PGM)");
        app->add_option("--i2", i2, "Second acquisition (PGM)");
        app->add_option("--gt", gt, "Ground truth change map (PGM), optional");
        app->add_option("--patch", patch, "Patch size P (even)");
        app->add_option("--dim", dim, "Embedding dimension C");
        app->add_option("--heads", heads, "Attention heads");
        app->add_option("--blocks", blocks, "Number of wavelet aggregation blocks N");
        app->add_option("--epochs", epochs, "Training epochs");
        app->add_option("--lr", lr, "Adam learning rate");
        app->add_option("--batch", batch, "Mini-batch size");
        app->add_option("--samples", samples, "Training patches per class");
    }
    void add_sweep(CLI::App* app) {
        app->add_option("--min-blocks", min_blocks, "Smallest N in the sweep (0 = no network)");
        app->add_option("--max-blocks", max_blocks, "Largest N in the sweep");
    }

    RunConfig resolve() const {
        RunConfig cfg;
        if (config) {
            std::ifstream in(*config);
            if (!in) throw InputError("cannot open config " + *config);
            std::stringstream ss;
            ss << in.rdbuf();
            cfg.merge_json(ss.str());
        }
        if (seed) cfg.seed = *seed;
        if (out) cfg.out = *out;
        if (size) {
            const auto keep = cfg.synth;
            cfg.synth = SynthConfig::square(*size, keep.looks, keep.seed);
            cfg.synth.background = keep.background;
            cfg.synth.change_level = keep.change_level;
        }
        if (looks) cfg.synth.looks = *looks;
        if (semi_axes.size() == 2) {
            cfg.synth.change.radius_row = semi_axes[0];
            cfg.synth.change.radius_col = semi_axes[1];
        }
        if (background) cfg.synth.background = *background;
        if (change_level) cfg.synth.change_level = *change_level;
        if (i1) cfg.i1 = *i1;
        if (i2) cfg.i2 = *i2;
        if (gt) cfg.gt = *gt;
        if (patch) cfg.model.patch_size = *patch;
        if (dim) cfg.model.embed_dim = *dim;
        if (heads) cfg.model.n_heads = *heads;
        if (blocks) cfg.model.n_blocks = *blocks;
        if (epochs) cfg.model.epochs = *epochs;
        if (lr) cfg.model.lr = *lr;
        if (batch) cfg.model.batch_size = *batch;
        if (samples) cfg.model.n_per_class = *samples;
        if (min_blocks) cfg.min_blocks = *min_blocks;
        if (max_blocks) cfg.max_blocks = *max_blocks;
        cfg.apply_seed();
        return cfg;
    }
};

void prepare_out(const RunConfig& cfg) {
    std::error_code ec;
    fs::create_directories(cfg.out, ec);
    if (ec) throw InputError("cannot create output directory " + cfg.out.string() + ": " + ec.message());
    write_text(cfg.out / "config.json", cfg.to_json() + "\n");
}

struct Inputs {
    Tensor i1, i2;
    std::optional<BinaryGrid> gt;
};

Inputs load_inputs(const RunConfig& cfg) {
    if (cfg.i1.empty() || cfg.i2.empty()) throw InputError("both --i1 and --i2 are required");
    Inputs in{read_pgm(cfg.i1), read_pgm(cfg.i2), std::nullopt};
    if (in.i1.shape() != in.i2.shape()) {
        throw InputError("i1 is " + shape_str(in.i1.shape()) + " but i2 is " + shape_str(in.i2.shape()));
    }
    if (!cfg.gt.empty()) {
        in.gt = read_binary_pgm(cfg.gt);
        if (in.gt->height != in.i1.extent(0) || in.gt->width != in.i1.extent(1)) {
            throw InputError("ground truth extents differ from the images");
        }
    }
    return in;
}

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
    cfg.synth.validate();
    prepare_out(cfg);
    const SynthPair pair = synth_pair(cfg.synth);
    write_pgm(cfg.out / "i1.pgm", pair.i1);
    write_pgm(cfg.out / "i2.pgm", pair.i2);
    write_pgm(cfg.out / "gt.pgm", pair.gt);
    out << "synth: " << cfg.synth.height << "x" << cfg.synth.width << ", L = " << cfg.synth.looks
        << ", seed = " << cfg.synth.seed << ", changed pixels = " << pair.gt.count_ones() << "\n";
    return kExitOk;
}

int cmd_run(const RunConfig& cfg, std::ostream& out) {
    cfg.model.validate();
    const Inputs in = load_inputs(cfg);
    prepare_out(cfg);
    ModelParams params;
    const PipelineResult r =
        run_pipeline(in.i1, in.i2, in.gt ? &*in.gt : nullptr, cfg, cfg.model.n_blocks, out, &params);
    write_pgm(cfg.out / "change_map.pgm", r.change_map.map);
    save_checkpoint(cfg.out / "checkpoint.wban", cfg.model, params);
    if (r.has_metrics) {
        write_text(cfg.out / "metrics.json", metrics_json(r.metrics) + "\n");
        out << "metrics: " << metrics_json(r.metrics) << "\n";
    }
    out << "done in " << std::fixed << std::setprecision(1) << r.seconds << " s\n";
    return kExitOk;
}

int cmd_sweep(const RunConfig& cfg, std::ostream& out) {
    if (cfg.min_blocks < 0 || cfg.max_blocks > 8 || cfg.min_blocks > cfg.max_blocks) {
        throw ConfigError("sweep range must satisfy 0 <= min <= max <= 8");
    }
    const Inputs in = load_inputs(cfg);
    if (!in.gt) throw InputError("sweep requires --gt");
    prepare_out(cfg);
    std::ostringstream csv;
    csv << "n,pcc,kc,seconds\n";
    for (std::int64_t n = cfg.min_blocks; n <= cfg.max_blocks; ++n) {
        RunConfig run = cfg;
        if (n > 0) run.model.n_blocks = n;
        run.model.validate();
        std::ostringstream log;
        const PipelineResult r = run_pipeline(in.i1, in.i2, &*in.gt, run, n, log);
        csv << n << ',' << std::fixed << std::setprecision(6) << r.metrics.pcc << ',' << r.metrics.kc << ','
            << std::setprecision(3) << r.seconds << '\n';
        out << "N = " << n << ": PCC " << std::fixed << std::setprecision(2) << r.metrics.pcc << ", KC "
            << r.metrics.kc << " (" << r.seconds << " s)\n";
    }
    write_text(cfg.out / "pcc_vs_n.csv", csv.str());
    return kExitOk;
}

int cmd_selftest(std::ostream& out) {
    bool ok = true;
    for (const auto& s : run_selftest()) {
        out << (s.passed ? "[PASS] " : "[FAIL] ") << s.name << ": " << s.detail << " (" << std::fixed
            << std::setprecision(2) << s.seconds << " s)\n";
        ok = ok && s.passed;
    }
    return ok ? kExitOk : kExitSelftestFailed;
}

}  // namespace

void RunConfig::apply_seed() {
    model.seed = seed;
    synth.seed = seed;
    preclass.seed = seed;
}

std::string RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["model"] = {{"patch_size", model.patch_size}, {"embed_dim", model.embed_dim}, {"n_heads", model.n_heads},
                  {"n_blocks", model.n_blocks},     {"lr", model.lr},               {"epochs", model.epochs},
                  {"batch_size", model.batch_size}, {"n_per_class", model.n_per_class}};
    j["synth"] = {{"height", synth.height},
                  {"width", synth.width},
                  {"looks", synth.looks},
                  {"background", synth.background},
                  {"change_level", synth.change_level},
                  {"ellipse",
                   {{"center_row", synth.change.center_row},
                    {"center_col", synth.change.center_col},
                    {"radius_row", synth.change.radius_row},
                    {"radius_col", synth.change.radius_col}}}};
    j["preclass"] = {{"m", preclass.m}, {"max_iter", preclass.max_iter}, {"tol", preclass.tol}};
    j["paths"] = {{"i1", i1.string()}, {"i2", i2.string()}, {"gt", gt.string()}, {"out", out.string()}};
    j["sweep"] = {{"min_blocks", min_blocks}, {"max_blocks", max_blocks}};
    return j.dump(2);
}

void RunConfig::merge_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("config is not valid JSON: ") + e.what(), e.byte);
    }
    try {
        overlay(j, "seed", seed);
        if (j.contains("model")) {
            const auto& m = j["model"];
            overlay(m, "patch_size", model.patch_size);
            overlay(m, "embed_dim", model.embed_dim);
            overlay(m, "n_heads", model.n_heads);
            overlay(m, "n_blocks", model.n_blocks);
            overlay(m, "lr", model.lr);
            overlay(m, "epochs", model.epochs);
            overlay(m, "batch_size", model.batch_size);
            overlay(m, "n_per_class", model.n_per_class);
        }
        if (j.contains("synth")) {
            const auto& s = j["synth"];
            if (s.contains("height") || s.contains("width")) {
                const double frac = 0.05;
                const auto size = s.value("height", synth.height);
                const auto keep = synth;
                synth = SynthConfig::square(size, keep.looks, keep.seed, frac);
                synth.width = s.value("width", size);
                synth.background = keep.background;
                synth.change_level = keep.change_level;
            }
            overlay(s, "looks", synth.looks);
            overlay(s, "background", synth.background);
            overlay(s, "change_level", synth.change_level);
            if (s.contains("ellipse")) {
                const auto& e = s["ellipse"];
                overlay(e, "center_row", synth.change.center_row);
                overlay(e, "center_col", synth.change.center_col);
                overlay(e, "radius_row", synth.change.radius_row);
                overlay(e, "radius_col", synth.change.radius_col);
            }
        }
        if (j.contains("preclass")) {
            const auto& p = j["preclass"];
            overlay(p, "m", preclass.m);
            overlay(p, "max_iter", preclass.max_iter);
            overlay(p, "tol", preclass.tol);
        }
        if (j.contains("paths")) {
            const auto& p = j["paths"];
            overlay_path(p, "i1", i1);
            overlay_path(p, "i2", i2);
            overlay_path(p, "gt", gt);
            overlay_path(p, "out", out);
        }
        if (j.contains("sweep")) {
            overlay(j["sweep"], "min_blocks", min_blocks);
            overlay(j["sweep"], "max_blocks", max_blocks);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config has a field of the wrong type: ") + e.what());
    }
    apply_seed();
}

PipelineResult run_pipeline(const Tensor& i1, const Tensor& i2, const BinaryGrid* gt, const RunConfig& cfg,
                            std::int64_t n_blocks, std::ostream& log, ModelParams* trained) {
    const auto start = std::chrono::steady_clock::now();
    PipelineResult r;
    const DifferenceImage di = log_ratio(i1, i2);
    r.labels = hfcm_partition(di, cfg.preclass);
    for (const auto& f : r.labels.flags) log << "pre-classification: " << f << "\n";
    if (r.labels.degenerate) throw DegenerateDataError("pre-classification is degenerate; nothing to learn from");
    log << "pre-classification (seed " << cfg.preclass.seed << "): changed " << r.labels.count(PixelClass::kChanged)
        << ", unchanged " << r.labels.count(PixelClass::kUnchanged) << ", intermediate "
        << r.labels.count(PixelClass::kIntermediate) << "\n";

    if (n_blocks == 0) {
        r.change_map = predict_map_threshold(di, r.labels);
    } else {
        ModelConfig mc = cfg.model;
        mc.n_blocks = n_blocks;
        const TrainResult t = train(i1, i2, r.labels, mc);
        log << "training (seed " << mc.seed << ", N = " << n_blocks << ", " << t.n_samples << " patches"
            << (t.shortfall ? ", class shortfall" : "") << ")\n";
        for (std::size_t e = 0; e < t.history.loss.size(); ++e) {
            log << "  epoch " << e + 1 << ": loss " << std::setprecision(6) << t.history.loss[e] << ", accuracy "
                << t.history.accuracy[e] << "\n";
        }
        r.change_map = predict_map(i1, i2, r.labels, t.params, mc);
        if (trained) *trained = t.params;
    }
    if (gt) {
        r.metrics = metrics(confusion(r.change_map, *gt));
        r.has_metrics = true;
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"WBANet SAR change detection", "wbanet"};
    app.require_subcommand(1);
    app.footer("Precedence: command-line flags override --config values, which override built-in defaults.");

    Flags synth_flags, run_flags, sweep_flags;
    auto* synth = app.add_subcommand("synth", "Write a synthetic speckled pair i1.pgm, i2.pgm, gt.pgm");
    synth_flags.add_common(synth);
    synth_flags.add_synth(synth);
    auto* run = app.add_subcommand("run", "Pre-classify, train, predict and score one image pair");
    run_flags.add_common(run);
    run_flags.add_model(run);
    auto* sweep = app.add_subcommand("sweep", "Train once per block count and write pcc_vs_n.csv");
    sweep_flags.add_common(sweep);
    sweep_flags.add_model(sweep);
    sweep_flags.add_sweep(sweep);
    auto* selftest = app.add_subcommand("selftest", "Run the built-in invariant suites");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    }

    try {
        if (*synth) return cmd_synth(synth_flags.resolve(), out);
        if (*run) return cmd_run(run_flags.resolve(), out);
        if (*sweep) return cmd_sweep(sweep_flags.resolve(), out);
        if (*selftest) return cmd_selftest(out);
    } catch (const DegenerateDataError& e) {
        err << "error: " << e.what() << "\n";
        return kExitDegenerate;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, out, err);
}

}  // namespace wbanet
