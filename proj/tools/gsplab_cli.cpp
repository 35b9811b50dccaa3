// Command-line surface for the counting laboratory: dataset generation,
// training, evaluation, CAM export, the pooled-activation probe, gradient
// checking, and dataset statistics. Every run is reproducible from its
// config and seed; each command's outputs are announced on a final
// machine-parsable "OUTPUT key=path ..." line.

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gsplab/gsplab.hpp"

namespace fs = std::filesystem;
using namespace gsplab;

namespace {

KvConfig assemble_config(const std::string& path, const std::vector<std::string>& sets) {
    KvConfig cfg = path.empty() ? KvConfig() : KvConfig::from_file(path);
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("--set wants key=value, got '" + s + "'");
        cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    return cfg;
}

std::string default_out_dir(const std::string& flag, const KvConfig& cfg) {
    if (!flag.empty()) return flag;
    const std::string from_cfg = cfg.get_string("paths.out", "");
    if (!from_cfg.empty()) return from_cfg;
    const char* env = std::getenv("GSPLAB_OUT");
    return env && *env ? env : ".";
}

std::string dataset_root(const std::string& flag, const KvConfig& cfg) {
    const std::string root = !flag.empty() ? flag : cfg.get_string("paths.data", "");
    if (root.empty()) throw ConfigError("no dataset root: pass --data or set paths.data");
    return root;
}

void print_stats_table(const DatasetStats& st) {
    std::printf("%-8s %7s %12s %12s %20s\n", "split", "images", "total", "count-range", "resolution-range");
    auto line = [](const char* name, const SplitStats& s) {
        if (s.n_images == 0) {
            std::printf("%-8s %7d %12s %12s %20s\n", name, 0, "-", "-", "-");
            return;
        }
        char counts[32], res[40];
        std::snprintf(counts, sizeof counts, "%d-%d", s.count_min, s.count_max);
        std::snprintf(res, sizeof res, "%dx%d-%dx%d", s.res_min_w, s.res_min_h, s.res_max_w, s.res_max_h);
        std::printf("%-8s %7d %12ld %12s %20s\n", name, s.n_images, s.total_count, counts, res);
    };
    line("train", st.train);
    line("val", st.val);
    line("test", st.test);
    line("overall", st.overall);
}

int run_gen_data(const std::string& config, const std::vector<std::string>& sets, const std::string& out,
                 bool force) {
    KvConfig cfg = assemble_config(config, sets);
    const GenConfig gen = read_gen_config(cfg);
    for (const char* p : {"model.", "train.", "paths."}) cfg.allow_prefix(p);
    cfg.reject_unknown_keys();
    const Dataset ds = generate_dataset(gen);
    write_dataset(ds, out, force);
    print_stats_table(dataset_stats(ds));
    std::printf("OUTPUT dataset=%s\n", out.c_str());
    return 0;
}

int run_stats(const std::string& data) {
    const Dataset ds = load_dataset(data);
    print_stats_table(dataset_stats(ds));
    return 0;
}

int run_train(const std::string& config, const std::vector<std::string>& sets, const std::string& data,
              const std::string& out) {
    KvConfig cfg = assemble_config(config, sets);
    const std::string root = dataset_root(data, cfg);
    const std::string out_dir = default_out_dir(out, cfg);
    const ModelConfig mc = read_model_config(cfg);
    const TrainConfig tc = read_train_config(cfg);
    for (const char* p : {"scene.", "data."}) cfg.allow_prefix(p);
    cfg.reject_unknown_keys();

    const Dataset ds = load_dataset(root);
    const CountModel model = build_model(mc);
    const TrainResult res = train(model, ds, tc);

    for (const auto& e : res.log.epochs)
        std::printf("epoch %3d  loss %-12s val_mae %-12s %.2fs\n", e.epoch,
                    format_double(e.mean_loss).c_str(), format_double(e.val_mae).c_str(), e.seconds);

    fs::create_directories(out_dir);
    const fs::path ckpt = fs::path(out_dir) / ("model_" + head_name(mc.head) + ".ckpt");
    const fs::path log = fs::path(out_dir) / "train_log.csv";
    save_model(res.model, ckpt);
    write_train_log_csv(log, res.log);
    std::printf("OUTPUT checkpoint=%s train_log=%s\n", ckpt.c_str(), log.c_str());
    return 0;
}

int run_eval(const std::string& checkpoint, const std::string& data, const std::string& mode_name,
             int patch, const std::string& rule_name, const std::string& out) {
    const CountModel model = load_model(checkpoint);
    const Dataset ds = load_dataset(data);
    EvalMode mode;
    if (mode_name == "full") {
        mode = EvalMode::full();
    } else if (mode_name == "tiled") {
        if (patch < 1) throw ConfigError("tiled mode needs --patch >= 1");
        mode = EvalMode::tiled_with(patch);
    } else {
        throw ConfigError("unknown eval mode '" + mode_name + "' (expected full or tiled)");
    }
    const CountRule rule = parse_count_rule(rule_name);
    const SuiteReport rep = evaluate_suite(model, ds, mode, rule);

    std::printf("n=%d mae=%s rmse=%s pct_mae=%s pct_rmse=%s pct_rmae=%s\n", rep.metrics.n,
                format_double(rep.metrics.mae).c_str(), format_double(rep.metrics.rmse).c_str(),
                format_double(rep.metrics.pct_mae).c_str(), format_double(rep.metrics.pct_rmse).c_str(),
                format_double(rep.metrics.pct_rmae).c_str());
    if (rep.ps_metrics)
        std::printf("patch-summed: mae=%s pct_rmae=%s | mean apparent=%s actual=%s cancellation=%s\n",
                    format_double(rep.ps_metrics->mae).c_str(),
                    format_double(rep.ps_metrics->pct_rmae).c_str(), format_double(rep.mean_apparent).c_str(),
                    format_double(rep.mean_actual).c_str(), format_double(rep.mean_cancellation).c_str());

    fs::create_directories(out);
    const fs::path metrics = fs::path(out) / "metrics.csv";
    write_metrics_csv(metrics, rep);
    if (mode.tiled) {
        const fs::path tiles = fs::path(out) / "tiles.csv";
        write_tiles_csv(tiles, rep.tiled);
        std::printf("OUTPUT metrics=%s tiles=%s\n", metrics.c_str(), tiles.c_str());
    } else {
        std::printf("OUTPUT metrics=%s\n", metrics.c_str());
    }
    return 0;
}

int run_cam(const std::string& checkpoint, const std::string& image, const std::string& out_base) {
    const CountModel model = load_model(checkpoint);
    const Tensor img = read_pnm(image);
    const CamMap cam = compute_cam(model, img);

    const auto hv = cam.heatmap.values();
    double pooled = 0.0;
    for (double v : hv) pooled += v;
    if (cam.head == HeadKind::Gap) pooled /= static_cast<double>(hv.size());
    const double rel = std::fabs(pooled + cam.bias - cam.prediction) / std::max(1e-12, std::fabs(cam.prediction));
    std::printf("prediction=%s cam_identity_rel_err=%s\n", format_double(cam.prediction).c_str(),
                format_double(rel).c_str());
    if (rel > 1e-9)
        throw NumericError("CAM identity violated: relative error " + format_double(rel));

    render_cam_overlay(cam, img, out_base);
    std::printf("OUTPUT heatmap=%s_heatmap.pgm overlay=%s_overlay.pgm\n", out_base.c_str(), out_base.c_str());
    return 0;
}

std::vector<RectI> parse_crops(const std::string& spec) {
    std::vector<RectI> crops;
    std::size_t start = 0;
    while (start < spec.size()) {
        std::size_t end = spec.find(';', start);
        if (end == std::string::npos) end = spec.size();
        const std::string part = spec.substr(start, end - start);
        RectI r;
        char c1 = 0, c2 = 0, c3 = 0;
        std::istringstream is(part);
        if (!(is >> r.x0 >> c1 >> r.y0 >> c2 >> r.w >> c3 >> r.h) || c1 != ',' || c2 != ',' || c3 != ',')
            throw ConfigError("bad crop '" + part + "' (want x0,y0,w,h)");
        crops.push_back(r);
        start = end + 1;
    }
    return crops;
}

int run_probe(const std::string& checkpoint, const std::string& image, const std::string& crops_spec, int k,
              const std::string& out) {
    const CountModel model = load_model(checkpoint);
    const Tensor img = read_pnm(image);
    const ProbeTable table = linearity_probe(model, img, parse_crops(crops_spec), k);
    write_probe_csv(out, table);
    std::printf("probe crops=%zu cols=%zu\n", table.rows.size(), table.order.size());
    std::printf("OUTPUT probe=%s\n", out.c_str());
    return 0;
}

int run_gradcheck(std::uint64_t seed, double epsilon, int param_checks) {
    const auto entries = run_gradient_suite(seed, epsilon, param_checks);
    for (const auto& e : entries)
        std::printf("%-22s max rel err %s\n", e.name.c_str(), format_double(e.max_rel_err).c_str());
    const double worst = gradient_suite_max_error(entries);
    std::printf("gradcheck max=%s threshold=1e-05\n", format_double(worst).c_str());
    if (worst > 1e-5) throw NumericError("gradient check failed: max relative error " + format_double(worst));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"object-counting laboratory: sum-pooled count regression on large images"};
    app.require_subcommand(1);

    std::string config, out, data, checkpoint, image, mode = "full", rule = "dots", crops;
    std::vector<std::string> sets;
    bool force = false;
    int patch = 0, k = 48, param_checks = 12;
    std::uint64_t seed = 1;
    double epsilon = 1e-5;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic annotated dataset");
    gen->add_option("--config", config, "key=value config file");
    gen->add_option("--set", sets, "override a config key (key=value, repeatable)");
    gen->add_option("--out", out, "output dataset directory")->required();
    gen->add_flag("--force", force, "overwrite a non-empty output directory");

    auto* tr = app.add_subcommand("train", "train a counting model");
    tr->add_option("--config", config, "key=value config file");
    tr->add_option("--set", sets, "override a config key (key=value, repeatable)");
    tr->add_option("--data", data, "dataset root (overrides paths.data)");
    tr->add_option("--out", out, "output directory (overrides paths.out / $GSPLAB_OUT)");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset's test split");
    ev->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    ev->add_option("--data", data, "dataset root")->required();
    ev->add_option("--mode", mode, "full or tiled (default full)");
    ev->add_option("--patch", patch, "tile size for tiled mode");
    ev->add_option("--rule", rule, "counting rule: dots or shrunk-boxes (default dots)");
    ev->add_option("--out", out, "output directory")->required();

    auto* cam = app.add_subcommand("cam", "export activation heatmap and overlay for one image");
    cam->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    cam->add_option("--image", image, "input raster (PGM/PPM)")->required();
    cam->add_option("--out", out, "output base path (writes <out>_heatmap.pgm, <out>_overlay.pgm)")->required();

    auto* pr = app.add_subcommand("probe", "pooled-activation linearity probe over crops");
    pr->add_option("--checkpoint", checkpoint, "model checkpoint (sum-pooling head)")->required();
    pr->add_option("--image", image, "input raster")->required();
    pr->add_option("--crops", crops, "semicolon-separated crops x0,y0,w,h;...");
    pr->add_option("--k", k, "channels per row (default 48)");
    pr->add_option("--out", out, "output CSV path")->required();

    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of all gradients");
    gc->add_option("--seed", seed, "rng seed (default 1)");
    gc->add_option("--eps", epsilon, "finite-difference step (default 1e-5)");
    gc->add_option("--param-checks", param_checks, "sampled elements per parameter tensor (default 12)");

    auto* st = app.add_subcommand("stats", "print dataset statistics per split");
    st->add_option("--data", data, "dataset root")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return 1; // usage error
    }

    try {
        if (gen->parsed()) return run_gen_data(config, sets, out, force);
        if (tr->parsed()) return run_train(config, sets, data, out);
        if (ev->parsed()) return run_eval(checkpoint, data, mode, patch, rule, out);
        if (cam->parsed()) return run_cam(checkpoint, image, out);
        if (pr->parsed()) return run_probe(checkpoint, image, crops, k, out);
        if (gc->parsed()) return run_gradcheck(seed, epsilon, param_checks);
        if (st->parsed()) return run_stats(data);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 1;
}
