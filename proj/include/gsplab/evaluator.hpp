#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "gsplab/dataset.hpp"
#include "gsplab/error.hpp"
#include "gsplab/model.hpp"
#include "gsplab/pnm.hpp"
#include "gsplab/synth.hpp"
#include "gsplab/tensor.hpp"

namespace gsplab {

// ---------------------------------------------------------------------------
// Count-regression metrics. The relative metrics are means of per-image
// relative errors, except %RMAE which is MAE as a percentage of the mean
// ground truth; they are only defined when every ground truth is positive.
// ---------------------------------------------------------------------------

struct MetricsReport {
    std::vector<double> preds, gts;
    int n = 0;
    double mae = 0.0, rmse = 0.0;
    bool relative_defined = false;
    double pct_mae = std::numeric_limits<double>::quiet_NaN();
    double pct_rmse = std::numeric_limits<double>::quiet_NaN();
    double pct_rmae = std::numeric_limits<double>::quiet_NaN();
};

inline MetricsReport compute_metrics(const std::vector<double>& preds, const std::vector<double>& gts) {
    if (preds.size() != gts.size())
        throw DimensionError("metrics need equal-length vectors, got " + std::to_string(preds.size()) +
                             " predictions vs " + std::to_string(gts.size()) + " ground truths");
    if (preds.empty()) throw ContractError("metrics need at least one sample");

    MetricsReport r;
    r.preds = preds;
    r.gts = gts;
    r.n = static_cast<int>(preds.size());
    double abs_sum = 0.0, sq_sum = 0.0, gt_sum = 0.0;
    double rel_sum = 0.0, rel_sq_sum = 0.0;
    bool all_positive = true;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double e = preds[i] - gts[i];
        abs_sum += std::fabs(e);
        sq_sum += e * e;
        gt_sum += gts[i];
        if (gts[i] > 0.0) {
            rel_sum += std::fabs(e) / gts[i];
            rel_sq_sum += (e / gts[i]) * (e / gts[i]);
        } else {
            all_positive = false;
        }
    }
    const double n = static_cast<double>(r.n);
    r.mae = abs_sum / n;
    r.rmse = std::sqrt(sq_sum / n);
    if (r.mae > r.rmse * (1.0 + 1e-12) + 1e-15)
        throw ContractError("MAE exceeded RMSE; metric computation is broken");
    if (all_positive) {
        r.relative_defined = true;
        r.pct_mae = 100.0 * rel_sum / n;
        r.pct_rmse = 100.0 * std::sqrt(rel_sq_sum / n);
        r.pct_rmae = 100.0 * r.mae * n / gt_sum;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

inline double infer_full(const CountModel& m, const Tensor& image) {
    return forward(m, image).count.value();
}

struct TileResult {
    RectI rect;
    double pred = 0.0;
    double gt = 0.0;
    long padded_area = 0; // zero-padded pixels appended to reach model minimum
};

// Per-tile accounting of over- and under-estimation. The cumulative count
// hides whatever cancels between the two; actual = e_over + e_under is the
// error the tiles really made.
struct TiledInferenceReport {
    std::string image_id;
    std::vector<TileResult> tiles;
    bool has_gt = true;
    double e_over = 0.0;
    double e_under = 0.0;
    double apparent_error = 0.0; // |e_over - e_under|
    double actual_error = 0.0;   // e_over + e_under
    double cumulative = 0.0;     // sum of tile predictions
    double gt_total = 0.0;
};

namespace detail {

inline Tensor pad_bottom_right(const Tensor& t, int min_h, int min_w) {
    const int C = t.shape()[0], H = t.shape()[1], W = t.shape()[2];
    const int nh = std::max(H, min_h), nw = std::max(W, min_w);
    if (nh == H && nw == W) return t;
    Tensor out = Tensor::zeros({C, nh, nw});
    auto src = t.values();
    auto dst = out.values();
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                dst[(static_cast<std::size_t>(c) * nh + y) * nw + x] =
                    src[(static_cast<std::size_t>(c) * H + y) * W + x];
    return out;
}

} // namespace detail

// Tiles the image, predicts each tile independently, and accounts for the
// per-tile errors. SHRUNK_BOXES without box annotations yields a
// predictions-only report (has_gt=false) rather than failing.
inline TiledInferenceReport infer_tiled(const CountModel& m, const AnnotatedImage& img, int patch_size,
                                        CountRule rule) {
    const int min_in = m.config.min_input();
    TiledInferenceReport rep;
    rep.image_id = img.id;
    rep.has_gt = !(rule == CountRule::ShrunkBoxes && !img.boxes);
    for (const RectI& rect : tile_patches(img, patch_size)) {
        TileResult tr;
        tr.rect = rect;
        Tensor patch = crop_pixels(img.pixels, rect);
        if (rect.h < min_in || rect.w < min_in) {
            patch = detail::pad_bottom_right(patch, min_in, min_in);
            tr.padded_area = static_cast<long>(std::max(rect.h, min_in)) * std::max(rect.w, min_in) - rect.area();
        }
        tr.pred = infer_full(m, patch);
        rep.cumulative += tr.pred;
        if (rep.has_gt) {
            tr.gt = count_in_rect(img, rect, rule);
            rep.gt_total += tr.gt;
            const double e = tr.pred - tr.gt;
            if (e >= 0.0) rep.e_over += e;
            else rep.e_under += -e;
        }
        rep.tiles.push_back(tr);
    }
    if (rep.has_gt) {
        rep.apparent_error = std::fabs(rep.e_over - rep.e_under);
        rep.actual_error = rep.e_over + rep.e_under;
    } else {
        rep.e_over = rep.e_under = rep.apparent_error = rep.actual_error =
            std::numeric_limits<double>::quiet_NaN();
        rep.gt_total = std::numeric_limits<double>::quiet_NaN();
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Class activation maps: heatmap(x,y) = sum_c w_c * F_c(x,y). Summing (sum
// head) or averaging (mean head) the map and adding the bias reproduces the
// prediction exactly, which is what makes the map an honest decomposition.
// ---------------------------------------------------------------------------

struct CamMap {
    Tensor heatmap; // [H',W'] leaf
    HeadKind head = HeadKind::Gsp;
    double bias = 0.0;
    double prediction = 0.0;
};

inline CamMap compute_cam(const CountModel& m, const Tensor& image) {
    const ForwardResult fr = forward(m, image);
    const int C = fr.features.shape()[0], H = fr.features.shape()[1], W = fr.features.shape()[2];
    const auto fv = fr.features.values();
    const auto wv = m.head_weight.values();
    Tensor heat = Tensor::zeros({H, W});
    auto hv = heat.values();
    for (int c = 0; c < C; ++c) {
        const double w = wv[c];
        const std::size_t base = static_cast<std::size_t>(c) * H * W;
        for (std::size_t i = 0; i < static_cast<std::size_t>(H) * W; ++i) hv[i] += w * fv[base + i];
    }
    CamMap cam;
    cam.heatmap = heat;
    cam.head = m.config.head;
    cam.bias = m.head_bias.value();
    cam.prediction = fr.count.value();
    return cam;
}

// Writes <base>_heatmap.pgm (normalized map at image resolution) and
// <base>_overlay.pgm (alpha blend over the input's first channel), both
// nearest-neighbor upsampled to the input size.
inline void render_cam_overlay(const CamMap& cam, const Tensor& image, const std::filesystem::path& base,
                               double alpha = 0.45) {
    if (image.rank() != 3)
        throw DimensionError("overlay wants an [C,H,W] image, got " + detail::shape_string(image.shape()));
    const int H = image.shape()[1], W = image.shape()[2];
    const int fh = cam.heatmap.shape()[0], fw = cam.heatmap.shape()[1];
    const auto hv = cam.heatmap.values();
    double lo = hv[0], hi = hv[0];
    for (double v : hv) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double range = hi - lo;

    Tensor heat_img = Tensor::zeros({1, H, W});
    Tensor overlay = Tensor::zeros({1, H, W});
    auto heat_px = heat_img.values();
    auto over_px = overlay.values();
    const auto img_px = image.values(); // channel 0 is the grayscale base
    for (int y = 0; y < H; ++y) {
        const int fy = std::min(fh - 1, y * fh / H);
        for (int x = 0; x < W; ++x) {
            const int fx = std::min(fw - 1, x * fw / W);
            const double raw = hv[static_cast<std::size_t>(fy) * fw + fx];
            const double norm = range > 0.0 ? (raw - lo) / range : 0.0;
            const std::size_t i = static_cast<std::size_t>(y) * W + x;
            heat_px[i] = norm;
            over_px[i] = (1.0 - alpha) * img_px[i] + alpha * norm;
        }
    }
    write_pgm(base.string() + "_heatmap.pgm", heat_img);
    write_pgm(base.string() + "_overlay.pgm", overlay);
}

// ---------------------------------------------------------------------------
// Linearity probe: pooled feature vectors of crops, all sorted by the
// full-image vector's descending order, so proportional activations show up
// as vertically scaled copies of one curve.
// ---------------------------------------------------------------------------

struct ProbeRow {
    std::string label;
    RectI rect;
    std::vector<double> values; // pooled activations in the shared order
};

struct ProbeTable {
    std::vector<int> order;     // channel indices, strongest first on the full image
    ProbeRow full;              // reference row the ordering came from
    std::vector<ProbeRow> rows; // one row per crop
};

inline ProbeTable linearity_probe(const CountModel& m, const Tensor& image, const std::vector<RectI>& crops,
                                  int k) {
    if (m.config.head != HeadKind::Gsp)
        throw ContractError("linearity probe requires a sum-pooling head");
    if (k < 1) throw ContractError("probe needs k >= 1");
    if (image.rank() != 3)
        throw DimensionError("probe wants an [C,H,W] image, got " + detail::shape_string(image.shape()));
    const int H = image.shape()[1], W = image.shape()[2];
    const int cf = m.config.feature_dim();
    const int keff = std::min(k, cf);

    auto pooled = [&](const Tensor& px) {
        const ForwardResult fr = forward(m, px);
        const Tensor p = gsp(fr.features);
        return std::vector<double>(p.values().begin(), p.values().end());
    };

    const std::vector<double> full = pooled(image);
    std::vector<int> order(full.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return full[a] > full[b]; });
    order.resize(keff);

    ProbeTable table;
    table.order = order;
    auto make_row = [&](const std::string& label, const RectI& rect, const std::vector<double>& vec) {
        ProbeRow row;
        row.label = label;
        row.rect = rect;
        for (int idx : order) row.values.push_back(vec[static_cast<std::size_t>(idx)]);
        return row;
    };
    table.full = make_row("full", {0, 0, W, H}, full);
    for (std::size_t i = 0; i < crops.size(); ++i)
        table.rows.push_back(
            make_row("crop" + std::to_string(i), crops[i], pooled(crop_pixels(image, crops[i]))));
    return table;
}

// ---------------------------------------------------------------------------
// Whole-dataset evaluation over the test split.
// ---------------------------------------------------------------------------

struct EvalMode {
    bool tiled = false;
    int patch_size = 0; // required when tiled

    static EvalMode full() { return {false, 0}; }
    static EvalMode tiled_with(int size) { return {true, size}; }
};

struct SuiteReport {
    MetricsReport metrics;                    // full-image, or cumulative (tiled)
    std::optional<MetricsReport> ps_metrics;  // tiled only: per-tile errors summed per image
    std::vector<TiledInferenceReport> tiled;
    double mean_apparent = std::numeric_limits<double>::quiet_NaN();
    double mean_actual = std::numeric_limits<double>::quiet_NaN();
    double mean_cancellation = std::numeric_limits<double>::quiet_NaN(); // apparent/actual per image
};

inline SuiteReport evaluate_suite(const CountModel& m, const Dataset& ds, const EvalMode& mode,
                                  CountRule rule) {
    const auto idx = ds.split_indices(Split::Test);
    if (idx.empty()) throw DatasetError("test split is empty");
    if (mode.tiled && mode.patch_size < 1) throw ContractError("tiled evaluation needs a patch size");

    SuiteReport rep;
    std::vector<double> preds, gts, ps_preds;
    for (std::size_t i : idx) {
        const DatasetEntry& e = ds.entries[i];
        const AnnotatedImage img = e.load();
        const double gt = e.count(rule);
        gts.push_back(gt);
        if (!mode.tiled) {
            preds.push_back(infer_full(m, img.pixels));
        } else {
            TiledInferenceReport tr = infer_tiled(m, img, mode.patch_size, rule);
            preds.push_back(tr.cumulative);
            // The patch-summed view charges each image its full per-tile
            // error: identical to scoring a prediction of gt + actual.
            ps_preds.push_back(gt + tr.actual_error);
            rep.tiled.push_back(std::move(tr));
        }
    }
    rep.metrics = compute_metrics(preds, gts);
    if (mode.tiled) {
        rep.ps_metrics = compute_metrics(ps_preds, gts);
        double sum_app = 0.0, sum_act = 0.0, sum_ratio = 0.0;
        for (const auto& t : rep.tiled) {
            sum_app += t.apparent_error;
            sum_act += t.actual_error;
            sum_ratio += t.actual_error > 0.0 ? t.apparent_error / t.actual_error : 0.0;
        }
        const double n = static_cast<double>(rep.tiled.size());
        rep.mean_apparent = sum_app / n;
        rep.mean_actual = sum_act / n;
        rep.mean_cancellation = sum_ratio / n;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// CSV writers. All floats go through the shortest-round-trip formatter so
// identical runs produce identical bytes.
// ---------------------------------------------------------------------------

inline void write_metrics_csv(const std::filesystem::path& path, const SuiteReport& rep) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write metrics: " + path.string());
    os << "metric,value\n";
    auto row = [&](const std::string& name, double v) { os << name << ',' << format_double(v) << '\n'; };
    os << "n," << rep.metrics.n << '\n';
    row("mae", rep.metrics.mae);
    row("rmse", rep.metrics.rmse);
    row("pct_mae", rep.metrics.pct_mae);
    row("pct_rmse", rep.metrics.pct_rmse);
    row("pct_rmae", rep.metrics.pct_rmae);
    if (rep.ps_metrics) {
        row("ps_mae", rep.ps_metrics->mae);
        row("ps_rmse", rep.ps_metrics->rmse);
        row("ps_pct_mae", rep.ps_metrics->pct_mae);
        row("ps_pct_rmse", rep.ps_metrics->pct_rmse);
        row("ps_pct_rmae", rep.ps_metrics->pct_rmae);
        row("mean_apparent_error", rep.mean_apparent);
        row("mean_actual_error", rep.mean_actual);
        row("mean_cancellation_ratio", rep.mean_cancellation);
    }
    if (!os) throw IoError("write failed: " + path.string());
}

inline void write_tiles_csv(const std::filesystem::path& path, const std::vector<TiledInferenceReport>& reps) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write tile report: " + path.string());
    os << "image_id,x0,y0,w,h,pred,gt,padded_area\n";
    for (const auto& rep : reps)
        for (const auto& t : rep.tiles) {
            os << rep.image_id << ',' << t.rect.x0 << ',' << t.rect.y0 << ',' << t.rect.w << ',' << t.rect.h
               << ',' << format_double(t.pred) << ',';
            if (rep.has_gt) os << format_double(t.gt);
            os << ',' << t.padded_area << '\n';
        }
    if (!os) throw IoError("write failed: " + path.string());
}

inline void write_probe_csv(const std::filesystem::path& path, const ProbeTable& table) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write probe table: " + path.string());
    os << "row,x0,y0,w,h";
    for (int idx : table.order) os << ",c" << idx;
    os << '\n';
    auto emit = [&](const ProbeRow& r) {
        os << r.label << ',' << r.rect.x0 << ',' << r.rect.y0 << ',' << r.rect.w << ',' << r.rect.h;
        for (double v : r.values) os << ',' << format_double(v);
        os << '\n';
    };
    emit(table.full);
    for (const auto& r : table.rows) emit(r);
    if (!os) throw IoError("write failed: " + path.string());
}

} // namespace gsplab
