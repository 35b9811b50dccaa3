#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "gsplab/dataset.hpp"
#include "gsplab/error.hpp"
#include "gsplab/evaluator.hpp"
#include "gsplab/model.hpp"
#include "gsplab/rng.hpp"
#include "gsplab/synth.hpp"

namespace gsplab {

enum class OptimizerKind { Adam, SgdMomentum };

inline std::string optimizer_name(OptimizerKind k) {
    return k == OptimizerKind::Adam ? "adam" : "sgd";
}

inline OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "adam") return OptimizerKind::Adam;
    if (s == "sgd" || s == "sgd-momentum") return OptimizerKind::SgdMomentum;
    throw ConfigError("unknown optimizer '" + s + "' (expected adam or sgd)");
}

inline constexpr int kFullImage = 0; // patch_size value meaning "train on whole images"

struct TrainConfig {
    int patch_size = 48;           // kFullImage trains on whole images
    int patches_per_image = 4;     // samples drawn per train image per epoch
    int batch_size = 8;
    int epochs = 10;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    double momentum = 0.9;         // sgd
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    LossKind loss = LossKind::L1;
    CountRule rule = CountRule::Dots;
    double object_centered_ratio = 0.0; // fraction of patches centered on a random object
    std::uint64_t seed = 1;

    void validate() const {
        if (patch_size < 0) throw ConfigError("patch size must be positive or 0 for full images");
        if (patches_per_image < 1) throw ConfigError("patches per image must be >= 1");
        if (batch_size < 1) throw ConfigError("batch size must be >= 1");
        if (epochs < 0) throw ConfigError("epochs must be >= 0");
        if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
        if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0,1)");
        if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
            throw ConfigError("adam betas must be in [0,1)");
        if (object_centered_ratio < 0.0 || object_centered_ratio > 1.0)
            throw ConfigError("object-centered ratio must be in [0,1]");
    }
};

struct EpochLog {
    int epoch = 0;          // 1-based
    double mean_loss = 0.0; // mean per-sample loss over the epoch
    double val_mae = std::numeric_limits<double>::quiet_NaN();
    double seconds = 0.0;   // not serialized: wall time is not reproducible
    std::uint64_t rng_stream = 0; // tag of the epoch's sampling stream
};

struct TrainLog {
    std::vector<EpochLog> epochs;
};

// Written as CSV without the wall-time column so identical runs produce
// identical bytes; timings go to stdout instead.
inline void write_train_log_csv(const std::filesystem::path& path, const TrainLog& log) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write train log: " + path.string());
    os << "epoch,loss,val_mae\n";
    for (const auto& e : log.epochs)
        os << e.epoch << ',' << format_double(e.mean_loss) << ',' << format_double(e.val_mae) << '\n';
    if (!os) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Optimizers. Parameters carry their gradients; state holds per-parameter
// moment buffers matched by position.
// ---------------------------------------------------------------------------

struct OptimizerState {
    long t = 0;
    std::vector<std::vector<double>> m1; // velocity (sgd) / first moment (adam)
    std::vector<std::vector<double>> m2; // second moment (adam)
};

inline OptimizerState make_optimizer_state(const std::vector<Tensor>& params) {
    OptimizerState st;
    for (const auto& p : params) {
        st.m1.emplace_back(p.size(), 0.0);
        st.m2.emplace_back(p.size(), 0.0);
    }
    return st;
}

inline void optimizer_step(const std::vector<Tensor>& params, OptimizerState& st, const TrainConfig& cfg) {
    if (st.m1.size() != params.size())
        throw ContractError("optimizer state does not match parameter list");
    ++st.t;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i];
        auto v = p.values();
        const auto g = p.grad();
        if (g.size() != v.size())
            throw ContractError("parameter " + std::to_string(i) + " has no gradient");
        for (double gv : g)
            if (!std::isfinite(gv))
                throw NumericError("non-finite gradient in parameter " + std::to_string(i));
        auto& m1 = st.m1[i];
        auto& m2 = st.m2[i];
        if (cfg.optimizer == OptimizerKind::SgdMomentum) {
            for (std::size_t j = 0; j < v.size(); ++j) {
                m1[j] = cfg.momentum * m1[j] - cfg.learning_rate * g[j];
                v[j] += m1[j];
            }
        } else {
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
            for (std::size_t j = 0; j < v.size(); ++j) {
                m1[j] = cfg.beta1 * m1[j] + (1.0 - cfg.beta1) * g[j];
                m2[j] = cfg.beta2 * m2[j] + (1.0 - cfg.beta2) * g[j] * g[j];
                const double mhat = m1[j] / bc1;
                const double vhat = m2[j] / bc2;
                v[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

inline CountModel clone_model(const CountModel& m) {
    CountModel c;
    c.config = m.config;
    auto copy = [](const Tensor& t) {
        return Tensor::from(t.shape(), std::vector<double>(t.values().begin(), t.values().end()));
    };
    for (std::size_t i = 0; i < m.kernels.size(); ++i) {
        c.kernels.push_back(copy(m.kernels[i]));
        c.conv_biases.push_back(copy(m.conv_biases[i]));
    }
    c.head_weight = copy(m.head_weight);
    c.head_bias = copy(m.head_bias);
    return c;
}

struct TrainResult {
    CountModel model;
    TrainLog log;
};

namespace detail {

// Validation mirrors each head's inference mode: whole images for the sum
// head, tiled cumulative counts for the averaging head.
inline double validation_mae(const CountModel& m, const Dataset& ds, const TrainConfig& cfg) {
    const auto idx = ds.split_indices(Split::Val);
    if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
    const int min_in = m.config.min_input();
    double abs_sum = 0.0;
    int n = 0;
    for (std::size_t i : idx) {
        const DatasetEntry& e = ds.entries[i];
        if (e.width < min_in || e.height < min_in) continue;
        const AnnotatedImage img = e.load();
        const double gt = e.count(cfg.rule);
        double pred = 0.0;
        if (m.config.head == HeadKind::Gsp) {
            pred = infer_full(m, img.pixels);
        } else {
            const int tile = cfg.patch_size == kFullImage ? std::max(e.width, e.height) : cfg.patch_size;
            pred = infer_tiled(m, img, tile, cfg.rule).cumulative;
        }
        abs_sum += std::fabs(pred - gt);
        ++n;
    }
    return n > 0 ? abs_sum / n : std::numeric_limits<double>::quiet_NaN();
}

} // namespace detail

inline TrainResult train(const CountModel& model, const Dataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    CountModel m = clone_model(model);
    const int min_in = m.config.min_input();
    if (cfg.patch_size != kFullImage && cfg.patch_size < min_in)
        throw ConfigError("patch size " + std::to_string(cfg.patch_size) + " below model minimum input " +
                          std::to_string(min_in));

    const auto train_idx = ds.split_indices(Split::Train);
    if (train_idx.empty()) throw TrainingError("train split is empty");

    TrainResult out;
    const std::vector<Tensor> params = m.parameters();
    OptimizerState state = make_optimizer_state(params);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();

        // Per-(epoch, image) sampling streams: parallel sample collection
        // would produce the same dataset order.
        std::vector<PatchSample> samples;
        int skipped = 0;
        for (std::size_t k = 0; k < train_idx.size(); ++k) {
            const DatasetEntry& e = ds.entries[train_idx[k]];
            if (cfg.patch_size != kFullImage && (e.width < cfg.patch_size || e.height < cfg.patch_size)) {
                ++skipped;
                if (epoch == 0)
                    std::fprintf(stderr, "warning: skipping image '%s' (%dx%d) smaller than patch size %d\n",
                                 e.id.c_str(), e.width, e.height, cfg.patch_size);
                continue;
            }
            if (cfg.patch_size == kFullImage && (e.width < min_in || e.height < min_in)) {
                ++skipped;
                if (epoch == 0)
                    std::fprintf(stderr, "warning: skipping image '%s' (%dx%d) below model minimum %d\n",
                                 e.id.c_str(), e.width, e.height, min_in);
                continue;
            }
            const AnnotatedImage img = e.load();
            std::mt19937_64 rng(derive_seed(cfg.seed, 0xEB0C, static_cast<std::uint64_t>(epoch), k));
            for (int j = 0; j < cfg.patches_per_image; ++j) {
                if (cfg.patch_size == kFullImage) {
                    samples.push_back(make_patch(img, img.full_rect(), cfg.rule));
                } else if (!img.dots.empty() && uniform01(rng) < cfg.object_centered_ratio) {
                    samples.push_back(sample_object_centered_patch(img, cfg.patch_size, cfg.rule, rng));
                } else {
                    samples.push_back(sample_random_patch(img, cfg.patch_size, cfg.rule, rng));
                }
            }
        }
        if (samples.empty())
            throw TrainingError("no usable training images (all " + std::to_string(skipped) + " skipped)");

        std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 0x5F1E, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = samples.size(); i > 1; --i)
            std::swap(samples[i - 1], samples[static_cast<std::size_t>(uniform_int(shuffle_rng, 0, static_cast<long>(i) - 1))]);

        double loss_sum = 0.0;
        const std::size_t nbatches = (samples.size() + cfg.batch_size - 1) / cfg.batch_size;
        for (std::size_t b = 0; b < nbatches; ++b) {
            const std::size_t lo = b * cfg.batch_size;
            const std::size_t hi = std::min(samples.size(), lo + cfg.batch_size);
            m.zero_grads();
            const double inv = 1.0 / static_cast<double>(hi - lo);
            for (std::size_t s = lo; s < hi; ++s) {
                const Tensor l = loss(forward(m, samples[s].pixels).count, samples[s].count, cfg.loss);
                const double lv = l.value();
                if (!std::isfinite(lv))
                    throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) + " batch " +
                                        std::to_string(b + 1));
                loss_sum += lv;
                l.backward(inv); // batch-mean gradient
            }
            optimizer_step(params, state, cfg);
        }

        EpochLog el;
        el.epoch = epoch + 1;
        el.mean_loss = loss_sum / static_cast<double>(samples.size());
        el.val_mae = detail::validation_mae(m, ds, cfg);
        el.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        el.rng_stream = derive_seed(cfg.seed, 0xEB0C, static_cast<std::uint64_t>(epoch), 0);
        out.log.epochs.push_back(el);
    }
    out.model = std::move(m);
    return out;
}

} // namespace gsplab
