#pragma once

#include <random>
#include <string>
#include <vector>

#include "gsplab/gradcheck.hpp"
#include "gsplab/model.hpp"
#include "gsplab/rng.hpp"
#include "gsplab/tensor.hpp"

namespace gsplab {

struct GradSuiteEntry {
    std::string name;
    double max_rel_err = 0.0;
};

// Finite-difference verification of every differentiable op plus the full
// default model loss. Kinked graphs (relu/maxpool/L1) are resampled until
// every recorded value sits at least 10*epsilon from its kink. Large
// parameter tensors are subsampled (param_checks elements per tensor); the
// model input is checked exhaustively.
inline std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed, double epsilon = 1e-5,
                                                      int param_checks = 12) {
    std::mt19937_64 rng(derive_seed(seed, 0x6C4D));
    std::vector<GradSuiteEntry> out;

    auto rand_tensor = [&](std::vector<int> shape, double lo, double hi) {
        Tensor t = Tensor::zeros(std::move(shape));
        for (auto& v : t.values()) v = uniform_real(rng, lo, hi);
        return t;
    };

    // conv2d, smooth: differentiable in input, kernel, and bias
    {
        Tensor x = rand_tensor({2, 6, 6}, -1.0, 1.0);
        Tensor k = rand_tensor({3, 2, 3, 3}, -1.0, 1.0);
        Tensor b = rand_tensor({3}, -0.5, 0.5);
        Tensor w = rand_tensor({3}, -1.0, 1.0);
        auto head = [&](const Tensor& fm) { return linear(gsp(fm), w, Tensor::scalar(0.0)); };
        out.push_back({"conv2d/input",
                       gradient_check([&](const Tensor& t) { return head(conv2d(t, k, b, 1, 1)); }, x, epsilon)});
        out.push_back({"conv2d/kernel",
                       gradient_check([&](const Tensor& t) { return head(conv2d(x, t, b, 1, 1)); }, k, epsilon)});
        out.push_back({"conv2d/bias",
                       gradient_check([&](const Tensor& t) { return head(conv2d(x, k, t, 1, 1)); }, b, epsilon)});
        out.push_back({"conv2d/strided",
                       gradient_check([&](const Tensor& t) { return head(conv2d(t, k, b, 2, 0)); }, x, epsilon)});
    }

    // relu
    {
        Tensor w = rand_tensor({2}, -1.0, 1.0);
        auto f = [&](const Tensor& t) { return linear(gsp(relu(t)), w, Tensor::scalar(0.0)); };
        out.push_back({"relu", gradient_check_kink_free(
                                   f, [&] { return rand_tensor({2, 4, 4}, -1.0, 1.0); }, epsilon, 0, &rng)});
    }

    // maxpool2d
    {
        Tensor w = rand_tensor({1}, 0.5, 1.5);
        auto f = [&](const Tensor& t) { return linear(gsp(maxpool2d(t, 2, 2)), w, Tensor::scalar(0.0)); };
        out.push_back({"maxpool2d", gradient_check_kink_free(
                                        f, [&] { return rand_tensor({1, 6, 6}, -1.0, 1.0); }, epsilon, 0, &rng)});
    }

    // gsp / gap heads
    {
        Tensor w = rand_tensor({3}, -1.0, 1.0);
        Tensor b = Tensor::scalar(0.25);
        Tensor x = rand_tensor({3, 3, 4}, -1.0, 1.0);
        out.push_back({"gsp", gradient_check([&](const Tensor& t) { return linear(gsp(t), w, b); }, x, epsilon)});
        out.push_back({"gap", gradient_check([&](const Tensor& t) { return linear(gap(t), w, b); }, x, epsilon)});
    }

    // linear in all three arguments
    {
        Tensor x = rand_tensor({5}, -1.0, 1.0);
        Tensor w = rand_tensor({5}, -1.0, 1.0);
        Tensor b = Tensor::scalar(-0.3);
        out.push_back({"linear/input", gradient_check([&](const Tensor& t) { return linear(t, w, b); }, x, epsilon)});
        out.push_back({"linear/weight", gradient_check([&](const Tensor& t) { return linear(x, t, b); }, w, epsilon)});
        out.push_back({"linear/bias", gradient_check([&](const Tensor& t) { return linear(x, w, t); }, b, epsilon)});
    }

    // losses on top of a linear prediction
    {
        Tensor w = rand_tensor({4}, -1.0, 1.0);
        Tensor b = Tensor::scalar(0.1);
        const double target = 0.7;
        auto mk = [&] { return rand_tensor({4}, -1.0, 1.0); };
        out.push_back({"loss/l1",
                       gradient_check_kink_free(
                           [&](const Tensor& t) { return loss(linear(t, w, b), target, LossKind::L1); }, mk,
                           epsilon, 0, &rng)});
        out.push_back({"loss/mse",
                       gradient_check([&](const Tensor& t) { return loss(linear(t, w, b), target, LossKind::Mse); },
                                      mk(), epsilon)});
    }

    // full default model: L1 loss of the count on a random image, checked
    // against the input exhaustively and against every parameter tensor
    {
        ModelConfig mc = default_model_config();
        mc.seed = derive_seed(seed, 0xF00D);
        const CountModel m = build_model(mc);
        const double target = 3.25;
        auto f = [&](const Tensor& t) { return loss(forward(m, t).count, target, LossKind::L1); };

        Tensor x;
        bool found = false;
        for (int attempt = 0; attempt < 100 && !found; ++attempt) {
            x = rand_tensor({1, 16, 16}, 0.0, 1.0);
            found = kink_margin(f(x)) >= 10.0 * epsilon;
        }
        if (!found) throw NumericError("no kink-free model input found");

        out.push_back({"model/input", gradient_check(f, x, epsilon)});

        const std::vector<Tensor> params = m.parameters();
        std::vector<std::string> names;
        for (std::size_t i = 0; i < m.kernels.size(); ++i) {
            names.push_back("conv" + std::to_string(i) + ".kernel");
            names.push_back("conv" + std::to_string(i) + ".bias");
        }
        names.push_back("head.weight");
        names.push_back("head.bias");
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto fp = [&](const Tensor&) { return loss(forward(m, x).count, target, LossKind::L1); };
            out.push_back({"model/" + names[i], gradient_check(fp, params[i], epsilon, param_checks, &rng)});
        }
    }

    return out;
}

inline double gradient_suite_max_error(const std::vector<GradSuiteEntry>& entries) {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_err);
    return m;
}

} // namespace gsplab
