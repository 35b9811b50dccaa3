#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "gsplab/error.hpp"
#include "gsplab/rng.hpp"
#include "gsplab/tensor.hpp"

namespace gsplab {

// Compares analytic gradients of a scalar-valued function against central
// finite differences, perturbing the elements of `x` in place. `f` must
// rebuild its graph from the current contents of `x` on every call.
//
// Returns max over checked elements of
//   |analytic - centraldiff| / max(1, |analytic|, |centraldiff|).
//
// `max_checks` > 0 samples that many elements without replacement (large
// parameter tensors); 0 checks every element. The caller is responsible for
// steering clear of relu/maxpool/L1 kinks, see kink_margin().
inline double gradient_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                             double epsilon, int max_checks = 0,
                             std::mt19937_64* rng = nullptr) {
    if (!(epsilon > 0.0 && epsilon <= 1e-3))
        throw ContractError("gradient_check epsilon must be in (0, 1e-3]");

    Tensor root = f(x);
    if (root.size() != 1) throw ContractError("gradient_check requires a scalar function");
    if (!root.all_finite()) throw NumericError("gradient_check: non-finite function output");
    x.grad_data();
    x.zero_grad();
    root.backward();
    std::vector<double> analytic(x.grad().begin(), x.grad().end());

    std::vector<std::size_t> indices(x.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    if (max_checks > 0 && static_cast<std::size_t>(max_checks) < indices.size()) {
        std::mt19937_64 fallback(12345);
        std::mt19937_64& r = rng ? *rng : fallback;
        for (std::size_t i = 0; i < static_cast<std::size_t>(max_checks); ++i) {
            const std::size_t j = i + static_cast<std::size_t>(uniform_int(r, 0, static_cast<long>(indices.size() - i - 1)));
            std::swap(indices[i], indices[j]);
        }
        indices.resize(static_cast<std::size_t>(max_checks));
    }

    auto eval = [&]() {
        const Tensor out = f(x);
        const double v = out.value();
        if (!std::isfinite(v)) throw NumericError("gradient_check: non-finite function output");
        return v;
    };

    double max_err = 0.0;
    auto vals = x.values();
    for (std::size_t idx : indices) {
        const double saved = vals[idx];
        vals[idx] = saved + epsilon;
        const double fp = eval();
        vals[idx] = saved - epsilon;
        const double fm = eval();
        vals[idx] = saved;
        const double numeric = (fp - fm) / (2.0 * epsilon);
        const double a = analytic[idx];
        const double err = std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
        max_err = std::max(max_err, err);
    }
    return max_err;
}

// Draws inputs until the graph sits at least 10*epsilon away from every
// relu/maxpool/L1 kink (finite differences step over kinks otherwise), then
// runs the check on that input.
inline double gradient_check_kink_free(const std::function<Tensor(const Tensor&)>& f,
                                       const std::function<Tensor()>& make_input, double epsilon,
                                       int max_checks = 0, std::mt19937_64* rng = nullptr,
                                       int max_resamples = 100) {
    for (int attempt = 0; attempt < max_resamples; ++attempt) {
        Tensor x = make_input();
        if (kink_margin(f(x)) < 10.0 * epsilon) continue;
        return gradient_check(f, x, epsilon, max_checks, rng);
    }
    throw NumericError("no kink-free input found after " + std::to_string(max_resamples) + " resamples");
}

} // namespace gsplab
