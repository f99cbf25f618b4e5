// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <catch2/catch_amalgamated.hpp>

#include <functional>

#include "hlm/ops.hpp"

namespace testutil {

// Independent gradient oracle: central finite differences with step h over a
// rebuildable scalar graph. Lives only in test code; never calls backward().
template <typename F>
double central_diff(F&& rebuild_loss, std::vector<double>& x, size_t i, double h = 1e-5) {
    double orig = x[i];
    x[i] = orig + h;
    double fp = rebuild_loss();
    x[i] = orig - h;
    double fm = rebuild_loss();
    x[i] = orig;
    return (fp - fm) / (2.0 * h);
}

inline double rel_err(double analytic, double numeric) {
    double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / scale;
}

// Checks every (or up to max_per_leaf sampled) coordinate of each leaf against
// the finite-difference oracle. `build` must recompute the loss from the
// leaves' current buffers.
inline void gradcheck(const std::function<hlm::Tensor<double>()>& build,
                      std::vector<hlm::Tensor<double>> leaves, double tol = 1e-4,
                      size_t max_per_leaf = 64, double h = 1e-5) {
    for (auto& leaf : leaves) leaf.zero_grad();
    hlm::Tensor<double> loss = build();
    REQUIRE(loss.numel() == 1);
    hlm::backward(loss);

    auto loss_value = [&]() { return build().item(); };
    hlm::Rng pick(12345);
    double worst = 0.0;
    for (auto& leaf : leaves) {
        if (!leaf.requires_grad()) continue;
        const auto& grad = leaf.grad();
        size_t n = leaf.value().size();
        std::vector<size_t> coords;
        if (n <= max_per_leaf) {
            for (size_t i = 0; i < n; ++i) coords.push_back(i);
        } else {
            for (size_t i = 0; i < max_per_leaf; ++i)
                coords.push_back(static_cast<size_t>(pick.uniform_int(0, static_cast<int64_t>(n) - 1)));
        }
        for (size_t i : coords) {
            double numeric = central_diff(loss_value, leaf.value(), i, h);
            double analytic = grad[i];
            if (std::abs(analytic) < 1e-9 && std::abs(numeric) < 1e-9) continue;
            double err = rel_err(analytic, numeric);
            worst = std::max(worst, err);
            INFO("coordinate " << i << ": analytic " << analytic << " vs numeric " << numeric);
            REQUIRE(err <= tol);
        }
    }
    (void)worst;
}

inline hlm::Tensor<double> random_tensor(hlm::Shape shape, hlm::Rng& rng, bool requires_grad = true) {
    auto t = hlm::Tensor<double>::zeros(std::move(shape), requires_grad);
    for (auto& v : t.value()) v = rng.uniform() * 4.0 - 2.0;  // [-2, 2)
    return t;
}

}  // namespace testutil
