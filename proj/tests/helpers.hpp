#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rrseg/autodiff.hpp"
#include "rrseg/tensor.hpp"

namespace rrseg::testutil {

// Central-difference gradient check in double precision. `forward` must
// rebuild the whole graph from the current leaf values and return the scalar
// loss node. Returns the worst relative error across all leaf elements.
inline double gradient_check(
    const std::function<ad::Var<double>()>& forward,
    const std::vector<ad::Var<double>>& leaves, double step = 1e-6) {
    for (auto& l : leaves) l->zero_grad();
    auto loss = forward();
    ad::backward(loss);

    double worst = 0.0;
    for (auto& l : leaves) {
        l->ensure_grad();
        for (int64_t i = 0; i < l->val.numel(); ++i) {
            double orig = l->val[i];
            l->val[i] = orig + step;
            double lp = forward()->val[0];
            l->val[i] = orig - step;
            double lm = forward()->val[0];
            l->val[i] = orig;
            double numeric = (lp - lm) / (2.0 * step);
            double analytic = l->grad[i];
            double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
            worst = std::max(worst, std::abs(numeric - analytic) / denom);
        }
    }
    return worst;
}

inline TensorD randn_d(std::vector<int64_t> shape, Rng& rng, double stddev = 1.0) {
    return TensorD::randn(std::move(shape), rng, stddev);
}

}  // namespace rrseg::testutil
