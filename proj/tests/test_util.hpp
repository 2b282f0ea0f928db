#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "sdp/rng.hpp"
#include "sdp/tensor.hpp"

namespace sdp_test {

inline double rel_err(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-9});
    return std::abs(a - b) / denom;
}

// Central finite difference of a scalar-valued loss wrt one entry.
template <class T, class LossFn>
double central_diff(T& param, const LossFn& loss, double h) {
    const T orig = param;
    param = static_cast<T>(static_cast<double>(orig) + h);
    const double lp = loss();
    param = static_cast<T>(static_cast<double>(orig) - h);
    const double lm = loss();
    param = orig;
    return (lp - lm) / (2.0 * h);
}

// Max relative error between an analytic gradient tensor and central
// differences taken through `loss` while perturbing `values`.
template <class T, class LossFn>
double max_grad_rel_err(sdp::TensorT<T>& values, const sdp::TensorT<T>& analytic,
                        const LossFn& loss, double h) {
    double worst = 0.0;
    for (std::int64_t i = 0; i < values.numel(); ++i) {
        const double fd = central_diff(values[static_cast<std::size_t>(i)], loss, h);
        const double an = static_cast<double>(analytic[static_cast<std::size_t>(i)]);
        if (std::abs(fd) < 1e-10 && std::abs(an) < 1e-10) continue;
        worst = std::max(worst, rel_err(an, fd));
    }
    return worst;
}

}  // namespace sdp_test
