#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "tailor/core/autograd.hpp"

namespace tailor_test {

using namespace tailor;

inline Var<double> leaf(Tensor<double> t) { return Var<double>(std::move(t), true); }

// ||a - n|| / max(||a||, ||n||, 1e-6), over the whole gradient. The floor turns
// it into an absolute check for gradients that are zero, e.g. a conv bias
// feeding an instance norm.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& n) {
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - n[i]) * (a[i] - n[i]);
        na += a[i] * a[i];
        nn += n[i] * n[i];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-6});
    return std::sqrt(diff) / denom;
}

// Central differences (step h) on every element of every leaf against the
// autograd gradient of f(). Returns the worst per-leaf relative error.
inline double gradient_error(const std::function<Var<double>()>& f, const std::vector<Var<double>>& leaves,
                             double h = 1e-4) {
    for (const auto& l : leaves) l.node()->grad = Tensor<double>();
    backward(f());
    double worst = 0.0;
    for (const auto& l : leaves) {
        Tensor<double>& value = l.node()->value;
        std::vector<double> analytic(value.size(), 0.0);
        if (!l.node()->grad.empty()) {
            for (std::size_t i = 0; i < value.size(); ++i) analytic[i] = l.node()->grad[i];
        }
        std::vector<double> numeric(value.size());
        NoGradGuard no_grad;
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double keep = value[i];
            value[i] = keep + h;
            const double up = f().item();
            value[i] = keep - h;
            const double down = f().item();
            value[i] = keep;
            numeric[i] = (up - down) / (2.0 * h);
        }
        worst = std::max(worst, relative_error(analytic, numeric));
    }
    return worst;
}

}  // namespace tailor_test
