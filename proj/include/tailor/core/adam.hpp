#pragma once

#include <cmath>
#include <vector>

#include "tailor/core/autograd.hpp"

namespace tailor {

struct AdamOptions {
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam over a fixed parameter list. Moment buffers are keyed by position, so
// the list must not be reordered between steps.
template <typename T>
class Adam {
public:
    Adam(ParamList<T> params, AdamOptions options)
        : params_(std::move(params)), options_(options) {
        first_.reserve(params_.size());
        second_.reserve(params_.size());
        for (const auto& p : params_) {
            first_.emplace_back(p.param->value().shape());
            second_.emplace_back(p.param->value().shape());
        }
    }

    void zero_grad() { tailor::zero_grad(params_); }

    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
        const T b1 = static_cast<T>(options_.beta1);
        const T b2 = static_cast<T>(options_.beta2);
        const T lr = static_cast<T>(options_.learning_rate / c1);
        const T sc2 = static_cast<T>(1.0 / c2);
        const T eps = static_cast<T>(options_.eps);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Parameter<T>& p = *params_[i].param;
            if (!p.has_grad()) continue;
            auto& w = p.mutable_value();
            const auto& g = p.grad();
            auto& m = first_[i];
            auto& v = second_[i];
            for (std::size_t j = 0; j < w.size(); ++j) {
                m[j] = b1 * m[j] + (T(1) - b1) * g[j];
                v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
                w[j] -= lr * m[j] / (std::sqrt(v[j] * sc2) + eps);
            }
        }
    }

    long steps() const { return t_; }
    const ParamList<T>& params() const { return params_; }

private:
    ParamList<T> params_;
    AdamOptions options_;
    std::vector<Tensor<T>> first_;
    std::vector<Tensor<T>> second_;
    long t_ = 0;
};

}  // namespace tailor
