#pragma once

#include <cmath>
#include <string>

#include "tailor/core/ops.hpp"
#include "tailor/core/random.hpp"

namespace tailor::layers {

// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases
template <typename T>
Tensor<T> fan_in_uniform(Shape shape, int fan_in, Rng& rng) {
    Tensor<T> t(shape);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

template <typename T>
struct Conv2d {
    Parameter<T> weight;
    Parameter<T> bias;
    int stride = 1;
    int pad = 0;

    Conv2d() = default;
    Conv2d(int in, int out, int kernel, int stride_, int pad_, Rng& rng)
        : weight(fan_in_uniform<T>(Shape{out, in, kernel, kernel}, in * kernel * kernel, rng)),
          bias(fan_in_uniform<T>(Shape{1, out, 1, 1}, in * kernel * kernel, rng)),
          stride(stride_),
          pad(pad_) {}

    Var<T> operator()(const Var<T>& x) const {
        return conv2d(x, weight.var(), bias.var(), stride, pad);
    }

    void collect(ParamList<T>& out, const std::string& prefix) {
        out.push_back({prefix + ".weight", &weight});
        out.push_back({prefix + ".bias", &bias});
    }
};

template <typename T>
struct ConvTranspose2d {
    Parameter<T> weight;
    Parameter<T> bias;
    int stride = 2;
    int pad = 1;

    ConvTranspose2d() = default;
    ConvTranspose2d(int in, int out, int kernel, int stride_, int pad_, Rng& rng)
        : weight(fan_in_uniform<T>(Shape{in, out, kernel, kernel}, out * kernel * kernel, rng)),
          bias(fan_in_uniform<T>(Shape{1, out, 1, 1}, out * kernel * kernel, rng)),
          stride(stride_),
          pad(pad_) {}

    Var<T> operator()(const Var<T>& x) const {
        return conv_transpose2d(x, weight.var(), bias.var(), stride, pad);
    }

    void collect(ParamList<T>& out, const std::string& prefix) {
        out.push_back({prefix + ".weight", &weight});
        out.push_back({prefix + ".bias", &bias});
    }
};

template <typename T>
struct InstanceNorm {
    Parameter<T> gamma;
    Parameter<T> beta;

    InstanceNorm() = default;
    explicit InstanceNorm(int channels)
        : gamma(Tensor<T>(Shape{1, channels, 1, 1}, T(1))),
          beta(Tensor<T>(Shape{1, channels, 1, 1}, T(0))) {}

    Var<T> operator()(const Var<T>& x) const {
        return instance_norm(x, gamma.var(), beta.var());
    }

    void collect(ParamList<T>& out, const std::string& prefix) {
        out.push_back({prefix + ".gamma", &gamma});
        out.push_back({prefix + ".beta", &beta});
    }
};

template <typename T>
struct Linear {
    Parameter<T> weight;
    Parameter<T> bias;

    Linear() = default;
    Linear(int in, int out, Rng& rng)
        : weight(fan_in_uniform<T>(Shape{out, in, 1, 1}, in, rng)),
          bias(fan_in_uniform<T>(Shape{1, out, 1, 1}, in, rng)) {}

    Var<T> operator()(const Var<T>& x) const { return linear(x, weight.var(), bias.var()); }

    void collect(ParamList<T>& out, const std::string& prefix) {
        out.push_back({prefix + ".weight", &weight});
        out.push_back({prefix + ".bias", &bias});
    }
};

// conv-IN-ReLU-conv-IN plus identity skip
template <typename T>
struct ResidualBlock {
    Conv2d<T> conv1;
    InstanceNorm<T> norm1;
    Conv2d<T> conv2;
    InstanceNorm<T> norm2;

    ResidualBlock() = default;
    ResidualBlock(int channels, Rng& rng)
        : conv1(channels, channels, 3, 1, 1, rng),
          norm1(channels),
          conv2(channels, channels, 3, 1, 1, rng),
          norm2(channels) {}

    Var<T> operator()(const Var<T>& x) const {
        auto h = relu(norm1(conv1(x)));
        return add(x, norm2(conv2(h)));
    }

    void collect(ParamList<T>& out, const std::string& prefix) {
        conv1.collect(out, prefix + ".conv1");
        norm1.collect(out, prefix + ".norm1");
        conv2.collect(out, prefix + ".conv2");
        norm2.collect(out, prefix + ".norm2");
    }
};

}  // namespace tailor::layers
