#pragma once

#include <vector>

#include "tailor/net/generator.hpp"

namespace tailor {

template <typename T>
struct DiscriminatorOutput {
    Var<T> realness;         // (N, 1, 1, 1), raw score
    Var<T> attribute_probs;  // (N, K, 1, 1), element-wise sigmoid
    std::vector<Var<T>> features;  // activation after each trunk stage
};

// Shared strided-conv trunk (LeakyReLU 0.2, no normalization) with a
// realness head and an attribute head, both linear on the flattened trunk
// output.
template <typename T>
class Discriminator {
public:
    Discriminator() = default;
    Discriminator(const NetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg.validate();
        Rng rng(seed);
        int in = 3;
        int ch = cfg.disc_channels;
        for (int i = 0; i < cfg.disc_depth; ++i) {
            trunk_.emplace_back(in, ch, 4, 2, 1, rng);
            in = ch;
            ch *= 2;
        }
        const int side = cfg.image_size >> cfg.disc_depth;
        const int flat = in * side * side;
        realness_ = layers::Linear<T>(flat, 1, rng);
        attribute_ = layers::Linear<T>(flat, cfg.class_count, rng);
    }

    const NetConfig& config() const { return cfg_; }
    int depth() const { return static_cast<int>(trunk_.size()); }

    std::vector<Var<T>> features(const Var<T>& image) const {
        const Shape s = image.shape();
        if (s.c != 3 || s.h != cfg_.image_size || s.w != cfg_.image_size) {
            throw ShapeMismatch("discriminator expects (N,3," + std::to_string(cfg_.image_size) + "," +
                                std::to_string(cfg_.image_size) + "), got " + s.str());
        }
        std::vector<Var<T>> feats;
        Var<T> h = image;
        for (const auto& conv : trunk_) {
            h = leaky_relu(conv(h), T(0.2));
            feats.push_back(h);
        }
        return feats;
    }

    DiscriminatorOutput<T> operator()(const Var<T>& image) const {
        DiscriminatorOutput<T> out;
        out.features = features(image);
        const Var<T>& last = out.features.back();
        out.realness = realness_(last);
        out.attribute_probs = sigmoid(attribute_(last));
        return out;
    }

    ParamList<T> params() {
        ParamList<T> out;
        for (std::size_t i = 0; i < trunk_.size(); ++i) trunk_[i].collect(out, "trunk" + std::to_string(i));
        realness_.collect(out, "realness_head");
        attribute_.collect(out, "attribute_head");
        return out;
    }

private:
    NetConfig cfg_;
    std::vector<layers::Conv2d<T>> trunk_;
    layers::Linear<T> realness_;
    layers::Linear<T> attribute_;
};

}  // namespace tailor
