#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "tailor/data/manifest.hpp"
#include "tailor/net/discriminator.hpp"
#include "tailor/objectives/perceptual.hpp"

namespace tailor {

inline constexpr double kProbEpsilon = 1e-7;

inline const std::vector<std::string>& loss_component_names() {
    static const std::vector<std::string> names{"recon", "vgg", "att", "cnt", "adv_g", "adv_d"};
    return names;
}

// total is differentiable; components and weights are plain numbers such
// that total == sum(weights[k] * components[k]).
template <typename T>
struct LossBundle {
    Var<T> total;
    std::map<std::string, double> components;
    std::map<std::string, double> weights;

    double value() const { return static_cast<double>(total.item()); }

    double resum() const {
        double s = 0.0;
        for (const auto& [k, v] : components) s += weights.at(k) * v;
        return s;
    }
};

// Weighted sum of named scalar terms.
template <typename T>
LossBundle<T> weighted_bundle(const std::vector<std::tuple<std::string, Var<T>, double>>& terms) {
    LossBundle<T> out;
    std::vector<std::pair<Var<T>, T>> parts;
    for (const auto& [name, v, w] : terms) {
        out.components[name] = static_cast<double>(v.item());
        out.weights[name] = w;
        parts.emplace_back(v, static_cast<T>(w));
    }
    out.total = add_scalars(parts);
    return out;
}

template <typename T>
Var<T> recon_loss(const Var<T>& reconstructed, const Var<T>& original) {
    return mean_abs_diff(reconstructed, original);
}

template <typename T>
Var<T> perceptual_loss(const PerceptualExtractor<T>& extractor, const Var<T>& edited, const Var<T>& original) {
    require_same_shape(edited.shape(), original.shape(), "perceptual_loss");
    Var<T> target;
    {
        NoGradGuard no_grad;
        target = extractor.features(original.detach());
    }
    return mean_abs_diff(extractor.features(edited), target);
}

// Per sample: sum over classes of -[V log p + (1 - V) log(1 - p)] with p
// clamped to [eps, 1 - eps]; averaged over the batch. probs is (N, K, 1, 1).
template <typename T>
Var<T> attribute_loss(const Var<T>& probs, const std::vector<AttributeOneHot>& targets) {
    const Shape s = probs.shape();
    const int k = s.c * s.h * s.w;
    if (static_cast<int>(targets.size()) != s.n) {
        throw ShapeMismatch("attribute_loss: " + std::to_string(targets.size()) + " targets for batch " + s.str());
    }
    std::vector<T> v(static_cast<std::size_t>(s.n) * k);
    for (int n = 0; n < s.n; ++n) {
        if (targets[n].class_count() != k) {
            throw ShapeMismatch("attribute_loss: one-hot width " + std::to_string(targets[n].class_count()) +
                                " vs " + std::to_string(k) + " probabilities");
        }
        for (int j = 0; j < k; ++j) v[static_cast<std::size_t>(n) * k + j] = targets[n].vector()[j];
    }
    const T eps = static_cast<T>(kProbEpsilon);
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double p = std::clamp(static_cast<double>(probs.value()[i]), kProbEpsilon, 1.0 - kProbEpsilon);
        total -= v[i] * std::log(p) + (1.0 - v[i]) * std::log(1.0 - p);
    }
    const T batch = static_cast<T>(s.n);
    return make_result<T>(Tensor<T>::scalar(static_cast<T>(total / s.n)), {probs},
                          [v = std::move(v), eps, batch](Node<T>& self) {
                              auto& g = self.parents[0]->grad_buffer();
                              const auto& pv = self.parents[0]->value;
                              for (std::size_t i = 0; i < v.size(); ++i) {
                                  const T p = pv[i];
                                  if (p < eps || p > T(1) - eps) continue;  // clamped: flat
                                  g[i] += self.grad[0] * (-v[i] / p + (T(1) - v[i]) / (T(1) - p)) / batch;
                              }
                          });
}

// Mean |D_conv(I^T) - D_conv(edited)| on the last trunk feature map. The
// target side is a constant.
template <typename T>
Var<T> content_loss(const Var<T>& edited_features, const Tensor<T>& target_features) {
    return mean_abs_diff(edited_features, Var<T>(target_features));
}

template <typename T>
Tensor<T> content_target(const Discriminator<T>& d, const Tensor<T>& target_image) {
    NoGradGuard no_grad;
    return d.features(Var<T>(target_image)).back().value();
}

template <typename T>
Var<T> content_loss(const Discriminator<T>& d, const Var<T>& edited, const Tensor<T>& target_image) {
    require_same_shape(edited.shape(), target_image.shape(), "content_loss");
    return content_loss(d.features(edited).back(), content_target(d, target_image));
}

struct LossWeights {
    double lambda1 = 0.1;  // attribute term
    double lambda2 = 2.5;  // perceptual term
};

// (1 - D(fake))^2 + L_CNT + lambda1 L_ATT(fake, V^T) + lambda2 L_VGG(fake, I^O)
template <typename T>
LossBundle<T> generator_terms(const Var<T>& adv, const Var<T>& cnt, const Var<T>& att, const Var<T>& vgg,
                              const LossWeights& w) {
    return weighted_bundle<T>({{"adv_g", adv, 1.0}, {"cnt", cnt, 1.0}, {"att", att, w.lambda1}, {"vgg", vgg, w.lambda2}});
}

template <typename T>
LossBundle<T> generator_loss(const DiscriminatorOutput<T>& d_out_fake, const Var<T>& edited,
                             const Tensor<T>& target_features, const std::vector<AttributeOneHot>& target_onehot,
                             const Var<T>& original, const PerceptualExtractor<T>& extractor, const LossWeights& w) {
    Var<T> adv = mean_squared_to(d_out_fake.realness, T(1));
    Var<T> cnt = content_loss(d_out_fake.features.back(), target_features);
    Var<T> att = attribute_loss(d_out_fake.attribute_probs, target_onehot);
    Var<T> vgg = perceptual_loss(extractor, edited, original);
    return generator_terms(adv, cnt, att, vgg, w);
}

// 1/2 [D(fake)^2 + (D(real) - 1)^2] + L_ATT(real, V^O). The fake branch
// must come from a detached image.
template <typename T>
LossBundle<T> discriminator_terms(const Var<T>& realness_fake, const Var<T>& realness_real, const Var<T>& att_real) {
    Var<T> adv = add_scalars<T>({{mean_squared_to(realness_fake, T(0)), T(0.5)}, {mean_squared_to(realness_real, T(1)), T(0.5)}});
    return weighted_bundle<T>({{"adv_d", adv, 1.0}, {"att", att_real, 1.0}});
}

template <typename T>
LossBundle<T> discriminator_loss(const DiscriminatorOutput<T>& d_out_fake_detached, const DiscriminatorOutput<T>& d_out_real,
                                 const std::vector<AttributeOneHot>& real_onehot) {
    return discriminator_terms(d_out_fake_detached.realness, d_out_real.realness,
                               attribute_loss(d_out_real.attribute_probs, real_onehot));
}

template <typename T>
LossBundle<T> reconstruction_bundle(const Var<T>& reconstructed, const Var<T>& original) {
    return weighted_bundle<T>({{"recon", recon_loss(reconstructed, original), 1.0}});
}

}  // namespace tailor
