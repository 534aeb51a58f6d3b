#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tailor/core/blob_io.hpp"
#include "tailor/core/layers.hpp"

namespace tailor {

enum class PerceptualBackend { pretrained_vgg19, seeded_random_conv };

inline const char* to_string(PerceptualBackend b) {
    return b == PerceptualBackend::pretrained_vgg19 ? "pretrained_vgg19" : "seeded_random_conv";
}

inline std::optional<PerceptualBackend> parse_perceptual_backend(const std::string& s) {
    if (s == "pretrained_vgg19") return PerceptualBackend::pretrained_vgg19;
    if (s == "seeded_random_conv") return PerceptualBackend::seeded_random_conv;
    return std::nullopt;
}

// Frozen VGG-style feature stack. Inputs are images in [-1, 1]; they are
// mapped to [0, 1] and normalized with the ImageNet channel statistics before
// the first conv. Features are taken after the ReLU named by layer_spec
// ("relu1_1", "relu1_2", "relu2_1", ...).
template <typename T>
class PerceptualExtractor {
public:
    struct Stage {
        std::vector<int> channels;  // one 3x3 conv + ReLU per entry
    };

    // Three single-conv stages (8, 16, 32 channels), He-scaled from seed.
    static PerceptualExtractor seeded_random_conv(std::uint64_t seed, std::string layer_spec = "relu3_1") {
        PerceptualExtractor ex(PerceptualBackend::seeded_random_conv, {{{8}}, {{16}}, {{32}}}, std::move(layer_spec), seed);
        for (auto& conv : ex.convs_) {
            // fan-in uniform has variance 1/(3 fan_in); sqrt(6) lifts it to 2/fan_in
            for (auto& v : conv.weight.mutable_value().values()) v *= static_cast<T>(std::sqrt(6.0));
            for (auto& v : conv.bias.mutable_value().values()) v = T(0);
        }
        return ex;
    }

    // VGG19 conv stages up to the requested layer, weights read from
    // dir/vgg19.json + blobs (conv names "conv{stage}_{index}").
    static PerceptualExtractor pretrained_vgg19(const std::filesystem::path& dir, std::string layer_spec = "relu3_1") {
        const auto meta_path = dir / "vgg19.json";
        if (!std::filesystem::is_regular_file(meta_path)) {
            throw ExtractorUnavailable("VGG19 weights not found at " + meta_path.string());
        }
        nlohmann::json meta;
        try {
            std::ifstream in(meta_path);
            meta = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ExtractorUnavailable("unreadable VGG19 metadata: " + std::string(e.what()));
        }
        std::vector<Stage> stages{{{64, 64}}, {{128, 128}}, {{256, 256, 256, 256}}, {{512, 512, 512, 512}}};
        PerceptualExtractor ex(PerceptualBackend::pretrained_vgg19, stages, std::move(layer_spec), 0);
        try {
            load_params(dir, meta.at("tensors"), ex.params());
        } catch (const CorruptCheckpoint& e) {
            throw ExtractorUnavailable(std::string("VGG19 weights incomplete: ") + e.what());
        }
        return ex;
    }

    PerceptualBackend backend() const { return backend_; }
    const std::string& layer_spec() const { return layer_spec_; }

    // Differentiable w.r.t. image; the weights never receive gradients.
    Var<T> features(const Var<T>& image) const {
        static constexpr double kMean[3] = {0.485, 0.456, 0.406};
        static constexpr double kStd[3] = {0.229, 0.224, 0.225};
        if (image.shape().c != 3) throw ShapeMismatch("perceptual input must have 3 channels, got " + image.shape().str());
        Var<T> x = channel_affine(image, kMean, kStd);
        std::size_t conv_index = 0;
        for (std::size_t s = 0; s < stages_.size(); ++s) {
            if (s > 0) x = max_pool2(x);
            for (std::size_t k = 0; k < stages_[s].channels.size(); ++k) {
                x = relu(convs_[conv_index++](x));
                if (layer_name(s, k) == layer_spec_) return x;
            }
        }
        throw InvalidConfig("unknown perceptual layer " + layer_spec_);
    }

    ParamList<T> params() {
        ParamList<T> out;
        std::size_t conv_index = 0;
        for (std::size_t s = 0; s < stages_.size(); ++s) {
            for (std::size_t k = 0; k < stages_[s].channels.size(); ++k) {
                convs_[conv_index++].collect(out, "conv" + std::to_string(s + 1) + "_" + std::to_string(k + 1));
            }
        }
        return out;
    }

    static std::string layer_name(std::size_t stage, std::size_t index) {
        return "relu" + std::to_string(stage + 1) + "_" + std::to_string(index + 1);
    }

private:
    PerceptualExtractor(PerceptualBackend backend, std::vector<Stage> stages, std::string layer_spec, std::uint64_t seed)
        : backend_(backend), layer_spec_(std::move(layer_spec)) {
        Rng rng(seed);
        int in = 3;
        bool found = false;
        for (std::size_t s = 0; s < stages.size() && !found; ++s) {
            Stage kept;
            for (std::size_t k = 0; k < stages[s].channels.size() && !found; ++k) {
                const int ch = stages[s].channels[k];
                convs_.emplace_back(in, ch, 3, 1, 1, rng);
                kept.channels.push_back(ch);
                in = ch;
                found = layer_name(s, k) == layer_spec_;
            }
            stages_.push_back(kept);
        }
        if (!found) throw InvalidConfig("unknown perceptual layer " + layer_spec_);
        for (auto& np : params()) np.param->set_trainable(false);
    }

    // (x + 1) / 2 then per-channel (v - mean) / std.
    static Var<T> channel_affine(const Var<T>& x, const double* mean, const double* stdev) {
        const Shape s = x.shape();
        const std::size_t plane = s.plane();
        Tensor<T> out(s);
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < 3; ++c) {
                const T a = static_cast<T>(0.5 / stdev[c]);
                const T b = static_cast<T>((0.5 - mean[c]) / stdev[c]);
                const T* src = x.value().sample_ptr(n) + c * plane;
                T* dst = out.sample_ptr(n) + c * plane;
                for (std::size_t i = 0; i < plane; ++i) dst[i] = a * src[i] + b;
            }
        std::array<T, 3> gains{};
        for (int c = 0; c < 3; ++c) gains[c] = static_cast<T>(0.5 / stdev[c]);
        return make_result<T>(std::move(out), {x}, [s, plane, gains](Node<T>& self) {
            auto& g = self.parents[0]->grad_buffer();
            for (int n = 0; n < s.n; ++n)
                for (int c = 0; c < 3; ++c) {
                    const T* src = self.grad.sample_ptr(n) + c * plane;
                    T* dst = g.sample_ptr(n) + c * plane;
                    for (std::size_t i = 0; i < plane; ++i) dst[i] += gains[c] * src[i];
                }
        });
    }

    PerceptualBackend backend_;
    std::string layer_spec_;
    std::vector<Stage> stages_;
    std::vector<layers::Conv2d<T>> convs_;
};

}  // namespace tailor
