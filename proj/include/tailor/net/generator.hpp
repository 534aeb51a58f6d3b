#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "tailor/core/layers.hpp"
#include "tailor/preprocess/geometry.hpp"
#include "tailor/preprocess/region.hpp"

namespace tailor {

// Architecture knobs shared by the generator and the discriminator.
struct NetConfig {
    int image_size = 64;
    int base_channels = 8;   // stem width; doubled by each downsampling stage
    int down_stages = 2;     // strided convs after the stem
    int res_blocks = 4;
    int edge_channels = 1;   // 3 when the edge encoder is fed RGB crops
    int class_count = 12;
    int disc_channels = 16;
    int disc_depth = 3;

    int latent_channels() const { return base_channels << down_stages; }
    int latent_size() const { return image_size >> down_stages; }

    void validate() const {
        if (image_size < 4 || base_channels < 1 || down_stages < 0 || res_blocks < 0 || disc_depth < 1 ||
            disc_channels < 1 || class_count < 1 || (edge_channels != 1 && edge_channels != 3)) {
            throw InvalidConfig("invalid network configuration");
        }
        if (image_size % (1 << std::max(down_stages, disc_depth)) != 0) {
            throw InvalidConfig("image_size must be divisible by 2^max(down_stages, disc_depth)");
        }
    }

    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

inline nlohmann::ordered_json to_json(const NetConfig& c) {
    return {{"image_size", c.image_size},       {"base_channels", c.base_channels},
            {"down_stages", c.down_stages},     {"res_blocks", c.res_blocks},
            {"edge_channels", c.edge_channels}, {"class_count", c.class_count},
            {"disc_channels", c.disc_channels}, {"disc_depth", c.disc_depth}};
}

inline NetConfig net_config_from_json(const nlohmann::json& j) {
    NetConfig c;
    c.image_size = j.at("image_size").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.down_stages = j.at("down_stages").get<int>();
    c.res_blocks = j.at("res_blocks").get<int>();
    c.edge_channels = j.at("edge_channels").get<int>();
    c.class_count = j.at("class_count").get<int>();
    c.disc_channels = j.at("disc_channels").get<int>();
    c.disc_depth = j.at("disc_depth").get<int>();
    return c;
}

// Per pixel: composed = m * C + (1 - m) * masked, with the single-channel
// mask broadcast across the colour channels.
template <typename T>
Var<T> sam_compose(const Var<T>& mask, const Var<T>& color, const Var<T>& masked) {
    const Shape ms = mask.shape();
    const Shape cs = color.shape();
    require_same_shape(cs, masked.shape(), "sam_compose color/masked");
    if (ms.c != 1 || ms.n != cs.n || ms.h != cs.h || ms.w != cs.w) {
        throw ShapeMismatch("sam_compose mask " + ms.str() + " vs color " + cs.str());
    }
    const std::size_t plane = cs.plane();
    Tensor<T> out(cs);
    for (int n = 0; n < cs.n; ++n) {
        const T* m = mask.value().sample_ptr(n);
        for (int c = 0; c < cs.c; ++c) {
            const T* col = color.value().sample_ptr(n) + c * plane;
            const T* im = masked.value().sample_ptr(n) + c * plane;
            T* o = out.sample_ptr(n) + c * plane;
            for (std::size_t i = 0; i < plane; ++i) o[i] = m[i] * col[i] + (T(1) - m[i]) * im[i];
        }
    }
    return make_result<T>(std::move(out), {mask, color, masked}, [cs, plane](Node<T>& self) {
        const auto& mv = self.parents[0]->value;
        const auto& cv = self.parents[1]->value;
        const auto& iv = self.parents[2]->value;
        const bool want_m = self.parents[0]->requires_grad;
        const bool want_c = self.parents[1]->requires_grad;
        const bool want_i = self.parents[2]->requires_grad;
        for (int n = 0; n < cs.n; ++n) {
            const T* m = mv.sample_ptr(n);
            for (int c = 0; c < cs.c; ++c) {
                const std::size_t off = c * plane;
                const T* g = self.grad.sample_ptr(n) + off;
                const T* col = cv.sample_ptr(n) + off;
                const T* im = iv.sample_ptr(n) + off;
                if (want_m) {
                    T* gm = self.parents[0]->grad_buffer().sample_ptr(n);
                    for (std::size_t i = 0; i < plane; ++i) gm[i] += g[i] * (col[i] - im[i]);
                }
                if (want_c) {
                    T* gc = self.parents[1]->grad_buffer().sample_ptr(n) + off;
                    for (std::size_t i = 0; i < plane; ++i) gc[i] += g[i] * m[i];
                }
                if (want_i) {
                    T* gi = self.parents[2]->grad_buffer().sample_ptr(n) + off;
                    for (std::size_t i = 0; i < plane; ++i) gi[i] += g[i] * (T(1) - m[i]);
                }
            }
        }
    });
}

// Stem conv, strided downsampling convs, then residual blocks; instance
// norm + ReLU after every conv.
template <typename T>
struct Encoder {
    layers::Conv2d<T> stem;
    layers::InstanceNorm<T> stem_norm;
    std::vector<layers::Conv2d<T>> down;
    std::vector<layers::InstanceNorm<T>> down_norm;
    std::vector<layers::ResidualBlock<T>> blocks;
    int in_channels = 0;

    Encoder() = default;
    Encoder(int in, const NetConfig& cfg, Rng& rng) : in_channels(in) {
        int ch = cfg.base_channels;
        stem = layers::Conv2d<T>(in, ch, 3, 1, 1, rng);
        stem_norm = layers::InstanceNorm<T>(ch);
        for (int i = 0; i < cfg.down_stages; ++i) {
            down.emplace_back(ch, ch * 2, 4, 2, 1, rng);
            down_norm.emplace_back(ch * 2);
            ch *= 2;
        }
        for (int i = 0; i < cfg.res_blocks; ++i) blocks.emplace_back(ch, rng);
    }

    Var<T> operator()(const Var<T>& x) const {
        if (x.shape().c != in_channels) {
            throw ShapeMismatch("encoder expects " + std::to_string(in_channels) + " channels, got " + x.shape().str());
        }
        Var<T> h = relu(stem_norm(stem(x)));
        for (std::size_t i = 0; i < down.size(); ++i) h = relu(down_norm[i](down[i](h)));
        for (const auto& b : blocks) h = b(h);
        return h;
    }

    void collect(ParamList<T>& out, const std::string& prefix) {
        stem.collect(out, prefix + ".stem");
        stem_norm.collect(out, prefix + ".stem_norm");
        for (std::size_t i = 0; i < down.size(); ++i) {
            down[i].collect(out, prefix + ".down" + std::to_string(i));
            down_norm[i].collect(out, prefix + ".down_norm" + std::to_string(i));
        }
        for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(out, prefix + ".res" + std::to_string(i));
    }
};

// Transpose-conv upsampling back to image size; the last conv emits one
// mask logit channel and three colour channels.
template <typename T>
struct Decoder {
    std::vector<layers::ConvTranspose2d<T>> up;
    std::vector<layers::InstanceNorm<T>> up_norm;
    layers::Conv2d<T> head;
    int in_channels = 0;

    Decoder() = default;
    Decoder(const NetConfig& cfg, Rng& rng) : in_channels(2 * cfg.latent_channels()) {
        int ch = in_channels;
        for (int i = 0; i < cfg.down_stages; ++i) {
            const int out = std::max(cfg.latent_channels() >> (i + 1), 1);
            up.emplace_back(ch, out, 4, 2, 1, rng);
            up_norm.emplace_back(out);
            ch = out;
        }
        head = layers::Conv2d<T>(ch, 4, 3, 1, 1, rng);
    }

    // Returns the 4-channel pre-activation map.
    Var<T> operator()(const Var<T>& fused) const {
        if (fused.shape().c != in_channels) {
            throw ShapeMismatch("decoder expects " + std::to_string(in_channels) + " channels, got " +
                                fused.shape().str());
        }
        Var<T> h = fused;
        for (std::size_t i = 0; i < up.size(); ++i) h = relu(up_norm[i](up[i](h)));
        return head(h);
    }

    void collect(ParamList<T>& out, const std::string& prefix) {
        for (std::size_t i = 0; i < up.size(); ++i) {
            up[i].collect(out, prefix + ".up" + std::to_string(i));
            up_norm[i].collect(out, prefix + ".up_norm" + std::to_string(i));
        }
        head.collect(out, prefix + ".head");
    }
};

template <typename T>
struct GeneratorOutput {
    Var<T> mask;      // (N, 1, H, W), sigmoid
    Var<T> color;     // (N, 3, H, W), tanh
    Var<T> composed;  // (N, 3, H, W)
};

template <typename T>
class Generator {
public:
    Generator() = default;
    Generator(const NetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg.validate();
        Rng rng(seed);
        phi_img_ = Encoder<T>(3, cfg, rng);
        phi_edge_ = Encoder<T>(cfg.edge_channels, cfg, rng);
        decoder_ = Decoder<T>(cfg, rng);
    }

    const NetConfig& config() const { return cfg_; }

    Var<T> encode_image(const Var<T>& masked) const {
        check_spatial(masked.shape(), "masked image");
        return phi_img_(masked);
    }

    Var<T> encode_edge(const Var<T>& edge) const {
        check_spatial(edge.shape(), "edge map");
        return phi_edge_(edge);
    }

    // (mask, color) from channel-concatenated latents.
    std::pair<Var<T>, Var<T>> decode(const Var<T>& fused) const {
        Var<T> raw = decoder_(fused);
        return {sigmoid(slice_channels(raw, 0, 1)), tanh(slice_channels(raw, 1, 4))};
    }

    GeneratorOutput<T> forward_edit(const Var<T>& masked, const Var<T>& edge) const {
        auto fused = concat_channels(encode_image(masked), encode_edge(edge));
        auto [m, c] = decode(fused);
        auto composed = sam_compose(m, c, masked);
        return {m, c, composed};
    }

    Encoder<T>& phi_img() { return phi_img_; }
    Encoder<T>& phi_edge() { return phi_edge_; }
    Decoder<T>& decoder() { return decoder_; }

    ParamList<T> phi_img_params() { return collect_one(phi_img_, "phi_img"); }
    ParamList<T> phi_edge_params() { return collect_one(phi_edge_, "phi_edge"); }
    ParamList<T> decoder_params() {
        ParamList<T> out;
        decoder_.collect(out, "decoder");
        return out;
    }
    ParamList<T> params() {
        ParamList<T> out = phi_img_params();
        for (auto& p : phi_edge_params()) out.push_back(p);
        for (auto& p : decoder_params()) out.push_back(p);
        return out;
    }

private:
    template <typename M>
    static ParamList<T> collect_one(M& module, const std::string& prefix) {
        ParamList<T> out;
        module.collect(out, prefix);
        return out;
    }

    void check_spatial(const Shape& s, const char* what) const {
        if (s.h != cfg_.image_size || s.w != cfg_.image_size) {
            throw ShapeMismatch(std::string(what) + " must be " + std::to_string(cfg_.image_size) + "x" +
                                std::to_string(cfg_.image_size) + ", got " + s.str());
        }
    }

    NetConfig cfg_;
    Encoder<T> phi_img_;
    Encoder<T> phi_edge_;
    Decoder<T> decoder_;
};

}  // namespace tailor
