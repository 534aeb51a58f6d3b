#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tailor/core/blob_io.hpp"
#include "tailor/core/layers.hpp"
#include "tailor/preprocess/geometry.hpp"

namespace tailor {

enum class EdgeBackend { deterministic_gradient, hed_pretrained };

inline const char* to_string(EdgeBackend b) {
    return b == EdgeBackend::deterministic_gradient ? "deterministic_gradient" : "hed_pretrained";
}

inline std::optional<EdgeBackend> parse_edge_backend(const std::string& s) {
    if (s == "deterministic_gradient") return EdgeBackend::deterministic_gradient;
    if (s == "hed_pretrained") return EdgeBackend::hed_pretrained;
    return std::nullopt;
}

// Sobel magnitude of the luma channel (divided by 4 so a unit step reads 1)
// compared against a fixed threshold. Output is binary.
inline constexpr double kEdgeThreshold = 0.1;

template <typename T>
EdgeMap<T> gradient_edges(const Tensor<T>& image01) {
    const Shape s = image01.shape();
    if (s.n != 1 || (s.c != 3 && s.c != 1)) throw ShapeMismatch("edge input must be (1,3|1,H,W), got " + s.str());
    std::vector<double> luma(s.plane());
    for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
            double v = 0.0;
            if (s.c == 3) {
                v = 0.299 * image01.at(0, 0, y, x) + 0.587 * image01.at(0, 1, y, x) + 0.114 * image01.at(0, 2, y, x);
            } else {
                v = image01.at(0, 0, y, x);
            }
            luma[static_cast<std::size_t>(y) * s.w + x] = v;
        }
    }
    auto px = [&](int x, int y) {
        x = std::clamp(x, 0, s.w - 1);
        y = std::clamp(y, 0, s.h - 1);
        return luma[static_cast<std::size_t>(y) * s.w + x];
    };
    EdgeMap<T> out{Tensor<T>(Shape{1, 1, s.h, s.w})};
    for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
            const double gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                              (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
            const double gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)) -
                              (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
            const double mag = std::sqrt(gx * gx + gy * gy) / 4.0;
            out.grid.at(0, 0, y, x) = mag >= kEdgeThreshold ? T(1) : T(0);
        }
    }
    return out;
}

namespace detail {

template <typename T>
Var<T> upsample_nearest(const Var<T>& x, int factor) {
    const Shape s = x.shape();
    Tensor<T> out(Shape{s.n, s.c, s.h * factor, s.w * factor});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h * factor; ++y)
                for (int xx = 0; xx < s.w * factor; ++xx) out.at(n, c, y, xx) = x.value().at(n, c, y / factor, xx / factor);
    return make_result<T>(std::move(out), {x}, [s, factor](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c)
                for (int y = 0; y < s.h * factor; ++y)
                    for (int xx = 0; xx < s.w * factor; ++xx)
                        g.at(n, c, y / factor, xx / factor) += self.grad.at(n, c, y, xx);
    });
}

}  // namespace detail

// HED-style network: VGG-like stages, one 1x1 side output per stage,
// upsampled to input size and fused by a 1x1 conv, then sigmoid. Weights
// come from a directory holding hed.json (architecture + tensor index) and
// one blob per tensor.
template <typename T>
class HedEdgeModel {
public:
    struct Architecture {
        std::vector<int> stage_channels{16, 32, 64};
        int convs_per_stage = 2;
    };

    explicit HedEdgeModel(Architecture arch, std::uint64_t seed = 0) : arch_(std::move(arch)) {
        Rng rng(seed);
        int in = 3;
        for (std::size_t s = 0; s < arch_.stage_channels.size(); ++s) {
            const int ch = arch_.stage_channels[s];
            std::vector<layers::Conv2d<T>> convs;
            for (int k = 0; k < arch_.convs_per_stage; ++k) {
                convs.emplace_back(k == 0 ? in : ch, ch, 3, 1, 1, rng);
            }
            stages_.push_back(std::move(convs));
            sides_.emplace_back(ch, 1, 1, 1, 0, rng);
            in = ch;
        }
        fuse_ = layers::Conv2d<T>(static_cast<int>(arch_.stage_channels.size()), 1, 1, 1, 0, rng);
    }

    static HedEdgeModel load(const std::filesystem::path& dir) {
        const auto meta_path = dir / "hed.json";
        if (!std::filesystem::is_regular_file(meta_path)) {
            throw MissingBackendWeights("HED weights not found at " + meta_path.string());
        }
        nlohmann::json meta;
        try {
            std::ifstream in(meta_path);
            meta = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw MissingBackendWeights("unreadable HED metadata: " + std::string(e.what()));
        }
        Architecture arch;
        arch.stage_channels = meta.at("stage_channels").get<std::vector<int>>();
        arch.convs_per_stage = meta.at("convs_per_stage").get<int>();
        HedEdgeModel model(arch);
        try {
            load_params(dir, meta.at("tensors"), model.params());
        } catch (const CorruptCheckpoint& e) {
            throw MissingBackendWeights(std::string("HED weights incomplete: ") + e.what());
        }
        return model;
    }

    void save(const std::filesystem::path& dir) {
        std::filesystem::create_directories(dir);
        nlohmann::json meta;
        meta["stage_channels"] = arch_.stage_channels;
        meta["convs_per_stage"] = arch_.convs_per_stage;
        meta["tensors"] = save_params(dir, params());
        std::ofstream(dir / "hed.json") << meta.dump(2);
    }

    ParamList<T> params() {
        ParamList<T> out;
        for (std::size_t s = 0; s < stages_.size(); ++s) {
            for (std::size_t k = 0; k < stages_[s].size(); ++k) {
                stages_[s][k].collect(out, "stage" + std::to_string(s) + ".conv" + std::to_string(k));
            }
            sides_[s].collect(out, "side" + std::to_string(s));
        }
        fuse_.collect(out, "fuse");
        return out;
    }

    // image01: (1, 3, H, W) in [0, 1]; H and W divisible by 2^(stages-1).
    EdgeMap<T> operator()(const Tensor<T>& image01) const {
        NoGradGuard no_grad;
        const Shape s = image01.shape();
        Var<T> x(image01);
        Var<T> fused;
        std::vector<Var<T>> side_maps;
        for (std::size_t st = 0; st < stages_.size(); ++st) {
            if (st > 0) x = max_pool2(x);
            for (const auto& conv : stages_[st]) x = relu(conv(x));
            Var<T> side = sides_[st](x);
            const int factor = 1 << st;
            if (factor > 1) side = detail::upsample_nearest(side, factor);
            if (side.shape().h != s.h || side.shape().w != s.w) {
                throw ShapeMismatch("HED input size must be divisible by " + std::to_string(factor));
            }
            side_maps.push_back(side);
        }
        Var<T> stacked = side_maps.front();
        for (std::size_t i = 1; i < side_maps.size(); ++i) stacked = concat_channels(stacked, side_maps[i]);
        return EdgeMap<T>{sigmoid(fuse_(stacked)).value()};
    }

private:
    Architecture arch_;
    std::vector<std::vector<layers::Conv2d<T>>> stages_;
    std::vector<layers::Conv2d<T>> sides_;
    layers::Conv2d<T> fuse_;
};

// image01 is (1, 3, H, W) in [0, 1]. The HED backend needs a loaded model.
template <typename T>
EdgeMap<T> extract_edges(const Tensor<T>& image01, EdgeBackend backend,
                         const HedEdgeModel<T>* hed = nullptr) {
    if (backend == EdgeBackend::deterministic_gradient) return gradient_edges(image01);
    if (hed == nullptr) throw MissingBackendWeights("hed_pretrained backend selected but no weights loaded");
    return (*hed)(image01);
}

}  // namespace tailor
