#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tailor/core/adam.hpp"
#include "tailor/core/blob_io.hpp"
#include "tailor/core/layers.hpp"
#include "tailor/data/synthetic.hpp"
#include "tailor/objectives/losses.hpp"
#include "tailor/preprocess/normalize.hpp"
#include "tailor/preprocess/geometry.hpp"

namespace tailor {

enum class ClassifierBackend { trained_cnn, synthetic_oracle };

inline const char* to_string(ClassifierBackend b) {
    return b == ClassifierBackend::trained_cnn ? "trained_cnn" : "synthetic_oracle";
}

inline std::optional<ClassifierBackend> parse_classifier_backend(const std::string& s) {
    if (s == "trained_cnn") return ClassifierBackend::trained_cnn;
    if (s == "synthetic_oracle") return ClassifierBackend::synthetic_oracle;
    return std::nullopt;
}

// Predicts the attribute type of an image. reference is the dataset record
// the image was derived from (its texture source); the oracle needs it, the
// CNN ignores it.
class AttributeClassifier {
public:
    virtual ~AttributeClassifier() = default;
    virtual ClassifierBackend backend() const = 0;
    virtual int class_count() const = 0;
    virtual int classify(const Image8& image, const AnnotationRecord& reference) const = 0;
};

// Template matching against the generator's own drawing parameters: each
// candidate cutout is redrawn with the reference's position, size and
// colours, and the candidate that best explains the garment/background
// pixels in the collar envelope wins.
class SyntheticOracle final : public AttributeClassifier {
public:
    explicit SyntheticOracle(int class_count = 12, int max_shift = 2) : class_count_(class_count), max_shift_(max_shift) {}

    ClassifierBackend backend() const override { return ClassifierBackend::synthetic_oracle; }
    int class_count() const override { return class_count_; }

    int classify(const Image8& image, const AnnotationRecord& reference) const override {
        if (!reference.synthetic) {
            throw ClassifierUnavailable("synthetic_oracle needs drawing parameters; " + reference.image_path +
                                        " is not a synthetic record");
        }
        SyntheticParams p = scaled(*reference.synthetic, reference.width > 0 ? static_cast<double>(image.width) / reference.width : 1.0);
        const int n = std::min(p.n_shapes, class_count_);
        const double margin = 3.0;
        const int x0 = std::max(0, static_cast<int>(std::floor(p.cx - p.collar_width / 2 - margin)));
        const int x1 = std::min(image.width, static_cast<int>(std::ceil(p.cx + p.collar_width / 2 + margin)) + 1);
        const int y0 = std::max(0, static_cast<int>(std::floor(p.neck_y - margin)));
        const int y1 = std::min(image.height, static_cast<int>(std::ceil(p.neck_y + p.collar_depth + margin)) + 1);

        // +1 garment (fill or outline, both drawn on covered pixels), -1 background
        std::vector<int> observed;
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) observed.push_back(pixel_class(image, x, y, p));

        int best = 0;
        long best_score = std::numeric_limits<long>::min();
        for (int shape = 0; shape < n; ++shape) {
            for (int dy = -max_shift_; dy <= max_shift_; ++dy) {
                for (int dx = -max_shift_; dx <= max_shift_; ++dx) {
                    SyntheticParams q = p;
                    q.shape = shape;
                    q.cx += dx;
                    q.neck_y += dy;
                    long score = 0;
                    std::size_t k = 0;
                    for (int y = y0; y < y1; ++y)
                        for (int x = x0; x < x1; ++x, ++k) {
                            const int predicted = garment_covers(q, x, y) ? 1 : -1;
                            score += predicted == observed[k] ? 1 : -1;
                        }
                    if (score > best_score) {
                        best_score = score;
                        best = shape;
                    }
                }
            }
        }
        return best;
    }

private:
    static SyntheticParams scaled(SyntheticParams p, double s) {
        if (s == 1.0) return p;
        p.cx *= s;
        p.neck_y *= s;
        p.collar_width *= s;
        p.collar_depth *= s;
        p.torso_half_width *= s;
        p.shoulder_half_width *= s;
        p.sleeve_bottom *= s;
        p.hem_y *= s;
        return p;
    }

    static int pixel_class(const Image8& img, int x, int y, const SyntheticParams& p) {
        auto dist = [&](const std::array<int, 3>& c) {
            double d = 0;
            for (int ch = 0; ch < 3; ++ch) {
                const double diff = static_cast<double>(img.at(x, y, ch)) - c[ch];
                d += diff * diff;
            }
            return d;
        };
        const double dg = std::min(dist(p.color), dist(p.outline));
        return dg < dist(p.background) ? 1 : -1;
    }

    int class_count_;
    int max_shift_;
};

// Small supervised convnet: three strided convs with LeakyReLU, a linear
// head and element-wise sigmoid, trained with the same per-class BCE as the
// discriminator's attribute head.
template <typename T>
class CnnClassifierNet {
public:
    struct Recipe {
        int image_size = 64;
        int iterations = 300;
        int batch_size = 16;
        double learning_rate = 1e-3;
        std::uint64_t seed = 5;
    };

    CnnClassifierNet() = default;
    CnnClassifierNet(int class_count, int image_size, std::uint64_t seed)
        : class_count_(class_count), image_size_(image_size) {
        Rng rng(seed);
        convs_.emplace_back(3, 8, 4, 2, 1, rng);
        convs_.emplace_back(8, 16, 4, 2, 1, rng);
        convs_.emplace_back(16, 32, 4, 2, 1, rng);
        const int side = image_size / 8;
        head_ = layers::Linear<T>(32 * side * side, class_count, rng);
    }

    Var<T> probs(const Var<T>& x) const {
        Var<T> h = x;
        for (const auto& c : convs_) h = leaky_relu(c(h), T(0.2));
        return sigmoid(head_(h));
    }

    ParamList<T> params() {
        ParamList<T> out;
        for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].collect(out, "conv" + std::to_string(i));
        head_.collect(out, "head");
        return out;
    }

    int class_count() const { return class_count_; }
    int image_size() const { return image_size_; }

private:
    int class_count_ = 0;
    int image_size_ = 0;
    std::vector<layers::Conv2d<T>> convs_;
    layers::Linear<T> head_;
};

class TrainedCnnClassifier final : public AttributeClassifier {
public:
    using Net = CnnClassifierNet<float>;

    explicit TrainedCnnClassifier(Net net) : net_(std::move(net)) {}

    ClassifierBackend backend() const override { return ClassifierBackend::trained_cnn; }
    int class_count() const override { return net_.class_count(); }

    int classify(const Image8& image, const AnnotationRecord&) const override {
        NoGradGuard no_grad;
        const Tensor<float> x = resize_bilinear(normalize<float>(image), net_.image_size(), net_.image_size());
        const Var<float> p = net_.probs(Var<float>(x));
        int best = 0;
        for (int k = 1; k < net_.class_count(); ++k) {
            if (p.value()[k] > p.value()[best]) best = k;
        }
        return best;
    }

    // Fixed recipe on every record of the manifest.
    static TrainedCnnClassifier train(const DatasetManifest& manifest, const Net::Recipe& recipe = {}) {
        if (manifest.empty()) throw DataEmpty("classifier training manifest is empty");
        std::vector<Tensor<float>> images;
        for (const auto& r : manifest.records) {
            images.push_back(resize_bilinear(normalize<float>(read_png(r.resolved_path, 3).image), recipe.image_size,
                                             recipe.image_size));
        }
        Net net(manifest.class_count, recipe.image_size, recipe.seed);
        AdamOptions opts;
        opts.learning_rate = recipe.learning_rate;
        opts.beta1 = 0.9;
        Adam<float> opt(net.params(), opts);
        Rng rng(recipe.seed + 1);
        const auto batch = static_cast<std::size_t>(std::min<int>(recipe.batch_size, static_cast<int>(images.size())));
        for (int it = 0; it < recipe.iterations; ++it) {
            const auto idx = sample_indices(images.size(), batch, rng);
            std::vector<Tensor<float>> xs;
            std::vector<AttributeOneHot> ys;
            for (auto i : idx) {
                xs.push_back(images[i]);
                ys.emplace_back(manifest.records[i].type_id, manifest.class_count);
            }
            opt.zero_grad();
            auto loss = attribute_loss(net.probs(Var<float>(stack_batch(xs))), ys);
            backward(loss);
            opt.step();
        }
        return TrainedCnnClassifier(std::move(net));
    }

    void save(const fs::path& dir) {
        fs::create_directories(dir);
        nlohmann::json meta;
        meta["class_count"] = net_.class_count();
        meta["image_size"] = net_.image_size();
        meta["tensors"] = save_params(dir, net_.params());
        std::ofstream(dir / "classifier.json") << meta.dump(2) << "\n";
    }

    static TrainedCnnClassifier load(const fs::path& dir) {
        const auto meta_path = dir / "classifier.json";
        if (!fs::is_regular_file(meta_path)) throw ClassifierUnavailable("no classifier checkpoint at " + dir.string());
        try {
            std::ifstream in(meta_path);
            const auto meta = nlohmann::json::parse(in);
            Net net(meta.at("class_count").get<int>(), meta.at("image_size").get<int>(), 0);
            load_params(dir, meta.at("tensors"), net.params());
            return TrainedCnnClassifier(std::move(net));
        } catch (const nlohmann::json::exception& e) {
            throw ClassifierUnavailable("unreadable classifier checkpoint: " + std::string(e.what()));
        } catch (const CorruptCheckpoint& e) {
            throw ClassifierUnavailable(std::string("classifier checkpoint incomplete: ") + e.what());
        }
    }

private:
    Net net_;
};

// 100 * misclassified / total, where misclassified means the predicted type
// differs from the requested one.
inline double classification_error(const std::vector<Image8>& edited, const std::vector<int>& requested,
                                   const std::vector<AnnotationRecord>& references, const AttributeClassifier& f) {
    if (edited.size() != requested.size() || edited.size() != references.size()) {
        throw ShapeMismatch("classification_error: mismatched list lengths");
    }
    if (edited.empty()) return 0.0;
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < edited.size(); ++i) {
        if (f.classify(edited[i], references[i]) != requested[i]) ++wrong;
    }
    return 100.0 * static_cast<double>(wrong) / static_cast<double>(edited.size());
}

}  // namespace tailor
