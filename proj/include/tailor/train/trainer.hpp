#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <vector>

#include "tailor/train/checkpoint.hpp"

namespace tailor {

// Seeds for the independent random streams of one experiment.
enum : std::uint64_t {
    kSaltGenerator = 11,
    kSaltDiscriminator = 13,
    kSaltPhiImg = 17,
    kSaltPerceptual = 19,
    kSaltReconStream = 23,
    kSaltAdvStream = 29,
    kSaltEval = 31,
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) { return Rng(seed).fork(salt).next(); }

// Manifest records decoded once, resized to the network resolution, with
// edge maps and regions ready.
template <typename T>
struct TrainingData {
    std::vector<PreparedImage<T>> items;
    AttributeKind kind = AttributeKind::collar;
    int class_count = 12;

    std::size_t size() const { return items.size(); }

    std::vector<int> type_ids() const {
        std::vector<int> ids;
        for (const auto& it : items) ids.push_back(it.type_id);
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        return ids;
    }
};

template <typename T>
std::optional<HedEdgeModel<T>> load_hed_if_needed(const TrainConfig& cfg) {
    if (cfg.preprocess.edge_backend != EdgeBackend::hed_pretrained) return std::nullopt;
    if (cfg.hed_weights.empty()) throw MissingBackendWeights("hed_pretrained backend needs hed_weights");
    return HedEdgeModel<T>::load(cfg.hed_weights);
}

template <typename T>
TrainingData<T> prepare_training_data(const DatasetManifest& manifest, const TrainConfig& cfg) {
    if (manifest.empty()) throw DataEmpty("training manifest has no records");
    const auto hed = load_hed_if_needed<T>(cfg);
    TrainingData<T> data;
    data.kind = manifest.attribute_kind;
    data.class_count = manifest.class_count;
    data.items.reserve(manifest.size());
    for (const auto& r : manifest.records) data.items.push_back(prepare_record<T>(r, cfg.preprocess, hed ? &*hed : nullptr));
    return data;
}

template <typename T>
PerceptualExtractor<T> make_extractor(const TrainConfig& cfg) {
    if (cfg.perceptual_backend == PerceptualBackend::pretrained_vgg19) {
        return PerceptualExtractor<T>::pretrained_vgg19(cfg.vgg_weights, cfg.perceptual_layer);
    }
    return PerceptualExtractor<T>::seeded_random_conv(derive_seed(cfg.seed, kSaltPerceptual), cfg.perceptual_layer);
}

// Copy of cfg with the class count taken from the data.
template <typename T>
TrainConfig bind_to_data(TrainConfig cfg, const TrainingData<T>& data) {
    cfg.net.class_count = data.class_count;
    cfg.finalize();
    return cfg;
}

template <typename T>
Tensor<T> stack_pixels(const TrainingData<T>& data, const std::vector<std::size_t>& idx) {
    std::vector<Tensor<T>> parts;
    for (auto i : idx) parts.push_back(data.items[i].pixels);
    return stack_batch(parts);
}

template <typename T>
struct ReconBatch {
    std::vector<std::size_t> indices;
    Tensor<T> original;  // I^O
    Tensor<T> masked;    // I^M
    Tensor<T> attr;      // E^O, Geo-Transferred
};

template <typename T>
ReconBatch<T> make_recon_batch(const TrainingData<T>& data, const TrainConfig& cfg, Rng& rng) {
    ReconBatch<T> b;
    b.indices = sample_indices(data.size(), static_cast<std::size_t>(cfg.batch_size), rng);
    std::vector<Tensor<T>> masked, attr;
    for (auto i : b.indices) {
        const auto& item = data.items[i];
        masked.push_back(masked_input(item, cfg.preprocess).pixels);
        const GeoParams geo = cfg.geo_transfer ? sample_geo_params(rng, cfg.geo, cfg.net.image_size) : GeoParams::identity();
        attr.push_back(attribute_input(item, cfg.preprocess, geo));
    }
    b.original = stack_pixels(data, b.indices);
    b.masked = stack_batch(masked);
    b.attr = stack_batch(attr);
    return b;
}

// A uniformly drawn record whose type differs from the reference's.
template <typename T>
std::size_t draw_target_index(const TrainingData<T>& data, std::size_t reference, Rng& rng) {
    for (;;) {
        const std::size_t t = rng.index(data.size());
        if (data.items[t].type_id != data.items[reference].type_id) return t;
    }
}

template <typename T>
struct AdvBatch {
    std::vector<std::size_t> references;
    std::vector<std::size_t> targets;
    Tensor<T> original;      // I^O
    Tensor<T> masked;        // I^M of the references
    Tensor<T> attr;          // E^T
    Tensor<T> target_image;  // I^T
    std::vector<AttributeOneHot> reference_onehot;  // V^O
    std::vector<AttributeOneHot> target_onehot;     // V^T
};

template <typename T>
AdvBatch<T> make_adv_batch(const TrainingData<T>& data, const TrainConfig& cfg, Rng& rng) {
    AdvBatch<T> b;
    b.references = sample_indices(data.size(), static_cast<std::size_t>(cfg.batch_size), rng);
    std::vector<Tensor<T>> masked, attr;
    for (auto r : b.references) {
        const std::size_t t = draw_target_index(data, r, rng);
        b.targets.push_back(t);
        masked.push_back(masked_input(data.items[r], cfg.preprocess).pixels);
        attr.push_back(attribute_input(data.items[t], cfg.preprocess));
        b.reference_onehot.emplace_back(data.items[r].type_id, data.class_count);
        b.target_onehot.emplace_back(data.items[t].type_id, data.class_count);
    }
    b.original = stack_pixels(data, b.references);
    b.target_image = stack_pixels(data, b.targets);
    b.masked = stack_batch(masked);
    b.attr = stack_batch(attr);
    return b;
}

template <typename T>
LossRow make_row(int step, Stage stage, const char* net, const LossBundle<T>& b) {
    LossRow r;
    r.step = step;
    r.stage = stage;
    r.net = net;
    r.components = b.components;
    r.total = b.value();
    return r;
}

using LossObserver = std::function<void(const LossRow&)>;

namespace detail {

inline void guard_finite(const LossRow& row, const TrainConfig& cfg) {
    bool finite = std::isfinite(row.total);
    for (const auto& [k, v] : row.components) finite = finite && std::isfinite(v);
    if (finite) return;
    std::string detail = to_json(row).dump();
    if (!cfg.checkpoint_dir.empty()) {
        std::error_code ec;
        fs::create_directories(cfg.checkpoint_dir, ec);
        const fs::path dump = fs::path(cfg.checkpoint_dir) / "nonfinite_dump.json";
        std::ofstream(dump) << nlohmann::ordered_json{{"row", to_json(row)}, {"config", to_json(cfg)}}.dump(2) << "\n";
        detail += " (dump: " + dump.string() + ")";
    }
    throw NonFiniteLoss(row.step, detail);
}

}  // namespace detail

// Loop 1: L_R on theta_G only. Owns its generator and optimizer; not movable
// because the optimizer points into the generator.
template <typename T>
class ReconstructionLoop {
public:
    ReconstructionLoop(const TrainConfig& cfg, const TrainingData<T>& data, Generator<T> init)
        : cfg_(cfg), data_(data), generator_(std::move(init)),
          optimizer_(generator_.params(), cfg.adam()), rng_(derive_seed(cfg.seed, kSaltReconStream)) {
        if (data.size() == 0) throw DataEmpty("reconstruction needs at least one record");
    }
    ReconstructionLoop(const ReconstructionLoop&) = delete;
    ReconstructionLoop& operator=(const ReconstructionLoop&) = delete;

    LossRow step() {
        const auto batch = make_recon_batch(data_, cfg_, rng_);
        optimizer_.zero_grad();
        auto out = generator_.forward_edit(Var<T>(batch.masked), Var<T>(batch.attr));
        auto bundle = reconstruction_bundle(out.composed, Var<T>(batch.original));
        LossRow row = make_row(++steps_, Stage::recon, "G", bundle);
        detail::guard_finite(row, cfg_);
        backward(bundle.total);
        optimizer_.step();
        return row;
    }

    int steps() const { return steps_; }
    Generator<T>& generator() { return generator_; }

private:
    const TrainConfig& cfg_;
    const TrainingData<T>& data_;
    Generator<T> generator_;
    Adam<T> optimizer_;
    Rng rng_;
    int steps_ = 0;
};

// Loop 2: one D update on the discriminator loss, then one G update on the
// generator loss with D frozen.
template <typename T>
class AdversarialLoop {
public:
    AdversarialLoop(const TrainConfig& cfg, const TrainingData<T>& data, Generator<T> g, Discriminator<T> d)
        : cfg_(cfg), data_(data), generator_(std::move(g)), discriminator_(std::move(d)),
          opt_g_(generator_.params(), cfg.adam()), opt_d_(discriminator_.params(), cfg.adam()),
          extractor_(make_extractor<T>(cfg)), rng_(derive_seed(cfg.seed, kSaltAdvStream)) {
        if (data.size() == 0) throw DataEmpty("adversarial training needs at least one record");
        if (data.type_ids().size() < 2) {
            throw SingleClassDataset("adversarial training needs records of at least two types to draw a differing target");
        }
    }
    AdversarialLoop(const AdversarialLoop&) = delete;
    AdversarialLoop& operator=(const AdversarialLoop&) = delete;

    AdvBatch<T> draw_batch() { return make_adv_batch(data_, cfg_, rng_); }

    GeneratorOutput<T> generate(const AdvBatch<T>& b) {
        return generator_.forward_edit(Var<T>(b.masked), Var<T>(b.attr));
    }

    // discriminator loss on a detached fake; only theta_D moves.
    LossBundle<T> discriminator_update(const AdvBatch<T>& b, const Tensor<T>& fake) {
        opt_d_.zero_grad();
        auto d_fake = discriminator_(Var<T>(fake));
        auto d_real = discriminator_(Var<T>(b.original));
        auto bundle = discriminator_loss(d_fake, d_real, b.reference_onehot);
        detail::guard_finite(make_row(steps_ + 1, Stage::adversarial, "D", bundle), cfg_);
        backward(bundle.total);
        opt_d_.step();
        return bundle;
    }

    // generator loss through the graph in out; theta_D is frozen.
    LossBundle<T> generator_update(const AdvBatch<T>& b, const GeneratorOutput<T>& out) {
        FreezeGuard<T> freeze(discriminator_.params());
        opt_g_.zero_grad();
        const Tensor<T> target_features = content_target(discriminator_, b.target_image);
        auto d_fake = discriminator_(out.composed);
        auto bundle = generator_loss(d_fake, out.composed, target_features, b.target_onehot, Var<T>(b.original),
                                     extractor_, cfg_.loss_weights());
        detail::guard_finite(make_row(steps_ + 1, Stage::adversarial, "G", bundle), cfg_);
        backward(bundle.total);
        opt_g_.step();
        return bundle;
    }

    std::pair<LossRow, LossRow> step() {
        const auto batch = draw_batch();
        const auto out = generate(batch);
        const auto d_bundle = discriminator_update(batch, out.composed.value());
        const auto g_bundle = generator_update(batch, out);
        ++steps_;
        return {make_row(steps_, Stage::adversarial, "D", d_bundle), make_row(steps_, Stage::adversarial, "G", g_bundle)};
    }

    int steps() const { return steps_; }
    Generator<T>& generator() { return generator_; }
    Discriminator<T>& discriminator() { return discriminator_; }

private:
    const TrainConfig& cfg_;
    const TrainingData<T>& data_;
    Generator<T> generator_;
    Discriminator<T> discriminator_;
    Adam<T> opt_g_;
    Adam<T> opt_d_;
    PerceptualExtractor<T> extractor_;
    Rng rng_;
    int steps_ = 0;
};

template <typename T>
Generator<T> initial_generator(const TrainConfig& cfg) {
    return Generator<T>(cfg.net, derive_seed(cfg.seed, kSaltGenerator));
}

template <typename T>
Discriminator<T> initial_discriminator(const TrainConfig& cfg) {
    return Discriminator<T>(cfg.net, derive_seed(cfg.seed, kSaltDiscriminator));
}

template <typename T>
std::vector<LossRow> tail_of(const std::vector<LossRow>& rows) {
    const std::size_t n = std::min(rows.size(), kMetricsTail);
    return {rows.end() - static_cast<std::ptrdiff_t>(n), rows.end()};
}

template <typename T>
struct TrainOutcome {
    Checkpoint<T> checkpoint;
    std::vector<LossRow> log;
};

template <typename T>
TrainOutcome<T> train_reconstruction(const TrainConfig& config, const TrainingData<T>& data,
                                     const LossObserver& observer = {}) {
    const TrainConfig cfg = bind_to_data(config, data);
    ReconstructionLoop<T> loop(cfg, data, initial_generator<T>(cfg));
    std::vector<LossRow> log;
    for (int i = 0; i < cfg.recon_iters; ++i) {
        log.push_back(loop.step());
        if (observer) observer(log.back());
    }
    TrainOutcome<T> out;
    out.checkpoint.stage = Stage::recon;
    out.checkpoint.step = loop.steps();
    out.checkpoint.config = cfg;
    out.checkpoint.attribute_kind = data.kind;
    out.checkpoint.generator = loop.generator();
    out.checkpoint.metrics_tail = tail_of<T>(log);
    out.log = std::move(log);
    return out;
}

template <typename T>
struct InheritedParams {
    Generator<T> generator;
    Discriminator<T> discriminator;
};

// Phi_edge and G (and Phi_img unless the config says otherwise) are copied
// from the recon checkpoint; D starts fresh from the seed.
template <typename T>
InheritedParams<T> inherit_weights(const Checkpoint<T>& recon) {
    if (recon.stage != Stage::recon) {
        throw StageMismatch(std::string("weight inheritance needs a recon-stage checkpoint, got ") + to_string(recon.stage));
    }
    const TrainConfig& cfg = recon.config;
    InheritedParams<T> out{recon.generator, initial_discriminator<T>(cfg)};
    if (!cfg.inherit_phi_img) {
        Generator<T> fresh(cfg.net, derive_seed(cfg.seed, kSaltPhiImg));
        out.generator.phi_img() = fresh.phi_img();
    }
    return out;
}

template <typename T>
TrainOutcome<T> train_adversarial(const TrainConfig& config, const TrainingData<T>& data, InheritedParams<T> init,
                                  const LossObserver& observer = {}) {
    const TrainConfig cfg = bind_to_data(config, data);
    AdversarialLoop<T> loop(cfg, data, std::move(init.generator), std::move(init.discriminator));
    std::vector<LossRow> log;
    for (int i = 0; i < cfg.adv_iters; ++i) {
        auto [d_row, g_row] = loop.step();
        log.push_back(d_row);
        log.push_back(g_row);
        if (observer) {
            observer(d_row);
            observer(g_row);
        }
    }
    TrainOutcome<T> out;
    out.checkpoint.stage = Stage::adversarial;
    out.checkpoint.step = loop.steps();
    out.checkpoint.config = cfg;
    out.checkpoint.attribute_kind = data.kind;
    out.checkpoint.generator = loop.generator();
    out.checkpoint.discriminator = loop.discriminator();
    out.checkpoint.metrics_tail = tail_of<T>(log);
    out.log = std::move(log);
    return out;
}

template <typename T>
struct FullRun {
    std::optional<Checkpoint<T>> recon;  // absent with skip_recon_stage
    Checkpoint<T> adversarial;
    std::vector<LossRow> log;
};

template <typename T>
FullRun<T> run_full(const TrainConfig& config, const TrainingData<T>& data, const LossObserver& observer = {}) {
    const TrainConfig cfg = bind_to_data(config, data);
    FullRun<T> run;
    InheritedParams<T> init;
    if (cfg.skip_recon_stage) {
        init = {initial_generator<T>(cfg), initial_discriminator<T>(cfg)};
    } else {
        auto recon = train_reconstruction(cfg, data, observer);
        init = inherit_weights(recon.checkpoint);
        run.log = std::move(recon.log);
        run.recon = std::move(recon.checkpoint);
    }
    auto adv = train_adversarial(cfg, data, std::move(init), observer);
    run.log.insert(run.log.end(), adv.log.begin(), adv.log.end());
    run.adversarial = std::move(adv.checkpoint);
    return run;
}

template <typename T = float>
FullRun<T> run_full(const TrainConfig& config, const DatasetManifest& manifest, const LossObserver& observer = {}) {
    return run_full(config, prepare_training_data<T>(manifest, config), observer);
}

inline void write_loss_csv(const fs::path& path, const std::vector<LossRow>& rows) {
    std::ofstream out(path);
    if (!out) throw UnwritableOutputDir("cannot write " + path.string());
    out.imbue(std::locale::classic());
    out << "step,stage,net";
    for (const auto& name : loss_component_names()) out << "," << name;
    out << ",total\n";
    out.precision(9);
    for (const auto& r : rows) {
        out << r.step << "," << to_string(r.stage) << "," << r.net;
        for (const auto& name : loss_component_names()) {
            out << ",";
            if (auto it = r.components.find(name); it != r.components.end()) out << it->second;
        }
        out << "," << r.total << "\n";
    }
}

// Mean of the first and last `window` recon losses.
inline std::pair<double, double> smoothed_recon_endpoints(const std::vector<LossRow>& rows, std::size_t window = 20) {
    std::vector<double> v;
    for (const auto& r : rows) {
        if (r.stage == Stage::recon) v.push_back(r.components.at("recon"));
    }
    if (v.empty()) return {0.0, 0.0};
    const std::size_t w = std::min(window, v.size());
    double head = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < w; ++i) {
        head += v[i];
        tail += v[v.size() - 1 - i];
    }
    return {head / w, tail / w};
}

}  // namespace tailor
