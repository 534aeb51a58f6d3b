#pragma once

#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tailor/eval/classifier.hpp"
#include "tailor/eval/metrics.hpp"
#include "tailor/train/trainer.hpp"

namespace tailor {

struct MetricTriple {
    double ce = 0.0;    // percent
    double ssim = 0.0;
    double psnr = 0.0;  // dB, capped
    std::size_t n = 0;
};

// One scored edit.
struct EditScore {
    std::size_t reference = 0;  // index into the test manifest
    std::size_t target = 0;
    int source_type = 0;
    int requested_type = 0;
    int predicted_type = 0;
    double ssim = 0.0;
    double psnr = 0.0;
    double ssim_outside = 0.0;  // windows clear of the edit region
};

struct MetricsReport {
    std::map<std::pair<int, int>, MetricTriple> per_pair;  // (source, target) type
    MetricTriple aggregate;
    std::size_t n_samples = 0;
    std::string checkpoint_ref;
    std::vector<EditScore> items;
    std::vector<Image8> edited;  // filled when EvalOptions::keep_images

    double mean_ssim_outside() const {
        if (items.empty()) return 0.0;
        double s = 0.0;
        for (const auto& it : items) s += it.ssim_outside;
        return s / static_cast<double>(items.size());
    }
};

struct EvalOptions {
    std::uint64_t seed = 0;
    std::optional<int> target_type;  // only edits toward this type
    bool keep_images = false;
};

// Per-pair triples and the sample-weighted aggregate from scored items.
inline void summarize(MetricsReport& report) {
    report.per_pair.clear();
    report.aggregate = {};
    for (const auto& it : report.items) {
        auto& p = report.per_pair[{it.source_type, it.requested_type}];
        const double wrong = it.predicted_type != it.requested_type ? 100.0 : 0.0;
        p.ce += wrong;
        p.ssim += it.ssim;
        p.psnr += it.psnr;
        ++p.n;
        report.aggregate.ce += wrong;
        report.aggregate.ssim += it.ssim;
        report.aggregate.psnr += it.psnr;
        ++report.aggregate.n;
    }
    auto finish = [](MetricTriple& t) {
        if (t.n == 0) return;
        t.ce /= static_cast<double>(t.n);
        t.ssim /= static_cast<double>(t.n);
        t.psnr /= static_cast<double>(t.n);
    };
    for (auto& [k, v] : report.per_pair) finish(v);
    finish(report.aggregate);
    report.n_samples = report.items.size();
}

// Runs the generator in inference mode.
template <typename T>
GeneratorOutput<T> infer(const Generator<T>& g, const Tensor<T>& masked, const Tensor<T>& attr) {
    NoGradGuard no_grad;
    return g.forward_edit(Var<T>(masked), Var<T>(attr));
}

// For each test reference (optionally only those not already of the
// requested type) a target of a different type is drawn, the reference is
// edited toward it, and the result is scored against the original
// (SSIM/PSNR) and the requested type (C.E.).
template <typename T>
MetricsReport evaluate(const Checkpoint<T>& ckpt, const DatasetManifest& test, const AttributeClassifier& classifier,
                       const EvalOptions& opts = {}) {
    if (test.empty()) throw DataEmpty("evaluation manifest is empty");
    if (classifier.class_count() != test.class_count) {
        throw ClassifierUnavailable("classifier has " + std::to_string(classifier.class_count()) +
                                    " classes, dataset declares " + std::to_string(test.class_count));
    }
    const TrainConfig& cfg = ckpt.config;
    const auto data = prepare_training_data<T>(test, cfg);
    std::vector<std::size_t> target_pool;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!opts.target_type || data.items[i].type_id == *opts.target_type) target_pool.push_back(i);
    }
    if (target_pool.empty()) throw InsufficientClasses("no test records of the requested target type");

    Rng rng(derive_seed(opts.seed, kSaltEval));
    MetricsReport report;
    report.checkpoint_ref = ckpt.config_hash();
    for (std::size_t r = 0; r < data.size(); ++r) {
        const auto& ref = data.items[r];
        std::vector<std::size_t> candidates;
        for (auto t : target_pool) {
            if (data.items[t].type_id != ref.type_id) candidates.push_back(t);
        }
        if (candidates.empty()) continue;
        const std::size_t t = candidates[rng.index(candidates.size())];
        const auto& tgt = data.items[t];

        const auto out = infer(ckpt.generator, masked_input(ref, cfg.preprocess).pixels, attribute_input(tgt, cfg.preprocess));
        const Image8 edited = denormalize(out.composed.value());
        const Image8 original = denormalize(ref.pixels);

        EditScore s;
        s.reference = r;
        s.target = t;
        s.source_type = ref.type_id;
        s.requested_type = tgt.type_id;
        s.predicted_type = classifier.classify(edited, test.records[r]);
        s.ssim = ssim(edited, original);
        s.psnr = capped_psnr(psnr(edited, original));
        s.ssim_outside = ssim_outside(edited, original, ref.region);
        report.items.push_back(s);
        if (opts.keep_images) report.edited.push_back(edited);
    }
    if (report.items.empty()) throw InsufficientClasses("no reference has a target of a different type");
    summarize(report);
    return report;
}

inline nlohmann::ordered_json to_json(const MetricTriple& t) {
    return {{"ce", t.ce}, {"ssim", t.ssim}, {"psnr", t.psnr}, {"n", t.n}};
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["checkpoint_ref"] = r.checkpoint_ref;
    j["n_samples"] = r.n_samples;
    j["aggregate"] = to_json(r.aggregate);
    j["ssim_outside_region"] = r.mean_ssim_outside();
    nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
    for (const auto& [k, v] : r.per_pair) {
        auto p = to_json(v);
        p["source_type"] = k.first;
        p["target_type"] = k.second;
        pairs.push_back(p);
    }
    j["per_pair"] = pairs;
    nlohmann::ordered_json items = nlohmann::ordered_json::array();
    for (const auto& s : r.items) {
        items.push_back({{"reference", s.reference},
                         {"target", s.target},
                         {"source_type", s.source_type},
                         {"requested_type", s.requested_type},
                         {"predicted_type", s.predicted_type},
                         {"ssim", s.ssim},
                         {"psnr", s.psnr}});
    }
    j["items"] = items;
    return j;
}

// Rows are models, columns C.E./SSIM/PSNR per type pair and overall.
inline std::string render_table(const std::vector<std::pair<std::string, const MetricsReport*>>& rows) {
    std::vector<std::pair<int, int>> pairs;
    for (const auto& [name, r] : rows)
        for (const auto& [k, v] : r->per_pair)
            if (std::find(pairs.begin(), pairs.end(), k) == pairs.end()) pairs.push_back(k);
    std::sort(pairs.begin(), pairs.end());
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << std::left << std::setw(14) << "model";
    for (const auto& [s, t] : pairs) {
        const std::string head = std::to_string(s) + "->" + std::to_string(t);
        os << " | " << std::setw(22) << head;
    }
    os << " | " << "all" << "\n";
    os << std::setw(14) << "";
    for (std::size_t i = 0; i <= pairs.size(); ++i) os << " | " << std::setw(22) << "C.E.   SSIM    PSNR";
    os << "\n";
    os << std::fixed;
    auto cell = [&](const MetricTriple& t) {
        std::ostringstream c;
        c.imbue(std::locale::classic());
        c << std::fixed << std::setprecision(2) << std::setw(6) << t.ce << " " << std::setprecision(4) << t.ssim << " "
          << std::setprecision(2) << std::setw(6) << t.psnr;
        return c.str();
    };
    for (const auto& [name, r] : rows) {
        os << std::setw(14) << name;
        for (const auto& k : pairs) {
            auto it = r->per_pair.find(k);
            os << " | " << std::setw(22) << (it == r->per_pair.end() ? std::string("-") : cell(it->second));
        }
        os << " | " << cell(r->aggregate) << "\n";
    }
    return os.str();
}

struct OneOutReports {
    MetricsReport full;
    MetricsReport one_out;
    int held_type = 0;
};

// Train records without the held type.
inline DatasetManifest without_type(const DatasetManifest& m, int held_type) {
    std::vector<AnnotationRecord> kept;
    for (const auto& r : m.records)
        if (r.type_id != held_type) kept.push_back(r);
    return m.with_records(std::move(kept));
}

inline void require_one_out_feasible(const DatasetManifest& train, int held_type) {
    const auto types = train.type_ids();
    if (std::find(types.begin(), types.end(), held_type) == types.end()) {
        throw InsufficientClasses("held type " + std::to_string(held_type) + " does not occur in the data");
    }
    if (types.size() < 3) {
        throw InsufficientClasses("leave-one-out needs the held type plus at least two others; data has " +
                                  std::to_string(types.size()) + " types");
    }
}

// Trains a model on all types (unless full is supplied) and one without
// held_type, then scores both on the same held_type-targeted test edits.
template <typename T = float>
OneOutReports one_out_protocol(const TrainConfig& config, const DatasetManifest& train, const DatasetManifest& test,
                               int held_type, const AttributeClassifier& classifier,
                               const Checkpoint<T>* full = nullptr, const LossObserver& observer = {},
                               Checkpoint<T>* one_out_out = nullptr) {
    require_one_out_feasible(train, held_type);
    EvalOptions opts;
    opts.seed = config.seed;
    opts.target_type = held_type;
    OneOutReports out;
    out.held_type = held_type;
    if (full) {
        out.full = evaluate(*full, test, classifier, opts);
    } else {
        auto run = run_full<T>(config, train, observer);
        out.full = evaluate(run.adversarial, test, classifier, opts);
    }
    auto run = run_full<T>(config, without_type(train, held_type), observer);
    out.one_out = evaluate(run.adversarial, test, classifier, opts);
    if (one_out_out) *one_out_out = std::move(run.adversarial);
    return out;
}

}  // namespace tailor
