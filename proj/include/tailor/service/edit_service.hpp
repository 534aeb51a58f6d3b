#pragma once

#include <openssl/evp.h>

#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "tailor/eval/classifier.hpp"
#include "tailor/eval/evaluate.hpp"

namespace tailor {

// Error carrying an HTTP status alongside the code.
class ServiceError : public Error {
public:
    ServiceError(int status, std::string code, const std::string& message)
        : Error(std::move(code), message), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

inline std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

inline std::vector<std::uint8_t> base64_decode(const std::string& text) {
    if (text.size() % 4 != 0) throw ServiceError(400, "BAD_BASE64", "base64 length is not a multiple of 4");
    std::vector<std::uint8_t> out(3 * text.size() / 4);
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
    if (n < 0) throw ServiceError(400, "BAD_BASE64", "invalid base64 payload");
    std::size_t pad = 0;
    if (!text.empty() && text.back() == '=') ++pad;
    if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

struct EditOptions {
    bool return_mask = false;
    bool return_edge = false;
    EdgeBackend edge_backend = EdgeBackend::deterministic_gradient;
    std::optional<RegionBox> region;  // reference pixel coordinates
    bool debug_force_mask_zero = false;
};

inline EditOptions parse_edit_options(const std::string& text) {
    EditOptions o;
    if (text.empty()) return o;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
        if (!j.is_object()) throw ServiceError(400, "BAD_OPTIONS", "options must be a JSON object");
        o.return_mask = j.value("return_mask", false);
        o.return_edge = j.value("return_edge", false);
        o.debug_force_mask_zero = j.value("debug_force_mask_zero", false);
        if (j.contains("edge_backend")) {
            auto b = parse_edge_backend(j.at("edge_backend").get<std::string>());
            if (!b) throw ServiceError(400, "BAD_OPTIONS", "unknown edge_backend");
            o.edge_backend = *b;
        }
        if (j.contains("region")) {
            const auto& r = j.at("region");
            RegionBox box;
            if (r.is_array() && r.size() == 4) {
                box = {r[0].get<int>(), r[1].get<int>(), r[2].get<int>(), r[3].get<int>()};
            } else {
                box = {r.at("x0").get<int>(), r.at("y0").get<int>(), r.at("x1").get<int>(), r.at("y1").get<int>()};
            }
            o.region = box;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ServiceError(400, "BAD_OPTIONS", std::string("malformed options: ") + e.what());
    }
    return o;
}

struct EditRequest {
    std::vector<std::uint8_t> reference_png;
    std::optional<std::vector<std::uint8_t>> target_png;
    std::optional<std::vector<std::uint8_t>> edge_png;
    std::optional<AttributeKind> attribute_kind;
    EditOptions options;
};

struct EditResult {
    std::vector<std::uint8_t> edited_png;
    std::optional<std::vector<std::uint8_t>> mask_png;
    std::optional<std::vector<std::uint8_t>> edge_png;
    std::optional<int> predicted_type;
    std::string predicted_name;
    int width = 0;
    int height = 0;
    double latency_ms = 0.0;
};

// Collar default when the client sends no rectangle: 40% of each side,
// centred horizontally, touching the top edge.
inline RegionBox default_service_region(int width, int height) {
    RegionBox r;
    r.x0 = static_cast<int>(std::floor(0.3 * width));
    r.x1 = std::max(r.x0 + 1, static_cast<int>(std::ceil(0.7 * width)));
    r.y0 = 0;
    r.y1 = std::max(1, static_cast<int>(std::ceil(0.4 * height)));
    return r;
}

struct EditServiceOptions {
    int max_concurrent = 2;        // forward passes in flight
    std::string hed_weights;       // optional, enables edge_backend=hed_pretrained
    std::string classifier_dir;    // optional trained_cnn checkpoint for predicted_type
};

// Frozen adversarial-stage checkpoint behind a read/write lock. Edits take a
// shared snapshot of the model; load() swaps in a new one atomically.
class EditService {
public:
    explicit EditService(EditServiceOptions options = {})
        : options_(std::move(options)), slots_(std::max(1, options_.max_concurrent)),
          started_(std::chrono::steady_clock::now()) {}

    void load(const fs::path& checkpoint_dir) {
        auto model = std::make_shared<Model>();
        model->checkpoint = load_checkpoint<float>(checkpoint_dir);
        if (model->checkpoint.stage != Stage::adversarial) {
            throw StageMismatch(std::string("service needs an adversarial-stage checkpoint, got ") +
                                to_string(model->checkpoint.stage));
        }
        model->parameters_hash = model->checkpoint.parameters_hash();
        if (!options_.hed_weights.empty()) model->hed = HedEdgeModel<float>::load(options_.hed_weights);
        if (!options_.classifier_dir.empty()) {
            model->classifier = std::make_shared<TrainedCnnClassifier>(TrainedCnnClassifier::load(options_.classifier_dir));
        }
        std::unique_lock lock(mutex_);
        model_ = std::move(model);
    }

    bool ready() const { return snapshot() != nullptr; }

    nlohmann::ordered_json health() const {
        const auto m = snapshot();
        const double uptime = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
        return {{"status", m ? "ready" : "loading"},
                {"checkpoint_hash", m ? m->parameters_hash : std::string()},
                {"uptime_s", uptime}};
    }

    nlohmann::ordered_json model_info() const {
        const auto m = require_model();
        const auto& c = m->checkpoint;
        return {{"stage", to_string(c.stage)},
                {"image_size", c.config.net.image_size},
                {"attribute_kind", to_string(c.attribute_kind)},
                {"class_count", c.config.net.class_count},
                {"config_hash", c.config_hash()}};
    }

    EditResult edit(const EditRequest& req) const {
        const auto t0 = std::chrono::steady_clock::now();
        const auto m = require_model();
        if (req.target_png.has_value() == req.edge_png.has_value()) {
            throw ServiceError(400, "INVALID_ATTRIBUTE_SOURCE", "send exactly one of 'target' or 'edge'");
        }
        if (req.attribute_kind && *req.attribute_kind != m->checkpoint.attribute_kind) {
            throw ServiceError(400, "ATTRIBUTE_KIND_MISMATCH",
                               std::string("model edits ") + to_string(m->checkpoint.attribute_kind) + " attributes");
        }
        const Image8 reference = decode_or_400(req.reference_png, 3, "reference");
        const RegionBox region = req.options.region.value_or(default_service_region(reference.width, reference.height));
        if (!region.valid_for(reference.width, reference.height)) {
            throw ServiceError(422, "REGION_OUT_OF_BOUNDS",
                               "region " + region.str() + " does not fit the " + std::to_string(reference.width) + "x" +
                                   std::to_string(reference.height) + " reference");
        }
        PreprocessConfig pcfg = m->checkpoint.config.preprocess;
        pcfg.edge_backend = req.options.edge_backend;
        const HedEdgeModel<float>* hed = m->hed ? &*m->hed : nullptr;
        if (pcfg.edge_backend == EdgeBackend::hed_pretrained && !hed) {
            throw ServiceError(400, "EDGE_BACKEND_UNAVAILABLE", "hed_pretrained weights are not loaded");
        }

        std::counting_semaphore<>& slots = slots_;
        slots.acquire();
        struct Release {
            std::counting_semaphore<>& s;
            ~Release() { s.release(); }
        } release{slots};

        const PreparedImage<float> ref = prepare_image(normalize<float>(reference), region, -1, pcfg, hed);
        Tensor<float> attr;
        if (req.target_png) {
            const Image8 target = decode_or_400(*req.target_png, 3, "target");
            const RegionBox tr = rescale_region(region, reference.width, reference.height, target.width, target.height);
            attr = attribute_input(prepare_image(normalize<float>(target), tr, -1, pcfg, hed), pcfg);
        } else {
            if (pcfg.rgb_instead_of_edge) {
                throw ServiceError(400, "INVALID_ATTRIBUTE_SOURCE", "this model takes RGB targets, not edge maps");
            }
            const Image8 edge_img = decode_or_400(*req.edge_png, 1, "edge");
            const EdgeMap<float> edge{to_unit_tensor<float>(edge_img)};
            const RegionBox er = rescale_region(region, reference.width, reference.height, edge_img.width, edge_img.height);
            attr = attribute_input_from_edge(edge, er, pcfg);
        }

        const Tensor<float> masked = masked_input(ref, pcfg).pixels;
        GeneratorOutput<float> out = infer(m->checkpoint.generator, masked, attr);
        if (req.options.debug_force_mask_zero) {
            NoGradGuard no_grad;
            out.mask = Var<float>(Tensor<float>(out.mask.shape(), 0.0f));
            out.composed = sam_compose(out.mask, out.color, Var<float>(masked));
        }

        EditResult res;
        const Image8 edited = denormalize(out.composed.value());
        res.edited_png = encode_png(edited);
        res.width = edited.width;
        res.height = edited.height;
        if (req.options.return_mask) res.mask_png = encode_png(from_unit_tensor(out.mask.value()));
        if (req.options.return_edge) {
            res.edge_png = encode_png(attr.shape().c == 3 ? denormalize(attr) : from_unit_tensor(attr));
        }
        if (m->classifier) {
            res.predicted_type = m->classifier->classify(edited, AnnotationRecord{});
            if (m->checkpoint.attribute_kind == AttributeKind::collar && *res.predicted_type < kMaxCollarShapes) {
                res.predicted_name = collar_shape_name(*res.predicted_type);
            }
        }
        res.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        return res;
    }

private:
    struct Model {
        Checkpoint<float> checkpoint;
        std::string parameters_hash;
        std::optional<HedEdgeModel<float>> hed;
        std::shared_ptr<const AttributeClassifier> classifier;
    };

    std::shared_ptr<const Model> snapshot() const {
        std::shared_lock lock(mutex_);
        return model_;
    }

    std::shared_ptr<const Model> require_model() const {
        auto m = snapshot();
        if (!m) throw ServiceError(503, "MODEL_NOT_LOADED", "no checkpoint loaded yet");
        return m;
    }

    static Image8 decode_or_400(const std::vector<std::uint8_t>& bytes, int channels, const char* what) {
        try {
            return decode_png(bytes, channels).image;
        } catch (const ImageDecodeError& e) {
            throw ServiceError(400, "IMAGE_DECODE", std::string(what) + ": " + e.what());
        }
    }

    EditServiceOptions options_;
    mutable std::counting_semaphore<> slots_;
    std::chrono::steady_clock::time_point started_;
    mutable std::shared_mutex mutex_;
    std::shared_ptr<const Model> model_;
};

// ---------------------------------------------------------------------------
// HTTP binding

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    send_json(res, status, {{"code", code}, {"message", message}});
}

inline std::vector<std::uint8_t> as_bytes(const std::string& s) { return {s.begin(), s.end()}; }

inline EditRequest parse_multipart(const httplib::Request& req) {
    if (!req.is_multipart_form_data()) {
        throw ServiceError(400, "BAD_REQUEST", "POST /v1/edit expects multipart/form-data");
    }
    EditRequest out;
    if (!req.has_file("reference")) throw ServiceError(400, "BAD_REQUEST", "missing 'reference' part");
    out.reference_png = as_bytes(req.get_file_value("reference").content);
    if (req.has_file("target")) out.target_png = as_bytes(req.get_file_value("target").content);
    if (req.has_file("edge")) out.edge_png = as_bytes(req.get_file_value("edge").content);
    if (req.has_file("attribute_kind")) {
        auto k = parse_attribute_kind(req.get_file_value("attribute_kind").content);
        if (!k) throw ServiceError(400, "BAD_REQUEST", "attribute_kind must be collar or sleeve");
        out.attribute_kind = *k;
    }
    if (req.has_file("options")) out.options = parse_edit_options(req.get_file_value("options").content);
    return out;
}

inline nlohmann::ordered_json result_json(const EditResult& r) {
    nlohmann::ordered_json j;
    j["edited_image"] = base64_encode(r.edited_png);
    j["width"] = r.width;
    j["height"] = r.height;
    if (r.mask_png) j["mask_preview"] = base64_encode(*r.mask_png);
    if (r.edge_png) j["edge_preview"] = base64_encode(*r.edge_png);
    if (r.predicted_type) {
        j["predicted_type"] = {{"type_id", *r.predicted_type}, {"type_name", r.predicted_name}};
    } else {
        j["predicted_type"] = nullptr;
    }
    j["latency_ms"] = r.latency_ms;
    return j;
}

}  // namespace detail

// Registers the /v1 routes and CORS handling on server.
inline void bind_routes(httplib::Server& server, EditService& service, const std::string& cors_origin = "*") {
    server.set_default_headers({{"Access-Control-Allow-Origin", cors_origin},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.Get("/v1/health", [&service](const httplib::Request&, httplib::Response& res) {
        detail::send_json(res, 200, service.health());
    });
    server.Get("/v1/model", [&service](const httplib::Request&, httplib::Response& res) {
        try {
            detail::send_json(res, 200, service.model_info());
        } catch (const ServiceError& e) {
            detail::send_error(res, e.status(), e.code(), e.what());
        }
    });
    server.Post("/v1/edit", [&service](const httplib::Request& req, httplib::Response& res) {
        try {
            detail::send_json(res, 200, detail::result_json(service.edit(detail::parse_multipart(req))));
        } catch (const ServiceError& e) {
            detail::send_error(res, e.status(), e.code(), e.what());
        } catch (const InvalidRegion& e) {
            detail::send_error(res, 422, "REGION_OUT_OF_BOUNDS", e.what());
        } catch (const Error& e) {
            detail::send_error(res, 400, e.code(), e.what());
        } catch (const std::exception& e) {
            detail::send_error(res, 500, "INTERNAL", e.what());
        }
    });
}

}  // namespace tailor
