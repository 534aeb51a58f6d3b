#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "tailor/core/adam.hpp"
#include "tailor/core/blob_io.hpp"
#include "tailor/net/generator.hpp"
#include "tailor/objectives/losses.hpp"
#include "tailor/preprocess/pipeline.hpp"

namespace tailor {

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 8;
    int recon_iters = 300;
    int adv_iters = 500;
    double lambda1 = 0.1;
    double lambda2 = 2.5;
    double beta1 = 0.5;
    double beta2 = 0.999;
    std::uint64_t seed = 3;

    bool skip_recon_stage = false;
    bool rgb_instead_of_edge = false;
    bool inherit_phi_img = true;

    bool geo_transfer = true;  // applied to the edge input in the reconstruction loop
    GeoRanges geo;

    NetConfig net;
    PreprocessConfig preprocess;
    std::string hed_weights;  // directory, used with the hed_pretrained backend

    PerceptualBackend perceptual_backend = PerceptualBackend::seeded_random_conv;
    std::string perceptual_layer = "relu3_1";
    std::string vgg_weights;  // directory, used with pretrained_vgg19

    std::string checkpoint_dir;
    int log_every = 25;

    int image_size() const { return net.image_size; }

    // Keeps the derived fields consistent and checks the invariants.
    void finalize() {
        preprocess.image_size = net.image_size;
        preprocess.rgb_instead_of_edge = rgb_instead_of_edge;
        net.edge_channels = preprocess.edge_channels();
        validate();
    }

    void validate() const {
        if (!(learning_rate > 0.0)) throw InvalidConfig("learning_rate must be > 0");
        if (batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
        if (recon_iters < 0 || adv_iters < 0) throw InvalidConfig("iteration counts must be >= 0");
        if (lambda1 < 0.0 || lambda2 < 0.0) throw InvalidConfig("lambda1 and lambda2 must be >= 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw InvalidConfig("betas must be in [0, 1)");
        if (!(preprocess.margin_fraction >= 0.0)) throw InvalidConfig("margin_fraction must be >= 0");
        if (log_every < 1) throw InvalidConfig("log_every must be >= 1");
        geo.validate();
        net.validate();
    }

    AdamOptions adam() const {
        AdamOptions o;
        o.learning_rate = learning_rate;
        o.beta1 = beta1;
        o.beta2 = beta2;
        return o;
    }

    LossWeights loss_weights() const { return {lambda1, lambda2}; }
};

// Every setting as key=value text, in the order used for hashing.
inline nlohmann::ordered_json to_json(const TrainConfig& c) {
    nlohmann::ordered_json j;
    j["learning_rate"] = c.learning_rate;
    j["batch_size"] = c.batch_size;
    j["recon_iters"] = c.recon_iters;
    j["adv_iters"] = c.adv_iters;
    j["lambda1"] = c.lambda1;
    j["lambda2"] = c.lambda2;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["seed"] = c.seed;
    j["skip_recon_stage"] = c.skip_recon_stage;
    j["rgb_instead_of_edge"] = c.rgb_instead_of_edge;
    j["inherit_phi_img"] = c.inherit_phi_img;
    j["geo_transfer"] = c.geo_transfer;
    j["geo_rotation_lo"] = c.geo.rotation_lo;
    j["geo_rotation_hi"] = c.geo.rotation_hi;
    j["geo_translation_lo"] = c.geo.translation_lo;
    j["geo_translation_hi"] = c.geo.translation_hi;
    j["geo_scale_lo"] = c.geo.scale_lo;
    j["geo_scale_hi"] = c.geo.scale_hi;
    j["image_size"] = c.net.image_size;
    j["base_channels"] = c.net.base_channels;
    j["down_stages"] = c.net.down_stages;
    j["res_blocks"] = c.net.res_blocks;
    j["disc_channels"] = c.net.disc_channels;
    j["disc_depth"] = c.net.disc_depth;
    j["class_count"] = c.net.class_count;
    j["margin_fraction"] = c.preprocess.margin_fraction;
    j["edge_mode"] = to_string(c.preprocess.edge_mode);
    j["edge_backend"] = to_string(c.preprocess.edge_backend);
    j["mask_fill"] = c.preprocess.mask_fill;
    j["hed_weights"] = c.hed_weights;
    j["perceptual_backend"] = to_string(c.perceptual_backend);
    j["perceptual_layer"] = c.perceptual_layer;
    j["vgg_weights"] = c.vgg_weights;
    return j;
}

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw InvalidConfig(key + ": expected a boolean, got '" + v + "'");
}

template <typename N>
N parse_number(const std::string& key, const std::string& v) {
    std::istringstream in(v);
    in.imbue(std::locale::classic());
    N out{};
    in >> out;
    if (in.fail() || !in.eof()) throw InvalidConfig(key + ": expected a number, got '" + v + "'");
    return out;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

inline void apply_setting(TrainConfig& c, const std::string& key, const std::string& value) {
    using detail::parse_bool;
    using detail::parse_number;
    const std::string& v = value;
    if (key == "learning_rate") c.learning_rate = parse_number<double>(key, v);
    else if (key == "batch_size") c.batch_size = parse_number<int>(key, v);
    else if (key == "recon_iters") c.recon_iters = parse_number<int>(key, v);
    else if (key == "adv_iters") c.adv_iters = parse_number<int>(key, v);
    else if (key == "lambda1") c.lambda1 = parse_number<double>(key, v);
    else if (key == "lambda2") c.lambda2 = parse_number<double>(key, v);
    else if (key == "beta1") c.beta1 = parse_number<double>(key, v);
    else if (key == "beta2") c.beta2 = parse_number<double>(key, v);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, v);
    else if (key == "skip_recon_stage") c.skip_recon_stage = parse_bool(key, v);
    else if (key == "rgb_instead_of_edge") c.rgb_instead_of_edge = parse_bool(key, v);
    else if (key == "inherit_phi_img") c.inherit_phi_img = parse_bool(key, v);
    else if (key == "geo_transfer") c.geo_transfer = parse_bool(key, v);
    else if (key == "geo_rotation_lo") c.geo.rotation_lo = parse_number<double>(key, v);
    else if (key == "geo_rotation_hi") c.geo.rotation_hi = parse_number<double>(key, v);
    else if (key == "geo_translation_lo") c.geo.translation_lo = parse_number<double>(key, v);
    else if (key == "geo_translation_hi") c.geo.translation_hi = parse_number<double>(key, v);
    else if (key == "geo_scale_lo") c.geo.scale_lo = parse_number<double>(key, v);
    else if (key == "geo_scale_hi") c.geo.scale_hi = parse_number<double>(key, v);
    else if (key == "image_size") c.net.image_size = parse_number<int>(key, v);
    else if (key == "base_channels") c.net.base_channels = parse_number<int>(key, v);
    else if (key == "down_stages") c.net.down_stages = parse_number<int>(key, v);
    else if (key == "res_blocks") c.net.res_blocks = parse_number<int>(key, v);
    else if (key == "disc_channels") c.net.disc_channels = parse_number<int>(key, v);
    else if (key == "disc_depth") c.net.disc_depth = parse_number<int>(key, v);
    else if (key == "class_count") c.net.class_count = parse_number<int>(key, v);
    else if (key == "margin_fraction") c.preprocess.margin_fraction = parse_number<double>(key, v);
    else if (key == "mask_fill") c.preprocess.mask_fill = parse_number<float>(key, v);
    else if (key == "edge_mode") {
        auto m = parse_edge_input_mode(v);
        if (!m) throw InvalidConfig("edge_mode: expected region_crop or full_image, got '" + v + "'");
        c.preprocess.edge_mode = *m;
    } else if (key == "edge_backend") {
        auto b = parse_edge_backend(v);
        if (!b) throw InvalidConfig("edge_backend: expected deterministic_gradient or hed_pretrained, got '" + v + "'");
        c.preprocess.edge_backend = *b;
    } else if (key == "hed_weights") c.hed_weights = v;
    else if (key == "perceptual_backend") {
        auto b = parse_perceptual_backend(v);
        if (!b) throw InvalidConfig("perceptual_backend: expected pretrained_vgg19 or seeded_random_conv, got '" + v + "'");
        c.perceptual_backend = *b;
    } else if (key == "perceptual_layer") c.perceptual_layer = v;
    else if (key == "vgg_weights") c.vgg_weights = v;
    else if (key == "checkpoint_dir") c.checkpoint_dir = v;
    else if (key == "log_every") c.log_every = parse_number<int>(key, v);
    else throw InvalidConfig("unknown config key '" + key + "'");
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    for (const auto& [key, value] : j.items()) {
        apply_setting(c, key, value.is_string() ? value.get<std::string>() : value.dump());
    }
    c.finalize();
    return c;
}

// key = value lines; '#' starts a comment.
inline std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile("config file not found: " + path.string());
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw InvalidConfig(path.string() + ":" + std::to_string(number) + ": expected key = value");
        }
        out.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    return out;
}

inline std::string config_hash(const TrainConfig& c) { return hex64(fnv1a64(to_json(c).dump())); }

}  // namespace tailor
