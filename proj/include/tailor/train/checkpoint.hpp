#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tailor/net/discriminator.hpp"
#include "tailor/train/config.hpp"

namespace tailor {

enum class Stage { recon, adversarial };

inline const char* to_string(Stage s) { return s == Stage::recon ? "recon" : "adversarial"; }

inline Stage parse_stage(const std::string& s) {
    if (s == "recon") return Stage::recon;
    if (s == "adversarial") return Stage::adversarial;
    throw CorruptCheckpoint("unknown stage tag '" + s + "'");
}

// One logged optimizer step. net is "G" or "D".
struct LossRow {
    int step = 0;
    Stage stage = Stage::recon;
    std::string net = "G";
    std::map<std::string, double> components;
    double total = 0.0;
};

inline nlohmann::ordered_json to_json(const LossRow& r) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["stage"] = to_string(r.stage);
    j["net"] = r.net;
    j["components"] = r.components;
    j["total"] = r.total;
    return j;
}

inline LossRow loss_row_from_json(const nlohmann::json& j) {
    LossRow r;
    r.step = j.at("step").get<int>();
    r.stage = parse_stage(j.at("stage").get<std::string>());
    r.net = j.at("net").get<std::string>();
    r.components = j.at("components").get<std::map<std::string, double>>();
    r.total = j.at("total").get<double>();
    return r;
}

inline constexpr std::size_t kMetricsTail = 50;
inline constexpr const char* kCheckpointFormat = "tailor-checkpoint/1";

template <typename T>
struct Checkpoint {
    Stage stage = Stage::recon;
    int step = 0;
    TrainConfig config;
    AttributeKind attribute_kind = AttributeKind::collar;
    Generator<T> generator;
    std::optional<Discriminator<T>> discriminator;  // absent for recon
    std::vector<LossRow> metrics_tail;

    std::string config_hash() const { return tailor::config_hash(config); }

    std::string parameters_hash() {
        std::uint64_t h = params_hash(generator.params());
        if (discriminator) h ^= params_hash(discriminator->params()) * 0x9e3779b97f4a7c15ULL;
        return hex64(h);
    }
};

// Writes into a sibling temp directory, then renames over dir.
template <typename T>
void save_checkpoint(Checkpoint<T>& ckpt, const fs::path& dir) {
    if (ckpt.stage == Stage::recon && ckpt.discriminator) {
        throw InvalidConfig("recon-stage checkpoints carry no discriminator");
    }
    const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
    std::error_code ec;
    fs::create_directories(parent, ec);
    const fs::path tmp = parent / (dir.filename().string() + ".tmp");
    fs::remove_all(tmp, ec);
    if (!fs::create_directories(tmp / "generator", ec) || ec) {
        throw UnwritableOutputDir("cannot create checkpoint directory " + tmp.string());
    }
    nlohmann::ordered_json meta;
    meta["format"] = kCheckpointFormat;
    meta["stage"] = to_string(ckpt.stage);
    meta["step"] = ckpt.step;
    meta["config"] = to_json(ckpt.config);
    meta["config_hash"] = ckpt.config_hash();
    meta["attribute_kind"] = to_string(ckpt.attribute_kind);
    meta["class_count"] = ckpt.config.net.class_count;
    meta["image_size"] = ckpt.config.net.image_size;
    meta["net"] = to_json(ckpt.generator.config());
    meta["generator"] = save_params(tmp / "generator", ckpt.generator.params());
    if (ckpt.discriminator) {
        fs::create_directories(tmp / "discriminator");
        meta["discriminator"] = save_params(tmp / "discriminator", ckpt.discriminator->params());
    } else {
        meta["discriminator"] = nullptr;
    }
    nlohmann::ordered_json tail = nlohmann::ordered_json::array();
    for (const auto& r : ckpt.metrics_tail) tail.push_back(to_json(r));
    meta["metrics_tail"] = tail;
    {
        std::ofstream out(tmp / "metadata.json");
        if (!out) throw UnwritableOutputDir("cannot write " + (tmp / "metadata.json").string());
        out << meta.dump(2) << "\n";
    }
    fs::remove_all(dir, ec);
    fs::rename(tmp, dir, ec);
    if (ec) throw UnwritableOutputDir("cannot move checkpoint into " + dir.string() + ": " + ec.message());
}

template <typename T>
Checkpoint<T> load_checkpoint(const fs::path& dir) {
    const fs::path meta_path = dir / "metadata.json";
    if (!fs::is_regular_file(meta_path)) throw CorruptCheckpoint("no metadata.json in " + dir.string());
    nlohmann::json meta;
    try {
        std::ifstream in(meta_path);
        meta = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptCheckpoint("unreadable checkpoint metadata: " + std::string(e.what()));
    }
    Checkpoint<T> ckpt;
    try {
        if (meta.value("format", "") != kCheckpointFormat) throw CorruptCheckpoint("unknown checkpoint format");
        ckpt.stage = parse_stage(meta.at("stage").get<std::string>());
        ckpt.step = meta.at("step").get<int>();
        ckpt.config = config_from_json(meta.at("config"));
        const std::string stored = meta.at("config_hash").get<std::string>();
        if (stored != ckpt.config_hash()) {
            throw CorruptCheckpoint("config_hash mismatch: metadata says " + stored + ", config hashes to " +
                                    ckpt.config_hash());
        }
        auto kind = parse_attribute_kind(meta.at("attribute_kind").get<std::string>());
        if (!kind) throw CorruptCheckpoint("bad attribute_kind");
        ckpt.attribute_kind = *kind;
        const NetConfig net = net_config_from_json(meta.at("net"));
        if (!(net == ckpt.config.net)) throw CorruptCheckpoint("network shape disagrees with config");
        ckpt.generator = Generator<T>(net, 0);
        load_params(dir / "generator", meta.at("generator"), ckpt.generator.params());
        if (!meta.at("discriminator").is_null()) {
            if (ckpt.stage == Stage::recon) throw CorruptCheckpoint("recon-stage checkpoint carries a discriminator");
            ckpt.discriminator.emplace(net, 0);
            load_params(dir / "discriminator", meta.at("discriminator"), ckpt.discriminator->params());
        }
        for (const auto& r : meta.at("metrics_tail")) ckpt.metrics_tail.push_back(loss_row_from_json(r));
    } catch (const nlohmann::json::exception& e) {
        throw CorruptCheckpoint("malformed checkpoint metadata: " + std::string(e.what()));
    } catch (const InvalidConfig& e) {
        throw CorruptCheckpoint(std::string("checkpoint config rejected: ") + e.what());
    }
    return ckpt;
}

// The stored config hash without loading tensors.
inline std::string peek_checkpoint_hash(const fs::path& dir) {
    std::ifstream in(dir / "metadata.json");
    if (!in) throw CorruptCheckpoint("no metadata.json in " + dir.string());
    try {
        return nlohmann::json::parse(in).at("config_hash").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw CorruptCheckpoint("unreadable checkpoint metadata: " + std::string(e.what()));
    }
}

}  // namespace tailor
