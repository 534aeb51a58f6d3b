#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tailor/core/random.hpp"
#include "tailor/data/image.hpp"
#include "tailor/error.hpp"

namespace tailor {

namespace fs = std::filesystem;

enum class AttributeKind { collar, sleeve };

inline const char* to_string(AttributeKind k) { return k == AttributeKind::collar ? "collar" : "sleeve"; }

inline std::optional<AttributeKind> parse_attribute_kind(const std::string& s) {
    if (s == "collar") return AttributeKind::collar;
    if (s == "sleeve") return AttributeKind::sleeve;
    return std::nullopt;
}

// 12 collar types, 2 sleeve types.
inline int class_count_for(AttributeKind k) { return k == AttributeKind::collar ? 12 : 2; }

inline const std::array<const char*, 6>& landmark_names() {
    static const std::array<const char*, 6> names{"collar_left",    "collar_right",
                                                  "shoulder_left",  "shoulder_right",
                                                  "sleeve_end_left", "sleeve_end_right"};
    return names;
}

struct Point {
    double x = 0;
    double y = 0;
    friend bool operator==(const Point&, const Point&) = default;
};

// Drawing parameters of a procedurally generated garment. Present only on
// synthetic records; the geometric oracle classifier relies on them.
struct SyntheticParams {
    int shape = 0;       // collar cutout family, equals type_id
    int n_shapes = 1;    // size of the shape family the set was drawn from
    double cx = 0;       // garment centre line
    double neck_y = 0;   // top edge of the torso
    double collar_width = 0;
    double collar_depth = 0;
    double torso_half_width = 0;
    double shoulder_half_width = 0;
    double sleeve_bottom = 0;
    double hem_y = 0;
    std::array<int, 3> color{0, 0, 0};
    std::array<int, 3> background{0, 0, 0};
    std::array<int, 3> outline{0, 0, 0};
    std::uint64_t seed = 0;

    friend bool operator==(const SyntheticParams&, const SyntheticParams&) = default;
};

inline void to_json(nlohmann::ordered_json& j, const SyntheticParams& p) {
    j = nlohmann::ordered_json{{"shape", p.shape},
                               {"n_shapes", p.n_shapes},
                               {"cx", p.cx},
                               {"neck_y", p.neck_y},
                               {"collar_width", p.collar_width},
                               {"collar_depth", p.collar_depth},
                               {"torso_half_width", p.torso_half_width},
                               {"shoulder_half_width", p.shoulder_half_width},
                               {"sleeve_bottom", p.sleeve_bottom},
                               {"hem_y", p.hem_y},
                               {"color", p.color},
                               {"background", p.background},
                               {"outline", p.outline},
                               {"seed", p.seed}};
}

inline SyntheticParams synthetic_from_json(const nlohmann::json& j) {
    SyntheticParams p;
    p.shape = j.at("shape").get<int>();
    p.n_shapes = j.at("n_shapes").get<int>();
    p.cx = j.at("cx").get<double>();
    p.neck_y = j.at("neck_y").get<double>();
    p.collar_width = j.at("collar_width").get<double>();
    p.collar_depth = j.at("collar_depth").get<double>();
    p.torso_half_width = j.at("torso_half_width").get<double>();
    p.shoulder_half_width = j.at("shoulder_half_width").get<double>();
    p.sleeve_bottom = j.at("sleeve_bottom").get<double>();
    p.hem_y = j.at("hem_y").get<double>();
    p.color = j.at("color").get<std::array<int, 3>>();
    p.background = j.at("background").get<std::array<int, 3>>();
    p.outline = j.at("outline").get<std::array<int, 3>>();
    p.seed = j.at("seed").get<std::uint64_t>();
    return p;
}

struct AnnotationRecord {
    std::string image_path;  // as written in the manifest, relative to its directory
    fs::path resolved_path;
    AttributeKind attribute_kind = AttributeKind::collar;
    int type_id = 0;
    std::string type_name;
    std::map<std::string, Point> landmarks;
    int width = 0;
    int height = 0;
    std::optional<SyntheticParams> synthetic;

    const Point* landmark(const std::string& name) const {
        auto it = landmarks.find(name);
        return it == landmarks.end() ? nullptr : &it->second;
    }
};

enum class Provenance { real, synthetic };

struct DatasetManifest {
    std::vector<AnnotationRecord> records;
    AttributeKind attribute_kind = AttributeKind::collar;
    int class_count = 12;
    Provenance provenance = Provenance::real;
    std::optional<std::uint64_t> seed;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }

    // Copy with the same metadata and a different record list.
    DatasetManifest with_records(std::vector<AnnotationRecord> rs) const {
        DatasetManifest m = *this;
        m.records = std::move(rs);
        return m;
    }

    std::vector<int> type_ids() const {
        std::vector<int> ids;
        for (const auto& r : records) ids.push_back(r.type_id);
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        return ids;
    }
};

class AttributeOneHot {
public:
    AttributeOneHot(int type_id, int class_count) : vector_(static_cast<std::size_t>(class_count), 0) {
        if (type_id < 0 || type_id >= class_count) {
            throw InvalidConfig("type_id " + std::to_string(type_id) + " outside 0.." +
                                std::to_string(class_count - 1));
        }
        vector_[static_cast<std::size_t>(type_id)] = 1;
    }

    const std::vector<int>& vector() const { return vector_; }
    int class_count() const { return static_cast<int>(vector_.size()); }
    int argmax() const {
        return static_cast<int>(std::max_element(vector_.begin(), vector_.end()) - vector_.begin());
    }

private:
    std::vector<int> vector_;
};

// ---------------------------------------------------------------------------
// JSONL manifest

inline nlohmann::ordered_json record_to_json(const AnnotationRecord& r) {
    nlohmann::ordered_json j;
    j["image"] = r.image_path;
    j["attribute"] = {{"kind", to_string(r.attribute_kind)},
                      {"type_id", r.type_id},
                      {"type_name", r.type_name}};
    nlohmann::ordered_json lm = nlohmann::ordered_json::object();
    for (const char* name : landmark_names()) {
        if (const Point* p = r.landmark(name)) lm[name] = {p->x, p->y};
    }
    j["landmarks"] = lm;
    if (r.synthetic) {
        nlohmann::ordered_json s;
        to_json(s, *r.synthetic);
        j["synthetic"] = s;
    }
    return j;
}

inline void write_manifest(const fs::path& path, const DatasetManifest& m) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw UnwritableOutputDir("cannot write manifest " + path.string());
    for (const auto& r : m.records) out << record_to_json(r).dump() << '\n';
    if (!out) throw UnwritableOutputDir("short write on " + path.string());
}

namespace detail {

inline AnnotationRecord parse_record(const nlohmann::json& j, std::size_t line, const fs::path& root) {
    auto field = [&](const nlohmann::json& obj, const char* key, const std::string& path) -> const nlohmann::json& {
        if (!obj.is_object() || !obj.contains(key)) throw SchemaViolation(line, path, "missing");
        return obj.at(key);
    };
    AnnotationRecord r;
    const auto& image = field(j, "image", "image");
    if (!image.is_string() || image.get<std::string>().empty()) {
        throw SchemaViolation(line, "image", "expected non-empty string");
    }
    r.image_path = image.get<std::string>();

    const auto& attr = field(j, "attribute", "attribute");
    const auto& kind = field(attr, "kind", "attribute.kind");
    if (!kind.is_string() || !parse_attribute_kind(kind.get<std::string>())) {
        throw SchemaViolation(line, "attribute.kind", "expected \"collar\" or \"sleeve\"");
    }
    r.attribute_kind = *parse_attribute_kind(kind.get<std::string>());
    const auto& type_id = field(attr, "type_id", "attribute.type_id");
    if (!type_id.is_number_integer()) throw SchemaViolation(line, "attribute.type_id", "expected integer");
    r.type_id = type_id.get<int>();
    const int classes = class_count_for(r.attribute_kind);
    if (r.type_id < 0 || r.type_id >= classes) {
        throw SchemaViolation(line, "attribute.type_id",
                              std::to_string(r.type_id) + " outside 0.." + std::to_string(classes - 1));
    }
    const auto& type_name = field(attr, "type_name", "attribute.type_name");
    if (!type_name.is_string()) throw SchemaViolation(line, "attribute.type_name", "expected string");
    r.type_name = type_name.get<std::string>();

    const auto& lms = field(j, "landmarks", "landmarks");
    if (!lms.is_object()) throw SchemaViolation(line, "landmarks", "expected object");
    for (const auto& [name, value] : lms.items()) {
        const auto& names = landmark_names();
        if (std::find(names.begin(), names.end(), name) == names.end()) {
            throw SchemaViolation(line, "landmarks." + name, "unknown landmark");
        }
        if (!value.is_array() || value.size() != 2 || !value[0].is_number() || !value[1].is_number()) {
            throw SchemaViolation(line, "landmarks." + name, "expected [x, y]");
        }
        r.landmarks[name] = Point{value[0].get<double>(), value[1].get<double>()};
    }

    if (j.contains("synthetic")) {
        try {
            r.synthetic = synthetic_from_json(j.at("synthetic"));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaViolation(line, "synthetic", e.what());
        }
    }

    r.resolved_path = root / r.image_path;
    if (!fs::exists(r.resolved_path)) {
        throw MissingFile("line " + std::to_string(line) + ": image not found: " +
                          r.resolved_path.string());
    }
    DecodedPng decoded;
    try {
        decoded = read_png(r.resolved_path);
    } catch (const ImageDecodeError& e) {
        throw SchemaViolation(line, "image", e.what());
    }
    if (!decoded.source_was_rgb) throw SchemaViolation(line, "image", "PNG is not 3-channel RGB");
    r.width = decoded.image.width;
    r.height = decoded.image.height;
    for (const auto& [name, p] : r.landmarks) {
        if (p.x < 0 || p.y < 0 || p.x > r.width - 1 || p.y > r.height - 1) {
            throw LandmarkOutOfBounds("line " + std::to_string(line) + ": landmark " + name + " (" +
                                      std::to_string(p.x) + ", " + std::to_string(p.y) +
                                      ") outside " + std::to_string(r.width) + "x" +
                                      std::to_string(r.height) + " image");
        }
    }
    return r;
}

}  // namespace detail

inline DatasetManifest load_manifest(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw MissingFile("manifest not found: " + path.string());
    std::ifstream in(path);
    if (!in) throw MissingFile("cannot open manifest " + path.string());
    const fs::path root = path.parent_path();
    DatasetManifest m;
    std::string text;
    std::size_t line_no = 0;
    bool any_synthetic = false;
    bool all_synthetic = true;
    while (std::getline(in, text)) {
        ++line_no;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw SchemaViolation(line_no, "<record>", e.what());
        }
        AnnotationRecord r = detail::parse_record(j, line_no, root);
        if (!m.records.empty() && r.attribute_kind != m.attribute_kind) {
            throw SchemaViolation(line_no, "attribute.kind", "mixed attribute kinds in one manifest");
        }
        m.attribute_kind = r.attribute_kind;
        any_synthetic = any_synthetic || r.synthetic.has_value();
        all_synthetic = all_synthetic && r.synthetic.has_value();
        m.records.push_back(std::move(r));
    }
    m.class_count = class_count_for(m.attribute_kind);
    if (any_synthetic && all_synthetic) {
        m.provenance = Provenance::synthetic;
        m.seed = m.records.front().synthetic->seed;
    }
    return m;
}

// ---------------------------------------------------------------------------
// Splitting and sampling

// Partition with floor(train_fraction * N) records on the train side. Each
// side keeps the manifest's original record order.
inline std::pair<DatasetManifest, DatasetManifest> split_dataset(const DatasetManifest& manifest,
                                                                 double train_fraction,
                                                                 std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw InvalidConfig("train_fraction must lie in (0, 1), got " + std::to_string(train_fraction));
    }
    const std::size_t n = manifest.size();
    if (n == 0) throw EmptyManifest("cannot split an empty manifest");
    const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
    if (n_train == 0 || n_train == n) {
        throw DegenerateSplit("split of " + std::to_string(n) + " records at fraction " +
                              std::to_string(train_fraction) + " leaves one side empty");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);
    std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test_idx(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    std::vector<AnnotationRecord> train;
    std::vector<AnnotationRecord> test;
    for (auto i : train_idx) train.push_back(manifest.records[i]);
    for (auto i : test_idx) test.push_back(manifest.records[i]);
    return {manifest.with_records(std::move(train)), manifest.with_records(std::move(test))};
}

// Indices of a uniform without-replacement draw (partial Fisher-Yates).
inline std::vector<std::size_t> sample_indices(std::size_t population, std::size_t batch_size, Rng& rng) {
    if (batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
    if (batch_size > population) {
        throw BatchLargerThanDataset("batch of " + std::to_string(batch_size) + " from " +
                                     std::to_string(population) + " records");
    }
    std::vector<std::size_t> idx(population);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < batch_size; ++i) {
        std::swap(idx[i], idx[i + rng.index(population - i)]);
    }
    idx.resize(batch_size);
    return idx;
}

inline std::vector<AnnotationRecord> sample_batch(const DatasetManifest& manifest, std::size_t batch_size,
                                                  Rng& rng) {
    std::vector<AnnotationRecord> out;
    for (auto i : sample_indices(manifest.size(), batch_size, rng)) out.push_back(manifest.records[i]);
    return out;
}

}  // namespace tailor
