#pragma once

#include <optional>
#include <string>

#include "tailor/data/image.hpp"
#include "tailor/preprocess/edges.hpp"
#include "tailor/preprocess/normalize.hpp"

namespace tailor {

// What the edge encoder sees for a target garment.
enum class EdgeInputMode { region_crop, full_image };

inline const char* to_string(EdgeInputMode m) { return m == EdgeInputMode::region_crop ? "region_crop" : "full_image"; }

inline std::optional<EdgeInputMode> parse_edge_input_mode(const std::string& s) {
    if (s == "region_crop") return EdgeInputMode::region_crop;
    if (s == "full_image") return EdgeInputMode::full_image;
    return std::nullopt;
}

struct PreprocessConfig {
    int image_size = 64;
    double margin_fraction = 0.1;  // of the shorter image side
    EdgeInputMode edge_mode = EdgeInputMode::region_crop;
    EdgeBackend edge_backend = EdgeBackend::deterministic_gradient;
    bool rgb_instead_of_edge = false;
    float mask_fill = 0.0f;

    int edge_channels() const { return rgb_instead_of_edge ? 3 : 1; }
};

// A garment decoded and resized to the network resolution, with its edge
// map and attribute region at that resolution.
template <typename T>
struct PreparedImage {
    Tensor<T> pixels;  // (1, 3, S, S) in [-1, 1]
    EdgeMap<T> edge;   // (1, 1, S, S)
    RegionBox region;
    int type_id = -1;
};

template <typename T>
Tensor<T> resize_to(const Tensor<T>& t, int size) {
    return resize_bilinear(t, size, size);
}

// Pixels in [-1, 1] at their own resolution; region given in those pixels.
template <typename T>
PreparedImage<T> prepare_image(const Tensor<T>& pixels, const RegionBox& region, int type_id,
                               const PreprocessConfig& cfg, const HedEdgeModel<T>* hed = nullptr) {
    const Shape s = pixels.shape();
    require_region(region, s.w, s.h);
    PreparedImage<T> out;
    out.pixels = resize_to(pixels, cfg.image_size);
    out.region = rescale_region(region, s.w, s.h, cfg.image_size, cfg.image_size);
    out.edge = extract_edges(signed_to_unit(out.pixels), cfg.edge_backend, hed);
    out.type_id = type_id;
    return out;
}

template <typename T>
PreparedImage<T> prepare_record(const AnnotationRecord& record, const PreprocessConfig& cfg,
                                const HedEdgeModel<T>* hed = nullptr) {
    const Image8 img = read_png(record.resolved_path, 3).image;
    const double margin = cfg.margin_fraction * std::min(img.width, img.height);
    AnnotationRecord sized = record;
    sized.width = img.width;
    sized.height = img.height;
    return prepare_image(normalize<T>(img), attribute_region(sized, margin), record.type_id, cfg, hed);
}

// I^M: the reference with its attribute region filled.
template <typename T>
MaskedImage<T> masked_input(const PreparedImage<T>& reference, const PreprocessConfig& cfg) {
    return mask_out(reference.pixels, reference.region, static_cast<T>(cfg.mask_fill));
}

// Edge-encoder input built from a target garment: its edge map (or its RGB
// pixels for the no-edge ablation), either whole or cropped to its region
// and stretched back to S x S. Geo-Transfer is applied last.
template <typename T>
Tensor<T> attribute_input(const PreparedImage<T>& target, const PreprocessConfig& cfg,
                          const GeoParams& geo = GeoParams::identity()) {
    Tensor<T> src = cfg.rgb_instead_of_edge ? target.pixels : target.edge.grid;
    if (cfg.edge_mode == EdgeInputMode::region_crop) src = resize_to(crop(src, target.region), cfg.image_size);
    if (geo == GeoParams::identity()) return src;
    if (cfg.rgb_instead_of_edge) {
        Tensor<T> w = warp(src, geo);
        for (auto& v : w.values()) v = std::clamp(v, T(-1), T(1));
        return w;
    }
    return geo_transfer(EdgeMap<T>{src}, geo).grid;
}

// Same, starting from an edge map supplied directly (sketch input). The map
// is used whole in full_image mode and cropped to region otherwise.
template <typename T>
Tensor<T> attribute_input_from_edge(const EdgeMap<T>& edge, const RegionBox& region, const PreprocessConfig& cfg) {
    Tensor<T> src = resize_to(edge.grid, cfg.image_size);
    if (cfg.edge_mode == EdgeInputMode::region_crop) {
        const RegionBox r = rescale_region(region, edge.width(), edge.height(), cfg.image_size, cfg.image_size);
        src = resize_to(crop(src, r), cfg.image_size);
    }
    for (auto& v : src.values()) v = std::clamp(v, T(0), T(1));
    return src;
}

}  // namespace tailor
