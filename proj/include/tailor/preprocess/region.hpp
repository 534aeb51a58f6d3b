#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tailor/core/tensor.hpp"
#include "tailor/data/manifest.hpp"

namespace tailor {

// Pixel bounds [x0, x1) x [y0, y1).
struct RegionBox {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    std::size_t area() const { return static_cast<std::size_t>(width()) * height(); }
    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
    bool valid_for(int w, int h) const { return 0 <= x0 && x0 < x1 && x1 <= w && 0 <= y0 && y0 < y1 && y1 <= h; }

    friend bool operator==(const RegionBox&, const RegionBox&) = default;

    std::string str() const {
        return "(" + std::to_string(x0) + "," + std::to_string(y0) + ")-(" + std::to_string(x1) + "," +
               std::to_string(y1) + ")";
    }
};

inline void require_region(const RegionBox& box, int w, int h) {
    if (!box.valid_for(w, h)) {
        throw InvalidRegion("region " + box.str() + " invalid for " + std::to_string(w) + "x" +
                            std::to_string(h) + " image");
    }
}

inline double default_margin(int width, int height) { return 0.1 * std::min(width, height); }

// Landmarks whose bounding box defines the editable region. The first group
// is mandatory for the kind, the second is used when present.
inline std::pair<std::vector<std::string>, std::vector<std::string>> region_landmarks(AttributeKind kind) {
    if (kind == AttributeKind::collar) return {{"collar_left", "collar_right"}, {}};
    return {{"sleeve_end_left", "sleeve_end_right"}, {"shoulder_left", "shoulder_right"}};
}

// Axis-aligned bounds of the kind's landmarks, grown by margin and clipped
// to the image. Always at least one pixel wide and tall.
inline RegionBox attribute_region(const AnnotationRecord& record, double margin) {
    auto [required, optional] = region_landmarks(record.attribute_kind);
    std::vector<Point> pts;
    for (const auto& name : required) {
        const Point* p = record.landmark(name);
        if (!p) throw MissingLandmark(record.image_path + " lacks landmark " + name);
        pts.push_back(*p);
    }
    for (const auto& name : optional) {
        if (const Point* p = record.landmark(name)) pts.push_back(*p);
    }
    double min_x = pts.front().x, max_x = pts.front().x;
    double min_y = pts.front().y, max_y = pts.front().y;
    for (const auto& p : pts) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    RegionBox box;
    box.x0 = std::clamp(static_cast<int>(std::floor(min_x - margin)), 0, record.width - 1);
    box.y0 = std::clamp(static_cast<int>(std::floor(min_y - margin)), 0, record.height - 1);
    box.x1 = std::clamp(static_cast<int>(std::ceil(max_x + margin)), box.x0 + 1, record.width);
    box.y1 = std::clamp(static_cast<int>(std::ceil(max_y + margin)), box.y0 + 1, record.height);
    return box;
}

// Maps a box between resolutions (used when records are resized to the
// network input size).
inline RegionBox rescale_region(const RegionBox& box, int from_w, int from_h, int to_w, int to_h) {
    if (from_w == to_w && from_h == to_h) return box;
    const double sx = static_cast<double>(to_w) / from_w;
    const double sy = static_cast<double>(to_h) / from_h;
    RegionBox out;
    out.x0 = std::clamp(static_cast<int>(std::floor(box.x0 * sx)), 0, to_w - 1);
    out.y0 = std::clamp(static_cast<int>(std::floor(box.y0 * sy)), 0, to_h - 1);
    out.x1 = std::clamp(static_cast<int>(std::ceil(box.x1 * sx)), out.x0 + 1, to_w);
    out.y1 = std::clamp(static_cast<int>(std::ceil(box.y1 * sy)), out.y0 + 1, to_h);
    return out;
}

template <typename T>
struct MaskedImage {
    Tensor<T> pixels;  // (1, 3, H, W) in [-1, 1]
    RegionBox region;
};

// Replaces region pixels with fill on every channel; nothing else changes.
template <typename T>
MaskedImage<T> mask_out(const Tensor<T>& image, const RegionBox& region, T fill) {
    const Shape s = image.shape();
    require_region(region, s.w, s.h);
    MaskedImage<T> out{image, region};
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            for (int y = region.y0; y < region.y1; ++y) {
                for (int x = region.x0; x < region.x1; ++x) out.pixels.at(n, c, y, x) = fill;
            }
        }
    }
    return out;
}

}  // namespace tailor
