#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <system_error>

#include "tailor/core/random.hpp"
#include "tailor/data/image.hpp"
#include "tailor/data/manifest.hpp"

namespace tailor {

struct SyntheticSpec {
    int image_size = 64;
    int n_images = 64;
    int n_collar_shapes = 3;
    int palette_size = 8;
};

inline constexpr int kMaxCollarShapes = 12;

inline const char* collar_shape_name(int shape) {
    static const std::array<const char*, kMaxCollarShapes> names{
        "round",     "v_neck",    "square",        "lapel",     "boat",       "scoop",
        "keyhole",   "sweetheart", "narrow_square", "trapezoid", "asymmetric", "split_round"};
    return names.at(static_cast<std::size_t>(shape));
}

// Cutout predicate in collar-envelope coordinates: u in [-1, 1] across the
// collar width, v in [0, 1] from the neckline down to the collar depth.
inline bool collar_cutout(int shape, double u, double v) {
    if (v < 0.0 || v > 1.0 || u < -1.0 || u > 1.0) return false;
    const double au = std::abs(u);
    switch (shape) {
        case 0: return u * u + v * v <= 1.0;
        case 1: return au <= 1.0 - v;
        case 2: return true;
        case 3: return au <= 1.0 - v || v <= 0.35;
        case 4: return u * u + (v / 0.4) * (v / 0.4) <= 1.0;
        case 5: return (u / 0.6) * (u / 0.6) + v * v <= 1.0;
        case 6: return u * u + (v / 0.45) * (v / 0.45) <= 1.0 || au <= 0.15;
        case 7: {
            const double bump = (au - 0.5) / 0.5;
            return (bump * bump <= 1.0 && v <= 0.6 * std::sqrt(1.0 - bump * bump)) ||
                   au <= 0.35 * (1.0 - v);
        }
        case 8: return au <= 0.5;
        case 9: return au <= 1.0 - 0.55 * v;
        case 10: return v <= (u + 1.0) / 2.0;
        case 11: return u * u + (v / 0.55) * (v / 0.55) <= 1.0 || au <= 0.3 * (1.0 - v);
        default: return false;
    }
}

namespace detail {

inline bool inside_convex(const std::array<Point, 4>& poly, double x, double y) {
    bool pos = false;
    bool neg = false;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Point& a = poly[i];
        const Point& b = poly[(i + 1) % poly.size()];
        const double cross = (b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x);
        pos = pos || cross > 0;
        neg = neg || cross < 0;
    }
    return !(pos && neg);
}

inline std::array<int, 3> hsv_to_rgb(double h, double s, double v) {
    const double c = v * s;
    const double hp = std::fmod(h, 360.0) / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    const double m = v - c;
    return {static_cast<int>(std::lround((r + m) * 255)), static_cast<int>(std::lround((g + m) * 255)),
            static_cast<int>(std::lround((b + m) * 255))};
}

inline double round2(double v) { return std::round(v * 100.0) / 100.0; }

}  // namespace detail

inline std::array<int, 3> palette_color(int index, int palette_size) {
    const double hue = 360.0 * index / palette_size + 15.0;
    const double value = index % 2 == 0 ? 0.72 : 0.58;
    return detail::hsv_to_rgb(hue, 0.62, value);
}

// True where the drawn garment covers pixel (x, y) (torso and sleeves minus
// the collar cutout).
inline bool garment_covers(const SyntheticParams& p, double x, double y) {
    const double thw = p.torso_half_width;
    const double shw = p.shoulder_half_width;
    const double drop = (shw - thw) * 0.45;
    const bool body = x >= p.cx - thw && x <= p.cx + thw && y >= p.neck_y && y <= p.hem_y;
    const std::array<Point, 4> left{Point{p.cx - thw, p.neck_y}, Point{p.cx - shw, p.neck_y + drop},
                                    Point{p.cx - shw, p.sleeve_bottom},
                                    Point{p.cx - thw, p.sleeve_bottom + drop}};
    const std::array<Point, 4> right{Point{p.cx + thw, p.neck_y}, Point{p.cx + thw, p.sleeve_bottom + drop},
                                     Point{p.cx + shw, p.sleeve_bottom},
                                     Point{p.cx + shw, p.neck_y + drop}};
    const bool covered = body || detail::inside_convex(left, x, y) || detail::inside_convex(right, x, y);
    if (!covered) return false;
    const double u = (x - p.cx) / (p.collar_width / 2.0);
    const double v = (y - p.neck_y) / p.collar_depth;
    return !collar_cutout(p.shape, u, v);
}

// Flat-colour garment with a 2-px dark outline on a light background.
inline Image8 render_garment(const SyntheticParams& p, int size) {
    std::vector<std::uint8_t> cover(static_cast<std::size_t>(size) * size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) cover[static_cast<std::size_t>(y) * size + x] = garment_covers(p, x, y);
    }
    auto covered = [&](int x, int y) {
        return x >= 0 && y >= 0 && x < size && y < size && cover[static_cast<std::size_t>(y) * size + x];
    };
    Image8 img(size, size, 3);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            std::array<int, 3> c = p.background;
            if (covered(x, y)) {
                bool edge = false;
                for (int dy = -2; dy <= 2 && !edge; ++dy) {
                    for (int dx = -2; dx <= 2 && !edge; ++dx) edge = !covered(x + dx, y + dy);
                }
                c = edge ? p.outline : p.color;
            }
            for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = static_cast<std::uint8_t>(c[ch]);
        }
    }
    return img;
}

inline SyntheticParams draw_synthetic_params(int shape, int n_shapes, int size, int palette_size, Rng& rng,
                                             std::uint64_t seed) {
    const double s = size;
    SyntheticParams p;
    p.shape = shape;
    p.n_shapes = n_shapes;
    p.cx = detail::round2(s / 2.0 + rng.uniform(-0.016, 0.016) * s);
    p.neck_y = detail::round2(0.2 * s + rng.uniform(-0.016, 0.016) * s);
    p.collar_width = detail::round2(0.38 * s * rng.uniform(0.95, 1.05));
    p.collar_depth = detail::round2(0.17 * s * rng.uniform(0.95, 1.05));
    p.torso_half_width = detail::round2(0.24 * s);
    p.shoulder_half_width = detail::round2(0.42 * s);
    p.sleeve_bottom = detail::round2(0.5 * s);
    p.hem_y = detail::round2(0.94 * s);
    p.color = palette_color(static_cast<int>(rng.index(static_cast<std::size_t>(palette_size))), palette_size);
    p.background = {248, 248, 248};
    p.outline = {32, 32, 32};
    p.seed = seed;
    return p;
}

inline std::map<std::string, Point> synthetic_landmarks(const SyntheticParams& p) {
    using detail::round2;
    const double mid = p.neck_y + p.collar_depth / 2.0;
    return {{"collar_left", {round2(p.cx - p.collar_width / 2.0), round2(mid)}},
            {"collar_right", {round2(p.cx + p.collar_width / 2.0), round2(mid)}},
            {"shoulder_left", {round2(p.cx - p.torso_half_width), round2(p.neck_y)}},
            {"shoulder_right", {round2(p.cx + p.torso_half_width), round2(p.neck_y)}},
            {"sleeve_end_left", {round2(p.cx - p.shoulder_half_width), round2(p.sleeve_bottom)}},
            {"sleeve_end_right", {round2(p.cx + p.shoulder_half_width), round2(p.sleeve_bottom)}}};
}

// Writes <out_dir>/images/NNNNNN.png and <out_dir>/manifest.jsonl. Labels
// cycle through the shape family, so every shape appears once n_images >=
// n_collar_shapes.
inline DatasetManifest generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed, const fs::path& out_dir) {
    if (spec.image_size < 32) throw InvalidConfig("image_size must be >= 32");
    if (spec.n_collar_shapes < 1 || spec.n_collar_shapes > kMaxCollarShapes) {
        throw InvalidConfig("n_collar_shapes must lie in 1..12");
    }
    if (spec.n_images < 1) throw InvalidConfig("n_images must be >= 1");
    if (spec.palette_size < 1) throw InvalidConfig("palette_size must be >= 1");

    std::error_code ec;
    fs::create_directories(out_dir / "images", ec);
    if (ec || !fs::is_directory(out_dir / "images")) {
        throw UnwritableOutputDir("cannot create " + (out_dir / "images").string() +
                                  (ec ? ": " + ec.message() : ""));
    }

    Rng rng(seed);
    DatasetManifest m;
    m.attribute_kind = AttributeKind::collar;
    m.class_count = class_count_for(AttributeKind::collar);
    m.provenance = Provenance::synthetic;
    m.seed = seed;
    for (int i = 0; i < spec.n_images; ++i) {
        const int shape = i % spec.n_collar_shapes;
        SyntheticParams p =
            draw_synthetic_params(shape, spec.n_collar_shapes, spec.image_size, spec.palette_size, rng, seed);
        char name[32];
        std::snprintf(name, sizeof name, "images/%06d.png", i);
        AnnotationRecord r;
        r.image_path = name;
        r.resolved_path = out_dir / name;
        r.attribute_kind = AttributeKind::collar;
        r.type_id = shape;
        r.type_name = collar_shape_name(shape);
        r.landmarks = synthetic_landmarks(p);
        r.width = spec.image_size;
        r.height = spec.image_size;
        r.synthetic = p;
        write_png(r.resolved_path, render_garment(p, spec.image_size));
        m.records.push_back(std::move(r));
    }
    write_manifest(out_dir / "manifest.jsonl", m);
    return m;
}

}  // namespace tailor
