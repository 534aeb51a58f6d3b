#pragma once

#include <cmath>
#include <numbers>

#include "tailor/core/random.hpp"
#include "tailor/preprocess/region.hpp"

namespace tailor {

// Single-channel map in [0, 1], same spatial size as its source image.
template <typename T>
struct EdgeMap {
    Tensor<T> grid;  // (1, 1, H, W)

    int width() const { return grid.shape().w; }
    int height() const { return grid.shape().h; }
};

struct GeoParams {
    double rotation_deg = 0.0;
    double dx = 0.0;
    double dy = 0.0;
    double scale = 1.0;

    static GeoParams identity() { return {}; }
    friend bool operator==(const GeoParams&, const GeoParams&) = default;
};

struct GeoRanges {
    double rotation_lo = -10.0;
    double rotation_hi = 10.0;
    double translation_lo = -0.05;  // fraction of the image side
    double translation_hi = 0.05;
    double scale_lo = 0.9;
    double scale_hi = 1.1;

    static GeoRanges identity() { return {0, 0, 0, 0, 1, 1}; }

    void validate() const {
        if (rotation_lo > rotation_hi || translation_lo > translation_hi || scale_lo > scale_hi) {
            throw InvalidConfig("geo ranges must satisfy lo <= hi");
        }
        if (scale_lo <= 0.0) throw InvalidConfig("geo scale range must be positive");
    }
};

inline GeoParams sample_geo_params(Rng& rng, const GeoRanges& ranges, int side) {
    ranges.validate();
    GeoParams p;
    p.rotation_deg = rng.uniform(ranges.rotation_lo, ranges.rotation_hi);
    p.dx = rng.uniform(ranges.translation_lo, ranges.translation_hi) * side;
    p.dy = rng.uniform(ranges.translation_lo, ranges.translation_hi) * side;
    p.scale = rng.uniform(ranges.scale_lo, ranges.scale_hi);
    return p;
}

// Scale about the centre, rotate about the centre, then translate. Output
// pixels are pulled back through the inverse map and bilinearly sampled;
// samples outside the frame read as zero.
template <typename T>
Tensor<T> warp(const Tensor<T>& src, const GeoParams& p) {
    const Shape s = src.shape();
    Tensor<T> out(s);
    const double cx = (s.w - 1) / 2.0;
    const double cy = (s.h - 1) / 2.0;
    const double theta = p.rotation_deg * std::numbers::pi / 180.0;
    const double cs = std::cos(theta);
    const double sn = std::sin(theta);
    const double inv_scale = 1.0 / p.scale;
    for (int n = 0; n < s.n; ++n) {
        for (int y = 0; y < s.h; ++y) {
            for (int x = 0; x < s.w; ++x) {
                const double tx = x - cx - p.dx;
                const double ty = y - cy - p.dy;
                // inverse rotation then inverse scale
                const double sx = (cs * tx + sn * ty) * inv_scale + cx;
                const double sy = (-sn * tx + cs * ty) * inv_scale + cy;
                const int x0 = static_cast<int>(std::floor(sx));
                const int y0 = static_cast<int>(std::floor(sy));
                const double fx = sx - x0;
                const double fy = sy - y0;
                for (int c = 0; c < s.c; ++c) {
                    auto sample = [&](int xx, int yy) -> double {
                        if (xx < 0 || yy < 0 || xx >= s.w || yy >= s.h) return 0.0;
                        return static_cast<double>(src.at(n, c, yy, xx));
                    };
                    double v = 0.0;
                    if (fx == 0.0 && fy == 0.0) {
                        v = sample(x0, y0);
                    } else {
                        v = (1 - fx) * (1 - fy) * sample(x0, y0) + fx * (1 - fy) * sample(x0 + 1, y0) +
                            (1 - fx) * fy * sample(x0, y0 + 1) + fx * fy * sample(x0 + 1, y0 + 1);
                    }
                    out.at(n, c, y, x) = static_cast<T>(v);
                }
            }
        }
    }
    return out;
}

template <typename T>
EdgeMap<T> geo_transfer(const EdgeMap<T>& edge, const GeoParams& params) {
    EdgeMap<T> out{warp(edge.grid, params)};
    for (auto& v : out.grid.values()) v = std::clamp(v, T(0), T(1));
    return out;
}

// Bilinear resize with half-pixel centres and edge clamping.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& src, int out_h, int out_w) {
    const Shape s = src.shape();
    if (s.h == out_h && s.w == out_w) return src;
    Tensor<T> out(Shape{s.n, s.c, out_h, out_w});
    const double sy = static_cast<double>(s.h) / out_h;
    const double sx = static_cast<double>(s.w) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, s.h - 1.0);
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, s.h - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, s.w - 1.0);
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, s.w - 1);
            const double wx = fx - x0;
            for (int n = 0; n < s.n; ++n) {
                for (int c = 0; c < s.c; ++c) {
                    const double v = (1 - wy) * ((1 - wx) * src.at(n, c, y0, x0) + wx * src.at(n, c, y0, x1)) +
                                     wy * ((1 - wx) * src.at(n, c, y1, x0) + wx * src.at(n, c, y1, x1));
                    out.at(n, c, y, x) = static_cast<T>(v);
                }
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> crop(const Tensor<T>& src, const RegionBox& box) {
    const Shape s = src.shape();
    require_region(box, s.w, s.h);
    Tensor<T> out(Shape{s.n, s.c, box.height(), box.width()});
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            for (int y = 0; y < box.height(); ++y) {
                for (int x = 0; x < box.width(); ++x) out.at(n, c, y, x) = src.at(n, c, box.y0 + y, box.x0 + x);
            }
        }
    }
    return out;
}

}  // namespace tailor
