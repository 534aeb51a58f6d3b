#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "tailor/data/image.hpp"
#include "tailor/preprocess/region.hpp"

namespace tailor {

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double peak = 255.0;
};

inline constexpr double kPsnrCap = 100.0;

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(size) * size);
    const double c = (size - 1) / 2.0;
    double sum = 0.0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double v = std::exp(-((x - c) * (x - c) + (y - c) * (y - c)) / (2.0 * sigma * sigma));
            w[static_cast<std::size_t>(y) * size + x] = v;
            sum += v;
        }
    for (auto& v : w) v /= sum;
    return w;
}

inline void require_same_image_shape(const Image8& a, const Image8& b, const char* what) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
        throw ShapeMismatch(std::string(what) + ": " + std::to_string(a.width) + "x" + std::to_string(a.height) + "x" +
                            std::to_string(a.channels) + " vs " + std::to_string(b.width) + "x" +
                            std::to_string(b.height) + "x" + std::to_string(b.channels));
    }
}

// SSIM map over valid window positions (top-left corner (x, y)) of one
// channel, visiting only windows for which keep(x, y) holds. Returns the
// sum and count.
template <typename Keep>
std::pair<double, std::size_t> ssim_channel(const Image8& a, const Image8& b, int ch, const SsimOptions& o, Keep keep) {
    const auto w = gaussian_window(o.window, o.sigma);
    const double c1 = (o.k1 * o.peak) * (o.k1 * o.peak);
    const double c2 = (o.k2 * o.peak) * (o.k2 * o.peak);
    double sum = 0.0;
    std::size_t count = 0;
    for (int y = 0; y + o.window <= a.height; ++y) {
        for (int x = 0; x + o.window <= a.width; ++x) {
            if (!keep(x, y)) continue;
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (int j = 0; j < o.window; ++j)
                for (int i = 0; i < o.window; ++i) {
                    const double g = w[static_cast<std::size_t>(j) * o.window + i];
                    const double va = a.at(x + i, y + j, ch);
                    const double vb = b.at(x + i, y + j, ch);
                    mx += g * va;
                    my += g * vb;
                    sxx += g * va * va;
                    syy += g * vb * vb;
                    sxy += g * va * vb;
                }
            const double vx = sxx - mx * mx;
            const double vy = syy - my * my;
            const double cov = sxy - mx * my;
            sum += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    }
    return {sum, count};
}

}  // namespace detail

// Single-scale SSIM with a Gaussian window over valid positions, averaged
// over channels.
inline double ssim(const Image8& a, const Image8& b, const SsimOptions& o = {}) {
    detail::require_same_image_shape(a, b, "ssim");
    if (a.width < o.window || a.height < o.window) throw ShapeMismatch("ssim: image smaller than the window");
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        auto [s, n] = detail::ssim_channel(a, b, c, o, [](int, int) { return true; });
        total += s / static_cast<double>(n);
    }
    return total / a.channels;
}

// SSIM restricted to windows that do not touch region.
inline double ssim_outside(const Image8& a, const Image8& b, const RegionBox& region, const SsimOptions& o = {}) {
    detail::require_same_image_shape(a, b, "ssim_outside");
    auto keep = [&](int x, int y) {
        return x + o.window <= region.x0 || x >= region.x1 || y + o.window <= region.y0 || y >= region.y1;
    };
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        auto [s, n] = detail::ssim_channel(a, b, c, o, keep);
        if (n == 0) throw InvalidRegion("ssim_outside: no window lies outside " + region.str());
        total += s / static_cast<double>(n);
    }
    return total / a.channels;
}

inline double mse(const Image8& a, const Image8& b) {
    detail::require_same_image_shape(a, b, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
        s += d * d;
    }
    return s / static_cast<double>(a.pixels.size());
}

// 10 log10(255^2 / MSE); +inf for identical images.
inline double psnr(const Image8& a, const Image8& b) {
    const double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / m);
}

inline double capped_psnr(double db) { return std::min(db, kPsnrCap); }

}  // namespace tailor
