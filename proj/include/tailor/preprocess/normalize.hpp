#pragma once

#include <cmath>

#include "tailor/data/image.hpp"

namespace tailor {

// 0..255 -> [-1, 1]
template <typename T = float>
Tensor<T> normalize(const Image8& image) {
    Tensor<T> t(Shape{1, image.channels, image.height, image.width});
    for (int c = 0; c < image.channels; ++c) {
        for (int y = 0; y < image.height; ++y) {
            for (int x = 0; x < image.width; ++x) {
                t.at(0, c, y, x) = static_cast<T>(image.at(x, y, c)) / T(127.5) - T(1);
            }
        }
    }
    return t;
}

template <typename T>
Image8 denormalize(const Tensor<T>& t, int n = 0) {
    const Shape s = t.shape();
    Image8 img(s.w, s.h, s.c);
    for (int c = 0; c < s.c; ++c) {
        for (int y = 0; y < s.h; ++y) {
            for (int x = 0; x < s.w; ++x) {
                const double v = (static_cast<double>(t.at(n, c, y, x)) + 1.0) * 127.5;
                img.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
            }
        }
    }
    return img;
}

template <typename T>
Tensor<T> unit_to_signed(const Tensor<T>& t) {
    Tensor<T> out = t;
    for (auto& v : out.values()) v = v * T(2) - T(1);
    return out;
}

template <typename T>
Tensor<T> signed_to_unit(const Tensor<T>& t) {
    Tensor<T> out = t;
    for (auto& v : out.values()) v = (v + T(1)) / T(2);
    return out;
}

}  // namespace tailor
