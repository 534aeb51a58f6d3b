#pragma once

#include <png.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "tailor/core/tensor.hpp"

namespace tailor {

// 8-bit image, interleaved, row-major. channels is 1 or 3.
struct Image8 {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<std::uint8_t> pixels;

    Image8() = default;
    Image8(int w, int h, int c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c),
          pixels(static_cast<std::size_t>(w) * h * c, fill) {}

    std::uint8_t& at(int x, int y, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t at(int x, int y, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    friend bool operator==(const Image8&, const Image8&) = default;
};

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFile("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct DecodedPng {
    Image8 image;
    bool source_was_rgb = false;  // file had exactly three colour channels, no alpha
};

// Decodes any PNG into the requested channel count (1 = gray, 3 = RGB).
inline DecodedPng decode_png(const std::uint8_t* data, std::size_t size, int channels = 3) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (size == 0 || !png_image_begin_read_from_memory(&img, data, size)) {
        throw ImageDecodeError(std::string("not a decodable PNG: ") +
                               (size == 0 ? "empty input" : img.message));
    }
    DecodedPng out;
    out.source_was_rgb = (img.format & PNG_FORMAT_FLAG_COLOR) != 0 &&
                         (img.format & PNG_FORMAT_FLAG_ALPHA) == 0 &&
                         (img.format & PNG_FORMAT_FLAG_LINEAR) == 0;
    img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    out.image = Image8(static_cast<int>(img.width), static_cast<int>(img.height), channels);
    // Composite any alpha onto white.
    png_color background{255, 255, 255};
    if (!png_image_finish_read(&img, &background, out.image.pixels.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw ImageDecodeError("PNG decode failed: " + msg);
    }
    return out;
}

inline DecodedPng decode_png(const std::vector<std::uint8_t>& bytes, int channels = 3) {
    return decode_png(bytes.data(), bytes.size(), channels);
}

inline DecodedPng read_png(const std::filesystem::path& path, int channels = 3) {
    if (!std::filesystem::exists(path)) throw MissingFile("image not found: " + path.string());
    return decode_png(read_file_bytes(path), channels);
}

inline std::vector<std::uint8_t> encode_png(const Image8& image) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_get_memory_size(img, size, 0, image.pixels.data(), 0, nullptr)) {
        throw ImageDecodeError(std::string("PNG size query failed: ") + img.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
        throw ImageDecodeError(std::string("PNG encode failed: ") + img.message);
    }
    out.resize(size);
    return out;
}

inline void write_png(const std::filesystem::path& path, const Image8& image) {
    const auto bytes = encode_png(image);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw UnwritableOutputDir("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw UnwritableOutputDir("short write on " + path.string());
}

// (1, C, H, W) tensor with values in [0, 1].
template <typename T = float>
Tensor<T> to_unit_tensor(const Image8& image) {
    Tensor<T> t(Shape{1, image.channels, image.height, image.width});
    for (int c = 0; c < image.channels; ++c) {
        for (int y = 0; y < image.height; ++y) {
            for (int x = 0; x < image.width; ++x) {
                t.at(0, c, y, x) = static_cast<T>(image.at(x, y, c)) / T(255);
            }
        }
    }
    return t;
}

// Inverse of to_unit_tensor for sample n; values are clamped then rounded.
template <typename T>
Image8 from_unit_tensor(const Tensor<T>& t, int n = 0) {
    const Shape s = t.shape();
    Image8 img(s.w, s.h, s.c);
    for (int c = 0; c < s.c; ++c) {
        for (int y = 0; y < s.h; ++y) {
            for (int x = 0; x < s.w; ++x) {
                const double v = std::clamp(static_cast<double>(t.at(n, c, y, x)), 0.0, 1.0);
                img.at(x, y, c) = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        }
    }
    return img;
}

}  // namespace tailor
