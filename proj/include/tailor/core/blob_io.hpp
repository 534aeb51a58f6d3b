#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "tailor/core/autograd.hpp"

namespace tailor {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "blob format assumes little endian");

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

// Raw little-endian float32, no header; shapes live in the metadata JSON.
template <typename T>
void write_blob(const fs::path& path, const Tensor<T>& t) {
    std::vector<float> buf(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) buf[i] = static_cast<float>(t[i]);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CorruptCheckpoint("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw CorruptCheckpoint("short write on " + path.string());
}

template <typename T>
Tensor<T> read_blob(const fs::path& path, Shape shape) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptCheckpoint("missing tensor file " + path.string());
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != shape.numel() * sizeof(float)) {
        throw CorruptCheckpoint("tensor file " + path.string() + " has " + std::to_string(bytes) +
                                " bytes, expected " + std::to_string(shape.numel() * 4));
    }
    in.seekg(0);
    std::vector<float> buf(shape.numel());
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    Tensor<T> t(shape);
    for (std::size_t i = 0; i < buf.size(); ++i) t[i] = static_cast<T>(buf[i]);
    return t;
}

inline nlohmann::json shape_json(const Shape& s) { return {s.n, s.c, s.h, s.w}; }

inline Shape shape_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 4) throw CorruptCheckpoint("bad shape entry");
    return Shape{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

// Writes every parameter as <prefix>/<name>.bin and returns the index
// {name: shape}.
template <typename T>
nlohmann::json save_params(const fs::path& dir, const ParamList<T>& params) {
    nlohmann::json index = nlohmann::json::object();
    for (const auto& p : params) {
        write_blob(dir / (p.name + ".bin"), p.param->value());
        index[p.name] = shape_json(p.param->value().shape());
    }
    return index;
}

template <typename T>
void load_params(const fs::path& dir, const nlohmann::json& index, const ParamList<T>& params) {
    for (const auto& p : params) {
        if (!index.contains(p.name)) throw CorruptCheckpoint("index lacks tensor " + p.name);
        const Shape s = shape_from_json(index.at(p.name));
        if (!(s == p.param->value().shape())) {
            throw CorruptCheckpoint("tensor " + p.name + " has shape " + s.str() + ", network expects " +
                                    p.param->value().shape().str());
        }
        p.param->mutable_value() = read_blob<T>(dir / (p.name + ".bin"), s);
    }
}

// Content hash over parameter bytes (as stored, float32).
template <typename T>
std::uint64_t params_hash(const ParamList<T>& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params) {
        h = fnv1a64(p.name, h);
        for (std::size_t i = 0; i < p.param->value().size(); ++i) {
            const float f = static_cast<float>(p.param->value()[i]);
            h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&f), sizeof f), h);
        }
    }
    return h;
}

}  // namespace tailor
