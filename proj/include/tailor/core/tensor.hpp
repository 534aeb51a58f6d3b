#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tailor/error.hpp"

namespace tailor {

// NCHW extents. Vectors are (N, F, 1, 1), scalars (1, 1, 1, 1).
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t numel() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    std::size_t sample() const { return static_cast<std::size_t>(c) * h * w; }

    friend bool operator==(const Shape&, const Shape&) = default;

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (!(a == b)) {
        throw ShapeMismatch(std::string(what) + ": " + a.str() + " vs " + b.str());
    }
}

template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.numel(), fill) {}
    Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
        if (data_.size() != shape_.numel()) {
            throw ShapeMismatch("tensor data size " + std::to_string(data_.size()) +
                                " does not match shape " + shape_.str());
        }
    }

    static Tensor scalar(T v) { return Tensor(Shape{1, 1, 1, 1}, v); }

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::size_t index(int n, int c, int y, int x) const {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }
    T& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
    const T& at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

    T* sample_ptr(int n) { return data_.data() + static_cast<std::size_t>(n) * shape_.sample(); }
    const T* sample_ptr(int n) const {
        return data_.data() + static_cast<std::size_t>(n) * shape_.sample();
    }

    T item() const { return data_.at(0); }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor reshaped(Shape s) const {
        if (s.numel() != shape_.numel()) {
            throw ShapeMismatch("cannot reshape " + shape_.str() + " to " + s.str());
        }
        return Tensor(s, data_);
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        std::transform(data_.begin(), data_.end(), out.begin(),
                       [](T v) { return static_cast<U>(v); });
        return Tensor<U>(shape_, std::move(out));
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    // Samples [begin, end) along N.
    Tensor slice_batch(int begin, int end) const {
        Shape s = shape_;
        s.n = end - begin;
        std::vector<T> out(data_.begin() + static_cast<std::ptrdiff_t>(begin * shape_.sample()),
                           data_.begin() + static_cast<std::ptrdiff_t>(end * shape_.sample()));
        return Tensor(s, std::move(out));
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_{};
    std::vector<T> data_;
};

// Stacks same-shaped single-sample tensors along N.
template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> items) {
    if (items.empty()) return {};
    Shape s = items.front().shape();
    const int per = s.n;
    s.n = 0;
    for (const auto& t : items) {
        Shape ts = t.shape();
        ts.n = per;
        Shape ref = items.front().shape();
        require_same_shape(ts, ref, "stack_batch");
        s.n += t.shape().n;
    }
    std::vector<T> out;
    out.reserve(s.numel());
    for (const auto& t : items) out.insert(out.end(), t.values().begin(), t.values().end());
    return Tensor<T>(s, std::move(out));
}

template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& items) {
    return stack_batch(std::span<const Tensor<T>>(items));
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "max_abs_diff");
    T m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace tailor
