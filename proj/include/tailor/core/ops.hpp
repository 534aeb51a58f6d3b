#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "tailor/core/autograd.hpp"

namespace tailor {

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

inline int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

// col has shape (C*k*k, out_h*out_w).
template <typename T>
void im2col(const T* x, int channels, int h, int w, int k, int stride, int pad, int out_h,
            int out_w, T* col) {
    const std::size_t cols = static_cast<std::size_t>(out_h) * out_w;
    for (int c = 0; c < channels; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* row = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * cols;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    T* dst = row + static_cast<std::size_t>(oy) * out_w;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + out_w, T(0));
                        continue;
                    }
                    const T* src = x + (static_cast<std::size_t>(c) * h + iy) * w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

// Scatter-add inverse of im2col.
template <typename T>
void col2im(const T* col, int channels, int h, int w, int k, int stride, int pad, int out_h,
            int out_w, T* x) {
    const std::size_t cols = static_cast<std::size_t>(out_h) * out_w;
    for (int c = 0; c < channels; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* row = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * cols;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    const T* src = row + static_cast<std::size_t>(oy) * out_w;
                    T* dst = x + (static_cast<std::size_t>(c) * h + iy) * w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

template <typename T>
Tensor<T>& parent_grad(Node<T>& self, std::size_t i) {
    return self.parents[i]->grad_buffer();
}

template <typename T>
bool parent_wants(const Node<T>& self, std::size_t i) {
    return self.parents[i]->requires_grad;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a.shape(), b.shape(), "add");
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
        for (std::size_t p = 0; p < 2; ++p) {
            if (!detail::parent_wants(self, p)) continue;
            auto& g = detail::parent_grad(self, p);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a.shape(), b.shape(), "sub");
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
        if (detail::parent_wants(self, 0)) {
            auto& g = detail::parent_grad(self, 0);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (detail::parent_wants(self, 1)) {
            auto& g = detail::parent_grad(self, 1);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
    Tensor<T> out = a.value();
    for (auto& v : out.values()) v *= factor;
    return make_result<T>(std::move(out), {a}, [factor](Node<T>& self) {
        auto& g = detail::parent_grad(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
    });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.values()) v = v > T(0) ? v : T(0);
    return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
        auto& g = detail::parent_grad(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (self.value[i] > T(0)) g[i] += self.grad[i];
        }
    });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
    Tensor<T> out = x.value();
    for (auto& v : out.values()) v = v > T(0) ? v : slope * v;
    return make_result<T>(std::move(out), {x}, [slope](Node<T>& self) {
        auto& g = detail::parent_grad(self, 0);
        const auto& in = self.parents[0]->value;
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += in[i] > T(0) ? self.grad[i] : slope * self.grad[i];
        }
    });
}

template <typename T>
T stable_sigmoid(T v) {
    if (v >= T(0)) {
        const T z = std::exp(-v);
        return T(1) / (T(1) + z);
    }
    const T z = std::exp(v);
    return z / (T(1) + z);
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.values()) v = stable_sigmoid(v);
    return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
        auto& g = detail::parent_grad(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T s = self.value[i];
            g[i] += self.grad[i] * s * (T(1) - s);
        }
    });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.values()) v = std::tanh(v);
    return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
        auto& g = detail::parent_grad(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T t = self.value[i];
            g[i] += self.grad[i] * (T(1) - t * t);
        }
    });
}

// ---------------------------------------------------------------------------
// Channel plumbing

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
    const Shape sa = a.shape();
    const Shape sb = b.shape();
    if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
        throw ShapeMismatch("concat_channels: " + sa.str() + " vs " + sb.str());
    }
    Tensor<T> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
    for (int n = 0; n < sa.n; ++n) {
        T* dst = out.sample_ptr(n);
        std::copy_n(a.value().sample_ptr(n), sa.sample(), dst);
        std::copy_n(b.value().sample_ptr(n), sb.sample(), dst + sa.sample());
    }
    return make_result<T>(std::move(out), {a, b}, [sa, sb](Node<T>& self) {
        for (int n = 0; n < sa.n; ++n) {
            const T* src = self.grad.sample_ptr(n);
            if (detail::parent_wants(self, 0)) {
                T* g = detail::parent_grad(self, 0).sample_ptr(n);
                for (std::size_t i = 0; i < sa.sample(); ++i) g[i] += src[i];
            }
            if (detail::parent_wants(self, 1)) {
                T* g = detail::parent_grad(self, 1).sample_ptr(n);
                for (std::size_t i = 0; i < sb.sample(); ++i) g[i] += src[sa.sample() + i];
            }
        }
    });
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, int begin, int end) {
    const Shape s = x.shape();
    if (begin < 0 || end > s.c || begin >= end) {
        throw ShapeMismatch("slice_channels [" + std::to_string(begin) + "," +
                            std::to_string(end) + ") of " + s.str());
    }
    Tensor<T> out(Shape{s.n, end - begin, s.h, s.w});
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        std::copy_n(x.value().sample_ptr(n) + begin * plane, (end - begin) * plane,
                    out.sample_ptr(n));
    }
    return make_result<T>(std::move(out), {x}, [s, begin, end, plane](Node<T>& self) {
        auto& g = detail::parent_grad(self, 0);
        for (int n = 0; n < s.n; ++n) {
            T* dst = g.sample_ptr(n) + begin * plane;
            const T* src = self.grad.sample_ptr(n);
            for (std::size_t i = 0; i < (end - begin) * plane; ++i) dst[i] += src[i];
        }
    });
}

// ---------------------------------------------------------------------------
// Convolutions. Weights follow the usual conventions: conv (Cout, Cin, k, k),
// transpose conv (Cin, Cout, k, k); biases are (1, Cout, 1, 1).

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad) {
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    const int k = ws.h;
    if (ws.c != xs.c || ws.w != k) {
        throw ShapeMismatch("conv2d input " + xs.str() + " weight " + ws.str());
    }
    const int oh = detail::conv_out(xs.h, k, stride, pad);
    const int ow = detail::conv_out(xs.w, k, stride, pad);
    if (oh <= 0 || ow <= 0) throw ShapeMismatch("conv2d output would be empty for " + xs.str());
    const int rows = xs.c * k * k;
    const int cols = oh * ow;
    Tensor<T> out(Shape{xs.n, ws.n, oh, ow});
    std::vector<T> col(static_cast<std::size_t>(rows) * cols);
    detail::ConstMatMap<T> wm(weight.value().data(), ws.n, rows);
    for (int n = 0; n < xs.n; ++n) {
        detail::im2col(x.value().sample_ptr(n), xs.c, xs.h, xs.w, k, stride, pad, oh, ow,
                       col.data());
        detail::ConstMatMap<T> cm(col.data(), rows, cols);
        detail::MatMap<T> om(out.sample_ptr(n), ws.n, cols);
        om.noalias() = wm * cm;
        if (bias.defined()) {
            for (int o = 0; o < ws.n; ++o) om.row(o).array() += bias.value()[o];
        }
    }
    std::vector<Var<T>> parents{x, weight};
    if (bias.defined()) parents.push_back(bias);
    return make_result<T>(
        std::move(out), std::move(parents),
        [xs, ws, k, stride, pad, oh, ow, rows, cols](Node<T>& self) {
            const auto& xv = self.parents[0]->value;
            const auto& wv = self.parents[1]->value;
            const bool want_x = detail::parent_wants(self, 0);
            const bool want_w = detail::parent_wants(self, 1);
            const bool want_b = self.parents.size() > 2 && detail::parent_wants(self, 2);
            std::vector<T> col(static_cast<std::size_t>(rows) * cols);
            detail::ConstMatMap<T> wm(wv.data(), ws.n, rows);
            for (int n = 0; n < xs.n; ++n) {
                detail::ConstMatMap<T> gm(self.grad.sample_ptr(n), ws.n, cols);
                if (want_w) {
                    detail::im2col(xv.sample_ptr(n), xs.c, xs.h, xs.w, k, stride, pad, oh, ow,
                                   col.data());
                    detail::ConstMatMap<T> cm(col.data(), rows, cols);
                    detail::MatMap<T> gw(detail::parent_grad(self, 1).data(), ws.n, rows);
                    gw.noalias() += gm * cm.transpose();
                }
                if (want_b) {
                    auto& gb = detail::parent_grad(self, 2);
                    for (int o = 0; o < ws.n; ++o) gb[o] += gm.row(o).sum();
                }
                if (want_x) {
                    detail::MatMap<T> cm(col.data(), rows, cols);
                    cm.noalias() = wm.transpose() * gm;
                    detail::col2im(col.data(), xs.c, xs.h, xs.w, k, stride, pad, oh, ow,
                                   detail::parent_grad(self, 0).sample_ptr(n));
                }
            }
        });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride,
                        int pad) {
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    const int k = ws.h;
    if (ws.n != xs.c || ws.w != k) {
        throw ShapeMismatch("conv_transpose2d input " + xs.str() + " weight " + ws.str());
    }
    const int cout = ws.c;
    const int oh = (xs.h - 1) * stride - 2 * pad + k;
    const int ow = (xs.w - 1) * stride - 2 * pad + k;
    const int rows = cout * k * k;
    const int cols = xs.h * xs.w;
    Tensor<T> out(Shape{xs.n, cout, oh, ow});
    std::vector<T> col(static_cast<std::size_t>(rows) * cols);
    detail::ConstMatMap<T> wm(weight.value().data(), xs.c, rows);
    for (int n = 0; n < xs.n; ++n) {
        detail::ConstMatMap<T> xm(x.value().sample_ptr(n), xs.c, cols);
        detail::MatMap<T> cm(col.data(), rows, cols);
        cm.noalias() = wm.transpose() * xm;
        detail::col2im(col.data(), cout, oh, ow, k, stride, pad, xs.h, xs.w, out.sample_ptr(n));
        if (bias.defined()) {
            T* o = out.sample_ptr(n);
            for (int c = 0; c < cout; ++c) {
                const T b = bias.value()[c];
                for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i) {
                    o[c * static_cast<std::size_t>(oh) * ow + i] += b;
                }
            }
        }
    }
    std::vector<Var<T>> parents{x, weight};
    if (bias.defined()) parents.push_back(bias);
    return make_result<T>(
        std::move(out), std::move(parents),
        [xs, k, stride, pad, cout, oh, ow, rows, cols](Node<T>& self) {
            const auto& xv = self.parents[0]->value;
            const auto& wv = self.parents[1]->value;
            const bool want_x = detail::parent_wants(self, 0);
            const bool want_w = detail::parent_wants(self, 1);
            const bool want_b = self.parents.size() > 2 && detail::parent_wants(self, 2);
            std::vector<T> col(static_cast<std::size_t>(rows) * cols);
            detail::ConstMatMap<T> wm(wv.data(), xs.c, rows);
            const std::size_t plane = static_cast<std::size_t>(oh) * ow;
            for (int n = 0; n < xs.n; ++n) {
                const T* g = self.grad.sample_ptr(n);
                if (want_b) {
                    auto& gb = detail::parent_grad(self, 2);
                    for (int c = 0; c < cout; ++c) {
                        T s = 0;
                        for (std::size_t i = 0; i < plane; ++i) s += g[c * plane + i];
                        gb[c] += s;
                    }
                }
                if (!want_x && !want_w) continue;
                detail::im2col(g, cout, oh, ow, k, stride, pad, xs.h, xs.w, col.data());
                detail::ConstMatMap<T> cm(col.data(), rows, cols);
                if (want_w) {
                    detail::ConstMatMap<T> xm(xv.sample_ptr(n), xs.c, cols);
                    detail::MatMap<T> gw(detail::parent_grad(self, 1).data(), xs.c, rows);
                    gw.noalias() += xm * cm.transpose();
                }
                if (want_x) {
                    detail::MatMap<T> gx(detail::parent_grad(self, 0).sample_ptr(n), xs.c, cols);
                    gx.noalias() += wm * cm;
                }
            }
        });
}

// Per-sample, per-channel normalization with affine (1, C, 1, 1) scale/shift.
template <typename T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
    const Shape s = x.shape();
    const std::size_t plane = s.plane();
    Tensor<T> out(s);
    Tensor<T> xhat(s);
    std::vector<T> inv_std(static_cast<std::size_t>(s.n) * s.c);
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
            const T* src = x.value().data() + off;
            T mean = 0;
            for (std::size_t i = 0; i < plane; ++i) mean += src[i];
            mean /= static_cast<T>(plane);
            T var = 0;
            for (std::size_t i = 0; i < plane; ++i) var += (src[i] - mean) * (src[i] - mean);
            var /= static_cast<T>(plane);
            const T is = T(1) / std::sqrt(var + eps);
            inv_std[static_cast<std::size_t>(n) * s.c + c] = is;
            const T gm = gamma.value()[c];
            const T bt = beta.value()[c];
            for (std::size_t i = 0; i < plane; ++i) {
                const T h = (src[i] - mean) * is;
                xhat[off + i] = h;
                out[off + i] = gm * h + bt;
            }
        }
    }
    return make_result<T>(
        std::move(out), {x, gamma, beta},
        [s, plane, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
            const auto& gv = self.parents[1]->value;
            const bool want_x = detail::parent_wants(self, 0);
            const bool want_g = detail::parent_wants(self, 1);
            const bool want_b = detail::parent_wants(self, 2);
            const T count = static_cast<T>(plane);
            for (int n = 0; n < s.n; ++n) {
                for (int c = 0; c < s.c; ++c) {
                    const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
                    const T* g = self.grad.data() + off;
                    const T* h = xhat.data() + off;
                    T sum_g = 0;
                    T sum_gh = 0;
                    for (std::size_t i = 0; i < plane; ++i) {
                        sum_g += g[i];
                        sum_gh += g[i] * h[i];
                    }
                    if (want_g) detail::parent_grad(self, 1)[c] += sum_gh;
                    if (want_b) detail::parent_grad(self, 2)[c] += sum_g;
                    if (want_x) {
                        const T gm = gv[c];
                        const T is = inv_std[static_cast<std::size_t>(n) * s.c + c];
                        T* gx = detail::parent_grad(self, 0).data() + off;
                        for (std::size_t i = 0; i < plane; ++i) {
                            gx[i] += gm * is / count *
                                     (count * g[i] - sum_g - h[i] * sum_gh);
                        }
                    }
                }
            }
        });
}

// x is flattened per sample; weight (Out, F, 1, 1); result (N, Out, 1, 1).
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    const int features = static_cast<int>(xs.sample());
    if (ws.c * ws.h * ws.w != features) {
        throw ShapeMismatch("linear input " + xs.str() + " weight " + ws.str());
    }
    Tensor<T> out(Shape{xs.n, ws.n, 1, 1});
    detail::ConstMatMap<T> xm(x.value().data(), xs.n, features);
    detail::ConstMatMap<T> wm(weight.value().data(), ws.n, features);
    detail::MatMap<T> om(out.data(), xs.n, ws.n);
    om.noalias() = xm * wm.transpose();
    if (bias.defined()) {
        for (int n = 0; n < xs.n; ++n) {
            for (int o = 0; o < ws.n; ++o) om(n, o) += bias.value()[o];
        }
    }
    std::vector<Var<T>> parents{x, weight};
    if (bias.defined()) parents.push_back(bias);
    return make_result<T>(std::move(out), std::move(parents), [xs, ws, features](Node<T>& self) {
        detail::ConstMatMap<T> gm(self.grad.data(), xs.n, ws.n);
        if (detail::parent_wants(self, 0)) {
            detail::ConstMatMap<T> wm(self.parents[1]->value.data(), ws.n, features);
            detail::MatMap<T> gx(detail::parent_grad(self, 0).data(), xs.n, features);
            gx.noalias() += gm * wm;
        }
        if (detail::parent_wants(self, 1)) {
            detail::ConstMatMap<T> xm(self.parents[0]->value.data(), xs.n, features);
            detail::MatMap<T> gw(detail::parent_grad(self, 1).data(), ws.n, features);
            gw.noalias() += gm.transpose() * xm;
        }
        if (self.parents.size() > 2 && detail::parent_wants(self, 2)) {
            auto& gb = detail::parent_grad(self, 2);
            for (int n = 0; n < xs.n; ++n) {
                for (int o = 0; o < ws.n; ++o) gb[o] += gm(n, o);
            }
        }
    });
}

// 2x2 max pooling, stride 2 (odd trailing rows/cols are dropped).
template <typename T>
Var<T> max_pool2(const Var<T>& x) {
    const Shape s = x.shape();
    const int oh = s.h / 2;
    const int ow = s.w / 2;
    Tensor<T> out(Shape{s.n, s.c, oh, ow});
    std::vector<std::size_t> argmax(out.size());
    std::size_t o = 0;
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            for (int y = 0; y < oh; ++y) {
                for (int xx = 0; xx < ow; ++xx, ++o) {
                    std::size_t best = x.value().index(n, c, 2 * y, 2 * xx);
                    for (int dy = 0; dy < 2; ++dy) {
                        for (int dx = 0; dx < 2; ++dx) {
                            const std::size_t i = x.value().index(n, c, 2 * y + dy, 2 * xx + dx);
                            if (x.value()[i] > x.value()[best]) best = i;
                        }
                    }
                    argmax[o] = best;
                    out[o] = x.value()[best];
                }
            }
        }
    }
    return make_result<T>(std::move(out), {x}, [argmax = std::move(argmax)](Node<T>& self) {
        auto& g = detail::parent_grad(self, 0);
        for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Var<T> mean(const Var<T>& x) {
    T s = 0;
    for (T v : x.value().values()) s += v;
    const T count = static_cast<T>(x.value().size());
    return make_result<T>(Tensor<T>::scalar(s / count), {x}, [count](Node<T>& self) {
        auto& g = detail::parent_grad(self, 0);
        const T d = self.grad[0] / count;
        for (auto& v : g.values()) v += d;
    });
}

template <typename T>
Var<T> add_scalars(const std::vector<std::pair<Var<T>, T>>& terms) {
    T s = 0;
    std::vector<Var<T>> parents;
    std::vector<T> weights;
    for (const auto& [v, w] : terms) {
        s += w * v.item();
        parents.push_back(v);
        weights.push_back(w);
    }
    return make_result<T>(Tensor<T>::scalar(s), std::move(parents),
                          [weights = std::move(weights)](Node<T>& self) {
                              for (std::size_t i = 0; i < weights.size(); ++i) {
                                  if (detail::parent_wants(self, i)) {
                                      detail::parent_grad(self, i)[0] += weights[i] * self.grad[0];
                                  }
                              }
                          });
}

// mean |a - b| over every element. Either side may be a constant.
template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a.shape(), b.shape(), "mean_abs_diff");
    T s = 0;
    for (std::size_t i = 0; i < a.value().size(); ++i) s += std::abs(a.value()[i] - b.value()[i]);
    const T count = static_cast<T>(a.value().size());
    return make_result<T>(Tensor<T>::scalar(s / count), {a, b}, [count](Node<T>& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        const T d = self.grad[0] / count;
        for (std::size_t p = 0; p < 2; ++p) {
            if (!detail::parent_wants(self, p)) continue;
            auto& g = detail::parent_grad(self, p);
            const T sign_flip = p == 0 ? T(1) : T(-1);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const T diff = av[i] - bv[i];
                const T sgn = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
                g[i] += sign_flip * sgn * d;
            }
        }
    });
}

// mean (x - target)^2 over every element of x.
template <typename T>
Var<T> mean_squared_to(const Var<T>& x, T target) {
    T s = 0;
    for (T v : x.value().values()) s += (v - target) * (v - target);
    const T count = static_cast<T>(x.value().size());
    return make_result<T>(Tensor<T>::scalar(s / count), {x}, [count, target](Node<T>& self) {
        auto& g = detail::parent_grad(self, 0);
        const auto& xv = self.parents[0]->value;
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[0] * T(2) * (xv[i] - target) / count;
        }
    });
}

}  // namespace tailor
