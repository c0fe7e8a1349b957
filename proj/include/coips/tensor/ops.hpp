#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "coips/tensor/tensor.hpp"

namespace coips::tensor {

/// Named weight (and optional bias) of one layer.
template <class T>
struct LayerParams {
    std::string name;
    Tensor<T> weight;
    std::optional<Tensor<T>> bias;
};

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

/// Aligned copy of the r x c row-major block at p. Products only ever see
/// aligned operands, so their rounding depends on shapes alone.
template <class T>
RowMat<T> load(const T* p, std::size_t r, std::size_t c) {
    return CMapMat<T>(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

template <class T>
void store(const RowMat<T>& m, T* dst, bool accumulate) {
    const T* src = m.data();
    const auto size = static_cast<std::size_t>(m.size());
    if (accumulate)
        for (std::size_t i = 0; i < size; ++i) dst[i] += src[i];
    else
        std::copy(src, src + size, dst);
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                             to_string(b.shape()));
}

template <class T>
bool wants(const std::shared_ptr<Node<T>>& n) {
    return n && n->requires_grad;
}

/// Views a rank-3 (C,H,W) input as a batch of one.
template <class T>
Shape as_nchw(const Tensor<T>& x, const char* op) {
    if (x.rank() == 4) return x.shape();
    if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2)};
    throw DimensionError(std::string(op) + ": expected [C,H,W] or [N,C,H,W], got " + to_string(x.shape()));
}

inline Shape restore_rank(const Shape& nchw, std::size_t rank) {
    if (rank == 4) return nchw;
    return {nchw[1], nchw[2], nchw[3]};
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return detail::make_result<T>("add", a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
        for (auto& p : self.parents)
            if (detail::wants(p)) {
                auto& g = p->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
    });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return detail::make_result<T>("sub", a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
        if (detail::wants(self.parents[0])) {
            auto& g = self.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (detail::wants(self.parents[1])) {
            auto& g = self.parents[1]->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return detail::make_result<T>("mul", a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (detail::wants(pa)) {
            auto& g = pa->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->data[i];
        }
        if (detail::wants(pb)) {
            auto& g = pb->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->data[i];
        }
    });
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "div");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / b[i];
    return detail::make_result<T>("div", a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (detail::wants(pa)) {
            auto& g = pa->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / pb->data[i];
        }
        if (detail::wants(pb)) {
            auto& g = pb->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] -= self.grad[i] * pa->data[i] / (pb->data[i] * pb->data[i]);
        }
    });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
    return detail::make_result<T>("scale", a.shape(), std::move(out), {a.node()}, [s](Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
    });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + s;
    return detail::make_result<T>("add_scalar", a.shape(), std::move(out), {a.node()}, [](Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

/// Reinterprets the values under a new shape of equal element count.
template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (numel_of(shape) != a.numel())
        throw DimensionError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
    return detail::make_result<T>("reshape", std::move(shape), a.values(), {a.node()}, [](Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

// ----------------------------------------------------------------- reductions

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
    T total = T(0);
    for (const T& v : a.values()) total += v;
    return detail::make_result<T>("sum", Shape{1}, {total}, {a.node()}, [](Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        const T up = self.grad[0];
        for (auto& v : g) v += up;
    });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
    return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

/// Sums everything but the leading axis: [N, ...] -> [N].
template <class T>
Tensor<T> sum_per_sample(const Tensor<T>& a) {
    if (a.rank() < 2) throw DimensionError("sum_per_sample: need rank >= 2, got " + to_string(a.shape()));
    const std::size_t n = a.dim(0);
    const std::size_t inner = a.numel() / n;
    std::vector<T> out(n, T(0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < inner; ++j) out[i] += a[i * inner + j];
    return detail::make_result<T>("sum_per_sample", Shape{n}, std::move(out), {a.node()},
                                  [n, inner](Node<T>& self) {
                                      auto& g = self.parents[0]->ensure_grad();
                                      for (std::size_t i = 0; i < n; ++i)
                                          for (std::size_t j = 0; j < inner; ++j) g[i * inner + j] += self.grad[i];
                                  });
}

// ---------------------------------------------------------------- activations

/// max(x, 0); the subgradient at 0 is taken as 0.
template <class T>
Tensor<T> relu(const Tensor<T>& a) {
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > T(0) ? a[i] : T(0);
    return detail::make_result<T>("relu", a.shape(), std::move(out), {a.node()}, [](Node<T>& self) {
        auto& p = *self.parents[0];
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (p.data[i] > T(0)) g[i] += self.grad[i];
    });
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > T(0) ? a[i] : a[i] * slope;
    return detail::make_result<T>("leaky_relu", a.shape(), std::move(out), {a.node()}, [slope](Node<T>& self) {
        auto& p = *self.parents[0];
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (p.data[i] > T(0) ? T(1) : slope);
    });
}

/// log(max(x, floor)); zero gradient where the floor is active.
template <class T>
Tensor<T> log_clamped(const Tensor<T>& a, T floor) {
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(a[i], floor));
    return detail::make_result<T>("log_clamped", a.shape(), std::move(out), {a.node()}, [floor](Node<T>& self) {
        auto& p = *self.parents[0];
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (p.data[i] > floor) g[i] += self.grad[i] / p.data[i];
    });
}

/// Softmax over axis 1 of a rank >= 2 tensor ([N,K] logits or [N,K,H,W] maps),
/// computed with max subtraction.
template <class T>
Tensor<T> softmax(const Tensor<T>& logits) {
    if (logits.rank() < 2) throw DimensionError("softmax: need rank >= 2, got " + to_string(logits.shape()));
    const std::size_t n = logits.dim(0);
    const std::size_t k = logits.dim(1);
    if (k < 2) throw DimensionError("softmax: need at least 2 classes");
    const std::size_t inner = logits.numel() / (n * k);
    for (const T& v : logits.values())
        if (std::isnan(v)) throw NumericError("softmax: NaN input");
    std::vector<T> out(logits.numel());
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t s = 0; s < inner; ++s) {
            const std::size_t base = b * k * inner + s;
            T mx = logits[base];
            for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, logits[base + c * inner]);
            T z = T(0);
            for (std::size_t c = 0; c < k; ++c) {
                const T e = std::exp(logits[base + c * inner] - mx);
                out[base + c * inner] = e;
                z += e;
            }
            for (std::size_t c = 0; c < k; ++c) out[base + c * inner] /= z;
        }
    return detail::make_result<T>("softmax", logits.shape(), std::move(out), {logits.node()},
                                  [n, k, inner](Node<T>& self) {
                                      auto& g = self.parents[0]->ensure_grad();
                                      const auto& y = self.data;
                                      for (std::size_t b = 0; b < n; ++b)
                                          for (std::size_t s = 0; s < inner; ++s) {
                                              const std::size_t base = b * k * inner + s;
                                              T dot = T(0);
                                              for (std::size_t c = 0; c < k; ++c)
                                                  dot += self.grad[base + c * inner] * y[base + c * inner];
                                              for (std::size_t c = 0; c < k; ++c) {
                                                  const std::size_t i = base + c * inner;
                                                  g[i] += y[i] * (self.grad[i] - dot);
                                              }
                                          }
                                  });
}

// ---------------------------------------------------------------- convolution

inline std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
    if (stride == 0) throw GeometryError("stride must be positive");
    const std::size_t padded = in + 2 * padding;
    if (padded < kernel)
        throw GeometryError("kernel " + std::to_string(kernel) + " larger than padded input " +
                            std::to_string(padded));
    if ((padded - kernel) % stride != 0)
        throw GeometryError("non-integer output size for input " + std::to_string(in) + ", kernel " +
                            std::to_string(kernel) + ", stride " + std::to_string(stride) + ", padding " +
                            std::to_string(padding));
    return (padded - kernel) / stride + 1;
}

namespace detail {

template <class T>
void im2col(const T* x, std::size_t c_in, std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
            std::size_t pad, std::size_t ho, std::size_t wo, T* cols) {
    const std::size_t plane = ho * wo;
    for (std::size_t c = 0; c < c_in; ++c)
        for (std::size_t ki = 0; ki < k; ++ki)
            for (std::size_t kj = 0; kj < k; ++kj) {
                T* row = cols + ((c * k + ki) * k + kj) * plane;
                const T* src = x + c * h * w;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ki) - static_cast<std::ptrdiff_t>(pad);
                    T* dst = row + oy * wo;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
                        std::fill(dst, dst + wo, T(0));
                        continue;
                    }
                    const T* line = src + static_cast<std::size_t>(iy) * w;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const auto ix =
                            static_cast<std::ptrdiff_t>(ox * stride + kj) - static_cast<std::ptrdiff_t>(pad);
                        dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? T(0)
                                                                                  : line[static_cast<std::size_t>(ix)];
                    }
                }
            }
}

template <class T>
void col2im(const T* cols, std::size_t c_in, std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
            std::size_t pad, std::size_t ho, std::size_t wo, T* x) {
    const std::size_t plane = ho * wo;
    for (std::size_t c = 0; c < c_in; ++c)
        for (std::size_t ki = 0; ki < k; ++ki)
            for (std::size_t kj = 0; kj < k; ++kj) {
                const T* row = cols + ((c * k + ki) * k + kj) * plane;
                T* dst = x + c * h * w;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ki) - static_cast<std::ptrdiff_t>(pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    T* line = dst + static_cast<std::size_t>(iy) * w;
                    const T* src = row + oy * wo;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const auto ix =
                            static_cast<std::ptrdiff_t>(ox * stride + kj) - static_cast<std::ptrdiff_t>(pad);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) line[static_cast<std::size_t>(ix)] += src[ox];
                    }
                }
            }
}

}  // namespace detail

/// 2-D cross-correlation. input [C_in,H,W] or [N,C_in,H,W]; weight
/// [C_out,C_in,k,k]; bias [C_out].
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const std::optional<std::type_identity_t<Tensor<T>>>& bias,
                 std::size_t stride = 1, std::size_t padding = 0) {
    const Shape xs = detail::as_nchw(input, "conv2d");
    if (weight.rank() != 4) throw DimensionError("conv2d: weight must be [C_out,C_in,k,k], got " + to_string(weight.shape()));
    const std::size_t n = xs[0], c_in = xs[1], h = xs[2], w = xs[3];
    const std::size_t c_out = weight.dim(0), k = weight.dim(2);
    if (weight.dim(3) != k) throw GeometryError("conv2d: kernel must be square, got " + to_string(weight.shape()));
    if (weight.dim(1) != c_in)
        throw DimensionError("conv2d: input has " + std::to_string(c_in) + " channels, weight expects " +
                             std::to_string(weight.dim(1)));
    if (bias && (bias->rank() != 1 || bias->dim(0) != c_out))
        throw DimensionError("conv2d: bias must be [" + std::to_string(c_out) + "], got " + to_string(bias->shape()));
    const std::size_t ho = conv_output_size(h, k, stride, padding);
    const std::size_t wo = conv_output_size(w, k, stride, padding);
    const std::size_t plane = ho * wo;
    const std::size_t patch = c_in * k * k;
    const bool record = grad_enabled() && (input.requires_grad() || weight.requires_grad() ||
                                           (bias && bias->requires_grad()));
    std::vector<T> out(n * c_out * plane);
    auto cols = std::make_shared<std::vector<detail::RowMat<T>>>();
    const auto wm = detail::load(weight.values().data(), c_out, patch);
    detail::RowMat<T> col, prod;
    for (std::size_t b = 0; b < n; ++b) {
        col.resize(static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(plane));
        detail::im2col(input.values().data() + b * c_in * h * w, c_in, h, w, k, stride, padding, ho, wo, col.data());
        prod.noalias() = wm * col;
        T* ob = out.data() + b * c_out * plane;
        detail::store(prod, ob, false);
        if (bias)
            for (std::size_t c = 0; c < c_out; ++c)
                for (std::size_t i = 0; i < plane; ++i) ob[c * plane + i] += (*bias)[c];
        if (record) cols->push_back(std::move(col));
    }

    std::vector<std::shared_ptr<Node<T>>> parents{input.node(), weight.node()};
    if (bias) parents.push_back(bias->node());
    Shape out_shape = detail::restore_rank({n, c_out, ho, wo}, input.rank());
    if (!record) cols.reset();
    return detail::make_result<T>(
        "conv2d", std::move(out_shape), std::move(out), std::move(parents),
        [=](Node<T>& self) {
            auto& px = self.parents[0];
            auto& pw = self.parents[1];
            const bool has_bias = self.parents.size() > 2;
            const bool want_w = detail::wants(pw), want_x = detail::wants(px);
            const auto wmat = detail::load(pw->data.data(), c_out, patch);
            detail::RowMat<T> dw, dcols;
            if (want_w) dw = detail::RowMat<T>::Zero(static_cast<Eigen::Index>(c_out), static_cast<Eigen::Index>(patch));
            for (std::size_t b = 0; b < n; ++b) {
                const T* gy = self.grad.data() + b * c_out * plane;
                const auto dy = detail::load(gy, c_out, plane);
                if (want_w) dw.noalias() += dy * (*cols)[b].transpose();
                if (has_bias && detail::wants(self.parents[2])) {
                    auto& gb = self.parents[2]->ensure_grad();
                    for (std::size_t c = 0; c < c_out; ++c) {
                        T acc = T(0);
                        for (std::size_t i = 0; i < plane; ++i) acc += gy[c * plane + i];
                        gb[c] += acc;
                    }
                }
                if (want_x) {
                    dcols.noalias() = wmat.transpose() * dy;
                    detail::col2im(dcols.data(), c_in, h, w, k, stride, padding, ho, wo,
                                   px->ensure_grad().data() + b * c_in * h * w);
                }
            }
            if (want_w) detail::store(dw, pw->ensure_grad().data(), true);
        });
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const LayerParams<T>& params, std::size_t stride = 1,
                 std::size_t padding = 0) {
    return conv2d(input, params.weight, params.bias, stride, padding);
}

// -------------------------------------------------------------------- pooling

/// Window maximum; backward routes to the first row-major argmax.
template <class T>
Tensor<T> maxpool2d(const Tensor<T>& input, std::size_t window, std::size_t stride) {
    const Shape xs = detail::as_nchw(input, "maxpool2d");
    if (window == 0) throw GeometryError("maxpool2d: window must be positive");
    const std::size_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
    const std::size_t ho = conv_output_size(h, window, stride, 0);
    const std::size_t wo = conv_output_size(w, window, stride, 0);
    std::vector<T> out(n * c * ho * wo);
    std::vector<std::uint32_t> arg(out.size());
    const auto& x = input.values();
    for (std::size_t p = 0; p < n * c; ++p) {
        const std::size_t in_base = p * h * w;
        for (std::size_t oy = 0; oy < ho; ++oy)
            for (std::size_t ox = 0; ox < wo; ++ox) {
                std::size_t best = in_base + (oy * stride) * w + ox * stride;
                for (std::size_t i = 0; i < window; ++i)
                    for (std::size_t j = 0; j < window; ++j) {
                        const std::size_t idx = in_base + (oy * stride + i) * w + ox * stride + j;
                        if (x[idx] > x[best]) best = idx;
                    }
                const std::size_t o = (p * ho + oy) * wo + ox;
                out[o] = x[best];
                arg[o] = static_cast<std::uint32_t>(best);
            }
    }
    return detail::make_result<T>("maxpool2d", detail::restore_rank({n, c, ho, wo}, input.rank()), std::move(out),
                                  {input.node()}, [arg = std::move(arg)](Node<T>& self) {
                                      auto& g = self.parents[0]->ensure_grad();
                                      for (std::size_t o = 0; o < arg.size(); ++o) g[arg[o]] += self.grad[o];
                                  });
}

/// Nearest-neighbour 2x upsampling; backward sums each 2x2 block.
template <class T>
Tensor<T> upsample2x(const Tensor<T>& input) {
    const Shape xs = detail::as_nchw(input, "upsample2x");
    const std::size_t planes = xs[0] * xs[1], h = xs[2], w = xs[3];
    std::vector<T> out(planes * 4 * h * w);
    const auto& x = input.values();
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t y = 0; y < 2 * h; ++y)
            for (std::size_t xo = 0; xo < 2 * w; ++xo)
                out[(p * 2 * h + y) * 2 * w + xo] = x[(p * h + y / 2) * w + xo / 2];
    return detail::make_result<T>("upsample2x",
                                  detail::restore_rank({xs[0], xs[1], 2 * h, 2 * w}, input.rank()), std::move(out),
                                  {input.node()}, [planes, h, w](Node<T>& self) {
                                      auto& g = self.parents[0]->ensure_grad();
                                      for (std::size_t p = 0; p < planes; ++p)
                                          for (std::size_t y = 0; y < 2 * h; ++y)
                                              for (std::size_t xo = 0; xo < 2 * w; ++xo)
                                                  g[(p * h + y / 2) * w + xo / 2] +=
                                                      self.grad[(p * 2 * h + y) * 2 * w + xo];
                                  });
}

// -------------------------------------------------------------- normalization

/// Per-sample, per-channel normalization over H×W followed by a learned
/// per-channel affine (gamma, beta of shape [C]).
template <class T>
Tensor<T> instance_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
    const Shape xs = detail::as_nchw(input, "instance_norm");
    const std::size_t n = xs[0], c = xs[1], hw = xs[2] * xs[3];
    if (gamma.numel() != c || beta.numel() != c)
        throw DimensionError("instance_norm: affine parameters must have " + std::to_string(c) + " entries");
    std::vector<T> out(input.numel());
    std::vector<T> xhat(input.numel());
    std::vector<T> inv_std(n * c);
    const auto& x = input.values();
    for (std::size_t p = 0; p < n * c; ++p) {
        const std::size_t ch = p % c;
        const T* src = x.data() + p * hw;
        T m = T(0);
        for (std::size_t i = 0; i < hw; ++i) m += src[i];
        m /= static_cast<T>(hw);
        T v = T(0);
        for (std::size_t i = 0; i < hw; ++i) v += (src[i] - m) * (src[i] - m);
        v /= static_cast<T>(hw);
        const T is = T(1) / std::sqrt(v + eps);
        inv_std[p] = is;
        for (std::size_t i = 0; i < hw; ++i) {
            const T xh = (src[i] - m) * is;
            xhat[p * hw + i] = xh;
            out[p * hw + i] = xh * gamma[ch] + beta[ch];
        }
    }
    return detail::make_result<T>(
        "instance_norm", input.shape(), std::move(out), {input.node(), gamma.node(), beta.node()},
        [n, c, hw, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
            auto& px = self.parents[0];
            auto& pg = self.parents[1];
            auto& pb = self.parents[2];
            for (std::size_t p = 0; p < n * c; ++p) {
                const std::size_t ch = p % c;
                const T* dy = self.grad.data() + p * hw;
                const T* xh = xhat.data() + p * hw;
                T sum_dy = T(0), sum_dy_xh = T(0);
                for (std::size_t i = 0; i < hw; ++i) {
                    sum_dy += dy[i];
                    sum_dy_xh += dy[i] * xh[i];
                }
                if (detail::wants(pg)) pg->ensure_grad()[ch] += sum_dy_xh;
                if (detail::wants(pb)) pb->ensure_grad()[ch] += sum_dy;
                if (detail::wants(px)) {
                    T* gx = px->ensure_grad().data() + p * hw;
                    const T gm = pg->data[ch];
                    const T inv_hw = T(1) / static_cast<T>(hw);
                    const T mean_dy = sum_dy * gm * inv_hw;
                    const T mean_dy_xh = sum_dy_xh * gm * inv_hw;
                    for (std::size_t i = 0; i < hw; ++i)
                        gx[i] += inv_std[p] * (dy[i] * gm - mean_dy - xh[i] * mean_dy_xh);
                }
            }
        });
}

// --------------------------------------------------------------------- dense

/// x [N,F] · weightᵀ [F,O] + bias [O] -> [N,O].
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const std::optional<std::type_identity_t<Tensor<T>>>& bias) {
    if (x.rank() != 2 || weight.rank() != 2 || weight.dim(1) != x.dim(1))
        throw DimensionError("linear: incompatible shapes " + to_string(x.shape()) + " and " +
                             to_string(weight.shape()));
    const std::size_t n = x.dim(0), f = x.dim(1), o = weight.dim(0);
    if (bias && bias->numel() != o) throw DimensionError("linear: bias must have " + std::to_string(o) + " entries");
    const detail::RowMat<T> om = detail::load(x.values().data(), n, f) * detail::load(weight.values().data(), o, f).transpose();
    std::vector<T> out(om.data(), om.data() + n * o);
    if (bias)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < o; ++j) out[i * o + j] += (*bias)[j];
    std::vector<std::shared_ptr<Node<T>>> parents{x.node(), weight.node()};
    if (bias) parents.push_back(bias->node());
    return detail::make_result<T>("linear", Shape{n, o}, std::move(out), std::move(parents), [n, f, o](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        const auto dy = detail::load(self.grad.data(), n, o);
        if (detail::wants(px)) {
            const detail::RowMat<T> dx = dy * detail::load(pw->data.data(), o, f);
            detail::store(dx, px->ensure_grad().data(), true);
        }
        if (detail::wants(pw)) {
            const detail::RowMat<T> dw = dy.transpose() * detail::load(px->data.data(), n, f);
            detail::store(dw, pw->ensure_grad().data(), true);
        }
        if (self.parents.size() > 2 && detail::wants(self.parents[2])) {
            auto& gb = self.parents[2]->ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < o; ++j) gb[j] += self.grad[i * o + j];
        }
    });
}

/// Channel concatenation of two [N,C,H,W] (or [C,H,W]) tensors.
template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    const Shape as = detail::as_nchw(a, "concat_channels");
    const Shape bs = detail::as_nchw(b, "concat_channels");
    if (a.rank() != b.rank() || as[0] != bs[0] || as[2] != bs[2] || as[3] != bs[3])
        throw DimensionError("concat_channels: incompatible shapes " + to_string(a.shape()) + " and " +
                             to_string(b.shape()));
    const std::size_t n = as[0], hw = as[2] * as[3];
    const std::size_t ca = as[1] * hw, cb = bs[1] * hw;
    std::vector<T> out(n * (ca + cb));
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(a.values().data() + i * ca, ca, out.data() + i * (ca + cb));
        std::copy_n(b.values().data() + i * cb, cb, out.data() + i * (ca + cb) + ca);
    }
    Shape shape = detail::restore_rank({n, as[1] + bs[1], as[2], as[3]}, a.rank());
    return detail::make_result<T>("concat_channels", std::move(shape), std::move(out), {a.node(), b.node()},
                                  [n, ca, cb](Node<T>& self) {
                                      if (detail::wants(self.parents[0])) {
                                          auto& g = self.parents[0]->ensure_grad();
                                          for (std::size_t i = 0; i < n; ++i)
                                              for (std::size_t j = 0; j < ca; ++j)
                                                  g[i * ca + j] += self.grad[i * (ca + cb) + j];
                                      }
                                      if (detail::wants(self.parents[1])) {
                                          auto& g = self.parents[1]->ensure_grad();
                                          for (std::size_t i = 0; i < n; ++i)
                                              for (std::size_t j = 0; j < cb; ++j)
                                                  g[i * cb + j] += self.grad[i * (ca + cb) + ca + j];
                                      }
                                  });
}

}  // namespace coips::tensor
