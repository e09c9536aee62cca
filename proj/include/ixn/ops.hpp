#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "ixn/autodiff.hpp"
#include "ixn/tensor.hpp"

// Differentiable NCHW primitives. Convolutions are im2col + Eigen GEMM; the
// rest are direct loops. All ops validate shapes up front and throw
// DimensionError naming the offending axis.
namespace ixn {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline int conv_out_extent(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// col layout: rows = c*K*K + ky*K + kx (c within the whole input channel
// range), cols = (n*Ho + oy)*Wo + ox. Batched over all samples so the GEMMs
// stay large even for small spatial extents.
template <typename T>
void im2col(const Tensor<T>& x, int kh, int kw, int stride, int pad,
            std::vector<T>& col, int ho, int wo) {
    const Shape s = x.shape();
    const std::int64_t ncols = static_cast<std::int64_t>(s.n) * ho * wo;
    col.assign(static_cast<std::size_t>(s.c) * kh * kw * ncols, T(0));
    for (int c = 0; c < s.c; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                T* row = col.data() +
                         (static_cast<std::int64_t>(c) * kh * kw + ky * kw + kx) * ncols;
                for (int n = 0; n < s.n; ++n) {
                    const T* src = x.data() + x.index(n, c, 0, 0);
                    T* dst = row + static_cast<std::int64_t>(n) * ho * wo;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= s.h) {
                            dst += wo;
                            continue;
                        }
                        const T* srow = src + static_cast<std::int64_t>(iy) * s.w;
                        for (int ox = 0; ox < wo; ++ox, ++dst) {
                            const int ix = ox * stride - pad + kx;
                            if (ix >= 0 && ix < s.w) *dst = srow[ix];
                        }
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-add the col matrix back onto the input grid.
template <typename T>
void col2im(const std::vector<T>& col, int kh, int kw, int stride, int pad,
            Tensor<T>& x, int ho, int wo) {
    const Shape s = x.shape();
    const std::int64_t ncols = static_cast<std::int64_t>(s.n) * ho * wo;
    for (int c = 0; c < s.c; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const T* row = col.data() +
                               (static_cast<std::int64_t>(c) * kh * kw + ky * kw + kx) * ncols;
                for (int n = 0; n < s.n; ++n) {
                    T* dst = x.data() + x.index(n, c, 0, 0);
                    const T* srow = row + static_cast<std::int64_t>(n) * ho * wo;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= s.h) {
                            srow += wo;
                            continue;
                        }
                        T* drow = dst + static_cast<std::int64_t>(iy) * s.w;
                        for (int ox = 0; ox < wo; ++ox, ++srow) {
                            const int ix = ox * stride - pad + kx;
                            if (ix >= 0 && ix < s.w) drow[ix] += *srow;
                        }
                    }
                }
            }
        }
    }
}

// out(n,c,oy,ox) <-> mat(c, (n,oy,ox)) permutations used around the GEMM.
template <typename T>
void mat_to_nchw(const std::vector<T>& mat, Tensor<T>& out) {
    const Shape s = out.shape();
    const std::int64_t hw = static_cast<std::int64_t>(s.h) * s.w;
    const std::int64_t ncols = static_cast<std::int64_t>(s.n) * hw;
    for (int c = 0; c < s.c; ++c)
        for (int n = 0; n < s.n; ++n)
            std::copy_n(mat.data() + c * ncols + n * hw, hw,
                        out.data() + out.index(n, c, 0, 0));
}

template <typename T>
std::vector<T> nchw_to_mat(const Tensor<T>& x) {
    const Shape s = x.shape();
    const std::int64_t hw = static_cast<std::int64_t>(s.h) * s.w;
    const std::int64_t ncols = static_cast<std::int64_t>(s.n) * hw;
    std::vector<T> mat(static_cast<std::size_t>(s.c) * ncols);
    for (int c = 0; c < s.c; ++c)
        for (int n = 0; n < s.n; ++n)
            std::copy_n(x.data() + x.index(n, c, 0, 0), hw,
                        mat.data() + c * ncols + n * hw);
    return mat;
}

inline void check_conv_shapes(const Shape& xs, const Shape& ws, int stride, int pad,
                              int groups) {
    if (groups < 1) throw DimensionError("conv2d: groups must be >= 1");
    if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
    if (xs.c % groups != 0)
        throw DimensionError("conv2d: input channel axis (" + std::to_string(xs.c) +
                             ") not divisible by groups " + std::to_string(groups));
    if (ws.n % groups != 0)
        throw DimensionError("conv2d: output channel axis (" + std::to_string(ws.n) +
                             ") not divisible by groups " + std::to_string(groups));
    if (ws.c != xs.c / groups)
        throw DimensionError("conv2d: weight input-channel axis is " +
                             std::to_string(ws.c) + ", expected " +
                             std::to_string(xs.c / groups));
    if (xs.h + 2 * pad < ws.h)
        throw DimensionError("conv2d: height axis too small (" + std::to_string(xs.h) +
                             " + 2*" + std::to_string(pad) + " < kernel " +
                             std::to_string(ws.h) + ")");
    if (xs.w + 2 * pad < ws.w)
        throw DimensionError("conv2d: width axis too small (" + std::to_string(xs.w) +
                             " + 2*" + std::to_string(pad) + " < kernel " +
                             std::to_string(ws.w) + ")");
}

// weight (Cout, Cin/groups, Kh, Kw) as matrix rows = Cout.
template <typename T>
Tensor<T> conv_forward_raw(const Tensor<T>& x, const Tensor<T>& w, int stride,
                           int pad, int groups) {
    const Shape xs = x.shape(), ws = w.shape();
    check_conv_shapes(xs, ws, stride, pad, groups);
    const int ho = conv_out_extent(xs.h, ws.h, stride, pad);
    const int wo = conv_out_extent(xs.w, ws.w, stride, pad);
    const std::int64_t ncols = static_cast<std::int64_t>(xs.n) * ho * wo;
    std::vector<T> col;
    im2col(x, ws.h, ws.w, stride, pad, col, ho, wo);

    const int cin_g = xs.c / groups, cout_g = ws.n / groups;
    const std::int64_t krows = static_cast<std::int64_t>(cin_g) * ws.h * ws.w;
    std::vector<T> outmat(static_cast<std::size_t>(ws.n) * ncols);
    Eigen::Map<const RowMat<T>> W(w.data(), ws.n, krows);
    for (int g = 0; g < groups; ++g) {
        Eigen::Map<const RowMat<T>> C(col.data() + g * krows * ncols, krows, ncols);
        Eigen::Map<RowMat<T>> O(outmat.data() + static_cast<std::int64_t>(g) * cout_g * ncols,
                                cout_g, ncols);
        O.noalias() = W.middleRows(g * cout_g, cout_g) * C;
    }
    Tensor<T> out(Shape{xs.n, ws.n, ho, wo});
    mat_to_nchw(outmat, out);
    return out;
}

template <typename T>
Tensor<T> conv_dx_raw(const Tensor<T>& dout, const Tensor<T>& w, int stride,
                      int pad, int groups, const Shape& in_shape) {
    const Shape ws = w.shape(), os = dout.shape();
    const int ho = os.h, wo = os.w;
    const std::int64_t ncols = static_cast<std::int64_t>(os.n) * ho * wo;
    const int cin_g = in_shape.c / groups, cout_g = ws.n / groups;
    const std::int64_t krows = static_cast<std::int64_t>(cin_g) * ws.h * ws.w;

    std::vector<T> doutmat = nchw_to_mat(dout);
    std::vector<T> dcol(static_cast<std::size_t>(in_shape.c) * ws.h * ws.w * ncols);
    Eigen::Map<const RowMat<T>> W(w.data(), ws.n, krows);
    for (int g = 0; g < groups; ++g) {
        Eigen::Map<const RowMat<T>> DO(doutmat.data() + static_cast<std::int64_t>(g) * cout_g * ncols,
                                       cout_g, ncols);
        Eigen::Map<RowMat<T>> DC(dcol.data() + g * krows * ncols, krows, ncols);
        DC.noalias() = W.middleRows(g * cout_g, cout_g).transpose() * DO;
    }
    Tensor<T> dx(in_shape);
    col2im(dcol, ws.h, ws.w, stride, pad, dx, ho, wo);
    return dx;
}

template <typename T>
Tensor<T> conv_dw_raw(const Tensor<T>& x, const Tensor<T>& dout, int stride,
                      int pad, int groups, const Shape& w_shape) {
    const Shape xs = x.shape(), os = dout.shape();
    const int ho = os.h, wo = os.w;
    const std::int64_t ncols = static_cast<std::int64_t>(xs.n) * ho * wo;
    const int cin_g = w_shape.c, cout_g = w_shape.n / groups;
    const std::int64_t krows = static_cast<std::int64_t>(cin_g) * w_shape.h * w_shape.w;

    std::vector<T> col;
    im2col(x, w_shape.h, w_shape.w, stride, pad, col, ho, wo);
    std::vector<T> doutmat = nchw_to_mat(dout);
    Tensor<T> dw(w_shape);
    for (int g = 0; g < groups; ++g) {
        Eigen::Map<const RowMat<T>> DO(doutmat.data() + static_cast<std::int64_t>(g) * cout_g * ncols,
                                       cout_g, ncols);
        Eigen::Map<const RowMat<T>> C(col.data() + g * krows * ncols, krows, ncols);
        Eigen::Map<RowMat<T>> DW(dw.data() + static_cast<std::int64_t>(g) * cout_g * krows,
                                 cout_g, krows);
        DW.noalias() = DO * C.transpose();
    }
    return dw;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and broadcast arithmetic
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    if (a.shape() != b.shape())
        throw DimensionError("add: shape mismatch " + a.shape().str() + " vs " +
                             b.shape().str());
    Tensor<T> out(a.shape());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = a.value()[i] + b.value()[i];
    auto an = a.node(), bn = b.node();
    return make_op<T>(std::move(out), {an, bn}, [an, bn](Node<T>& self) {
        const std::int64_t n = self.value.numel();
        if (an->requires_grad) {
            auto& g = an->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i) g[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            auto& g = bn->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i) g[i] += self.grad[i];
        }
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    if (a.shape() != b.shape())
        throw DimensionError("mul: shape mismatch " + a.shape().str() + " vs " +
                             b.shape().str());
    Tensor<T> out(a.shape());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = a.value()[i] * b.value()[i];
    auto an = a.node(), bn = b.node();
    return make_op<T>(std::move(out), {an, bn}, [an, bn](Node<T>& self) {
        const std::int64_t n = self.value.numel();
        if (an->requires_grad) {
            auto& g = an->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i) g[i] += self.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            auto& g = bn->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i) g[i] += self.grad[i] * an->value[i];
        }
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
    Tensor<T> out(a.shape());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = a.value()[i] * s;
    auto an = a.node();
    return make_op<T>(std::move(out), {an}, [an, s](Node<T>& self) {
        auto& g = an->ensure_grad();
        const std::int64_t n = self.value.numel();
        for (std::int64_t i = 0; i < n; ++i) g[i] += self.grad[i] * s;
    });
}

/// Per-channel bias, b shaped (1, C, 1, 1).
template <typename T>
Var<T> add_bias(const Var<T>& x, const Var<T>& b) {
    const Shape xs = x.shape(), bs = b.shape();
    if (bs.n != 1 || bs.h != 1 || bs.w != 1 || bs.c != xs.c)
        throw DimensionError("add_bias: bias shape " + bs.str() +
                             " incompatible with channel axis of " + xs.str());
    Tensor<T> out(xs);
    const std::int64_t hw = static_cast<std::int64_t>(xs.h) * xs.w;
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c) {
            const T bv = b.value()[c];
            const std::int64_t base = x.value().index(n, c, 0, 0);
            for (std::int64_t i = 0; i < hw; ++i) out[base + i] = x.value()[base + i] + bv;
        }
    auto xn = x.node(), bn = b.node();
    return make_op<T>(std::move(out), {xn, bn}, [xn, bn, xs, hw](Node<T>& self) {
        if (xn->requires_grad) {
            auto& g = xn->ensure_grad();
            const std::int64_t n = self.value.numel();
            for (std::int64_t i = 0; i < n; ++i) g[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            auto& g = bn->ensure_grad();
            for (int n = 0; n < xs.n; ++n)
                for (int c = 0; c < xs.c; ++c) {
                    const std::int64_t base = self.grad.index(n, c, 0, 0);
                    T acc = T(0);
                    for (std::int64_t i = 0; i < hw; ++i) acc += self.grad[base + i];
                    g[c] += acc;
                }
        }
    });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
    Tensor<T> out(x.shape());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = x.value()[i] > T(0) ? x.value()[i] : T(0);
    auto xn = x.node();
    return make_op<T>(std::move(out), {xn}, [xn](Node<T>& self) {
        auto& g = xn->ensure_grad();
        const std::int64_t n = self.value.numel();
        for (std::int64_t i = 0; i < n; ++i)
            if (xn->value[i] > T(0)) g[i] += self.grad[i];
    });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
    Tensor<T> out(x.shape());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = T(1) / (T(1) + std::exp(-x.value()[i]));
    auto xn = x.node();
    return make_op<T>(std::move(out), {xn}, [xn](Node<T>& self) {
        auto& g = xn->ensure_grad();
        const std::int64_t n = self.value.numel();
        for (std::int64_t i = 0; i < n; ++i) {
            const T y = self.value[i];
            g[i] += self.grad[i] * y * (T(1) - y);
        }
    });
}

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

/// Cross-correlation, weight (C_out, C_in/groups, K, K).
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, int stride, int padding,
              int groups = 1) {
    Tensor<T> out = detail::conv_forward_raw(x.value(), w.value(), stride, padding, groups);
    auto xn = x.node(), wn = w.node();
    const Shape xs = x.shape(), ws = w.shape();
    return make_op<T>(std::move(out), {xn, wn},
                      [xn, wn, stride, padding, groups, xs, ws](Node<T>& self) {
                          if (xn->requires_grad) {
                              Tensor<T> dx = detail::conv_dx_raw(self.grad, wn->value, stride,
                                                                 padding, groups, xs);
                              auto& g = xn->ensure_grad();
                              for (std::int64_t i = 0; i < dx.numel(); ++i) g[i] += dx[i];
                          }
                          if (wn->requires_grad) {
                              Tensor<T> dw = detail::conv_dw_raw(xn->value, self.grad, stride,
                                                                 padding, groups, ws);
                              auto& g = wn->ensure_grad();
                              for (std::int64_t i = 0; i < dw.numel(); ++i) g[i] += dw[i];
                          }
                      });
}

/// Transposed convolution (fractionally strided), weight (C_in, C_out, K, K),
/// no padding. Output extent = (in - 1) * stride + K.
template <typename T>
Var<T> transposed_conv2d(const Var<T>& x, const Var<T>& w, int stride) {
    const Shape xs = x.shape(), ws = w.shape();
    if (ws.n != xs.c)
        throw DimensionError("transposed_conv2d: weight input-channel axis is " +
                             std::to_string(ws.n) + ", expected " + std::to_string(xs.c));
    const Shape out_shape{xs.n, ws.c, (xs.h - 1) * stride + ws.h,
                          (xs.w - 1) * stride + ws.w};
    // Forward is the input-gradient routine of the matching forward conv,
    // with the weight read as (C_conv_out = C_in, C_conv_in = C_out, K, K).
    Tensor<T> out = detail::conv_dx_raw(x.value(), w.value(), stride, 0, 1, out_shape);
    auto xn = x.node(), wn = w.node();
    return make_op<T>(std::move(out), {xn, wn}, [xn, wn, stride, ws](Node<T>& self) {
        if (xn->requires_grad) {
            Tensor<T> dx = detail::conv_forward_raw(self.grad, wn->value, stride, 0, 1);
            auto& g = xn->ensure_grad();
            for (std::int64_t i = 0; i < dx.numel(); ++i) g[i] += dx[i];
        }
        if (wn->requires_grad) {
            Tensor<T> dw = detail::conv_dw_raw(self.grad, xn->value, stride, 0, 1, ws);
            auto& g = wn->ensure_grad();
            for (std::int64_t i = 0; i < dw.numel(); ++i) g[i] += dw[i];
        }
    });
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

/// Per-channel normalization with epsilon-stabilized variance. In training
/// mode batch statistics are used (biased variance) and running stats are
/// updated in place with the given momentum; in eval mode running stats are
/// used. gamma/beta are (1, C, 1, 1).
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                  T eps = T(1e-5), T momentum = T(0.1)) {
    const Shape xs = x.shape();
    if (gamma.shape().c != xs.c || beta.shape().c != xs.c)
        throw DimensionError("batch_norm: gamma/beta channel axis must be " +
                             std::to_string(xs.c));
    const std::int64_t count = static_cast<std::int64_t>(xs.n) * xs.h * xs.w;
    if (count == 0)
        throw DimensionError("batch_norm: zero-element channel (batch axis " +
                             std::to_string(xs.n) + ", spatial " + std::to_string(xs.h) +
                             "x" + std::to_string(xs.w) + ")");

    std::vector<T> mean(xs.c), var(xs.c);
    if (training) {
        for (int c = 0; c < xs.c; ++c) {
            T m = T(0);
            for (int n = 0; n < xs.n; ++n) {
                const std::int64_t base = x.value().index(n, c, 0, 0);
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(xs.h) * xs.w; ++i)
                    m += x.value()[base + i];
            }
            m /= static_cast<T>(count);
            T v = T(0);
            for (int n = 0; n < xs.n; ++n) {
                const std::int64_t base = x.value().index(n, c, 0, 0);
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(xs.h) * xs.w; ++i) {
                    const T d = x.value()[base + i] - m;
                    v += d * d;
                }
            }
            v /= static_cast<T>(count);
            mean[c] = m;
            var[c] = v;
            const T unbiased = count > 1 ? v * static_cast<T>(count) / static_cast<T>(count - 1) : v;
            running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * m;
            running_var[c] = (T(1) - momentum) * running_var[c] + momentum * unbiased;
        }
    } else {
        for (int c = 0; c < xs.c; ++c) {
            mean[c] = running_mean[c];
            var[c] = running_var[c];
        }
    }

    Tensor<T> out(xs);
    auto xhat = std::make_shared<Tensor<T>>(xs);  // kept for backward
    std::vector<T> inv_std(xs.c);
    for (int c = 0; c < xs.c; ++c) inv_std[c] = T(1) / std::sqrt(var[c] + eps);
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c) {
            const std::int64_t base = x.value().index(n, c, 0, 0);
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(xs.h) * xs.w; ++i) {
                const T xh = (x.value()[base + i] - mean[c]) * inv_std[c];
                (*xhat)[base + i] = xh;
                out[base + i] = gamma.value()[c] * xh + beta.value()[c];
            }
        }

    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    return make_op<T>(
        std::move(out), {xn, gn, bn},
        [xn, gn, bn, xhat, inv_std, xs, count, training](Node<T>& self) {
            const std::int64_t hw = static_cast<std::int64_t>(xs.h) * xs.w;
            std::vector<T> sum_dy(xs.c, T(0)), sum_dy_xhat(xs.c, T(0));
            for (int n = 0; n < xs.n; ++n)
                for (int c = 0; c < xs.c; ++c) {
                    const std::int64_t base = self.grad.index(n, c, 0, 0);
                    for (std::int64_t i = 0; i < hw; ++i) {
                        sum_dy[c] += self.grad[base + i];
                        sum_dy_xhat[c] += self.grad[base + i] * (*xhat)[base + i];
                    }
                }
            if (gn->requires_grad) {
                auto& g = gn->ensure_grad();
                for (int c = 0; c < xs.c; ++c) g[c] += sum_dy_xhat[c];
            }
            if (bn->requires_grad) {
                auto& g = bn->ensure_grad();
                for (int c = 0; c < xs.c; ++c) g[c] += sum_dy[c];
            }
            if (xn->requires_grad) {
                auto& g = xn->ensure_grad();
                const T inv_count = T(1) / static_cast<T>(count);
                for (int n = 0; n < xs.n; ++n)
                    for (int c = 0; c < xs.c; ++c) {
                        const T gm = gn->value[c] * inv_std[c];
                        const std::int64_t base = self.grad.index(n, c, 0, 0);
                        for (std::int64_t i = 0; i < hw; ++i) {
                            if (training) {
                                g[base + i] += gm * (self.grad[base + i] -
                                                     inv_count * sum_dy[c] -
                                                     (*xhat)[base + i] * inv_count * sum_dy_xhat[c]);
                            } else {
                                g[base + i] += gm * self.grad[base + i];
                            }
                        }
                    }
            }
        });
}

/// Conv-style BN layer owning its affine parameters and running statistics.
template <typename T>
struct BatchNorm2d {
    Parameter<T> gamma, beta;
    Tensor<T> running_mean, running_var;
    T eps = T(1e-5);
    T momentum = T(0.1);

    BatchNorm2d() = default;
    BatchNorm2d(const std::string& name, int channels)
        : gamma(name + ".gamma", Tensor<T>(Shape{1, channels, 1, 1}, T(1))),
          beta(name + ".beta", Tensor<T>(Shape{1, channels, 1, 1}, T(0))),
          running_mean(Shape{1, channels, 1, 1}, T(0)),
          running_var(Shape{1, channels, 1, 1}, T(1)) {}

    Var<T> forward(const Var<T>& x, bool training) {
        return batch_norm(x, gamma.var, beta.var, running_mean, running_var,
                          training, eps, momentum);
    }
};

// ---------------------------------------------------------------------------
// Window softmax
// ---------------------------------------------------------------------------

/// Softmax over each non-overlapping k x k spatial window, per channel per
/// sample. Output sums to 1 over every window.
template <typename T>
Var<T> region_softmax(const Var<T>& x, int k) {
    const Shape xs = x.shape();
    if (k < 1) throw DimensionError("region_softmax: window must be >= 1");
    if (xs.h % k != 0)
        throw DimensionError("region_softmax: height axis " + std::to_string(xs.h) +
                             " not divisible by window " + std::to_string(k));
    if (xs.w % k != 0)
        throw DimensionError("region_softmax: width axis " + std::to_string(xs.w) +
                             " not divisible by window " + std::to_string(k));
    Tensor<T> out(xs);
    const auto& in = x.value();
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c)
            for (int by = 0; by < xs.h; by += k)
                for (int bx = 0; bx < xs.w; bx += k) {
                    T m = -std::numeric_limits<T>::infinity();
                    for (int dy = 0; dy < k; ++dy)
                        for (int dx = 0; dx < k; ++dx)
                            m = std::max(m, in.at(n, c, by + dy, bx + dx));
                    T z = T(0);
                    for (int dy = 0; dy < k; ++dy)
                        for (int dx = 0; dx < k; ++dx) {
                            const T e = std::exp(in.at(n, c, by + dy, bx + dx) - m);
                            out.at(n, c, by + dy, bx + dx) = e;
                            z += e;
                        }
                    for (int dy = 0; dy < k; ++dy)
                        for (int dx = 0; dx < k; ++dx) out.at(n, c, by + dy, bx + dx) /= z;
                }
    auto xn = x.node();
    return make_op<T>(std::move(out), {xn}, [xn, xs, k](Node<T>& self) {
        auto& g = xn->ensure_grad();
        for (int n = 0; n < xs.n; ++n)
            for (int c = 0; c < xs.c; ++c)
                for (int by = 0; by < xs.h; by += k)
                    for (int bx = 0; bx < xs.w; bx += k) {
                        T dot = T(0);
                        for (int dy = 0; dy < k; ++dy)
                            for (int dx = 0; dx < k; ++dx)
                                dot += self.grad.at(n, c, by + dy, bx + dx) *
                                       self.value.at(n, c, by + dy, bx + dx);
                        for (int dy = 0; dy < k; ++dy)
                            for (int dx = 0; dx < k; ++dx) {
                                const T y = self.value.at(n, c, by + dy, bx + dx);
                                g.at(n, c, by + dy, bx + dx) +=
                                    y * (self.grad.at(n, c, by + dy, bx + dx) - dot);
                            }
                    }
    });
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

namespace detail {
inline void check_pool(const Shape& xs, int k, int stride, const char* op) {
    if (k < 1 || stride < 1)
        throw DimensionError(std::string(op) + ": window and stride must be >= 1");
    if (xs.h < k || (xs.h - k) % stride != 0)
        throw DimensionError(std::string(op) + ": height axis " + std::to_string(xs.h) +
                             " incompatible with window " + std::to_string(k) +
                             " stride " + std::to_string(stride));
    if (xs.w < k || (xs.w - k) % stride != 0)
        throw DimensionError(std::string(op) + ": width axis " + std::to_string(xs.w) +
                             " incompatible with window " + std::to_string(k) +
                             " stride " + std::to_string(stride));
}
}  // namespace detail

template <typename T>
Var<T> avg_pool(const Var<T>& x, int k, int stride) {
    const Shape xs = x.shape();
    detail::check_pool(xs, k, stride, "avg_pool");
    const int ho = (xs.h - k) / stride + 1, wo = (xs.w - k) / stride + 1;
    Tensor<T> out(Shape{xs.n, xs.c, ho, wo});
    const T inv = T(1) / static_cast<T>(k * k);
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    T acc = T(0);
                    for (int dy = 0; dy < k; ++dy)
                        for (int dx = 0; dx < k; ++dx)
                            acc += x.value().at(n, c, oy * stride + dy, ox * stride + dx);
                    out.at(n, c, oy, ox) = acc * inv;
                }
    auto xn = x.node();
    return make_op<T>(std::move(out), {xn}, [xn, xs, k, stride, ho, wo, inv](Node<T>& self) {
        auto& g = xn->ensure_grad();
        for (int n = 0; n < xs.n; ++n)
            for (int c = 0; c < xs.c; ++c)
                for (int oy = 0; oy < ho; ++oy)
                    for (int ox = 0; ox < wo; ++ox) {
                        const T gv = self.grad.at(n, c, oy, ox) * inv;
                        for (int dy = 0; dy < k; ++dy)
                            for (int dx = 0; dx < k; ++dx)
                                g.at(n, c, oy * stride + dy, ox * stride + dx) += gv;
                    }
    });
}

/// Argmax positions as flat indices into the input, one per output element.
using ArgmaxMap = std::vector<std::int64_t>;

/// Max pooling returning the pooled tensor plus the argmax map consumed by
/// max_unpool. Ties break to the first occurrence in row-major scan order.
template <typename T>
std::pair<Var<T>, std::shared_ptr<ArgmaxMap>> max_pool_with_argmax(const Var<T>& x,
                                                                   int k, int stride) {
    const Shape xs = x.shape();
    detail::check_pool(xs, k, stride, "max_pool");
    const int ho = (xs.h - k) / stride + 1, wo = (xs.w - k) / stride + 1;
    Tensor<T> out(Shape{xs.n, xs.c, ho, wo});
    auto arg = std::make_shared<ArgmaxMap>(out.numel());
    std::int64_t o = 0;
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox, ++o) {
                    T best = -std::numeric_limits<T>::infinity();
                    std::int64_t bi = -1;
                    for (int dy = 0; dy < k; ++dy)
                        for (int dx = 0; dx < k; ++dx) {
                            const std::int64_t idx =
                                x.value().index(n, c, oy * stride + dy, ox * stride + dx);
                            if (x.value()[idx] > best) {
                                best = x.value()[idx];
                                bi = idx;
                            }
                        }
                    out[o] = best;
                    (*arg)[static_cast<std::size_t>(o)] = bi;
                }
    auto xn = x.node();
    Var<T> v = make_op<T>(std::move(out), {xn}, [xn, arg](Node<T>& self) {
        auto& g = xn->ensure_grad();
        for (std::int64_t i = 0; i < self.value.numel(); ++i)
            g[(*arg)[static_cast<std::size_t>(i)]] += self.grad[i];
    });
    return {v, arg};
}

/// Scatter-unpool: places each value of x at its recorded argmax position in
/// a zero tensor of the original shape.
template <typename T>
Var<T> max_unpool(const Var<T>& x, const std::shared_ptr<ArgmaxMap>& argmax,
                  Shape out_shape) {
    if (static_cast<std::int64_t>(argmax->size()) != x.value().numel())
        throw DimensionError("max_unpool: argmax map has " +
                             std::to_string(argmax->size()) + " entries, input has " +
                             std::to_string(x.value().numel()));
    Tensor<T> out(out_shape);
    for (std::int64_t i = 0; i < x.value().numel(); ++i)
        out[(*argmax)[static_cast<std::size_t>(i)]] = x.value()[i];
    auto xn = x.node();
    return make_op<T>(std::move(out), {xn}, [xn, argmax](Node<T>& self) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < argmax->size(); ++i)
            g[static_cast<std::int64_t>(i)] += self.grad[(*argmax)[i]];
    });
}

// ---------------------------------------------------------------------------
// Upsampling
// ---------------------------------------------------------------------------

template <typename T>
Var<T> nearest_upsample(const Var<T>& x, int factor) {
    if (factor < 1) throw DimensionError("nearest_upsample: factor must be >= 1");
    const Shape xs = x.shape();
    Tensor<T> out(Shape{xs.n, xs.c, xs.h * factor, xs.w * factor});
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c)
            for (int y = 0; y < xs.h * factor; ++y)
                for (int xq = 0; xq < xs.w * factor; ++xq)
                    out.at(n, c, y, xq) = x.value().at(n, c, y / factor, xq / factor);
    auto xn = x.node();
    return make_op<T>(std::move(out), {xn}, [xn, xs, factor](Node<T>& self) {
        auto& g = xn->ensure_grad();
        for (int n = 0; n < xs.n; ++n)
            for (int c = 0; c < xs.c; ++c)
                for (int y = 0; y < xs.h * factor; ++y)
                    for (int xq = 0; xq < xs.w * factor; ++xq)
                        g.at(n, c, y / factor, xq / factor) += self.grad.at(n, c, y, xq);
    });
}

/// Bilinear upsampling, align-corners=false convention: source coordinate of
/// output pixel p is (p + 0.5) / factor - 0.5, clamped to the input grid.
template <typename T>
Var<T> bilinear_upsample(const Var<T>& x, int factor) {
    if (factor < 1) throw DimensionError("bilinear_upsample: factor must be >= 1");
    const Shape xs = x.shape();
    const int ho = xs.h * factor, wo = xs.w * factor;

    struct Tap {
        int lo, hi;
        T w_hi;
    };
    auto taps = [&](int out_extent, int in_extent) {
        std::vector<Tap> t(static_cast<std::size_t>(out_extent));
        for (int p = 0; p < out_extent; ++p) {
            T src = (static_cast<T>(p) + T(0.5)) / static_cast<T>(factor) - T(0.5);
            src = std::clamp(src, T(0), static_cast<T>(in_extent - 1));
            const int lo = static_cast<int>(std::floor(src));
            const int hi = std::min(lo + 1, in_extent - 1);
            t[static_cast<std::size_t>(p)] = {lo, hi, src - static_cast<T>(lo)};
        }
        return t;
    };
    const auto ty = taps(ho, xs.h), tx = taps(wo, xs.w);

    Tensor<T> out(Shape{xs.n, xs.c, ho, wo});
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c)
            for (int y = 0; y < ho; ++y) {
                const auto& ay = ty[static_cast<std::size_t>(y)];
                for (int xq = 0; xq < wo; ++xq) {
                    const auto& ax = tx[static_cast<std::size_t>(xq)];
                    const T v00 = x.value().at(n, c, ay.lo, ax.lo);
                    const T v01 = x.value().at(n, c, ay.lo, ax.hi);
                    const T v10 = x.value().at(n, c, ay.hi, ax.lo);
                    const T v11 = x.value().at(n, c, ay.hi, ax.hi);
                    out.at(n, c, y, xq) = (T(1) - ay.w_hi) * ((T(1) - ax.w_hi) * v00 + ax.w_hi * v01) +
                                          ay.w_hi * ((T(1) - ax.w_hi) * v10 + ax.w_hi * v11);
                }
            }
    auto xn = x.node();
    return make_op<T>(std::move(out), {xn}, [xn, xs, ho, wo, ty, tx](Node<T>& self) {
        auto& g = xn->ensure_grad();
        for (int n = 0; n < xs.n; ++n)
            for (int c = 0; c < xs.c; ++c)
                for (int y = 0; y < ho; ++y) {
                    const auto& ay = ty[static_cast<std::size_t>(y)];
                    for (int xq = 0; xq < wo; ++xq) {
                        const auto& ax = tx[static_cast<std::size_t>(xq)];
                        const T gv = self.grad.at(n, c, y, xq);
                        g.at(n, c, ay.lo, ax.lo) += gv * (T(1) - ay.w_hi) * (T(1) - ax.w_hi);
                        g.at(n, c, ay.lo, ax.hi) += gv * (T(1) - ay.w_hi) * ax.w_hi;
                        g.at(n, c, ay.hi, ax.lo) += gv * ay.w_hi * (T(1) - ax.w_hi);
                        g.at(n, c, ay.hi, ax.hi) += gv * ay.w_hi * ax.w_hi;
                    }
                }
    });
}

// ---------------------------------------------------------------------------
// Channel/space shuffles
// ---------------------------------------------------------------------------

/// (N, C*r^2, H, W) -> (N, C, H*r, W*r); input channel c*r^2 + dy*r + dx maps
/// to spatial offset (dy, dx) of output channel c. Row-major shuffle shared
/// by the whole library.
template <typename T>
Var<T> depth_to_space(const Var<T>& x, int r) {
    const Shape xs = x.shape();
    if (r < 1) throw DimensionError("depth_to_space: factor must be >= 1");
    if (xs.c % (r * r) != 0)
        throw DimensionError("depth_to_space: channel axis " + std::to_string(xs.c) +
                             " not divisible by r^2 = " + std::to_string(r * r));
    const int co = xs.c / (r * r);
    Tensor<T> out(Shape{xs.n, co, xs.h * r, xs.w * r});
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < co; ++c)
            for (int dy = 0; dy < r; ++dy)
                for (int dx = 0; dx < r; ++dx) {
                    const int ci = c * r * r + dy * r + dx;
                    for (int y = 0; y < xs.h; ++y)
                        for (int xq = 0; xq < xs.w; ++xq)
                            out.at(n, c, y * r + dy, xq * r + dx) = x.value().at(n, ci, y, xq);
                }
    auto xn = x.node();
    return make_op<T>(std::move(out), {xn}, [xn, xs, r, co](Node<T>& self) {
        auto& g = xn->ensure_grad();
        for (int n = 0; n < xs.n; ++n)
            for (int c = 0; c < co; ++c)
                for (int dy = 0; dy < r; ++dy)
                    for (int dx = 0; dx < r; ++dx) {
                        const int ci = c * r * r + dy * r + dx;
                        for (int y = 0; y < xs.h; ++y)
                            for (int xq = 0; xq < xs.w; ++xq)
                                g.at(n, ci, y, xq) += self.grad.at(n, c, y * r + dy, xq * r + dx);
                    }
    });
}

/// Inverse of depth_to_space.
template <typename T>
Var<T> space_to_depth(const Var<T>& x, int r) {
    const Shape xs = x.shape();
    if (r < 1) throw DimensionError("space_to_depth: factor must be >= 1");
    if (xs.h % r != 0)
        throw DimensionError("space_to_depth: height axis " + std::to_string(xs.h) +
                             " not divisible by " + std::to_string(r));
    if (xs.w % r != 0)
        throw DimensionError("space_to_depth: width axis " + std::to_string(xs.w) +
                             " not divisible by " + std::to_string(r));
    Tensor<T> out(Shape{xs.n, xs.c * r * r, xs.h / r, xs.w / r});
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c)
            for (int dy = 0; dy < r; ++dy)
                for (int dx = 0; dx < r; ++dx) {
                    const int co = c * r * r + dy * r + dx;
                    for (int y = 0; y < xs.h / r; ++y)
                        for (int xq = 0; xq < xs.w / r; ++xq)
                            out.at(n, co, y, xq) = x.value().at(n, c, y * r + dy, xq * r + dx);
                }
    auto xn = x.node();
    return make_op<T>(std::move(out), {xn}, [xn, xs, r](Node<T>& self) {
        auto& g = xn->ensure_grad();
        for (int n = 0; n < xs.n; ++n)
            for (int c = 0; c < xs.c; ++c)
                for (int dy = 0; dy < r; ++dy)
                    for (int dx = 0; dx < r; ++dx) {
                        const int co = c * r * r + dy * r + dx;
                        for (int y = 0; y < xs.h / r; ++y)
                            for (int xq = 0; xq < xs.w / r; ++xq)
                                g.at(n, c, y * r + dy, xq * r + dx) += self.grad.at(n, co, y, xq);
                    }
    });
}

/// Reassembles k^2 per-offset maps into full resolution: column j fills
/// spatial offset (j / k, j % k) of every k x k window.
template <typename T>
Var<T> interleave_windows(const std::vector<Var<T>>& cols, int k) {
    if (static_cast<int>(cols.size()) != k * k)
        throw DimensionError("interleave_windows: expected " + std::to_string(k * k) +
                             " columns, got " + std::to_string(cols.size()));
    const Shape cs = cols[0].shape();
    for (const auto& c : cols)
        if (c.shape() != cs)
            throw DimensionError("interleave_windows: column shape mismatch " +
                                 c.shape().str() + " vs " + cs.str());
    Tensor<T> out(Shape{cs.n, cs.c, cs.h * k, cs.w * k});
    for (int j = 0; j < k * k; ++j) {
        const int dy = j / k, dx = j % k;
        const auto& cv = cols[static_cast<std::size_t>(j)].value();
        for (int n = 0; n < cs.n; ++n)
            for (int c = 0; c < cs.c; ++c)
                for (int y = 0; y < cs.h; ++y)
                    for (int xq = 0; xq < cs.w; ++xq)
                        out.at(n, c, y * k + dy, xq * k + dx) = cv.at(n, c, y, xq);
    }
    std::vector<std::shared_ptr<Node<T>>> parents;
    parents.reserve(cols.size());
    for (const auto& c : cols) parents.push_back(c.node());
    return make_op<T>(std::move(out), parents, [parents, cs, k](Node<T>& self) {
        for (int j = 0; j < k * k; ++j) {
            auto& pn = parents[static_cast<std::size_t>(j)];
            if (!pn->requires_grad) continue;
            auto& g = pn->ensure_grad();
            const int dy = j / k, dx = j % k;
            for (int n = 0; n < cs.n; ++n)
                for (int c = 0; c < cs.c; ++c)
                    for (int y = 0; y < cs.h; ++y)
                        for (int xq = 0; xq < cs.w; ++xq)
                            g.at(n, c, y, xq) += self.grad.at(n, c, y * k + dy, xq * k + dx);
        }
    });
}

/// Broadcast a single-channel map across C channels; the adjoint sums over
/// the channel axis.
template <typename T>
Var<T> expand_channels(const Var<T>& x, int channels) {
    const Shape xs = x.shape();
    if (xs.c != 1)
        throw DimensionError("expand_channels: channel axis must be 1, got " +
                             std::to_string(xs.c));
    Tensor<T> out(Shape{xs.n, channels, xs.h, xs.w});
    const std::int64_t hw = static_cast<std::int64_t>(xs.h) * xs.w;
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < channels; ++c)
            std::copy_n(x.value().data() + x.value().index(n, 0, 0, 0), hw,
                        out.data() + out.index(n, c, 0, 0));
    auto xn = x.node();
    return make_op<T>(std::move(out), {xn}, [xn, xs, channels, hw](Node<T>& self) {
        auto& g = xn->ensure_grad();
        for (int n = 0; n < xs.n; ++n)
            for (int c = 0; c < channels; ++c) {
                const T* src = self.grad.data() + self.grad.index(n, c, 0, 0);
                T* dst = g.data() + g.index(n, 0, 0, 0);
                for (std::int64_t i = 0; i < hw; ++i) dst[i] += src[i];
            }
    });
}

/// Pure metadata change; gradient reshapes back.
template <typename T>
Var<T> reshape(const Var<T>& x, Shape s) {
    Tensor<T> out = x.value().reshaped(s);
    auto xn = x.node();
    return make_op<T>(std::move(out), {xn}, [xn](Node<T>& self) {
        auto& g = xn->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// Reductions and losses
// ---------------------------------------------------------------------------

template <typename T>
Var<T> sum(const Var<T>& x) {
    T acc = T(0);
    for (std::int64_t i = 0; i < x.value().numel(); ++i) acc += x.value()[i];
    Tensor<T> out(Shape{1, 1, 1, 1});
    out[0] = acc;
    auto xn = x.node();
    return make_op<T>(std::move(out), {xn}, [xn](Node<T>& self) {
        auto& g = xn->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[0];
    });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
    if (x.value().numel() == 0) throw ContractError("mean: empty tensor");
    return scale(sum(x), T(1) / static_cast<T>(x.value().numel()));
}

/// Mean absolute error against a constant target. Subgradient at 0 is 0.
template <typename T>
Var<T> l1_loss(const Var<T>& pred, const Tensor<T>& target) {
    if (pred.shape() != target.shape())
        throw DimensionError("l1_loss: shape mismatch " + pred.shape().str() + " vs " +
                             target.shape().str());
    const std::int64_t n = pred.value().numel();
    T acc = T(0);
    for (std::int64_t i = 0; i < n; ++i) acc += std::abs(pred.value()[i] - target[i]);
    Tensor<T> out(Shape{1, 1, 1, 1});
    out[0] = acc / static_cast<T>(n);
    auto pn = pred.node();
    auto tgt = std::make_shared<Tensor<T>>(target);
    return make_op<T>(std::move(out), {pn}, [pn, tgt, n](Node<T>& self) {
        auto& g = pn->ensure_grad();
        const T inv = self.grad[0] / static_cast<T>(n);
        for (std::int64_t i = 0; i < n; ++i) {
            const T d = pn->value[i] - (*tgt)[i];
            g[i] += d > T(0) ? inv : (d < T(0) ? -inv : T(0));
        }
    });
}

/// Mean squared error against a constant target.
template <typename T>
Var<T> l2_loss(const Var<T>& pred, const Tensor<T>& target) {
    if (pred.shape() != target.shape())
        throw DimensionError("l2_loss: shape mismatch " + pred.shape().str() + " vs " +
                             target.shape().str());
    const std::int64_t n = pred.value().numel();
    T acc = T(0);
    for (std::int64_t i = 0; i < n; ++i) {
        const T d = pred.value()[i] - target[i];
        acc += d * d;
    }
    Tensor<T> out(Shape{1, 1, 1, 1});
    out[0] = acc / static_cast<T>(n);
    auto pn = pred.node();
    auto tgt = std::make_shared<Tensor<T>>(target);
    return make_op<T>(std::move(out), {pn}, [pn, tgt, n](Node<T>& self) {
        auto& g = pn->ensure_grad();
        const T inv = T(2) * self.grad[0] / static_cast<T>(n);
        for (std::int64_t i = 0; i < n; ++i) g[i] += inv * (pn->value[i] - (*tgt)[i]);
    });
}

}  // namespace ixn
