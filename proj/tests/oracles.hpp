#pragma once

// Independent naive-loop implementations used as oracles. Deliberately
// written without im2col/GEMM or any code shared with the library ops.

#include <algorithm>
#include <cmath>
#include <vector>

#include "ixn/random.hpp"
#include "ixn/tensor.hpp"

namespace oracle {

using ixn::Shape;
using ixn::Tensor;

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad,
                 int groups = 1) {
    const Shape xs = x.shape(), ws = w.shape();
    const int ho = (xs.h + 2 * pad - ws.h) / stride + 1;
    const int wo = (xs.w + 2 * pad - ws.w) / stride + 1;
    const int cin_g = xs.c / groups, cout_g = ws.n / groups;
    Tensor<T> out(Shape{xs.n, ws.n, ho, wo});
    for (int n = 0; n < xs.n; ++n)
        for (int co = 0; co < ws.n; ++co) {
            const int g = co / cout_g;
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    T acc = T(0);
                    for (int ci = 0; ci < cin_g; ++ci)
                        for (int ky = 0; ky < ws.h; ++ky)
                            for (int kx = 0; kx < ws.w; ++kx) {
                                const int iy = oy * stride + ky - pad;
                                const int ix = ox * stride + kx - pad;
                                if (iy < 0 || iy >= xs.h || ix < 0 || ix >= xs.w) continue;
                                acc += x.at(n, g * cin_g + ci, iy, ix) * w.at(co, ci, ky, kx);
                            }
                    out.at(n, co, oy, ox) = acc;
                }
        }
    return out;
}

/// Transposed convolution, weight laid out (Cin, Cout, Kh, Kw).
template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride) {
    const Shape xs = x.shape(), ws = w.shape();
    const int ho = (xs.h - 1) * stride + ws.h;
    const int wo = (xs.w - 1) * stride + ws.w;
    Tensor<T> out(Shape{xs.n, ws.c, ho, wo});
    for (int n = 0; n < xs.n; ++n)
        for (int ci = 0; ci < xs.c; ++ci)
            for (int iy = 0; iy < xs.h; ++iy)
                for (int ix = 0; ix < xs.w; ++ix)
                    for (int co = 0; co < ws.c; ++co)
                        for (int ky = 0; ky < ws.h; ++ky)
                            for (int kx = 0; kx < ws.w; ++kx)
                                out.at(n, co, iy * stride + ky, ix * stride + kx) +=
                                    x.at(n, ci, iy, ix) * w.at(ci, co, ky, kx);
    return out;
}

template <typename T>
Tensor<T> avg_pool(const Tensor<T>& x, int k, int stride) {
    const Shape xs = x.shape();
    const int ho = (xs.h - k) / stride + 1, wo = (xs.w - k) / stride + 1;
    Tensor<T> out(Shape{xs.n, xs.c, ho, wo});
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    T acc = T(0);
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx)
                            acc += x.at(n, c, oy * stride + ky, ox * stride + kx);
                    out.at(n, c, oy, ox) = acc / static_cast<T>(k * k);
                }
    return out;
}

template <typename T>
Tensor<T> max_pool(const Tensor<T>& x, int k, int stride) {
    const Shape xs = x.shape();
    const int ho = (xs.h - k) / stride + 1, wo = (xs.w - k) / stride + 1;
    Tensor<T> out(Shape{xs.n, xs.c, ho, wo});
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    T best = x.at(n, c, oy * stride, ox * stride);
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx)
                            best = std::max(best,
                                            x.at(n, c, oy * stride + ky, ox * stride + kx));
                    out.at(n, c, oy, ox) = best;
                }
    return out;
}

template <typename T>
Tensor<T> nearest_upsample(const Tensor<T>& x, int f) {
    const Shape xs = x.shape();
    Tensor<T> out(Shape{xs.n, xs.c, xs.h * f, xs.w * f});
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c)
            for (int y = 0; y < xs.h * f; ++y)
                for (int x2 = 0; x2 < xs.w * f; ++x2)
                    out.at(n, c, y, x2) = x.at(n, c, y / f, x2 / f);
    return out;
}

/// align-corners=false bilinear scaling.
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int f) {
    const Shape xs = x.shape();
    const int ho = xs.h * f, wo = xs.w * f;
    Tensor<T> out(Shape{xs.n, xs.c, ho, wo});
    auto sample = [&](int n, int c, double sy, double sx) {
        const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
        const double fy = sy - y0, fx = sx - x0;
        auto at = [&](int yy, int xx) {
            yy = std::clamp(yy, 0, xs.h - 1);
            xx = std::clamp(xx, 0, xs.w - 1);
            return static_cast<double>(x.at(n, c, yy, xx));
        };
        return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
               fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
    };
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c)
            for (int y = 0; y < ho; ++y)
                for (int x2 = 0; x2 < wo; ++x2) {
                    const double sy = (y + 0.5) / f - 0.5;
                    const double sx = (x2 + 0.5) / f - 0.5;
                    out.at(n, c, y, x2) = static_cast<T>(sample(n, c, sy, sx));
                }
    return out;
}

/// Softmax over each non-overlapping k x k window.
template <typename T>
Tensor<T> region_softmax(const Tensor<T>& x, int k) {
    const Shape xs = x.shape();
    Tensor<T> out(xs);
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c)
            for (int wy = 0; wy < xs.h / k; ++wy)
                for (int wx = 0; wx < xs.w / k; ++wx) {
                    T mx = x.at(n, c, wy * k, wx * k);
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx)
                            mx = std::max(mx, x.at(n, c, wy * k + ky, wx * k + kx));
                    T denom = T(0);
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx)
                            denom += std::exp(x.at(n, c, wy * k + ky, wx * k + kx) - mx);
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx)
                            out.at(n, c, wy * k + ky, wx * k + kx) =
                                std::exp(x.at(n, c, wy * k + ky, wx * k + kx) - mx) / denom;
                }
    return out;
}

/// Per-window weighted sum: the direct reading of indexed pooling.
template <typename T>
Tensor<T> weighted_pool(const Tensor<T>& x, const Tensor<T>& idx, int k) {
    const Shape xs = x.shape();
    Tensor<T> out(Shape{xs.n, xs.c, xs.h / k, xs.w / k});
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c)
            for (int oy = 0; oy < xs.h / k; ++oy)
                for (int ox = 0; ox < xs.w / k; ++ox) {
                    T acc = T(0);
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx)
                            acc += x.at(n, c, oy * k + ky, ox * k + kx) *
                                   idx.at(n, idx.shape().c == 1 ? 0 : c, oy * k + ky,
                                          ox * k + kx);
                    out.at(n, c, oy, ox) = acc;
                }
    return out;
}

/// Non-separable full-window SSIM (11x11 Gaussian, sigma 1.5), valid
/// positions only.
inline double ssim(const Tensor<float>& a, const Tensor<float>& b) {
    const Shape s = a.shape();
    constexpr int W = 11;
    constexpr double sigma = 1.5, C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
    double win[W][W];
    double norm = 0;
    for (int i = 0; i < W; ++i)
        for (int j = 0; j < W; ++j) {
            const double dy = i - W / 2, dx = j - W / 2;
            win[i][j] = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
            norm += win[i][j];
        }
    for (int i = 0; i < W; ++i)
        for (int j = 0; j < W; ++j) win[i][j] /= norm;

    double total = 0;
    int count = 0;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y + W <= s.h; ++y)
                for (int x = 0; x + W <= s.w; ++x) {
                    double ma = 0, mb = 0;
                    for (int i = 0; i < W; ++i)
                        for (int j = 0; j < W; ++j) {
                            ma += win[i][j] * a.at(n, c, y + i, x + j);
                            mb += win[i][j] * b.at(n, c, y + i, x + j);
                        }
                    double va = 0, vb = 0, cov = 0;
                    for (int i = 0; i < W; ++i)
                        for (int j = 0; j < W; ++j) {
                            const double da = a.at(n, c, y + i, x + j) - ma;
                            const double db = b.at(n, c, y + i, x + j) - mb;
                            va += win[i][j] * da * da;
                            vb += win[i][j] * db * db;
                            cov += win[i][j] * da * db;
                        }
                    total += ((2 * ma * mb + C1) * (2 * cov + C2)) /
                             ((ma * ma + mb * mb + C1) * (va + vb + C2));
                    ++count;
                }
    return count ? total / count : 1.0;
}

}  // namespace oracle
