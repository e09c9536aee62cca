#pragma once

#include <cmath>

#include "ixn/tensor.hpp"

// Classical resampling operators written as explicit index functions over a
// k x k region. These double as oracles for the guided-operator degeneracy
// tests: indexed pooling with an index_max map must reproduce max pooling,
// with a uniform map average pooling, and so on.
namespace ixn {

/// Indicator of the maximum: exactly one entry is 1 (first occurrence in
/// row-major scan order on ties), the rest 0.
template <typename T>
Tensor<T> index_max(const Tensor<T>& region) {
    if (region.numel() == 0) throw DimensionError("index_max: empty region");
    std::int64_t best = 0;
    for (std::int64_t i = 1; i < region.numel(); ++i)
        if (region[i] > region[best]) best = i;
    Tensor<T> out(region.shape());
    out[best] = T(1);
    return out;
}

/// Membership indicator: all ones. Scaled by 1/k^2 it averages; used
/// verbatim at upsampling time it is nearest-neighbor interpolation.
template <typename T>
Tensor<T> index_avg(const Tensor<T>& region) {
    return Tensor<T>(region.shape(), T(1));
}

/// Weighted membership: W element-wise with the all-ones indicator, i.e. W
/// itself. Fixed bilinear W reproduces bilinear interpolation; learned W is
/// deconvolution.
template <typename T>
Tensor<T> index_weighted(const Tensor<T>& region, const Tensor<T>& weights) {
    if (weights.shape() != region.shape())
        throw DimensionError("index_weighted: weight shape " + weights.shape().str() +
                             " does not match region " + region.shape().str());
    return weights;
}

/// Periodic-shuffle placement: a (1, r^2, 1, 1) cell rearranged to a
/// (1, 1, r, r) block in row-major channel-to-spatial order, matching
/// depth_to_space on the full tensor.
template <typename T>
Tensor<T> index_ps(const Tensor<T>& cell) {
    const Shape s = cell.shape();
    const int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(s.c))));
    if (r * r != s.c)
        throw DimensionError("index_ps: channel axis " + std::to_string(s.c) +
                             " is not a perfect square");
    if (s.n != 1 || s.h != 1 || s.w != 1)
        throw DimensionError("index_ps: expected a 1x(r^2)x1x1 cell, got " + s.str());
    Tensor<T> out(Shape{1, 1, r, r});
    for (int m = 0; m < r; ++m)
        for (int n = 0; n < r; ++n) out.at(0, 0, m, n) = cell[m * r + n];
    return out;
}

}  // namespace ixn
