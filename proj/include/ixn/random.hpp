#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "ixn/tensor.hpp"

namespace ixn {

using Rng = std::mt19937_64;

template <typename T>
Tensor<T> random_uniform(Shape s, Rng& rng, T lo = T(-1), T hi = T(1)) {
    Tensor<T> t(s);
    std::uniform_real_distribution<T> dist(lo, hi);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
    return t;
}

template <typename T>
Tensor<T> random_normal(Shape s, Rng& rng, T mean = T(0), T stddev = T(1)) {
    Tensor<T> t(s);
    std::normal_distribution<T> dist(mean, stddev);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
    return t;
}

/// Fan-in He-normal initialization for a conv weight (C_out, C_in/g, K, K).
template <typename T>
Tensor<T> he_normal(Shape w_shape, Rng& rng) {
    const std::int64_t fan_in =
        static_cast<std::int64_t>(w_shape.c) * w_shape.h * w_shape.w;
    const T stddev = std::sqrt(T(2) / static_cast<T>(fan_in));
    return random_normal<T>(w_shape, rng, T(0), stddev);
}

}  // namespace ixn
