#pragma once

#include "ixn/ops.hpp"

// Index-guided downsampling and upsampling. Both operators are compositions
// of the differentiable primitives, so gradients flow to the feature map and
// to the index maps without extra backward code.
namespace ixn {

/// Decoder-side information captured at downsampling time and consumed by
/// the mirrored upsampling stage.
template <typename T>
struct StageSideInfo {
    Var<T> decoder_index;  // full pre-downsampling resolution
    int source_h = 0;
    int source_w = 0;
};

namespace detail {
template <typename T>
Var<T> broadcast_index(const Var<T>& index, int channels, const char* op) {
    const int ic = index.shape().c;
    if (ic == channels) return index;
    if (ic == 1) return expand_channels(index, channels);
    throw DimensionError(std::string(op) + ": index channel axis " + std::to_string(ic) +
                         " matches neither 1 (holistic) nor feature channels " +
                         std::to_string(channels));
}
}  // namespace detail

/// Indexed pooling: per-window weighted sum of activations with their
/// indices, realized as multiply, average pool and a k^2 compensation.
template <typename T>
Var<T> indexed_pool(const Var<T>& x, const Var<T>& enc_index, int k) {
    const Shape xs = x.shape();
    if (enc_index.shape().h != xs.h || enc_index.shape().w != xs.w)
        throw DimensionError("indexed_pool: index spatial size " +
                             enc_index.shape().str() + " does not match input " + xs.str());
    Var<T> idx = detail::broadcast_index(enc_index, xs.c, "indexed_pool");
    return scale(avg_pool(mul(x, idx), k, k), static_cast<T>(k * k));
}

/// Indexed upsampling: nearest-neighbor expansion of the low-resolution map
/// gated element-wise by the decoder index map. Single-point and one-to-many:
/// each upsampled point depends on exactly one low-resolution point.
template <typename T>
Var<T> indexed_upsample(const Var<T>& d, const Var<T>& dec_index, int k) {
    const Shape ds = d.shape(), is = dec_index.shape();
    if (is.h != ds.h * k || is.w != ds.w * k)
        throw DimensionError("indexed_upsample: index spatial size " + is.str() +
                             " is not " + std::to_string(k) + "x that of input " + ds.str());
    Var<T> idx = detail::broadcast_index(dec_index, ds.c, "indexed_upsample");
    return mul(idx, nearest_upsample(d, k));
}

/// Broadcast a holistic (single-channel) index map across C channels.
template <typename T>
Var<T> expand_holistic(const Var<T>& index, int channels) {
    return expand_channels(index, channels);
}

}  // namespace ixn
