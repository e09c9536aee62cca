#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ixn/tensor.hpp"

namespace ixn {

enum class ResizeMode { Bilinear, ZeroPad };

/// Raw IDX image payload: `count` row-major 8-bit images of rows x cols.
struct IdxImages {
    int count = 0;
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> pixels;
};

/// Parses an IDX image file (big-endian magic 0x00000803), transparently
/// handling gzip compression. Throws FormatError with the byte offset on a
/// bad header or truncation, IoError when the file cannot be opened.
IdxImages load_idx_images(const std::string& path);

/// Writes an uncompressed IDX image file (fixtures, synthetic data).
void write_idx_images(const std::string& path, const IdxImages& images);

/// Bilinear resize (align-corners=false) of a single-channel image.
Tensor<float> resize_bilinear(const Tensor<float>& img, int out_h, int out_w);

/// Loads images, scales pixels to [0, 1] and brings them to 32x32 either by
/// bilinear resize (default) or by centered zero-padding.
std::vector<Tensor<float>> load_fashion_mnist(const std::string& images_path,
                                              ResizeMode mode = ResizeMode::Bilinear);

/// Deterministic synthetic grayscale wardrobe-like images (28x28): textured
/// filled shapes on a dark background. Stand-in corpus for environments
/// where the real dataset is not available.
IdxImages make_synthetic_images(int count, std::uint64_t seed);

}  // namespace ixn
