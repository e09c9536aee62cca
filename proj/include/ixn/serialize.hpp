#pragma once

#include <string>
#include <vector>

#include "ixn/autodiff.hpp"

namespace ixn {

// Flat named-parameter archive: <prefix>.json manifest (name -> shape,
// offset, count) plus <prefix>.bin of raw little-endian 32-bit floats in
// manifest order.

/// A tensor to (de)serialize under a stable name. Covers trainable
/// parameters and non-trainable state such as normalization statistics.
struct NamedTensor {
    std::string name;
    Tensor<float>* tensor;
};

void save_tensors(const std::string& prefix, const std::vector<NamedTensor>& tensors);

/// Loads values into existing tensors by name; every entry must be present
/// in the archive with a matching shape.
void load_tensors(const std::string& prefix, const std::vector<NamedTensor>& tensors);

std::vector<NamedTensor> as_named(const std::vector<Parameter<float>*>& params);

void save_parameters(const std::string& prefix,
                     const std::vector<Parameter<float>*>& params);

/// Loads values into existing parameters by name; every parameter must be
/// present in the archive with a matching shape.
void load_parameters(const std::string& prefix,
                     const std::vector<Parameter<float>*>& params);

}  // namespace ixn
