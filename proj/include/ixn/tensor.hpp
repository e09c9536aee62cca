#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ixn {

// Error hierarchy shared across the library. Every operator validates its
// inputs and throws one of these rather than asserting.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionError : Error {
    using Error::Error;
};
struct ContractError : Error {
    using Error::Error;
};
struct FormatError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct TrainingError : Error {
    using Error::Error;
};

// Shape of a dense 4-D tensor in (batch, channel, height, width) order.
struct Shape {
    int n = 0, c = 0, h = 0, w = 0;

    constexpr std::int64_t numel() const {
        return static_cast<std::int64_t>(n) * c * h * w;
    }
    constexpr bool operator==(const Shape&) const = default;

    std::string str() const {
        return std::to_string(n) + "x" + std::to_string(c) + "x" +
               std::to_string(h) + "x" + std::to_string(w);
    }
};

/// Dense row-major NCHW tensor of real values. Plain value type; autodiff
/// bookkeeping lives in Var/Node, not here.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape s, T fill = T(0))
        : shape_(s), data_(checked_size(s), fill) {}

    Tensor(Shape s, std::vector<T> data) : shape_(s), data_(std::move(data)) {
        if (static_cast<std::int64_t>(data_.size()) != s.numel())
            throw DimensionError("data length " + std::to_string(data_.size()) +
                                 " does not match shape " + s.str());
    }

    const Shape& shape() const { return shape_; }
    std::int64_t numel() const { return shape_.numel(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const {
        return data_[static_cast<std::size_t>(i)];
    }

    std::int64_t index(int n, int c, int y, int x) const {
        return ((static_cast<std::int64_t>(n) * shape_.c + c) * shape_.h + y) *
                   shape_.w +
               x;
    }
    T& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
    const T& at(int n, int c, int y, int x) const {
        return data_[index(n, c, y, x)];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    /// Same data reinterpreted under a new shape with equal element count.
    Tensor reshaped(Shape s) const {
        if (s.numel() != numel())
            throw DimensionError("reshape " + shape_.str() + " -> " + s.str() +
                                 " changes element count");
        Tensor out;
        out.shape_ = s;
        out.data_ = data_;
        return out;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::int64_t i = 0; i < numel(); ++i)
            out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
        return out;
    }

private:
    static std::size_t checked_size(Shape s) {
        if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
            throw DimensionError("negative extent in shape " + s.str());
        return static_cast<std::size_t>(s.numel());
    }

    Shape shape_{};
    std::vector<T> data_;

    template <typename U>
    friend class Tensor;
};

}  // namespace ixn
