#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace uwstereo::nn {

using Shape = std::vector<int>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

std::string shape_str(const Shape& shape);

/// Thrown when tensors reaching a layer do not agree with what the layer expects.
class ShapeError : public std::invalid_argument {
public:
    ShapeError(const std::string& layer, const std::string& what)
        : std::invalid_argument("layer '" + layer + "': " + what), layer_(layer) {}
    const std::string& layer() const noexcept { return layer_; }

private:
    std::string layer_;
};

/// Non-finite values showed up where finite ones are required.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major N-d array. Image tensors use NCHW.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
        for (int d : shape_)
            if (d < 0) throw std::invalid_argument("negative tensor extent");
    }
    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_size(shape_) != data_.size())
            throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_str(shape_));
    }

    const Shape& shape() const noexcept { return shape_; }
    int rank() const noexcept { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> span() noexcept { return data_; }
    std::span<const T> span() const noexcept { return data_; }
    std::vector<T>& vec() noexcept { return data_; }
    const std::vector<T>& vec() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
    const T& at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor reshaped(Shape shape) const {
        if (shape_size(shape) != data_.size())
            throw std::invalid_argument("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        return Tensor(std::move(shape), data_);
    }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
    std::size_t index(int n, int c, int h, int w) const {
        return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
    }

    Shape shape_;
    std::vector<T> data_;
};

}  // namespace uwstereo::nn
