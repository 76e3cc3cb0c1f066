#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lvn {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

inline std::size_t shape_volume(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major array tagged with its shape.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
        check_shape();
        data_.assign(shape_volume(shape_), fill);
    }

    BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape();
        if (data_.size() != shape_volume(shape_)) {
            throw std::invalid_argument("tensor: shape " + shape_string(shape_) + " needs " +
                                        std::to_string(shape_volume(shape_)) + " values, got " +
                                        std::to_string(data_.size()));
        }
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    /// Element of a rank-3 [h, w, c] tensor.
    T& at(std::size_t y, std::size_t x, std::size_t c) {
        return data_[(y * shape_[1] + x) * shape_[2] + c];
    }
    const T& at(std::size_t y, std::size_t x, std::size_t c) const {
        return data_[(y * shape_[1] + x) * shape_[2] + c];
    }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    template <typename U>
    BasicTensor<U> cast() const {
        return BasicTensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    }

    friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

private:
    void check_shape() const {
        for (std::size_t d : shape_)
            if (d == 0) throw std::invalid_argument("tensor: zero dimension in shape " + shape_string(shape_));
    }

    Shape shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// An [h, w, 3] tensor with every value in [0, 1].
class Image {
public:
    Image() = default;

    explicit Image(Tensor t) : tensor_(std::move(t)) {
        if (tensor_.rank() != 3 || tensor_.shape()[2] != 3)
            throw std::invalid_argument("image: expected shape [h, w, 3], got " + shape_string(tensor_.shape()));
        for (float v : tensor_.data())
            if (!(v >= 0.0f && v <= 1.0f)) throw std::invalid_argument("image: pixel value outside [0, 1]");
    }

    const Tensor& tensor() const { return tensor_; }
    const Shape& shape() const { return tensor_.shape(); }
    std::size_t height() const { return tensor_.shape()[0]; }
    std::size_t width() const { return tensor_.shape()[1]; }
    std::size_t channels() const { return tensor_.shape()[2]; }

    friend bool operator==(const Image&, const Image&) = default;

private:
    Tensor tensor_;
};

}  // namespace lvn
