#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "vggfire/errors.hpp"

namespace vggfire {

using Shape = std::vector<std::size_t>;

std::string shape_string(std::span<const std::size_t> shape);
std::size_t shape_numel(std::span<const std::size_t> shape);

/// Row-major flat offset of a multi-index. Throws ShapeError when the rank
/// differs or a coordinate is out of range.
std::size_t flat_index(std::span<const std::size_t> shape, std::span<const std::size_t> index);

/// Inverse of flat_index.
Shape unflatten_index(std::span<const std::size_t> shape, std::size_t flat);

/// Dense row-major tensor. 4-D tensors follow NCHW. Every dimension is at
/// least 1 and the element count always equals the shape product.
///
/// float is the training/inference element type; double instantiations run
/// the same layer code for finite-difference gradient checks.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() : shape_{1}, data_(1, T{0}) {}

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        validate_shape(shape_);
        data_.assign(shape_numel(shape_), T{0});
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape(shape_);
        if (data_.size() != shape_numel(shape_)) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(shape_));
        }
    }

    static Tensor filled(Shape shape, T value) {
        Tensor t(std::move(shape));
        t.fill(value);
        return t;
    }

    static Tensor from(std::initializer_list<std::size_t> shape, std::initializer_list<T> values) {
        return Tensor(Shape(shape), std::vector<T>(values));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const {
        if (axis >= shape_.size()) {
            throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                             shape_string(shape_));
        }
        return shape_[axis];
    }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    const std::vector<T>& values() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T& at(std::initializer_list<std::size_t> index) {
        return data_[flat_index(shape_, std::span<const std::size_t>(index.begin(), index.size()))];
    }
    const T& at(std::initializer_list<std::size_t> index) const {
        return data_[flat_index(shape_, std::span<const std::size_t>(index.begin(), index.size()))];
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    /// Same data, new shape with an identical element count.
    Tensor reshaped(Shape shape) const& {
        Tensor out(*this);
        out.reshape(std::move(shape));
        return out;
    }
    Tensor reshaped(Shape shape) && {
        reshape(std::move(shape));
        return std::move(*this);
    }
    void reshape(Shape shape) {
        validate_shape(shape);
        if (shape_numel(shape) != data_.size()) {
            throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
        }
        shape_ = std::move(shape);
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
        return Tensor<U>(shape_, std::move(out));
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    static void validate_shape(const Shape& shape) {
        if (shape.empty()) {
            throw ShapeError("tensor shape must have at least one dimension");
        }
        if (std::find(shape.begin(), shape.end(), std::size_t{0}) != shape.end()) {
            throw ShapeError("tensor dimensions must be >= 1, got " + shape_string(shape));
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

/// Throws ShapeError unless `t` has exactly `rank` dimensions.
template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + " tensor, got " +
                         shape_string(t.shape()));
    }
}

} // namespace vggfire
