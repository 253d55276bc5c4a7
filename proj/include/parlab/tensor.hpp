#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace parlab {

// Dense row-major tensor. Scalar type is a template parameter: training runs
// in float, gradient checking in double.
template <typename T>
struct Tensor {
    std::vector<size_t> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<size_t> s) : shape(std::move(s)), data(count(shape), T(0)) {}
    Tensor(std::vector<size_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != count(shape)) throw std::invalid_argument("tensor: shape/data size mismatch");
    }

    static size_t count(const std::vector<size_t>& s) {
        return std::accumulate(s.begin(), s.end(), size_t{1}, std::multiplies<>());
    }

    size_t size() const { return data.size(); }
    size_t rank() const { return shape.size(); }
    size_t dim(size_t i) const { return shape[i]; }
    // product of all dims except the last
    size_t rows() const { return shape.empty() ? 1 : size() / shape.back(); }
    size_t cols() const { return shape.empty() ? 1 : shape.back(); }

    T& operator[](size_t i) { return data[i]; }
    const T& operator[](size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.assign(data.begin(), data.end());
        return out;
    }
};

} // namespace parlab
