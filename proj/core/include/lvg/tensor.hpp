#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <type_traits>
#include <vector>

#include "lvg/common.hpp"

namespace lvg {

// std::vector that default-initializes on resize, so tensors whose every
// entry is about to be overwritten skip the zero fill.
template <typename T, typename A = std::allocator<T>>
struct default_init_allocator : public A {
    template <typename U>
    struct rebind {
        using other = default_init_allocator<U, typename std::allocator_traits<
                                                     A>::template rebind_alloc<U>>;
    };
    using A::A;
    template <typename U>
    void construct(U* ptr) noexcept(std::is_nothrow_default_constructible_v<U>) {
        ::new (static_cast<void*>(ptr)) U;
    }
    template <typename U, typename... Args>
    void construct(U* ptr, Args&&... args) {
        std::allocator_traits<A>::construct(static_cast<A&>(*this), ptr,
                                            std::forward<Args>(args)...);
    }
};

// Dense 2-D row-major matrix. Vectors are 1xN or Nx1; scalars 1x1.
template <typename T>
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<T, default_init_allocator<T>> data;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(size_t(r) * c, T(0)) {}
    Tensor(int r, int c, const std::vector<T>& d) : rows(r), cols(c) {
        if (d.size() != size_t(r) * c) throw DataError("Tensor: data size mismatch");
        data.assign(d.begin(), d.end());
    }

    // Allocated but not zeroed; caller must overwrite every entry.
    static Tensor uninit(int r, int c) {
        Tensor t;
        t.rows = r;
        t.cols = c;
        t.data.resize(size_t(r) * c);
        return t;
    }

    static Tensor scalar(T v) {
        Tensor t(1, 1);
        t.data[0] = v;
        return t;
    }

    size_t size() const { return data.size(); }
    T& at(int r, int c) { return data[size_t(r) * cols + c]; }
    const T& at(int r, int c) const { return data[size_t(r) * cols + c]; }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    using Map = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    using CMap =
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

    Map map() { return Map(data.data(), rows, cols); }
    CMap map() const { return CMap(data.data(), rows, cols); }
};

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.cols != b.rows) throw DataError("matmul: inner dimensions differ");
    Tensor<T> out = Tensor<T>::uninit(a.rows, b.cols);
    out.map().noalias() = a.map() * b.map();
    return out;
}

template <typename T>
Tensor<T> transposed(const Tensor<T>& a) {
    Tensor<T> out = Tensor<T>::uninit(a.cols, a.rows);
    out.map() = a.map().transpose();
    return out;
}

template <typename T>
T dot_all(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw DataError("dot_all: shape mismatch");
    T s = 0;
    for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

}  // namespace lvg
