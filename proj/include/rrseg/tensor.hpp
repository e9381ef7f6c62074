#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rrseg/rng.hpp"

namespace rrseg {

// Dense row-major n-d array. Shapes are part of every module contract, so
// helpers here throw ShapeError (not assert) on mismatch.
template <typename T>
struct TensorT {
    std::vector<int64_t> shape;
    std::vector<T> v;

    TensorT() = default;
    explicit TensorT(std::vector<int64_t> s);

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }
    bool same_shape(const TensorT& o) const { return shape == o.shape; }
    std::string shape_str() const;

    T& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

    // 2-d / 3-d accessors (row-major)
    T& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * shape[1] + c)]; }
    const T& at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * shape[1] + c)]; }
    T& at(int64_t i, int64_t j, int64_t k) {
        return v[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
    }
    const T& at(int64_t i, int64_t j, int64_t k) const {
        return v[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
    }

    void fill(T x);
    bool all_finite() const;

    static TensorT zeros(std::vector<int64_t> s) { return TensorT(std::move(s)); }
    static TensorT full(std::vector<int64_t> s, T x);
    static TensorT randn(std::vector<int64_t> s, Rng& rng, double stddev = 1.0);
    static TensorT from(std::vector<int64_t> s, std::vector<T> data);
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

int64_t shape_numel(const std::vector<int64_t>& shape);
std::string shape_to_string(const std::vector<int64_t>& shape);

template <typename Dst, typename Src>
TensorT<Dst> tensor_cast(const TensorT<Src>& t) {
    TensorT<Dst> out;
    out.shape = t.shape;
    out.v.resize(t.v.size());
    for (size_t i = 0; i < t.v.size(); ++i) out.v[i] = static_cast<Dst>(t.v[i]);
    return out;
}

}  // namespace rrseg
