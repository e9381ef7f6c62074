#include "rrseg/tensor.hpp"

#include <cmath>
#include <sstream>

#include "rrseg/errors.hpp"

namespace rrseg {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) throw ShapeError("negative dimension in shape " + shape_to_string(shape));
        n *= d;
    }
    return n;
}

std::string shape_to_string(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

template <typename T>
TensorT<T>::TensorT(std::vector<int64_t> s)
    : shape(std::move(s)), v(static_cast<size_t>(shape_numel(shape)), T(0)) {}

template <typename T>
std::string TensorT<T>::shape_str() const {
    return shape_to_string(shape);
}

template <typename T>
void TensorT<T>::fill(T x) {
    for (auto& e : v) e = x;
}

template <typename T>
bool TensorT<T>::all_finite() const {
    for (T e : v)
        if (!std::isfinite(static_cast<double>(e))) return false;
    return true;
}

template <typename T>
TensorT<T> TensorT<T>::full(std::vector<int64_t> s, T x) {
    TensorT t(std::move(s));
    t.fill(x);
    return t;
}

template <typename T>
TensorT<T> TensorT<T>::randn(std::vector<int64_t> s, Rng& rng, double stddev) {
    TensorT t(std::move(s));
    for (auto& e : t.v) e = static_cast<T>(rng.normal() * stddev);
    return t;
}

template <typename T>
TensorT<T> TensorT<T>::from(std::vector<int64_t> s, std::vector<T> data) {
    if (shape_numel(s) != static_cast<int64_t>(data.size()))
        throw ShapeError("data size does not match shape " + shape_to_string(s));
    TensorT t;
    t.shape = std::move(s);
    t.v = std::move(data);
    return t;
}

template struct TensorT<float>;
template struct TensorT<double>;

}  // namespace rrseg
