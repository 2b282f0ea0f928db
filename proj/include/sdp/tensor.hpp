#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "sdp/common.hpp"
#include "sdp/rng.hpp"

namespace sdp {

// Dense row-major array with explicit shape. Float for training; the double
// instantiation exists for finite-difference gradient checks, whose
// tolerances are unreachable in 32-bit.
template <class T>
struct TensorT {
    std::vector<std::int64_t> shape;
    std::vector<T> data;

    TensorT() = default;

    explicit TensorT(std::vector<std::int64_t> s) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(numel_of(shape)), T(0));
    }

    TensorT(std::vector<std::int64_t> s, std::vector<T> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (numel_of(shape) != static_cast<std::int64_t>(data.size())) {
            throw ShapeError("tensor data length does not match shape");
        }
    }

    static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
        std::int64_t n = 1;
        for (auto d : s) {
            if (d < 0) throw ShapeError("negative dimension");
            n *= d;
        }
        return n;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    std::int64_t dim(std::size_t i) const { return shape.at(i); }
    std::size_t rank() const { return shape.size(); }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    // Row-major flat index for up to 4 subscripts.
    std::size_t at(std::int64_t i0) const { return static_cast<std::size_t>(i0); }
    std::size_t at(std::int64_t i0, std::int64_t i1) const {
        return static_cast<std::size_t>(i0 * shape[1] + i1);
    }
    std::size_t at(std::int64_t i0, std::int64_t i1, std::int64_t i2) const {
        return static_cast<std::size_t>((i0 * shape[1] + i1) * shape[2] + i2);
    }
    std::size_t at(std::int64_t i0, std::int64_t i1, std::int64_t i2, std::int64_t i3) const {
        return static_cast<std::size_t>(((i0 * shape[1] + i1) * shape[2] + i2) * shape[3] + i3);
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (const T v : data) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    bool is_binary() const {
        for (const T v : data) {
            if (v != T(0) && v != T(1)) return false;
        }
        return true;
    }

    static TensorT zeros(std::vector<std::int64_t> s) { return TensorT(std::move(s)); }

    static TensorT full(std::vector<std::int64_t> s, T v) {
        TensorT t(std::move(s));
        t.fill(v);
        return t;
    }

    static TensorT randn(std::vector<std::int64_t> s, Rng& rng, T stddev = T(1)) {
        TensorT t(std::move(s));
        for (auto& v : t.data) v = static_cast<T>(rng.gaussian()) * stddev;
        return t;
    }

    static TensorT uniform(std::vector<std::int64_t> s, Rng& rng, T lo, T hi) {
        TensorT t(std::move(s));
        for (auto& v : t.data) {
            v = static_cast<T>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
        }
        return t;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) os << ",";
            os << shape[i];
        }
        os << "]";
        return os.str();
    }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

template <class T>
inline void ensure_finite(const TensorT<T>& t, const char* what) {
    if (runtime_checks_enabled() && !t.all_finite()) {
        throw NumericError(std::string(what) + " produced non-finite values");
    }
}

template <class T>
inline void ensure_binary(const TensorT<T>& t, const char* what) {
    if (runtime_checks_enabled() && !t.is_binary()) {
        throw NumericError(std::string(what) + " expected a binary spike train");
    }
}

}  // namespace sdp
