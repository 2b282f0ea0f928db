#pragma once

#include <cmath>
#include <cstddef>
#include <type_traits>

// Data-parallel inner loops behind everything in the library. Each kernel
// has a scalar reference implementation (the semantics) and may have an
// AVX2 variant selected at runtime; the two are equivalence-tested.
//
// Rounding contract: lif_step uses an explicit mul-then-fma sequence in both
// the scalar and the AVX2 path, so the variants agree bit for bit. dot/sum
// style reductions reassociate under SIMD and agree only to tolerance.

namespace sdp::kern {

enum class Isa { scalar, avx2 };

Isa detected_isa();           // best ISA this CPU supports
Isa active_isa();             // what dispatch currently uses
void select_isa(Isa isa);     // override (tests, CLI); throws if unsupported
const char* isa_name(Isa isa);

// ---- scalar reference kernels (generic element type) ----

namespace scalar {

template <class T>
inline void axpy(T a, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class T>
inline T dot(const T* x, const T* y, std::size_t n) {
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

template <class T>
inline T sum(const T* x, std::size_t n) {
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

template <class T>
inline T sq_sum(const T* x, std::size_t n) {
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

template <class T>
inline void add_inplace(T* y, const T* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

template <class T>
inline void scale_inplace(T* x, T a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

template <class T>
inline std::size_t count_ones(const T* x, std::size_t n) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < n; ++i) c += (x[i] == T(1)) ? 1 : 0;
    return c;
}

// One membrane update over a row sharing (tau, theta):
//   u = fma(tau*u_prev, 1-s_prev, in);  s = (u >= theta) ? 1 : 0
// The (1-s_prev) factor is the hard reset; H(0)=1 at the threshold.
template <class T>
inline void lif_step(const T* in, const T* u_prev, const T* s_prev,
                     T tau, T theta, T* u, T* s, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const T decay = tau * u_prev[i];
        const T ui = std::fma(decay, T(1) - s_prev[i], in[i]);
        u[i] = ui;
        s[i] = (ui >= theta) ? T(1) : T(0);
    }
}

}  // namespace scalar

// ---- dispatched float entry points ----

void axpy(float a, const float* x, float* y, std::size_t n);
float dot(const float* x, const float* y, std::size_t n);
float sum(const float* x, std::size_t n);
float sq_sum(const float* x, std::size_t n);
void add_inplace(float* y, const float* x, std::size_t n);
void scale_inplace(float* x, float a, std::size_t n);
std::size_t count_ones(const float* x, std::size_t n);
void lif_step(const float* in, const float* u_prev, const float* s_prev,
              float tau, float theta, float* u, float* s, std::size_t n);

// ---- generic helpers: float goes through dispatch, other types scalar ----

template <class T>
inline void axpy_t(T a, const T* x, T* y, std::size_t n) {
    if constexpr (std::is_same_v<T, float>) axpy(a, x, y, n);
    else scalar::axpy(a, x, y, n);
}

template <class T>
inline T dot_t(const T* x, const T* y, std::size_t n) {
    if constexpr (std::is_same_v<T, float>) return dot(x, y, n);
    else return scalar::dot(x, y, n);
}

template <class T>
inline T sum_t(const T* x, std::size_t n) {
    if constexpr (std::is_same_v<T, float>) return sum(x, n);
    else return scalar::sum(x, n);
}

template <class T>
inline T sq_sum_t(const T* x, std::size_t n) {
    if constexpr (std::is_same_v<T, float>) return sq_sum(x, n);
    else return scalar::sq_sum(x, n);
}

template <class T>
inline void add_inplace_t(T* y, const T* x, std::size_t n) {
    if constexpr (std::is_same_v<T, float>) add_inplace(y, x, n);
    else scalar::add_inplace(y, x, n);
}

template <class T>
inline void scale_inplace_t(T* x, T a, std::size_t n) {
    if constexpr (std::is_same_v<T, float>) scale_inplace(x, a, n);
    else scalar::scale_inplace(x, a, n);
}

template <class T>
inline std::size_t count_ones_t(const T* x, std::size_t n) {
    if constexpr (std::is_same_v<T, float>) return count_ones(x, n);
    else return scalar::count_ones(x, n);
}

template <class T>
inline void lif_step_t(const T* in, const T* u_prev, const T* s_prev,
                       T tau, T theta, T* u, T* s, std::size_t n) {
    if constexpr (std::is_same_v<T, float>) lif_step(in, u_prev, s_prev, tau, theta, u, s, n);
    else scalar::lif_step(in, u_prev, s_prev, tau, theta, u, s, n);
}

}  // namespace sdp::kern
