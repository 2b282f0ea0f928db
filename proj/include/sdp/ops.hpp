#pragma once

#include <cstdint>

#include "sdp/tensor.hpp"

// Forward/backward primitives with explicit per-call tapes. There is no
// autodiff graph: the network code calls backwards in reverse layer order,
// which keeps the whole gradient path auditable.

namespace sdp {

template <class T>
struct ConvParamsT {
    TensorT<T> weight;  // [C_out, C_in, k]
    TensorT<T> bias;    // [C_out]
    std::int64_t stride = 1;
    std::int64_t padding = 0;

    std::int64_t c_out() const { return weight.dim(0); }
    std::int64_t c_in() const { return weight.dim(1); }
    std::int64_t kernel() const { return weight.dim(2); }
};

template <class T>
struct LinearParamsT {
    TensorT<T> weight;  // [D_out, D_in]
    TensorT<T> bias;    // [D_out]
};

// Each tape caches the forward inputs one backward pass needs and may be
// consumed exactly once.
template <class T>
struct Conv1dTapeT {
    TensorT<T> input;  // [B,C_in,L] (single frame) or [T,B,C_in,L] (train)
    bool valid = false;
    bool consumed = false;
};

template <class T>
struct LinearTapeT {
    TensorT<T> input;  // [B,D_in]
    bool valid = false;
    bool consumed = false;
};

template <class T>
struct Conv1dGradsT {
    TensorT<T> input;   // d/d x
    TensorT<T> weight;  // d/d W
    TensorT<T> bias;    // d/d b
};

template <class T>
struct LinearGradsT {
    TensorT<T> input;
    TensorT<T> weight;
    TensorT<T> bias;
};

std::int64_t conv1d_out_len(std::int64_t len, std::int64_t kernel,
                            std::int64_t stride, std::int64_t padding);

// Cross-correlation with bias over the last axis; zero padding.
template <class T>
TensorT<T> conv1d_forward(const TensorT<T>& x, const ConvParamsT<T>& p,
                          Conv1dTapeT<T>* tape = nullptr);

template <class T>
Conv1dGradsT<T> conv1d_backward(const TensorT<T>& grad_out, Conv1dTapeT<T>& tape,
                                const ConvParamsT<T>& p);

// Same conv applied to every slice of a leading time axis with shared
// weights; backward sums the weight gradient over time.
template <class T>
TensorT<T> conv1d_train_forward(const TensorT<T>& x, const ConvParamsT<T>& p,
                                Conv1dTapeT<T>* tape = nullptr);

template <class T>
Conv1dGradsT<T> conv1d_train_backward(const TensorT<T>& grad_out, Conv1dTapeT<T>& tape,
                                      const ConvParamsT<T>& p);

template <class T>
TensorT<T> linear_forward(const TensorT<T>& x, const LinearParamsT<T>& p,
                          LinearTapeT<T>* tape = nullptr);

template <class T>
LinearGradsT<T> linear_backward(const TensorT<T>& grad_out, LinearTapeT<T>& tape,
                                const LinearParamsT<T>& p);

// Elementwise sum. y must either match x's shape or be a trailing-shape
// tensor broadcast over x's leading axes.
template <class T>
TensorT<T> elementwise_add(const TensorT<T>& x, const TensorT<T>& y);

// Gradient of elementwise_add wrt y (leading-axis broadcast collapses by
// summation); gradient wrt x is grad_out itself.
template <class T>
TensorT<T> elementwise_add_backward_y(const TensorT<T>& grad_out,
                                      const std::vector<std::int64_t>& y_shape);

template <class T>
TensorT<T> elementwise_scale(const TensorT<T>& x, T a);

template <class T>
TensorT<T> mean_over_axis(const TensorT<T>& x, std::size_t axis);

template <class T>
TensorT<T> mean_over_axis_backward(const TensorT<T>& grad_out,
                                   const std::vector<std::int64_t>& input_shape,
                                   std::size_t axis);

// [B,H,D] <-> [B,D,H]; self-inverse, and its own adjoint.
template <class T>
TensorT<T> transpose_last2(const TensorT<T>& x);

}  // namespace sdp
