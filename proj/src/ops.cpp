#include "sdp/ops.hpp"

#include <algorithm>

#include "sdp/kernels/kernels.hpp"

namespace sdp {

std::int64_t conv1d_out_len(std::int64_t len, std::int64_t kernel,
                            std::int64_t stride, std::int64_t padding) {
    if (stride < 1) throw ShapeError("conv1d stride must be >= 1");
    const std::int64_t span = len + 2 * padding - kernel;
    if (span < 0) throw ShapeError("conv1d kernel larger than padded input");
    return span / stride + 1;
}

namespace {

template <class T>
void check_conv_params(const ConvParamsT<T>& p) {
    if (p.weight.rank() != 3) throw ShapeError("conv1d weight must be [C_out,C_in,k]");
    if (p.bias.rank() != 1 || p.bias.dim(0) != p.c_out()) {
        throw ShapeError("conv1d bias must be [C_out]");
    }
    if (p.padding < 0) throw ShapeError("conv1d padding must be >= 0");
}

// Core over one [B,C_in,L] frame, accumulating into y (already bias-filled).
// Stride 1 vectorizes as shifted axpy rows over L; general stride is scalar.
template <class T>
void conv1d_accumulate(const T* x, T* y, const ConvParamsT<T>& p,
                       std::int64_t batch, std::int64_t len, std::int64_t out_len) {
    const std::int64_t c_in = p.c_in();
    const std::int64_t c_out = p.c_out();
    const std::int64_t k = p.kernel();
    const std::int64_t pad = p.padding;
    const T* w = p.weight.ptr();

    for (std::int64_t b = 0; b < batch; ++b) {
        const T* xb = x + b * c_in * len;
        T* yb = y + b * c_out * out_len;
        for (std::int64_t co = 0; co < c_out; ++co) {
            T* yrow = yb + co * out_len;
            for (std::int64_t ci = 0; ci < c_in; ++ci) {
                const T* xrow = xb + ci * len;
                const T* wrow = w + (co * c_in + ci) * k;
                if (p.stride == 1) {
                    for (std::int64_t kk = 0; kk < k; ++kk) {
                        // valid lo range: 0 <= lo + kk - pad < len
                        const std::int64_t lo0 = std::max<std::int64_t>(0, pad - kk);
                        const std::int64_t lo1 = std::min(out_len, len + pad - kk);
                        if (lo1 <= lo0) continue;
                        kern::axpy_t(wrow[kk], xrow + lo0 + kk - pad, yrow + lo0,
                                     static_cast<std::size_t>(lo1 - lo0));
                    }
                } else {
                    for (std::int64_t lo = 0; lo < out_len; ++lo) {
                        T acc = T(0);
                        for (std::int64_t kk = 0; kk < k; ++kk) {
                            const std::int64_t li = lo * p.stride + kk - pad;
                            if (li >= 0 && li < len) acc += wrow[kk] * xrow[li];
                        }
                        yrow[lo] += acc;
                    }
                }
            }
        }
    }
}

template <class T>
void conv1d_backward_accumulate(const T* grad_out, const T* x,
                                T* grad_x, T* grad_w, T* grad_b,
                                const ConvParamsT<T>& p,
                                std::int64_t batch, std::int64_t len, std::int64_t out_len) {
    const std::int64_t c_in = p.c_in();
    const std::int64_t c_out = p.c_out();
    const std::int64_t k = p.kernel();
    const std::int64_t pad = p.padding;
    const T* w = p.weight.ptr();

    for (std::int64_t b = 0; b < batch; ++b) {
        const T* gb = grad_out + b * c_out * out_len;
        const T* xb = x + b * c_in * len;
        T* gxb = grad_x + b * c_in * len;
        for (std::int64_t co = 0; co < c_out; ++co) {
            const T* grow = gb + co * out_len;
            grad_b[co] += kern::sum_t(grow, static_cast<std::size_t>(out_len));
            for (std::int64_t ci = 0; ci < c_in; ++ci) {
                const T* xrow = xb + ci * len;
                T* gxrow = gxb + ci * len;
                const T* wrow = w + (co * c_in + ci) * k;
                T* gwrow = grad_w + (co * c_in + ci) * k;
                if (p.stride == 1) {
                    for (std::int64_t kk = 0; kk < k; ++kk) {
                        const std::int64_t lo0 = std::max<std::int64_t>(0, pad - kk);
                        const std::int64_t lo1 = std::min(out_len, len + pad - kk);
                        if (lo1 <= lo0) continue;
                        const std::size_t n = static_cast<std::size_t>(lo1 - lo0);
                        gwrow[kk] += kern::dot_t(xrow + lo0 + kk - pad, grow + lo0, n);
                        kern::axpy_t(wrow[kk], grow + lo0, gxrow + lo0 + kk - pad, n);
                    }
                } else {
                    for (std::int64_t lo = 0; lo < out_len; ++lo) {
                        const T g = grow[lo];
                        for (std::int64_t kk = 0; kk < k; ++kk) {
                            const std::int64_t li = lo * p.stride + kk - pad;
                            if (li >= 0 && li < len) {
                                gwrow[kk] += xrow[li] * g;
                                gxrow[li] += wrow[kk] * g;
                            }
                        }
                    }
                }
            }
        }
    }
}

template <class T>
void require_tape(const Conv1dTapeT<T>& tape) {
    if (!tape.valid || tape.consumed) throw NumericError("conv1d backward: missing tape entry");
}

}  // namespace

template <class T>
TensorT<T> conv1d_forward(const TensorT<T>& x, const ConvParamsT<T>& p, Conv1dTapeT<T>* tape) {
    check_conv_params(p);
    if (x.rank() != 3) throw ShapeError("conv1d input must be [B,C_in,L]");
    if (x.dim(1) != p.c_in()) {
        throw ShapeError("conv1d channel mismatch: input " + x.shape_str());
    }
    const std::int64_t batch = x.dim(0);
    const std::int64_t len = x.dim(2);
    const std::int64_t out_len = conv1d_out_len(len, p.kernel(), p.stride, p.padding);

    TensorT<T> y({batch, p.c_out(), out_len});
    for (std::int64_t b = 0; b < batch; ++b) {
        for (std::int64_t co = 0; co < p.c_out(); ++co) {
            T* row = y.ptr() + (b * p.c_out() + co) * out_len;
            std::fill(row, row + out_len, p.bias[static_cast<std::size_t>(co)]);
        }
    }
    conv1d_accumulate(x.ptr(), y.ptr(), p, batch, len, out_len);
    ensure_finite(y, "conv1d_forward");
    if (tape) {
        tape->input = x;
        tape->valid = true;
        tape->consumed = false;
    }
    return y;
}

template <class T>
Conv1dGradsT<T> conv1d_backward(const TensorT<T>& grad_out, Conv1dTapeT<T>& tape,
                                const ConvParamsT<T>& p) {
    require_tape(tape);
    const TensorT<T>& x = tape.input;
    if (grad_out.rank() != 3 || grad_out.dim(0) != x.dim(0) || grad_out.dim(1) != p.c_out()) {
        throw ShapeError("conv1d backward grad shape mismatch");
    }
    const std::int64_t batch = x.dim(0);
    const std::int64_t len = x.dim(2);
    const std::int64_t out_len = grad_out.dim(2);

    Conv1dGradsT<T> g{TensorT<T>(x.shape), TensorT<T>(p.weight.shape), TensorT<T>(p.bias.shape)};
    conv1d_backward_accumulate(grad_out.ptr(), x.ptr(), g.input.ptr(), g.weight.ptr(),
                               g.bias.ptr(), p, batch, len, out_len);
    tape.consumed = true;
    return g;
}

template <class T>
TensorT<T> conv1d_train_forward(const TensorT<T>& x, const ConvParamsT<T>& p,
                                Conv1dTapeT<T>* tape) {
    check_conv_params(p);
    if (x.rank() != 4) throw ShapeError("train conv input must be [T,B,C_in,L]");
    if (x.dim(2) != p.c_in()) throw ShapeError("train conv channel mismatch");
    const std::int64_t steps = x.dim(0);
    const std::int64_t batch = x.dim(1);
    const std::int64_t len = x.dim(3);
    const std::int64_t out_len = conv1d_out_len(len, p.kernel(), p.stride, p.padding);

    TensorT<T> y({steps, batch, p.c_out(), out_len});
    const std::int64_t in_stride = batch * p.c_in() * len;
    const std::int64_t out_stride = batch * p.c_out() * out_len;
    for (std::int64_t t = 0; t < steps; ++t) {
        T* yt = y.ptr() + t * out_stride;
        for (std::int64_t b = 0; b < batch; ++b) {
            for (std::int64_t co = 0; co < p.c_out(); ++co) {
                T* row = yt + (b * p.c_out() + co) * out_len;
                std::fill(row, row + out_len, p.bias[static_cast<std::size_t>(co)]);
            }
        }
        conv1d_accumulate(x.ptr() + t * in_stride, yt, p, batch, len, out_len);
    }
    ensure_finite(y, "conv1d_train_forward");
    if (tape) {
        tape->input = x;
        tape->valid = true;
        tape->consumed = false;
    }
    return y;
}

template <class T>
Conv1dGradsT<T> conv1d_train_backward(const TensorT<T>& grad_out, Conv1dTapeT<T>& tape,
                                      const ConvParamsT<T>& p) {
    require_tape(tape);
    const TensorT<T>& x = tape.input;
    if (grad_out.rank() != 4 || grad_out.dim(0) != x.dim(0) || grad_out.dim(1) != x.dim(1)) {
        throw ShapeError("train conv backward grad shape mismatch");
    }
    const std::int64_t steps = x.dim(0);
    const std::int64_t batch = x.dim(1);
    const std::int64_t len = x.dim(3);
    const std::int64_t out_len = grad_out.dim(3);

    Conv1dGradsT<T> g{TensorT<T>(x.shape), TensorT<T>(p.weight.shape), TensorT<T>(p.bias.shape)};
    const std::int64_t in_stride = batch * p.c_in() * len;
    const std::int64_t out_stride = batch * p.c_out() * out_len;
    for (std::int64_t t = 0; t < steps; ++t) {
        conv1d_backward_accumulate(grad_out.ptr() + t * out_stride, x.ptr() + t * in_stride,
                                   g.input.ptr() + t * in_stride, g.weight.ptr(), g.bias.ptr(),
                                   p, batch, len, out_len);
    }
    tape.consumed = true;
    return g;
}

template <class T>
TensorT<T> linear_forward(const TensorT<T>& x, const LinearParamsT<T>& p, LinearTapeT<T>* tape) {
    if (x.rank() != 2) throw ShapeError("linear input must be [B,D_in]");
    if (p.weight.rank() != 2 || p.weight.dim(1) != x.dim(1)) {
        throw ShapeError("linear weight mismatch: input " + x.shape_str() + " weight " +
                         p.weight.shape_str());
    }
    const std::int64_t batch = x.dim(0);
    const std::int64_t d_in = x.dim(1);
    const std::int64_t d_out = p.weight.dim(0);

    TensorT<T> y({batch, d_out});
    for (std::int64_t b = 0; b < batch; ++b) {
        const T* xrow = x.ptr() + b * d_in;
        T* yrow = y.ptr() + b * d_out;
        for (std::int64_t o = 0; o < d_out; ++o) {
            yrow[o] = p.bias[static_cast<std::size_t>(o)] +
                      kern::dot_t(p.weight.ptr() + o * d_in, xrow, static_cast<std::size_t>(d_in));
        }
    }
    ensure_finite(y, "linear_forward");
    if (tape) {
        tape->input = x;
        tape->valid = true;
        tape->consumed = false;
    }
    return y;
}

template <class T>
LinearGradsT<T> linear_backward(const TensorT<T>& grad_out, LinearTapeT<T>& tape,
                                const LinearParamsT<T>& p) {
    if (!tape.valid || tape.consumed) throw NumericError("linear backward: missing tape entry");
    const TensorT<T>& x = tape.input;
    if (grad_out.rank() != 2 || grad_out.dim(0) != x.dim(0) ||
        grad_out.dim(1) != p.weight.dim(0)) {
        throw ShapeError("linear backward grad shape mismatch");
    }
    const std::int64_t batch = x.dim(0);
    const std::int64_t d_in = x.dim(1);
    const std::int64_t d_out = p.weight.dim(0);

    LinearGradsT<T> g{TensorT<T>(x.shape), TensorT<T>(p.weight.shape), TensorT<T>(p.bias.shape)};
    for (std::int64_t b = 0; b < batch; ++b) {
        const T* xrow = x.ptr() + b * d_in;
        const T* grow = grad_out.ptr() + b * d_out;
        T* gxrow = g.input.ptr() + b * d_in;
        for (std::int64_t o = 0; o < d_out; ++o) {
            const T go = grow[o];
            g.bias[static_cast<std::size_t>(o)] += go;
            kern::axpy_t(go, xrow, g.weight.ptr() + o * d_in, static_cast<std::size_t>(d_in));
            kern::axpy_t(go, p.weight.ptr() + o * d_in, gxrow, static_cast<std::size_t>(d_in));
        }
    }
    tape.consumed = true;
    return g;
}

template <class T>
TensorT<T> elementwise_add(const TensorT<T>& x, const TensorT<T>& y) {
    if (y.rank() > x.rank()) throw ShapeError("elementwise_add: y rank exceeds x");
    const std::size_t off = x.rank() - y.rank();
    for (std::size_t i = 0; i < y.rank(); ++i) {
        if (x.shape[off + i] != y.shape[i]) {
            throw ShapeError("elementwise_add: incompatible shapes " + x.shape_str() + " vs " +
                             y.shape_str());
        }
    }
    TensorT<T> out = x;
    const std::size_t block = static_cast<std::size_t>(y.numel());
    if (block == 0) return out;
    const std::size_t repeats = static_cast<std::size_t>(x.numel()) / block;
    for (std::size_t r = 0; r < repeats; ++r) {
        kern::add_inplace_t(out.ptr() + r * block, y.ptr(), block);
    }
    return out;
}

template <class T>
TensorT<T> elementwise_add_backward_y(const TensorT<T>& grad_out,
                                      const std::vector<std::int64_t>& y_shape) {
    TensorT<T> gy(y_shape);
    const std::size_t block = static_cast<std::size_t>(gy.numel());
    if (block == 0) return gy;
    if (static_cast<std::size_t>(grad_out.numel()) % block != 0) {
        throw ShapeError("elementwise_add backward: incompatible shapes");
    }
    const std::size_t repeats = static_cast<std::size_t>(grad_out.numel()) / block;
    for (std::size_t r = 0; r < repeats; ++r) {
        kern::add_inplace_t(gy.ptr(), grad_out.ptr() + r * block, block);
    }
    return gy;
}

template <class T>
TensorT<T> elementwise_scale(const TensorT<T>& x, T a) {
    TensorT<T> out = x;
    kern::scale_inplace_t(out.ptr(), a, static_cast<std::size_t>(out.numel()));
    return out;
}

namespace {

template <class T>
void axis_extents(const TensorT<T>& x, std::size_t axis,
                  std::int64_t& outer, std::int64_t& len, std::int64_t& inner) {
    if (axis >= x.rank()) throw ShapeError("mean_over_axis: axis out of range");
    outer = 1;
    inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= x.shape[i];
    len = x.shape[axis];
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.shape[i];
    if (len == 0) throw ShapeError("mean_over_axis: empty axis");
}

}  // namespace

template <class T>
TensorT<T> mean_over_axis(const TensorT<T>& x, std::size_t axis) {
    std::int64_t outer, len, inner;
    axis_extents(x, axis, outer, len, inner);
    std::vector<std::int64_t> out_shape;
    for (std::size_t i = 0; i < x.rank(); ++i) {
        if (i != axis) out_shape.push_back(x.shape[i]);
    }
    TensorT<T> out(out_shape);
    const T inv = T(1) / static_cast<T>(len);
    for (std::int64_t o = 0; o < outer; ++o) {
        T* orow = out.ptr() + o * inner;
        const T* xblock = x.ptr() + o * len * inner;
        for (std::int64_t a = 0; a < len; ++a) {
            kern::add_inplace_t(orow, xblock + a * inner, static_cast<std::size_t>(inner));
        }
        kern::scale_inplace_t(orow, inv, static_cast<std::size_t>(inner));
    }
    return out;
}

template <class T>
TensorT<T> mean_over_axis_backward(const TensorT<T>& grad_out,
                                   const std::vector<std::int64_t>& input_shape,
                                   std::size_t axis) {
    TensorT<T> gx(input_shape);
    std::int64_t outer, len, inner;
    axis_extents(gx, axis, outer, len, inner);
    const T inv = T(1) / static_cast<T>(len);
    for (std::int64_t o = 0; o < outer; ++o) {
        const T* grow = grad_out.ptr() + o * inner;
        T* gblock = gx.ptr() + o * len * inner;
        for (std::int64_t a = 0; a < len; ++a) {
            kern::axpy_t(inv, grow, gblock + a * inner, static_cast<std::size_t>(inner));
        }
    }
    return gx;
}

template <class T>
TensorT<T> transpose_last2(const TensorT<T>& x) {
    if (x.rank() != 3) throw ShapeError("transpose_last2 expects rank 3");
    const std::int64_t b = x.dim(0), h = x.dim(1), d = x.dim(2);
    TensorT<T> out({b, d, h});
    for (std::int64_t i = 0; i < b; ++i) {
        for (std::int64_t j = 0; j < h; ++j) {
            for (std::int64_t k = 0; k < d; ++k) {
                out[out.at(i, k, j)] = x[x.at(i, j, k)];
            }
        }
    }
    return out;
}

#define SDP_INSTANTIATE_OPS(T)                                                                \
    template TensorT<T> conv1d_forward<T>(const TensorT<T>&, const ConvParamsT<T>&,          \
                                          Conv1dTapeT<T>*);                                  \
    template Conv1dGradsT<T> conv1d_backward<T>(const TensorT<T>&, Conv1dTapeT<T>&,          \
                                                const ConvParamsT<T>&);                      \
    template TensorT<T> conv1d_train_forward<T>(const TensorT<T>&, const ConvParamsT<T>&,    \
                                                Conv1dTapeT<T>*);                            \
    template Conv1dGradsT<T> conv1d_train_backward<T>(const TensorT<T>&, Conv1dTapeT<T>&,    \
                                                      const ConvParamsT<T>&);                \
    template TensorT<T> linear_forward<T>(const TensorT<T>&, const LinearParamsT<T>&,        \
                                          LinearTapeT<T>*);                                  \
    template LinearGradsT<T> linear_backward<T>(const TensorT<T>&, LinearTapeT<T>&,          \
                                                const LinearParamsT<T>&);                    \
    template TensorT<T> elementwise_add<T>(const TensorT<T>&, const TensorT<T>&);            \
    template TensorT<T> elementwise_add_backward_y<T>(const TensorT<T>&,                     \
                                                      const std::vector<std::int64_t>&);     \
    template TensorT<T> elementwise_scale<T>(const TensorT<T>&, T);                          \
    template TensorT<T> mean_over_axis<T>(const TensorT<T>&, std::size_t);                   \
    template TensorT<T> mean_over_axis_backward<T>(const TensorT<T>&,                        \
                                                   const std::vector<std::int64_t>&,         \
                                                   std::size_t);                             \
    template TensorT<T> transpose_last2<T>(const TensorT<T>&);

SDP_INSTANTIATE_OPS(float)
SDP_INSTANTIATE_OPS(double)

#undef SDP_INSTANTIATE_OPS

}  // namespace sdp
