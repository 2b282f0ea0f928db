#pragma once

#include "sdp/lif.hpp"
#include "sdp/ops.hpp"

namespace sdp {

// Static tensor -> T_S-step spike train. Direct coding: conv(x) is computed
// once and injected as an identical current at every timestep, so the
// encoder stays deterministic and differentiable through the usual
// surrogate machinery.
template <class T>
struct EncoderBlockT {
    ConvParamsT<T> conv;
    LifParamsT<T> lif;
    std::int64_t t_s = 4;
};

// Spike train -> static tensor: per-timestep conv with shared weights, then
// arithmetic mean over the time axis, so T_S does not rescale the output.
template <class T>
struct DecoderBlockT {
    ConvParamsT<T> conv;
};

template <class T>
struct EncodeTapeT {
    Conv1dTapeT<T> conv;
    LifTapeT<T> lif;
};

template <class T>
struct DecodeTapeT {
    Conv1dTapeT<T> conv;
    std::int64_t t_s = 0;
};

template <class T>
struct EncodeGradsT {
    TensorT<T> input;      // [B,C,L]
    Conv1dGradsT<T> conv;  // weight/bias (input field unused: same tensor as .input)
    TensorT<T> lif_m;
};

template <class T>
struct DecodeGradsT {
    TensorT<T> input;  // [T,B,C,L]
    Conv1dGradsT<T> conv;
};

template <class T>
TensorT<T> encode(const TensorT<T>& x_static, const EncoderBlockT<T>& enc,
                  EncodeTapeT<T>* tape = nullptr, FiringMode mode = FiringMode::binary);

template <class T>
EncodeGradsT<T> encode_backward(const TensorT<T>& grad_out, EncodeTapeT<T>& tape,
                                const EncoderBlockT<T>& enc);

template <class T>
TensorT<T> decode(const TensorT<T>& spikes, const DecoderBlockT<T>& dec,
                  DecodeTapeT<T>* tape = nullptr, bool checked = true);

template <class T>
DecodeGradsT<T> decode_backward(const TensorT<T>& grad_out, DecodeTapeT<T>& tape,
                                const DecoderBlockT<T>& dec);

}  // namespace sdp
