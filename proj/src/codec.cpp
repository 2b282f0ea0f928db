#include "sdp/codec.hpp"

#include "sdp/kernels/kernels.hpp"

namespace sdp {

template <class T>
TensorT<T> encode(const TensorT<T>& x_static, const EncoderBlockT<T>& enc,
                  EncodeTapeT<T>* tape, FiringMode mode) {
    if (enc.t_s < 1) throw ShapeError("encode: T_S must be >= 1");
    const TensorT<T> current = conv1d_forward(x_static, enc.conv,
                                              tape ? &tape->conv : nullptr);
    const std::int64_t batch = current.dim(0);
    const std::int64_t ch = current.dim(1);
    const std::int64_t len = current.dim(2);

    TensorT<T> train({enc.t_s, batch, ch, len});
    const std::size_t block = static_cast<std::size_t>(current.numel());
    for (std::int64_t t = 0; t < enc.t_s; ++t) {
        std::copy(current.ptr(), current.ptr() + block,
                  train.ptr() + static_cast<std::size_t>(t) * block);
    }
    return lif_forward(train, enc.lif, tape ? &tape->lif : nullptr, mode);
}

template <class T>
EncodeGradsT<T> encode_backward(const TensorT<T>& grad_out, EncodeTapeT<T>& tape,
                                const EncoderBlockT<T>& enc) {
    LifGradsT<T> lg = lif_backward(grad_out, tape.lif, enc.lif);
    // The same injected current feeds every timestep, so its gradient is the
    // sum over the time axis.
    const std::int64_t steps = lg.currents.dim(0);
    std::vector<std::int64_t> frame_shape(lg.currents.shape.begin() + 1,
                                          lg.currents.shape.end());
    TensorT<T> grad_current(frame_shape);
    const std::size_t block = static_cast<std::size_t>(grad_current.numel());
    for (std::int64_t t = 0; t < steps; ++t) {
        kern::add_inplace_t(grad_current.ptr(),
                            lg.currents.ptr() + static_cast<std::size_t>(t) * block, block);
    }
    Conv1dGradsT<T> cg = conv1d_backward(grad_current, tape.conv, enc.conv);
    EncodeGradsT<T> out;
    out.input = std::move(cg.input);
    out.conv.weight = std::move(cg.weight);
    out.conv.bias = std::move(cg.bias);
    out.lif_m = std::move(lg.m);
    return out;
}

template <class T>
TensorT<T> decode(const TensorT<T>& spikes, const DecoderBlockT<T>& dec,
                  DecodeTapeT<T>* tape, bool checked) {
    if (spikes.rank() != 4) throw ShapeError("decode input must be [T,B,C,L]");
    if (checked) ensure_binary(spikes, "decode");
    const TensorT<T> per_step = conv1d_train_forward(spikes, dec.conv,
                                                     tape ? &tape->conv : nullptr);
    if (tape) tape->t_s = spikes.dim(0);
    return mean_over_axis(per_step, 0);
}

template <class T>
DecodeGradsT<T> decode_backward(const TensorT<T>& grad_out, DecodeTapeT<T>& tape,
                                const DecoderBlockT<T>& dec) {
    std::vector<std::int64_t> per_step_shape = grad_out.shape;
    per_step_shape.insert(per_step_shape.begin(), tape.t_s);
    const TensorT<T> grad_per_step =
        mean_over_axis_backward(grad_out, per_step_shape, 0);
    Conv1dGradsT<T> cg = conv1d_train_backward(grad_per_step, tape.conv, dec.conv);
    DecodeGradsT<T> out;
    out.input = std::move(cg.input);
    out.conv.weight = std::move(cg.weight);
    out.conv.bias = std::move(cg.bias);
    return out;
}

#define SDP_INSTANTIATE_CODEC(T)                                                     \
    template TensorT<T> encode<T>(const TensorT<T>&, const EncoderBlockT<T>&,        \
                                  EncodeTapeT<T>*, FiringMode);                      \
    template EncodeGradsT<T> encode_backward<T>(const TensorT<T>&, EncodeTapeT<T>&,  \
                                                const EncoderBlockT<T>&);            \
    template TensorT<T> decode<T>(const TensorT<T>&, const DecoderBlockT<T>&,        \
                                  DecodeTapeT<T>*, bool);                            \
    template DecodeGradsT<T> decode_backward<T>(const TensorT<T>&, DecodeTapeT<T>&,  \
                                                const DecoderBlockT<T>&);

SDP_INSTANTIATE_CODEC(float)
SDP_INSTANTIATE_CODEC(double)

#undef SDP_INSTANTIATE_CODEC

}  // namespace sdp
