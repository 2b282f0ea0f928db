#pragma once

#include <cstdint>

#include "sdp/tensor.hpp"

namespace sdp {

// Spike emission mode. `binary` is the network's real behavior (Heaviside,
// H(0)=1). `smoothed` replaces the Heaviside with the piecewise-linear ramp
// whose derivative is the surrogate window; it exists so finite differences
// of the forward can validate the backward pass, and is never used in
// training or inference.
enum class FiringMode { binary, smoothed };

// Leaky integrate-and-fire layer state:
//   u[t] = tau * u[t-1] * (1 - s[t-1]) + I[t]
//   s[t] = H(u[t] - theta[c])
// with one learnable threshold per channel, reparameterized through
// theta = m / sqrt(1 + m^2) so thresholds stay in (-1, 1).
template <class T>
struct LifParamsT {
    T tau = T(0.5);   // membrane decay, shared per layer
    TensorT<T> m;     // [C] raw threshold parameters, unbounded

    TensorT<T> theta() const;
};

// Per-timestep membranes (pre-reset, as defined by the recurrence) and
// spike outputs, recorded during forward.
template <class T>
struct LifTapeT {
    TensorT<T> u;  // same shape as the input currents
    TensorT<T> s;
    bool valid = false;
    bool consumed = false;
};

template <class T>
struct LifGradsT {
    TensorT<T> currents;  // [T,B,C,L] (or [T,B,C])
    TensorT<T> m;         // [C]
};

// theta = m / sqrt(1 + m^2), elementwise.
template <class T>
TensorT<T> theta_of_m(const TensorT<T>& m);

// d theta / d m = 1 / ((1 + m^2) * sqrt(1 + m^2)), elementwise.
template <class T>
TensorT<T> dtheta_dm(const TensorT<T>& m);

template <class T>
inline T theta_of_m_scalar(T m) {
    return m / std::sqrt(T(1) + m * m);
}

template <class T>
inline T dtheta_dm_scalar(T m) {
    const T q = T(1) + m * m;
    return T(1) / (q * std::sqrt(q));
}

// Rectangular surrogate for the Heaviside derivative:
// 1 on 0 <= x <= 0.5 (both ends inclusive), 0 elsewhere.
template <class T>
inline T surrogate_grad_scalar(T x) {
    return (x >= T(0) && x <= T(0.5)) ? T(1) : T(0);
}

template <class T>
TensorT<T> surrogate_grad(const TensorT<T>& x);

// currents: [T,B,C,L] or [T,B,C]; membrane starts at zero every call.
template <class T>
TensorT<T> lif_forward(const TensorT<T>& currents, const LifParamsT<T>& params,
                       LifTapeT<T>* tape = nullptr, FiringMode mode = FiringMode::binary);

// BPTT through the recurrence. grad_m[c] accumulates, over time and over all
// neurons sharing channel c, grad_s * S'(u - theta) * (-1) * dtheta/dm, where
// grad_s carries both the direct cotangent and the reset-path contribution.
template <class T>
LifGradsT<T> lif_backward(const TensorT<T>& grad_out, LifTapeT<T>& tape,
                          const LifParamsT<T>& params);

// Smallest distance of any (u - theta) on the tape to the surrogate kinks
// {0, 0.5}; finite-difference checks require this to be comfortably nonzero.
template <class T>
T min_kink_distance(const LifTapeT<T>& tape, const LifParamsT<T>& params);

}  // namespace sdp
