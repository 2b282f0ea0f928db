#include "sdp/lif.hpp"

#include <algorithm>

#include "sdp/kernels/kernels.hpp"

namespace sdp {

template <class T>
TensorT<T> LifParamsT<T>::theta() const {
    return theta_of_m(m);
}

template <class T>
TensorT<T> theta_of_m(const TensorT<T>& m) {
    if (runtime_checks_enabled() && !m.all_finite()) {
        throw NumericError("theta_of_m: non-finite m");
    }
    TensorT<T> out(m.shape);
    for (std::int64_t i = 0; i < m.numel(); ++i) {
        out[static_cast<std::size_t>(i)] = theta_of_m_scalar(m[static_cast<std::size_t>(i)]);
    }
    return out;
}

template <class T>
TensorT<T> dtheta_dm(const TensorT<T>& m) {
    if (runtime_checks_enabled() && !m.all_finite()) {
        throw NumericError("dtheta_dm: non-finite m");
    }
    TensorT<T> out(m.shape);
    for (std::int64_t i = 0; i < m.numel(); ++i) {
        out[static_cast<std::size_t>(i)] = dtheta_dm_scalar(m[static_cast<std::size_t>(i)]);
    }
    return out;
}

template <class T>
TensorT<T> surrogate_grad(const TensorT<T>& x) {
    TensorT<T> out(x.shape);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        out[static_cast<std::size_t>(i)] = surrogate_grad_scalar(x[static_cast<std::size_t>(i)]);
    }
    return out;
}

namespace {

// [T,B,C,L] or [T,B,C] -> (steps, batch, channels, inner).
template <class T>
void lif_extents(const TensorT<T>& currents, const LifParamsT<T>& params,
                 std::int64_t& steps, std::int64_t& batch,
                 std::int64_t& channels, std::int64_t& inner) {
    if (currents.rank() == 4) {
        steps = currents.dim(0);
        batch = currents.dim(1);
        channels = currents.dim(2);
        inner = currents.dim(3);
    } else if (currents.rank() == 3) {
        steps = currents.dim(0);
        batch = currents.dim(1);
        channels = currents.dim(2);
        inner = 1;
    } else {
        throw ShapeError("lif input must be [T,B,C,L] or [T,B,C]");
    }
    if (params.m.rank() != 1 || params.m.dim(0) != channels) {
        throw ShapeError("lif channel count mismatch: input " + currents.shape_str() +
                         " vs m " + params.m.shape_str());
    }
    if (steps < 1) throw ShapeError("lif needs at least one timestep");
}

template <class T>
inline T ramp(T x) {
    if (x < T(0)) return T(0);
    if (x <= T(0.5)) return x;
    return T(0.5);
}

}  // namespace

template <class T>
TensorT<T> lif_forward(const TensorT<T>& currents, const LifParamsT<T>& params,
                       LifTapeT<T>* tape, FiringMode mode) {
    std::int64_t steps, batch, channels, inner;
    lif_extents(currents, params, steps, batch, channels, inner);
    const TensorT<T> theta = params.theta();

    TensorT<T> u(currents.shape);
    TensorT<T> s(currents.shape);
    const std::int64_t step_stride = batch * channels * inner;
    const std::vector<T> zero_row(static_cast<std::size_t>(inner), T(0));

    for (std::int64_t t = 0; t < steps; ++t) {
        for (std::int64_t b = 0; b < batch; ++b) {
            for (std::int64_t c = 0; c < channels; ++c) {
                const std::int64_t row = (t * batch + b) * channels * inner + c * inner;
                const T* in_row = currents.ptr() + row;
                const T* u_prev = (t == 0) ? zero_row.data() : u.ptr() + row - step_stride;
                const T* s_prev = (t == 0) ? zero_row.data() : s.ptr() + row - step_stride;
                const T th = theta[static_cast<std::size_t>(c)];
                if (mode == FiringMode::binary) {
                    kern::lif_step_t(in_row, u_prev, s_prev, params.tau, th,
                                     u.ptr() + row, s.ptr() + row,
                                     static_cast<std::size_t>(inner));
                } else {
                    for (std::int64_t i = 0; i < inner; ++i) {
                        const T decay = params.tau * u_prev[i];
                        const T ui = decay * (T(1) - s_prev[i]) + in_row[i];
                        u[static_cast<std::size_t>(row + i)] = ui;
                        s[static_cast<std::size_t>(row + i)] = ramp(ui - th);
                    }
                }
            }
        }
    }
    if (tape) {
        tape->u = u;
        tape->s = s;
        tape->valid = true;
        tape->consumed = false;
    }
    return s;
}

template <class T>
LifGradsT<T> lif_backward(const TensorT<T>& grad_out, LifTapeT<T>& tape,
                          const LifParamsT<T>& params) {
    if (!tape.valid || tape.consumed) throw NumericError("lif backward: missing tape");
    if (!grad_out.same_shape(tape.u)) throw ShapeError("lif backward grad shape mismatch");

    std::int64_t steps, batch, channels, inner;
    lif_extents(tape.u, params, steps, batch, channels, inner);
    const TensorT<T> theta = params.theta();
    const TensorT<T> dtheta = dtheta_dm(params.m);

    LifGradsT<T> g{TensorT<T>(tape.u.shape), TensorT<T>(params.m.shape)};
    TensorT<T> grad_theta(params.m.shape);

    const std::int64_t step_stride = batch * channels * inner;
    // du holds dL/du at t+1 for the row being processed.
    std::vector<T> du(static_cast<std::size_t>(inner));

    for (std::int64_t b = 0; b < batch; ++b) {
        for (std::int64_t c = 0; c < channels; ++c) {
            const T th = theta[static_cast<std::size_t>(c)];
            std::fill(du.begin(), du.end(), T(0));
            T gth = T(0);
            for (std::int64_t t = steps - 1; t >= 0; --t) {
                const std::int64_t row = (t * batch + b) * channels * inner + c * inner;
                const T* u_row = tape.u.ptr() + row;
                const T* s_row = tape.s.ptr() + row;
                const T* go_row = grad_out.ptr() + row;
                T* gi_row = g.currents.ptr() + row;
                for (std::int64_t i = 0; i < inner; ++i) {
                    // dL/ds[t]: direct cotangent plus the reset path into u[t+1].
                    const T ds = go_row[i] - du[static_cast<std::size_t>(i)] *
                                                 params.tau * u_row[i];
                    const T sg = surrogate_grad_scalar(u_row[i] - th);
                    // dL/du[t]: through the spike plus the membrane carryover.
                    const T dui = ds * sg + du[static_cast<std::size_t>(i)] *
                                                params.tau * (T(1) - s_row[i]);
                    gi_row[i] = dui;
                    gth -= ds * sg;
                    du[static_cast<std::size_t>(i)] = dui;
                }
            }
            grad_theta[static_cast<std::size_t>(c)] += gth;
        }
    }
    for (std::int64_t c = 0; c < channels; ++c) {
        g.m[static_cast<std::size_t>(c)] =
            grad_theta[static_cast<std::size_t>(c)] * dtheta[static_cast<std::size_t>(c)];
    }
    tape.consumed = true;
    return g;
}

template <class T>
T min_kink_distance(const LifTapeT<T>& tape, const LifParamsT<T>& params) {
    std::int64_t steps, batch, channels, inner;
    lif_extents(tape.u, params, steps, batch, channels, inner);
    const TensorT<T> theta = params.theta();
    T best = std::numeric_limits<T>::max();
    for (std::int64_t t = 0; t < steps; ++t) {
        for (std::int64_t b = 0; b < batch; ++b) {
            for (std::int64_t c = 0; c < channels; ++c) {
                const std::int64_t row = (t * batch + b) * channels * inner + c * inner;
                const T th = theta[static_cast<std::size_t>(c)];
                for (std::int64_t i = 0; i < inner; ++i) {
                    const T x = tape.u[static_cast<std::size_t>(row + i)] - th;
                    best = std::min(best, std::min(std::abs(x), std::abs(x - T(0.5))));
                }
            }
        }
    }
    return best;
}

#define SDP_INSTANTIATE_LIF(T)                                                      \
    template struct LifParamsT<T>;                                                  \
    template TensorT<T> theta_of_m<T>(const TensorT<T>&);                           \
    template TensorT<T> dtheta_dm<T>(const TensorT<T>&);                            \
    template TensorT<T> surrogate_grad<T>(const TensorT<T>&);                       \
    template TensorT<T> lif_forward<T>(const TensorT<T>&, const LifParamsT<T>&,     \
                                       LifTapeT<T>*, FiringMode);                   \
    template LifGradsT<T> lif_backward<T>(const TensorT<T>&, LifTapeT<T>&,          \
                                          const LifParamsT<T>&);                    \
    template T min_kink_distance<T>(const LifTapeT<T>&, const LifParamsT<T>&);

SDP_INSTANTIATE_LIF(float)
SDP_INSTANTIATE_LIF(double)

#undef SDP_INSTANTIATE_LIF

}  // namespace sdp
