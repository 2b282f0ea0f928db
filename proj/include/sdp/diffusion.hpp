#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sdp/unet.hpp"

namespace sdp {

// DDPM noise schedule over T_D steps, kept in double; consumers cast.
struct NoiseSchedule {
    std::int64_t t_d = 0;
    std::vector<double> beta;
    std::vector<double> alpha;      // 1 - beta
    std::vector<double> alpha_bar;  // cumulative product of alpha
};

// kind: "linear" (beta 1e-4 -> 0.02) or "cosine" (squared-cosine alpha_bar).
NoiseSchedule make_schedule(const std::string& kind, std::int64_t t_d);

template <class T>
struct DiffusionBatchT {
    TensorT<T> x0;                 // clean action windows [B,H,D_a], unit scale
    std::vector<std::int64_t> t;   // [B], uniform over {0..T_D-1}
    TensorT<T> eps;                // [B,H,D_a], unit Gaussian
    TensorT<T> obs;                // [B,obs_dim]
};

// x_t = sqrt(alpha_bar[t]) * x0 + sqrt(1 - alpha_bar[t]) * eps
template <class T>
TensorT<T> forward_diffuse(const TensorT<T>& x0, const std::vector<std::int64_t>& t,
                           const TensorT<T>& eps, const NoiseSchedule& sched);

// Mean squared error between eps and the network's prediction; when
// with_backward is set, populates every parameter gradient (zeroing first).
template <class T>
T loss_eps_mse(SpikingUNetT<T>& net, const DiffusionBatchT<T>& batch,
               const NoiseSchedule& sched, bool with_backward = true);

// Any noise predictor (x_t, t, obs) -> eps_hat. Tests substitute analytic
// oracles for the U-Net here.
template <class T>
using DenoiserFnT =
    std::function<TensorT<T>(const TensorT<T>&, std::int64_t, const TensorT<T>&)>;

// Ancestral DDPM sampling from x_{T_D} ~ N(0,I); deterministic given seed.
template <class T>
TensorT<T> ddpm_sample(const DenoiserFnT<T>& denoiser, const TensorT<T>& obs,
                       std::int64_t batch, std::int64_t horizon, std::int64_t action_dim,
                       const NoiseSchedule& sched, std::uint64_t seed);

}  // namespace sdp
