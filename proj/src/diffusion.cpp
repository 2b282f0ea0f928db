#include "sdp/diffusion.hpp"

#include <cmath>

#include "sdp/kernels/kernels.hpp"

namespace sdp {

NoiseSchedule make_schedule(const std::string& kind, std::int64_t t_d) {
    if (t_d < 1) throw ConfigError("schedule: T_D must be >= 1");
    NoiseSchedule s;
    s.t_d = t_d;
    s.beta.resize(static_cast<std::size_t>(t_d));
    if (kind == "linear") {
        const double b0 = 1e-4, b1 = 0.02;
        for (std::int64_t t = 0; t < t_d; ++t) {
            s.beta[static_cast<std::size_t>(t)] =
                (t_d == 1) ? b0 : b0 + (b1 - b0) * static_cast<double>(t) /
                                           static_cast<double>(t_d - 1);
        }
    } else if (kind == "cosine") {
        // alpha_bar(u) = cos((u + 0.008)/1.008 * pi/2)^2, beta clipped below 0.999.
        auto abar = [](double u) {
            const double v = std::cos((u + 0.008) / 1.008 * 1.5707963267948966);
            return v * v;
        };
        const double a0 = abar(0.0);
        double prev = 1.0;
        for (std::int64_t t = 0; t < t_d; ++t) {
            const double cur = abar(static_cast<double>(t + 1) / static_cast<double>(t_d)) / a0;
            double b = 1.0 - cur / prev;
            b = std::min(std::max(b, 1e-8), 0.999);
            s.beta[static_cast<std::size_t>(t)] = b;
            prev *= 1.0 - b;
        }
    } else {
        throw ConfigError("schedule: unknown kind '" + kind + "'");
    }
    s.alpha.resize(s.beta.size());
    s.alpha_bar.resize(s.beta.size());
    double prod = 1.0;
    for (std::size_t i = 0; i < s.beta.size(); ++i) {
        if (!(s.beta[i] > 0.0 && s.beta[i] < 1.0)) {
            throw NumericError("schedule: beta out of (0,1)");
        }
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
    }
    return s;
}

template <class T>
TensorT<T> forward_diffuse(const TensorT<T>& x0, const std::vector<std::int64_t>& t,
                           const TensorT<T>& eps, const NoiseSchedule& sched) {
    if (!x0.same_shape(eps)) throw ShapeError("forward_diffuse: x0/eps shape mismatch");
    if (x0.rank() != 3 || static_cast<std::int64_t>(t.size()) != x0.dim(0)) {
        throw ShapeError("forward_diffuse: bad batch");
    }
    TensorT<T> xt(x0.shape);
    const std::int64_t per = x0.dim(1) * x0.dim(2);
    for (std::int64_t b = 0; b < x0.dim(0); ++b) {
        const std::int64_t tb = t[static_cast<std::size_t>(b)];
        if (tb < 0 || tb >= sched.t_d) throw ConfigError("forward_diffuse: t out of range");
        const T a = static_cast<T>(std::sqrt(sched.alpha_bar[static_cast<std::size_t>(tb)]));
        const T c = static_cast<T>(std::sqrt(1.0 - sched.alpha_bar[static_cast<std::size_t>(tb)]));
        const T* x0r = x0.ptr() + b * per;
        const T* er = eps.ptr() + b * per;
        T* xr = xt.ptr() + b * per;
        for (std::int64_t i = 0; i < per; ++i) xr[i] = a * x0r[i] + c * er[i];
    }
    return xt;
}

template <class T>
T loss_eps_mse(SpikingUNetT<T>& net, const DiffusionBatchT<T>& batch,
               const NoiseSchedule& sched, bool with_backward) {
    const TensorT<T> xt = forward_diffuse(batch.x0, batch.t, batch.eps, sched);
    UNetTapeT<T> tape;
    const TensorT<T> pred =
        unet_forward(net, xt, batch.t, batch.obs, with_backward ? &tape : nullptr);

    const std::int64_t n = pred.numel();
    TensorT<T> diff(pred.shape);
    for (std::int64_t i = 0; i < n; ++i) {
        diff[static_cast<std::size_t>(i)] =
            pred[static_cast<std::size_t>(i)] - batch.eps[static_cast<std::size_t>(i)];
    }
    const T loss = kern::sq_sum_t(diff.ptr(), static_cast<std::size_t>(n)) / static_cast<T>(n);
    if (with_backward) {
        kern::scale_inplace_t(diff.ptr(), T(2) / static_cast<T>(n), static_cast<std::size_t>(n));
        net.zero_grads();
        unet_backward(net, diff, tape);
    }
    return loss;
}

template <class T>
TensorT<T> ddpm_sample(const DenoiserFnT<T>& denoiser, const TensorT<T>& obs,
                       std::int64_t batch, std::int64_t horizon, std::int64_t action_dim,
                       const NoiseSchedule& sched, std::uint64_t seed) {
    Rng rng(seed);
    TensorT<T> x = TensorT<T>::randn({batch, horizon, action_dim}, rng);
    for (std::int64_t t = sched.t_d - 1; t >= 0; --t) {
        const double a = sched.alpha[static_cast<std::size_t>(t)];
        const double ab = sched.alpha_bar[static_cast<std::size_t>(t)];
        const double b = sched.beta[static_cast<std::size_t>(t)];
        const T coef = static_cast<T>(b / std::sqrt(1.0 - ab));
        const T inv_sqrt_a = static_cast<T>(1.0 / std::sqrt(a));
        const TensorT<T> eps_hat = denoiser(x, t, obs);
        if (!eps_hat.same_shape(x)) throw ShapeError("ddpm_sample: denoiser shape mismatch");
        for (std::int64_t i = 0; i < x.numel(); ++i) {
            x[static_cast<std::size_t>(i)] =
                inv_sqrt_a * (x[static_cast<std::size_t>(i)] -
                              coef * eps_hat[static_cast<std::size_t>(i)]);
        }
        if (t > 0) {
            const double ab_prev = sched.alpha_bar[static_cast<std::size_t>(t - 1)];
            const double var = (1.0 - ab_prev) / (1.0 - ab) * b;
            const T sigma = static_cast<T>(std::sqrt(var));
            for (std::int64_t i = 0; i < x.numel(); ++i) {
                x[static_cast<std::size_t>(i)] += sigma * static_cast<T>(rng.gaussian());
            }
        }
    }
    ensure_finite(x, "ddpm_sample");
    return x;
}

#define SDP_INSTANTIATE_DIFFUSION(T)                                                        \
    template TensorT<T> forward_diffuse<T>(const TensorT<T>&,                              \
                                           const std::vector<std::int64_t>&,               \
                                           const TensorT<T>&, const NoiseSchedule&);        \
    template T loss_eps_mse<T>(SpikingUNetT<T>&, const DiffusionBatchT<T>&,                \
                               const NoiseSchedule&, bool);                                 \
    template TensorT<T> ddpm_sample<T>(const DenoiserFnT<T>&, const TensorT<T>&,           \
                                       std::int64_t, std::int64_t, std::int64_t,           \
                                       const NoiseSchedule&, std::uint64_t);

SDP_INSTANTIATE_DIFFUSION(float)
SDP_INSTANTIATE_DIFFUSION(double)

#undef SDP_INSTANTIATE_DIFFUSION

}  // namespace sdp
