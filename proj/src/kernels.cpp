#include "sdp/kernels/kernels.hpp"

#include <atomic>
#include <stdexcept>

#include "sdp/common.hpp"

namespace sdp {

namespace {
std::atomic<bool> g_runtime_checks{true};
}

bool runtime_checks_enabled() { return g_runtime_checks.load(std::memory_order_relaxed); }
void set_runtime_checks(bool on) { g_runtime_checks.store(on, std::memory_order_relaxed); }

}  // namespace sdp

namespace sdp::kern {

#ifdef SDP_HAVE_AVX2
namespace avx2 {
void axpy(float a, const float* x, float* y, std::size_t n);
float dot(const float* x, const float* y, std::size_t n);
float sum(const float* x, std::size_t n);
float sq_sum(const float* x, std::size_t n);
void add_inplace(float* y, const float* x, std::size_t n);
void scale_inplace(float* x, float a, std::size_t n);
std::size_t count_ones(const float* x, std::size_t n);
void lif_step(const float* in, const float* u_prev, const float* s_prev,
              float tau, float theta, float* u, float* s, std::size_t n);
}  // namespace avx2
#endif

namespace {

bool cpu_has_avx2() {
#if defined(SDP_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

std::atomic<Isa> g_active{[] {
    return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}()};

}  // namespace

Isa detected_isa() { return cpu_has_avx2() ? Isa::avx2 : Isa::scalar; }

Isa active_isa() { return g_active.load(std::memory_order_relaxed); }

void select_isa(Isa isa) {
    if (isa == Isa::avx2 && !cpu_has_avx2()) {
        throw ConfigError("avx2 kernels requested but not supported on this CPU/build");
    }
    g_active.store(isa, std::memory_order_relaxed);
}

const char* isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
    }
    return "?";
}

#ifdef SDP_HAVE_AVX2
#define SDP_DISPATCH(fn, ...)                                  \
    do {                                                       \
        if (active_isa() == Isa::avx2) return avx2::fn(__VA_ARGS__); \
        return scalar::fn(__VA_ARGS__);                        \
    } while (0)
#else
#define SDP_DISPATCH(fn, ...) return scalar::fn(__VA_ARGS__)
#endif

void axpy(float a, const float* x, float* y, std::size_t n) { SDP_DISPATCH(axpy, a, x, y, n); }
float dot(const float* x, const float* y, std::size_t n) { SDP_DISPATCH(dot, x, y, n); }
float sum(const float* x, std::size_t n) { SDP_DISPATCH(sum, x, n); }
float sq_sum(const float* x, std::size_t n) { SDP_DISPATCH(sq_sum, x, n); }
void add_inplace(float* y, const float* x, std::size_t n) { SDP_DISPATCH(add_inplace, y, x, n); }
void scale_inplace(float* x, float a, std::size_t n) { SDP_DISPATCH(scale_inplace, x, a, n); }
std::size_t count_ones(const float* x, std::size_t n) { SDP_DISPATCH(count_ones, x, n); }
void lif_step(const float* in, const float* u_prev, const float* s_prev,
              float tau, float theta, float* u, float* s, std::size_t n) {
    SDP_DISPATCH(lif_step, in, u_prev, s_prev, tau, theta, u, s, n);
}

#undef SDP_DISPATCH

}  // namespace sdp::kern
