// AVX2/FMA variants of the float kernels. This translation unit is the only
// one compiled with -mavx2 -mfma; it is entered only after a runtime cpuid
// check, so the rest of the binary stays runnable on plain SSE2 machines.

#ifdef SDP_HAVE_AVX2

#include <immintrin.h>

#include <cstddef>

namespace sdp::kern::avx2 {

void axpy(float a, const float* x, float* y, std::size_t n) {
    const __m256 av = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 yv = _mm256_loadu_ps(y + i);
        yv = _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), yv);
        _mm256_storeu_ps(y + i, yv);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

float dot(const float* x, const float* y, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc);
    }
    alignas(32) float lanes[8];
    _mm256_store_ps(lanes, acc);
    float r = lanes[0] + lanes[1] + lanes[2] + lanes[3] +
              lanes[4] + lanes[5] + lanes[6] + lanes[7];
    for (; i < n; ++i) r += x[i] * y[i];
    return r;
}

float sum(const float* x, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    alignas(32) float lanes[8];
    _mm256_store_ps(lanes, acc);
    float r = lanes[0] + lanes[1] + lanes[2] + lanes[3] +
              lanes[4] + lanes[5] + lanes[6] + lanes[7];
    for (; i < n; ++i) r += x[i];
    return r;
}

float sq_sum(const float* x, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 v = _mm256_loadu_ps(x + i);
        acc = _mm256_fmadd_ps(v, v, acc);
    }
    alignas(32) float lanes[8];
    _mm256_store_ps(lanes, acc);
    float r = lanes[0] + lanes[1] + lanes[2] + lanes[3] +
              lanes[4] + lanes[5] + lanes[6] + lanes[7];
    for (; i < n; ++i) r += x[i] * x[i];
    return r;
}

void add_inplace(float* y, const float* x, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), _mm256_loadu_ps(x + i)));
    }
    for (; i < n; ++i) y[i] += x[i];
}

void scale_inplace(float* x, float a, std::size_t n) {
    const __m256 av = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(x + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), av));
    }
    for (; i < n; ++i) x[i] *= a;
}

std::size_t count_ones(const float* x, std::size_t n) {
    const __m256 one = _mm256_set1_ps(1.0f);
    std::size_t c = 0;
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 eq = _mm256_cmp_ps(_mm256_loadu_ps(x + i), one, _CMP_EQ_OQ);
        c += static_cast<std::size_t>(_mm_popcnt_u32(
            static_cast<unsigned>(_mm256_movemask_ps(eq))));
    }
    for (; i < n; ++i) c += (x[i] == 1.0f) ? 1 : 0;
    return c;
}

// Mirrors scalar::lif_step's mul-then-fma sequence exactly (bit-identical).
void lif_step(const float* in, const float* u_prev, const float* s_prev,
              float tau, float theta, float* u, float* s, std::size_t n) {
    const __m256 tauv = _mm256_set1_ps(tau);
    const __m256 thetav = _mm256_set1_ps(theta);
    const __m256 one = _mm256_set1_ps(1.0f);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 decay = _mm256_mul_ps(tauv, _mm256_loadu_ps(u_prev + i));
        const __m256 gate = _mm256_sub_ps(one, _mm256_loadu_ps(s_prev + i));
        const __m256 uv = _mm256_fmadd_ps(decay, gate, _mm256_loadu_ps(in + i));
        _mm256_storeu_ps(u + i, uv);
        const __m256 fired = _mm256_cmp_ps(uv, thetav, _CMP_GE_OQ);
        _mm256_storeu_ps(s + i, _mm256_and_ps(fired, one));
    }
    for (; i < n; ++i) {
        const float decay = tau * u_prev[i];
        const float ui = __builtin_fmaf(decay, 1.0f - s_prev[i], in[i]);
        u[i] = ui;
        s[i] = (ui >= theta) ? 1.0f : 0.0f;
    }
}

}  // namespace sdp::kern::avx2

#endif  // SDP_HAVE_AVX2
