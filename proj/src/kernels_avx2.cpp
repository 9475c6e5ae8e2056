// AVX2/FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma; callers reach it only through avx2_ops(), which returns
// nullptr on CPUs without the required features.
#include "sbi/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstring>

namespace sbi::kernels {

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

// Four independent dot products against a shared left row keeps the FMA
// pipes busy; this carries most of the training GEMM.
void gemm_nt_avx2(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            const double* b0 = b + (j + 0) * k;
            const double* b1 = b + (j + 1) * k;
            const double* b2 = b + (j + 2) * k;
            const double* b3 = b + (j + 3) * k;
            __m256d s0 = _mm256_setzero_pd();
            __m256d s1 = _mm256_setzero_pd();
            __m256d s2 = _mm256_setzero_pd();
            __m256d s3 = _mm256_setzero_pd();
            std::size_t l = 0;
            for (; l + 4 <= k; l += 4) {
                const __m256d va = _mm256_loadu_pd(ai + l);
                s0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b0 + l), s0);
                s1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b1 + l), s1);
                s2 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b2 + l), s2);
                s3 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b3 + l), s3);
            }
            double r0 = hsum(s0), r1 = hsum(s1), r2 = hsum(s2), r3 = hsum(s3);
            for (; l < k; ++l) {
                r0 += ai[l] * b0[l];
                r1 += ai[l] * b1[l];
                r2 += ai[l] * b2[l];
                r3 += ai[l] * b3[l];
            }
            ci[j] = r0;
            ci[j + 1] = r1;
            ci[j + 2] = r2;
            ci[j + 3] = r3;
        }
        for (; j < n; ++j) ci[j] = dot_avx2(ai, b + j * k, k);
    }
}

// Accumulates four rank-1 updates per pass over the output row, so each
// load/store of c amortizes four FMAs instead of one.
inline void axpy4_avx2(double a0, double a1, double a2, double a3,
                       const double* b0, const double* b1, const double* b2,
                       const double* b3, double* ci, std::size_t n) {
    const __m256d v0 = _mm256_set1_pd(a0);
    const __m256d v1 = _mm256_set1_pd(a1);
    const __m256d v2 = _mm256_set1_pd(a2);
    const __m256d v3 = _mm256_set1_pd(a3);
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        __m256d vc = _mm256_loadu_pd(ci + j);
        vc = _mm256_fmadd_pd(v0, _mm256_loadu_pd(b0 + j), vc);
        vc = _mm256_fmadd_pd(v1, _mm256_loadu_pd(b1 + j), vc);
        vc = _mm256_fmadd_pd(v2, _mm256_loadu_pd(b2 + j), vc);
        vc = _mm256_fmadd_pd(v3, _mm256_loadu_pd(b3 + j), vc);
        _mm256_storeu_pd(ci + j, vc);
    }
    for (; j < n; ++j) {
        ci[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
    }
}

void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        std::memset(ci, 0, n * sizeof(double));
        const double* ai = a + i * k;
        std::size_t l = 0;
        for (; l + 4 <= k; l += 4) {
            axpy4_avx2(ai[l], ai[l + 1], ai[l + 2], ai[l + 3], b + l * n,
                       b + (l + 1) * n, b + (l + 2) * n, b + (l + 3) * n, ci, n);
        }
        for (; l < k; ++l) axpy_avx2(ai[l], b + l * n, ci, n);
    }
}

void gemm_tn_avx2(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        std::memset(ci, 0, n * sizeof(double));
        std::size_t l = 0;
        for (; l + 4 <= k; l += 4) {
            axpy4_avx2(a[l * m + i], a[(l + 1) * m + i], a[(l + 2) * m + i],
                       a[(l + 3) * m + i], b + l * n, b + (l + 1) * n,
                       b + (l + 2) * n, b + (l + 3) * n, ci, n);
        }
        for (; l < k; ++l) axpy_avx2(a[l * m + i], b + l * n, ci, n);
    }
}

// expm1 for x <= 0. Cephes-style: on |r| <= ln2/2,
// exp(r) = 1 + 2 r P(r^2) / (Q(r^2) - r P(r^2)), so the rational term is
// expm1(r) with no cancellation near zero; the result is then rescaled as
// expm1(x) = u * 2^n + (2^n - 1). Agrees with std::expm1 to ~3 ulp and is
// exact at 0; inputs below -708 clamp, which still rounds to -1.
inline __m256d expm1_neg_avx2(__m256d x) {
    const __m256d log2e = _mm256_set1_pd(1.4426950408889634074);
    const __m256d c1 = _mm256_set1_pd(6.93145751953125e-1);
    const __m256d c2 = _mm256_set1_pd(1.42860682030941723212e-6);
    const __m256d p0 = _mm256_set1_pd(1.26177193074810590878e-4);
    const __m256d p1 = _mm256_set1_pd(3.02994407707441961300e-2);
    const __m256d p2 = _mm256_set1_pd(9.99999999999999999910e-1);
    const __m256d q0 = _mm256_set1_pd(3.00198505138664455042e-6);
    const __m256d q1 = _mm256_set1_pd(2.52448340349684104192e-3);
    const __m256d q2 = _mm256_set1_pd(2.27265548208155028766e-1);
    const __m256d q3 = _mm256_set1_pd(2.00000000000000000005e0);

    x = _mm256_max_pd(x, _mm256_set1_pd(-708.0));
    const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                                      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(n, c1, x);
    r = _mm256_fnmadd_pd(n, c2, r);
    const __m256d r2 = _mm256_mul_pd(r, r);
    __m256d px = _mm256_fmadd_pd(p0, r2, p1);
    px = _mm256_mul_pd(_mm256_fmadd_pd(px, r2, p2), r);
    __m256d qx = _mm256_fmadd_pd(q0, r2, q1);
    qx = _mm256_fmadd_pd(qx, r2, q2);
    qx = _mm256_fmadd_pd(qx, r2, q3);
    const __m256d u = _mm256_div_pd(_mm256_add_pd(px, px), _mm256_sub_pd(qx, px));

    const __m128i ni = _mm256_cvtpd_epi32(n);
    const __m256i ne = _mm256_cvtepi32_epi64(ni);
    const __m256i bits =
        _mm256_slli_epi64(_mm256_add_epi64(ne, _mm256_set1_epi64x(1023)), 52);
    const __m256d pow2n = _mm256_castsi256_pd(bits);
    return _mm256_fmadd_pd(u, pow2n, _mm256_sub_pd(pow2n, _mm256_set1_pd(1.0)));
}

void bias_elu_avx2(double* z, const double* b, std::size_t rows,
                   std::size_t cols, bool apply_elu) {
    const __m256d zero = _mm256_setzero_pd();
    for (std::size_t r = 0; r < rows; ++r) {
        double* zr = z + r * cols;
        std::size_t c = 0;
        for (; c + 4 <= cols; c += 4) {
            __m256d v = _mm256_add_pd(_mm256_loadu_pd(zr + c), _mm256_loadu_pd(b + c));
            if (apply_elu) {
                const __m256d neg = expm1_neg_avx2(_mm256_min_pd(v, zero));
                __m256d out = _mm256_blendv_pd(neg, v, _mm256_cmp_pd(v, zero, _CMP_GT_OQ));
                // min/cmp quietly absorb NaN lanes; put them back.
                out = _mm256_blendv_pd(out, v, _mm256_cmp_pd(v, v, _CMP_UNORD_Q));
                v = out;
            }
            _mm256_storeu_pd(zr + c, v);
        }
        for (; c < cols; ++c) {
            const double v = zr[c] + b[c];
            zr[c] = apply_elu && v <= 0.0 ? std::expm1(v) : v;
        }
    }
}

void elu_backward_avx2(double* d, const double* a, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    const __m256d one = _mm256_set1_pd(1.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d av = _mm256_loadu_pd(a + i);
        // a <= 0 (and NaN) takes the a + 1 branch, matching the scalar ternary.
        const __m256d f = _mm256_blendv_pd(_mm256_add_pd(av, one), one,
                                           _mm256_cmp_pd(av, zero, _CMP_GT_OQ));
        _mm256_storeu_pd(d + i, _mm256_mul_pd(_mm256_loadu_pd(d + i), f));
    }
    for (; i < n; ++i) d[i] *= a[i] > 0.0 ? 1.0 : a[i] + 1.0;
}

void adam_update_avx2(double* p, double* mo, double* v, const double* g,
                      std::size_t n, double lr, double b1, double b2,
                      double eps, double bc1, double bc2) {
    const __m256d vb1 = _mm256_set1_pd(b1);
    const __m256d vb1c = _mm256_set1_pd(1.0 - b1);
    const __m256d vb2 = _mm256_set1_pd(b2);
    const __m256d vb2c = _mm256_set1_pd(1.0 - b2);
    const __m256d vlr = _mm256_set1_pd(lr);
    const __m256d veps = _mm256_set1_pd(eps);
    const __m256d vbc1 = _mm256_set1_pd(bc1);
    const __m256d vbc2 = _mm256_set1_pd(bc2);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d vg = _mm256_loadu_pd(g + i);
        __m256d vm = _mm256_loadu_pd(mo + i);
        __m256d vv = _mm256_loadu_pd(v + i);
        vm = _mm256_fmadd_pd(vb1, vm, _mm256_mul_pd(vb1c, vg));
        vv = _mm256_fmadd_pd(vb2, vv, _mm256_mul_pd(vb2c, _mm256_mul_pd(vg, vg)));
        _mm256_storeu_pd(mo + i, vm);
        _mm256_storeu_pd(v + i, vv);
        const __m256d mhat = _mm256_div_pd(vm, vbc1);
        const __m256d vhat = _mm256_div_pd(vv, vbc2);
        const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
        __m256d vp = _mm256_loadu_pd(p + i);
        vp = _mm256_sub_pd(vp, _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom));
        _mm256_storeu_pd(p + i, vp);
    }
    for (; i < n; ++i) {
        mo[i] = b1 * mo[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        p[i] -= lr * (mo[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
}

const Ops kAvx2Ops = {
    "avx2",        dot_avx2,     axpy_avx2,
    gemm_nt_avx2,  gemm_nn_avx2, gemm_tn_avx2,
    bias_elu_avx2, elu_backward_avx2, adam_update_avx2,
};

}  // namespace

const Ops* avx2_ops() {
    static const bool supported =
        __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported ? &kAvx2Ops : nullptr;
}

}  // namespace sbi::kernels

#else

namespace sbi::kernels {
const Ops* avx2_ops() { return nullptr; }
}  // namespace sbi::kernels

#endif
