// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma; nothing here may run before the cpuid check in the
// dispatcher.

#include "tqa/kernels.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>

namespace tqa::kernels::avx2 {

namespace {

inline float hsum8(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
}

} // namespace

float dot(const float* a, const float* b, size_t n) {
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
        acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
    }
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    }
    float acc = hsum8(_mm256_add_ps(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy(float alpha, const float* x, float* y, size_t n) {
    const __m256 va = _mm256_set1_ps(alpha);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 vy = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i));
        _mm256_storeu_ps(y + i, vy);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void add(const float* a, const float* b, float* out, size_t n) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void scale(const float* a, float alpha, float* out, size_t n) {
    const __m256 va = _mm256_set1_ps(alpha);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_mul_ps(va, _mm256_loadu_ps(a + i)));
    }
    for (; i < n; ++i) out[i] = alpha * a[i];
}

void hadamard(const float* a, const float* b, float* out, size_t n) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

float sum(const float* a, size_t n) {
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_add_ps(acc0, _mm256_loadu_ps(a + i));
        acc1 = _mm256_add_ps(acc1, _mm256_loadu_ps(a + i + 8));
    }
    for (; i + 8 <= n; i += 8) acc0 = _mm256_add_ps(acc0, _mm256_loadu_ps(a + i));
    float acc = hsum8(_mm256_add_ps(acc0, acc1));
    for (; i < n; ++i) acc += a[i];
    return acc;
}

// C (+)= A*B. Column tiles of 32 stay resident in four accumulators across
// the whole K loop; the A element is broadcast per step.
void matmul(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
            bool accumulate) {
    size_t j0 = 0;
    for (; j0 + 32 <= n; j0 += 32) {
        for (size_t i = 0; i < m; ++i) {
            float* crow = c + i * n + j0;
            __m256 c0, c1, c2, c3;
            if (accumulate) {
                c0 = _mm256_loadu_ps(crow);
                c1 = _mm256_loadu_ps(crow + 8);
                c2 = _mm256_loadu_ps(crow + 16);
                c3 = _mm256_loadu_ps(crow + 24);
            } else {
                c0 = c1 = c2 = c3 = _mm256_setzero_ps();
            }
            const float* arow = a + i * k;
            for (size_t p = 0; p < k; ++p) {
                const __m256 av = _mm256_set1_ps(arow[p]);
                const float* brow = b + p * n + j0;
                c0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow), c0);
                c1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + 8), c1);
                c2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + 16), c2);
                c3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + 24), c3);
            }
            _mm256_storeu_ps(crow, c0);
            _mm256_storeu_ps(crow + 8, c1);
            _mm256_storeu_ps(crow + 16, c2);
            _mm256_storeu_ps(crow + 24, c3);
        }
    }
    for (; j0 + 8 <= n; j0 += 8) {
        for (size_t i = 0; i < m; ++i) {
            float* crow = c + i * n + j0;
            __m256 c0 = accumulate ? _mm256_loadu_ps(crow) : _mm256_setzero_ps();
            const float* arow = a + i * k;
            for (size_t p = 0; p < k; ++p) {
                c0 = _mm256_fmadd_ps(_mm256_set1_ps(arow[p]), _mm256_loadu_ps(b + p * n + j0), c0);
            }
            _mm256_storeu_ps(crow, c0);
        }
    }
    if (j0 < n) {
        for (size_t i = 0; i < m; ++i) {
            float* crow = c + i * n;
            const float* arow = a + i * k;
            for (size_t j = j0; j < n; ++j) {
                float acc = accumulate ? crow[j] : 0.0f;
                for (size_t p = 0; p < k; ++p) acc += arow[p] * b[p * n + j];
                crow[j] = acc;
            }
        }
    }
}

// C (+)= A*B^T: each output entry is a row-by-row dot; four B rows are
// processed together so the A row is loaded once per step.
void matmul_nt(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
               bool accumulate) {
    for (size_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            __m256 a0 = _mm256_setzero_ps();
            __m256 a1 = _mm256_setzero_ps();
            __m256 a2 = _mm256_setzero_ps();
            __m256 a3 = _mm256_setzero_ps();
            const float* b0 = b + j * k;
            const float* b1 = b0 + k;
            const float* b2 = b1 + k;
            const float* b3 = b2 + k;
            size_t p = 0;
            for (; p + 8 <= k; p += 8) {
                const __m256 av = _mm256_loadu_ps(arow + p);
                a0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + p), a0);
                a1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + p), a1);
                a2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + p), a2);
                a3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + p), a3);
            }
            float s0 = hsum8(a0), s1 = hsum8(a1), s2 = hsum8(a2), s3 = hsum8(a3);
            for (; p < k; ++p) {
                const float av = arow[p];
                s0 += av * b0[p];
                s1 += av * b1[p];
                s2 += av * b2[p];
                s3 += av * b3[p];
            }
            if (accumulate) {
                crow[j] += s0;
                crow[j + 1] += s1;
                crow[j + 2] += s2;
                crow[j + 3] += s3;
            } else {
                crow[j] = s0;
                crow[j + 1] = s1;
                crow[j + 2] = s2;
                crow[j + 3] = s3;
            }
        }
        for (; j < n; ++j) {
            const float v = dot(arow, b + j * k, k);
            crow[j] = accumulate ? crow[j] + v : v;
        }
    }
}

// C (+)= A^T*B as a sequence of rank-1 updates; the inner axpy runs 8-wide.
void matmul_tn(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
               bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, 0.0f);
    for (size_t l = 0; l < k; ++l) {
        const float* arow = a + l * m;
        const float* brow = b + l * n;
        for (size_t i = 0; i < m; ++i) {
            axpy(arow[i], brow, c + i * n, n);
        }
    }
}

void adam_update(float* p, const float* g, float* m1, float* m2, size_t n,
                 const AdamKernelArgs& args) {
    const __m256 vb1 = _mm256_set1_ps(args.beta1);
    const __m256 vb2 = _mm256_set1_ps(args.beta2);
    const __m256 vnb1 = _mm256_set1_ps(1.0f - args.beta1);
    const __m256 vnb2 = _mm256_set1_ps(1.0f - args.beta2);
    const __m256 vc1 = _mm256_set1_ps(args.inv_corr1);
    const __m256 vc2 = _mm256_set1_ps(args.inv_corr2);
    const __m256 vlr = _mm256_set1_ps(args.lr);
    const __m256 veps = _mm256_set1_ps(args.eps);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 vg = _mm256_loadu_ps(g + i);
        __m256 vm = _mm256_loadu_ps(m1 + i);
        __m256 vv = _mm256_loadu_ps(m2 + i);
        vm = _mm256_fmadd_ps(vb1, vm, _mm256_mul_ps(vnb1, vg));
        vv = _mm256_fmadd_ps(vb2, vv, _mm256_mul_ps(vnb2, _mm256_mul_ps(vg, vg)));
        _mm256_storeu_ps(m1 + i, vm);
        _mm256_storeu_ps(m2 + i, vv);
        const __m256 mhat = _mm256_mul_ps(vm, vc1);
        const __m256 vhat = _mm256_mul_ps(vv, vc2);
        const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), veps);
        const __m256 step = _mm256_div_ps(_mm256_mul_ps(vlr, mhat), denom);
        _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), step));
    }
    if (i < n) {
        AdamKernelArgs tail = args;
        scalar::adam_update(p + i, g + i, m1 + i, m2 + i, n - i, tail);
    }
}

} // namespace tqa::kernels::avx2
