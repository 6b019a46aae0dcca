#include "tqa/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace tqa::kernels::scalar {

template <class T>
T dot(const T* a, const T* b, size_t n) {
    T acc = T(0);
    for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <class T>
void axpy(T alpha, const T* x, T* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void add(const T* a, const T* b, T* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <class T>
void scale(const T* a, T alpha, T* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = alpha * a[i];
}

template <class T>
void hadamard(const T* a, const T* b, T* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <class T>
T sum(const T* a, size_t n) {
    T acc = T(0);
    for (size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

template <class T>
void matmul(const T* a, const T* b, T* c, size_t m, size_t k, size_t n, bool accumulate) {
    for (size_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        if (!accumulate) std::fill(crow, crow + n, T(0));
        const T* arow = a + i * k;
        for (size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* brow = b + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <class T>
void matmul_nt(const T* a, const T* b, T* c, size_t m, size_t k, size_t n, bool accumulate) {
    for (size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (size_t j = 0; j < n; ++j) {
            const T v = dot(arow, b + j * k, k);
            crow[j] = accumulate ? crow[j] + v : v;
        }
    }
}

template <class T>
void matmul_tn(const T* a, const T* b, T* c, size_t m, size_t k, size_t n, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, T(0));
    for (size_t l = 0; l < k; ++l) {
        const T* arow = a + l * m;
        const T* brow = b + l * n;
        for (size_t i = 0; i < m; ++i) {
            axpy(arow[i], brow, c + i * n, n);
        }
    }
}

void adam_update(float* p, const float* g, float* m1, float* m2, size_t n,
                 const AdamKernelArgs& args) {
    for (size_t i = 0; i < n; ++i) {
        m1[i] = args.beta1 * m1[i] + (1.0f - args.beta1) * g[i];
        m2[i] = args.beta2 * m2[i] + (1.0f - args.beta2) * g[i] * g[i];
        const float mhat = m1[i] * args.inv_corr1;
        const float vhat = m2[i] * args.inv_corr2;
        p[i] -= args.lr * mhat / (std::sqrt(vhat) + args.eps);
    }
}

template float dot<float>(const float*, const float*, size_t);
template double dot<double>(const double*, const double*, size_t);
template void axpy<float>(float, const float*, float*, size_t);
template void axpy<double>(double, const double*, double*, size_t);
template void add<float>(const float*, const float*, float*, size_t);
template void add<double>(const double*, const double*, double*, size_t);
template void scale<float>(const float*, float, float*, size_t);
template void scale<double>(const double*, double, double*, size_t);
template void hadamard<float>(const float*, const float*, float*, size_t);
template void hadamard<double>(const double*, const double*, double*, size_t);
template float sum<float>(const float*, size_t);
template double sum<double>(const double*, size_t);
template void matmul<float>(const float*, const float*, float*, size_t, size_t, size_t, bool);
template void matmul<double>(const double*, const double*, double*, size_t, size_t, size_t, bool);
template void matmul_nt<float>(const float*, const float*, float*, size_t, size_t, size_t, bool);
template void matmul_nt<double>(const double*, const double*, double*, size_t, size_t, size_t, bool);
template void matmul_tn<float>(const float*, const float*, float*, size_t, size_t, size_t, bool);
template void matmul_tn<double>(const double*, const double*, double*, size_t, size_t, size_t, bool);

} // namespace tqa::kernels::scalar
