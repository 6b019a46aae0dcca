#pragma once

#include <cstddef>

namespace tqa::kernels {

enum class Backend { scalar, avx2 };

// Backend selection happens once, on first use: AVX2+FMA when the CPU has
// them, unless overridden by set_backend() or the TQA_KERNELS environment
// variable ("scalar" or "avx2"). The choice is process-wide and stable, so
// repeated runs on one machine stay bit-identical.
Backend active_backend();
void set_backend(Backend b);
const char* backend_name(Backend b);
bool cpu_supports_avx2();

// Hyperparameters for the fused Adam update kernel. inv_corr1/2 are the
// precomputed 1/(1 - beta^t) bias-correction factors for the current step.
struct AdamKernelArgs {
    float lr;
    float beta1;
    float beta2;
    float eps;
    float inv_corr1;
    float inv_corr2;
};

// float entry points; dispatched at runtime between the scalar reference
// kernels and the AVX2 variants.
float dot(const float* a, const float* b, size_t n);
void axpy(float alpha, const float* x, float* y, size_t n);          // y += alpha*x
void add(const float* a, const float* b, float* out, size_t n);      // out = a+b
void scale(const float* a, float alpha, float* out, size_t n);       // out = alpha*a
void hadamard(const float* a, const float* b, float* out, size_t n); // out = a.*b
float sum(const float* a, size_t n);
// C (+)= A(MxK) * B(KxN)
void matmul(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
            bool accumulate);
// C (+)= A(MxK) * B(NxK)^T
void matmul_nt(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
               bool accumulate);
// C(MxN) (+)= A(KxM)^T * B(KxN)
void matmul_tn(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
               bool accumulate);
// p -= lr * mhat / (sqrt(vhat) + eps), updating moments in place.
void adam_update(float* p, const float* g, float* m1, float* m2, size_t n,
                 const AdamKernelArgs& args);

// double entry points; always the scalar reference path. 64-bit mode exists
// for gradient checking, not throughput.
double dot(const double* a, const double* b, size_t n);
void axpy(double alpha, const double* x, double* y, size_t n);
void add(const double* a, const double* b, double* out, size_t n);
void scale(const double* a, double alpha, double* out, size_t n);
void hadamard(const double* a, const double* b, double* out, size_t n);
double sum(const double* a, size_t n);
void matmul(const double* a, const double* b, double* c, size_t m, size_t k, size_t n,
            bool accumulate);
void matmul_nt(const double* a, const double* b, double* c, size_t m, size_t k, size_t n,
               bool accumulate);
void matmul_tn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n,
               bool accumulate);

// Scalar reference implementations, callable directly (equivalence tests
// compare these against whatever active_backend() dispatches to).
namespace scalar {
template <class T> T dot(const T* a, const T* b, size_t n);
template <class T> void axpy(T alpha, const T* x, T* y, size_t n);
template <class T> void add(const T* a, const T* b, T* out, size_t n);
template <class T> void scale(const T* a, T alpha, T* out, size_t n);
template <class T> void hadamard(const T* a, const T* b, T* out, size_t n);
template <class T> T sum(const T* a, size_t n);
template <class T>
void matmul(const T* a, const T* b, T* c, size_t m, size_t k, size_t n, bool accumulate);
template <class T>
void matmul_nt(const T* a, const T* b, T* c, size_t m, size_t k, size_t n, bool accumulate);
template <class T>
void matmul_tn(const T* a, const T* b, T* c, size_t m, size_t k, size_t n, bool accumulate);
void adam_update(float* p, const float* g, float* m1, float* m2, size_t n,
                 const AdamKernelArgs& args);
} // namespace scalar

// AVX2+FMA variants (float only). Only called after the cpuid check.
namespace avx2 {
float dot(const float* a, const float* b, size_t n);
void axpy(float alpha, const float* x, float* y, size_t n);
void add(const float* a, const float* b, float* out, size_t n);
void scale(const float* a, float alpha, float* out, size_t n);
void hadamard(const float* a, const float* b, float* out, size_t n);
float sum(const float* a, size_t n);
void matmul(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
            bool accumulate);
void matmul_nt(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
               bool accumulate);
void matmul_tn(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
               bool accumulate);
void adam_update(float* p, const float* g, float* m1, float* m2, size_t n,
                 const AdamKernelArgs& args);
} // namespace avx2

} // namespace tqa::kernels
