#include "tqa/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace tqa::kernels {

namespace {

struct F32Table {
    float (*dot)(const float*, const float*, size_t);
    void (*axpy)(float, const float*, float*, size_t);
    void (*add)(const float*, const float*, float*, size_t);
    void (*scale)(const float*, float, float*, size_t);
    void (*hadamard)(const float*, const float*, float*, size_t);
    float (*sum)(const float*, size_t);
    void (*matmul)(const float*, const float*, float*, size_t, size_t, size_t, bool);
    void (*matmul_nt)(const float*, const float*, float*, size_t, size_t, size_t, bool);
    void (*matmul_tn)(const float*, const float*, float*, size_t, size_t, size_t, bool);
    void (*adam_update)(float*, const float*, float*, float*, size_t, const AdamKernelArgs&);
};

constexpr F32Table kScalarTable = {
    scalar::dot<float>,    scalar::axpy<float>,      scalar::add<float>,
    scalar::scale<float>,  scalar::hadamard<float>,  scalar::sum<float>,
    scalar::matmul<float>, scalar::matmul_nt<float>, scalar::matmul_tn<float>,
    scalar::adam_update,
};

constexpr F32Table kAvx2Table = {
    avx2::dot,    avx2::axpy,      avx2::add,       avx2::scale,     avx2::hadamard,
    avx2::sum,    avx2::matmul,    avx2::matmul_nt, avx2::matmul_tn, avx2::adam_update,
};

Backend pick_backend() {
    if (const char* env = std::getenv("TQA_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0 && cpu_supports_avx2()) return Backend::avx2;
    }
    return cpu_supports_avx2() ? Backend::avx2 : Backend::scalar;
}

Backend g_backend = pick_backend();
const F32Table* g_f32 = (g_backend == Backend::avx2) ? &kAvx2Table : &kScalarTable;

} // namespace

Backend active_backend() { return g_backend; }

void set_backend(Backend b) {
    if (b == Backend::avx2 && !cpu_supports_avx2()) b = Backend::scalar;
    g_backend = b;
    g_f32 = (b == Backend::avx2) ? &kAvx2Table : &kScalarTable;
}

const char* backend_name(Backend b) {
    return b == Backend::avx2 ? "avx2" : "scalar";
}

bool cpu_supports_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

float dot(const float* a, const float* b, size_t n) { return g_f32->dot(a, b, n); }
void axpy(float alpha, const float* x, float* y, size_t n) { g_f32->axpy(alpha, x, y, n); }
void add(const float* a, const float* b, float* out, size_t n) { g_f32->add(a, b, out, n); }
void scale(const float* a, float alpha, float* out, size_t n) { g_f32->scale(a, alpha, out, n); }
void hadamard(const float* a, const float* b, float* out, size_t n) {
    g_f32->hadamard(a, b, out, n);
}
float sum(const float* a, size_t n) { return g_f32->sum(a, n); }
void matmul(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
            bool accumulate) {
    g_f32->matmul(a, b, c, m, k, n, accumulate);
}
void matmul_nt(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
               bool accumulate) {
    g_f32->matmul_nt(a, b, c, m, k, n, accumulate);
}
void matmul_tn(const float* a, const float* b, float* c, size_t m, size_t k, size_t n,
               bool accumulate) {
    g_f32->matmul_tn(a, b, c, m, k, n, accumulate);
}
void adam_update(float* p, const float* g, float* m1, float* m2, size_t n,
                 const AdamKernelArgs& args) {
    g_f32->adam_update(p, g, m1, m2, n, args);
}

double dot(const double* a, const double* b, size_t n) { return scalar::dot(a, b, n); }
void axpy(double alpha, const double* x, double* y, size_t n) { scalar::axpy(alpha, x, y, n); }
void add(const double* a, const double* b, double* out, size_t n) { scalar::add(a, b, out, n); }
void scale(const double* a, double alpha, double* out, size_t n) {
    scalar::scale(a, alpha, out, n);
}
void hadamard(const double* a, const double* b, double* out, size_t n) {
    scalar::hadamard(a, b, out, n);
}
double sum(const double* a, size_t n) { return scalar::sum(a, n); }
void matmul(const double* a, const double* b, double* c, size_t m, size_t k, size_t n,
            bool accumulate) {
    scalar::matmul(a, b, c, m, k, n, accumulate);
}
void matmul_nt(const double* a, const double* b, double* c, size_t m, size_t k, size_t n,
               bool accumulate) {
    scalar::matmul_nt(a, b, c, m, k, n, accumulate);
}
void matmul_tn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n,
               bool accumulate) {
    scalar::matmul_tn(a, b, c, m, k, n, accumulate);
}

} // namespace tqa::kernels
