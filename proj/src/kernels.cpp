#include "kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pairvit::kernels {

namespace {

std::atomic<bool> g_parallel{
#ifdef _OPENMP
    true
#else
    false
#endif
};

constexpr real kInvSqrt2 = real(0.7071067811865475244);
constexpr real kInvSqrt2Pi = real(0.3989422804014326779);

// Per-row bodies shared by ref and par so the arithmetic is identical.

inline void row_nn(const real* a_row, const real* b, real* c_row, int k, int n, bool accumulate) {
    if (!accumulate) {
        for (int j = 0; j < n; ++j) c_row[j] = real(0);
    }
    for (int kk = 0; kk < k; ++kk) {
        const real av = a_row[kk];
        const real* b_row = b + std::size_t(kk) * n;
        for (int j = 0; j < n; ++j) c_row[j] += av * b_row[j];
    }
}

// Dot with four interleaved accumulators. The lane split is part of the
// kernel's defined summation order, not a build-dependent optimization.
inline real dot4(const real* x, const real* y, int k) {
    real s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    int i = 0;
    for (; i + 4 <= k; i += 4) {
        s0 += x[i] * y[i];
        s1 += x[i + 1] * y[i + 1];
        s2 += x[i + 2] * y[i + 2];
        s3 += x[i + 3] * y[i + 3];
    }
    for (; i < k; ++i) s0 += x[i] * y[i];
    return (s0 + s1) + (s2 + s3);
}

inline void row_nt(const real* a_row, const real* b, real* c_row, int k, int n, bool accumulate) {
    for (int j = 0; j < n; ++j) {
        const real v = dot4(a_row, b + std::size_t(j) * k, k);
        c_row[j] = accumulate ? c_row[j] + v : v;
    }
}

// Row i of C = A^T B accumulates a_row[i] * b_row over the shared leading
// index; done column-block style so each output row is owned by one caller.
inline void row_tn(const real* a, const real* b, real* c_row, int i, int k, int m, int n,
                   bool accumulate) {
    if (!accumulate) {
        for (int j = 0; j < n; ++j) c_row[j] = real(0);
    }
    for (int r = 0; r < k; ++r) {
        const real av = a[std::size_t(r) * m + i];
        const real* b_row = b + std::size_t(r) * n;
        for (int j = 0; j < n; ++j) c_row[j] += av * b_row[j];
    }
}

inline void row_softmax(const real* x, real* y, int n) {
    real mx = x[0];
    for (int j = 1; j < n; ++j) mx = x[j] > mx ? x[j] : mx;
    real sum = 0;
    for (int j = 0; j < n; ++j) {
        y[j] = std::exp(x[j] - mx);
        sum += y[j];
    }
    const real inv = real(1) / sum;
    for (int j = 0; j < n; ++j) y[j] *= inv;
}

inline void row_softmax_backward(const real* y, const real* gy, real* gx, int n,
                                 bool accumulate) {
    real s = 0;
    for (int j = 0; j < n; ++j) s += gy[j] * y[j];
    for (int j = 0; j < n; ++j) {
        const real v = y[j] * (gy[j] - s);
        gx[j] = accumulate ? gx[j] + v : v;
    }
}

inline void row_layernorm(const real* x, const real* gamma, const real* beta, real* y, real* xhat,
                          real* inv_std, int n, real eps) {
    real mean = 0;
    for (int j = 0; j < n; ++j) mean += x[j];
    mean /= real(n);
    real var = 0;
    for (int j = 0; j < n; ++j) {
        const real d = x[j] - mean;
        var += d * d;
    }
    var /= real(n);
    const real is = real(1) / std::sqrt(var + eps);
    *inv_std = is;
    for (int j = 0; j < n; ++j) {
        xhat[j] = (x[j] - mean) * is;
        y[j] = xhat[j] * gamma[j] + beta[j];
    }
}

inline void row_layernorm_backward_x(const real* xhat, real inv_std, const real* gamma,
                                     const real* gy, real* gx, int n) {
    real m1 = 0, m2 = 0;
    for (int j = 0; j < n; ++j) {
        const real h = gy[j] * gamma[j];
        m1 += h;
        m2 += h * xhat[j];
    }
    m1 /= real(n);
    m2 /= real(n);
    for (int j = 0; j < n; ++j) {
        const real h = gy[j] * gamma[j];
        gx[j] += inv_std * (h - m1 - xhat[j] * m2);
    }
}

inline real gelu_value(real x) { return real(0.5) * x * (real(1) + std::erf(x * kInvSqrt2)); }

inline real gelu_grad(real x) {
    const real phi = real(0.5) * (real(1) + std::erf(x * kInvSqrt2));
    const real pdf = kInvSqrt2Pi * std::exp(real(-0.5) * x * x);
    return phi + x * pdf;
}

}  // namespace

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace ref {

void matmul_nn(const real* a, const real* b, real* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i)
        row_nn(a + std::size_t(i) * k, b, c + std::size_t(i) * n, k, n, accumulate);
}

void matmul_nt(const real* a, const real* b, real* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i)
        row_nt(a + std::size_t(i) * k, b, c + std::size_t(i) * n, k, n, accumulate);
}

void matmul_tn(const real* a, const real* b, real* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) row_tn(a, b, c + std::size_t(i) * n, i, k, m, n, accumulate);
}

void softmax_rows(const real* x, real* y, int rows, int n) {
    for (int r = 0; r < rows; ++r)
        row_softmax(x + std::size_t(r) * n, y + std::size_t(r) * n, n);
}

void softmax_backward_rows(const real* y, const real* gy, real* gx, int rows, int n,
                           bool accumulate) {
    for (int r = 0; r < rows; ++r)
        row_softmax_backward(y + std::size_t(r) * n, gy + std::size_t(r) * n,
                             gx + std::size_t(r) * n, n, accumulate);
}

void layernorm_rows(const real* x, const real* gamma, const real* beta, real* y, real* xhat,
                    real* inv_std, int rows, int n, real eps) {
    for (int r = 0; r < rows; ++r)
        row_layernorm(x + std::size_t(r) * n, gamma, beta, y + std::size_t(r) * n,
                      xhat + std::size_t(r) * n, inv_std + r, n, eps);
}

void layernorm_backward_rows(const real* xhat, const real* inv_std, const real* gamma,
                             const real* gy, real* gx, real* ggamma, real* gbeta, int rows,
                             int n) {
    for (int r = 0; r < rows; ++r)
        row_layernorm_backward_x(xhat + std::size_t(r) * n, inv_std[r], gamma,
                                 gy + std::size_t(r) * n, gx + std::size_t(r) * n, n);
    for (int j = 0; j < n; ++j) {
        real sg = 0, sb = 0;
        for (int r = 0; r < rows; ++r) {
            sg += gy[std::size_t(r) * n + j] * xhat[std::size_t(r) * n + j];
            sb += gy[std::size_t(r) * n + j];
        }
        ggamma[j] += sg;
        gbeta[j] += sb;
    }
}

void gelu(const real* x, real* y, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) y[i] = gelu_value(x[i]);
}

void gelu_backward(const real* x, const real* gy, real* gx, std::size_t count, bool accumulate) {
    for (std::size_t i = 0; i < count; ++i) {
        const real v = gy[i] * gelu_grad(x[i]);
        gx[i] = accumulate ? gx[i] + v : v;
    }
}

}  // namespace ref

namespace par {

void matmul_nn(const real* a, const real* b, real* c, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i)
        row_nn(a + std::size_t(i) * k, b, c + std::size_t(i) * n, k, n, accumulate);
}

void matmul_nt(const real* a, const real* b, real* c, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i)
        row_nt(a + std::size_t(i) * k, b, c + std::size_t(i) * n, k, n, accumulate);
}

void matmul_tn(const real* a, const real* b, real* c, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) row_tn(a, b, c + std::size_t(i) * n, i, k, m, n, accumulate);
}

void softmax_rows(const real* x, real* y, int rows, int n) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r)
        row_softmax(x + std::size_t(r) * n, y + std::size_t(r) * n, n);
}

void softmax_backward_rows(const real* y, const real* gy, real* gx, int rows, int n,
                           bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r)
        row_softmax_backward(y + std::size_t(r) * n, gy + std::size_t(r) * n,
                             gx + std::size_t(r) * n, n, accumulate);
}

void layernorm_rows(const real* x, const real* gamma, const real* beta, real* y, real* xhat,
                    real* inv_std, int rows, int n, real eps) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r)
        row_layernorm(x + std::size_t(r) * n, gamma, beta, y + std::size_t(r) * n,
                      xhat + std::size_t(r) * n, inv_std + r, n, eps);
}

void layernorm_backward_rows(const real* xhat, const real* inv_std, const real* gamma,
                             const real* gy, real* gx, real* ggamma, real* gbeta, int rows,
                             int n) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r)
        row_layernorm_backward_x(xhat + std::size_t(r) * n, inv_std[r], gamma,
                                 gy + std::size_t(r) * n, gx + std::size_t(r) * n, n);
// Parameter gradients sum over rows per column; parallel over columns so
// each output stays single-writer.
#pragma omp parallel for schedule(static)
    for (int j = 0; j < n; ++j) {
        real sg = 0, sb = 0;
        for (int r = 0; r < rows; ++r) {
            sg += gy[std::size_t(r) * n + j] * xhat[std::size_t(r) * n + j];
            sb += gy[std::size_t(r) * n + j];
        }
        ggamma[j] += sg;
        gbeta[j] += sb;
    }
}

void gelu(const real* x, real* y, std::size_t count) {
    const std::ptrdiff_t c = std::ptrdiff_t(count);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < c; ++i) y[i] = gelu_value(x[i]);
}

void gelu_backward(const real* x, const real* gy, real* gx, std::size_t count, bool accumulate) {
    const std::ptrdiff_t c = std::ptrdiff_t(count);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < c; ++i) {
        const real v = gy[i] * gelu_grad(x[i]);
        gx[i] = accumulate ? gx[i] + v : v;
    }
}

}  // namespace par

#define PAIRVIT_DISPATCH(fn, ...)            \
    do {                                     \
        if (parallel_enabled())              \
            par::fn(__VA_ARGS__);            \
        else                                 \
            ref::fn(__VA_ARGS__);            \
    } while (0)

void matmul_nn(const real* a, const real* b, real* c, int m, int k, int n, bool accumulate) {
    PAIRVIT_DISPATCH(matmul_nn, a, b, c, m, k, n, accumulate);
}
void matmul_nt(const real* a, const real* b, real* c, int m, int k, int n, bool accumulate) {
    PAIRVIT_DISPATCH(matmul_nt, a, b, c, m, k, n, accumulate);
}
void matmul_tn(const real* a, const real* b, real* c, int m, int k, int n, bool accumulate) {
    PAIRVIT_DISPATCH(matmul_tn, a, b, c, m, k, n, accumulate);
}
void softmax_rows(const real* x, real* y, int rows, int n) {
    PAIRVIT_DISPATCH(softmax_rows, x, y, rows, n);
}
void softmax_backward_rows(const real* y, const real* gy, real* gx, int rows, int n,
                           bool accumulate) {
    PAIRVIT_DISPATCH(softmax_backward_rows, y, gy, gx, rows, n, accumulate);
}
void layernorm_rows(const real* x, const real* gamma, const real* beta, real* y, real* xhat,
                    real* inv_std, int rows, int n, real eps) {
    PAIRVIT_DISPATCH(layernorm_rows, x, gamma, beta, y, xhat, inv_std, rows, n, eps);
}
void layernorm_backward_rows(const real* xhat, const real* inv_std, const real* gamma,
                             const real* gy, real* gx, real* ggamma, real* gbeta, int rows,
                             int n) {
    PAIRVIT_DISPATCH(layernorm_backward_rows, xhat, inv_std, gamma, gy, gx, ggamma, gbeta, rows, n);
}
void gelu(const real* x, real* y, std::size_t count) { PAIRVIT_DISPATCH(gelu, x, y, count); }
void gelu_backward(const real* x, const real* gy, real* gx, std::size_t count, bool accumulate) {
    PAIRVIT_DISPATCH(gelu_backward, x, gy, gx, count, accumulate);
}

#undef PAIRVIT_DISPATCH

}  // namespace pairvit::kernels
