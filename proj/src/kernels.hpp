#pragma once

#include <cstddef>

#include "common.hpp"

// Dense kernels behind the tensor ops. Two implementations with identical
// per-element arithmetic: kernels::ref is the plain serial form kept as the
// testing baseline, kernels::par distributes independent output rows across
// OpenMP threads. Every output element is produced by exactly one thread
// with a fixed inner summation order, so ref and par agree bit-for-bit and
// results do not depend on the thread count.
namespace pairvit::kernels {

// Runtime switch consulted by the dispatch functions below. Defaults to on
// when compiled with OpenMP.
bool parallel_enabled();
void set_parallel(bool on);
int max_threads();

namespace ref {

// C[m*n] = A[m*k] * B[k*n], += when accumulate
void matmul_nn(const real* a, const real* b, real* c, int m, int k, int n, bool accumulate);
// C[m*n] = A[m*k] * B[n*k]^T
void matmul_nt(const real* a, const real* b, real* c, int m, int k, int n, bool accumulate);
// C[m*n] = A[k*m]^T * B[k*n]
void matmul_tn(const real* a, const real* b, real* c, int m, int k, int n, bool accumulate);

void softmax_rows(const real* x, real* y, int rows, int n);
void softmax_backward_rows(const real* y, const real* gy, real* gx, int rows, int n,
                           bool accumulate);

// Saves xhat (normalized rows) and inv_std for the backward pass.
void layernorm_rows(const real* x, const real* gamma, const real* beta, real* y, real* xhat,
                    real* inv_std, int rows, int n, real eps);
void layernorm_backward_rows(const real* xhat, const real* inv_std, const real* gamma,
                             const real* gy, real* gx, real* ggamma, real* gbeta, int rows, int n);

void gelu(const real* x, real* y, std::size_t count);
void gelu_backward(const real* x, const real* gy, real* gx, std::size_t count, bool accumulate);

}  // namespace ref

namespace par {

void matmul_nn(const real* a, const real* b, real* c, int m, int k, int n, bool accumulate);
void matmul_nt(const real* a, const real* b, real* c, int m, int k, int n, bool accumulate);
void matmul_tn(const real* a, const real* b, real* c, int m, int k, int n, bool accumulate);
void softmax_rows(const real* x, real* y, int rows, int n);
void softmax_backward_rows(const real* y, const real* gy, real* gx, int rows, int n,
                           bool accumulate);
void layernorm_rows(const real* x, const real* gamma, const real* beta, real* y, real* xhat,
                    real* inv_std, int rows, int n, real eps);
void layernorm_backward_rows(const real* xhat, const real* inv_std, const real* gamma,
                             const real* gy, real* gx, real* ggamma, real* gbeta, int rows, int n);
void gelu(const real* x, real* y, std::size_t count);
void gelu_backward(const real* x, const real* gy, real* gx, std::size_t count, bool accumulate);

}  // namespace par

// Dispatchers: par when enabled and compiled with OpenMP, ref otherwise.
void matmul_nn(const real* a, const real* b, real* c, int m, int k, int n, bool accumulate = false);
void matmul_nt(const real* a, const real* b, real* c, int m, int k, int n, bool accumulate = false);
void matmul_tn(const real* a, const real* b, real* c, int m, int k, int n, bool accumulate = false);
void softmax_rows(const real* x, real* y, int rows, int n);
void softmax_backward_rows(const real* y, const real* gy, real* gx, int rows, int n,
                           bool accumulate = false);
void layernorm_rows(const real* x, const real* gamma, const real* beta, real* y, real* xhat,
                    real* inv_std, int rows, int n, real eps);
void layernorm_backward_rows(const real* xhat, const real* inv_std, const real* gamma,
                             const real* gy, real* gx, real* ggamma, real* gbeta, int rows, int n);
void gelu(const real* x, real* y, std::size_t count);
void gelu_backward(const real* x, const real* gy, real* gx, std::size_t count,
                   bool accumulate = false);

}  // namespace pairvit::kernels
