#pragma once

// Dense compute kernels used by the autodiff engine.
//
// Every kernel has a serial reference in `serial::` and an OpenMP version in
// `parallel::`. The parallel versions partition output rows only, so each
// output element is reduced in exactly the same order as the reference and
// results are bit-identical for any thread count.

#include <cstddef>
#include <span>

namespace atlop::kernels {

// C[m x n] (+)= A[m x k] * B[k x n]
// C[m x n] (+)= A[m x k] * B[n x k]^T
// C[m x n] (+)= A[k x m]^T * B[k x n]
// Row-wise max-shifted softmax / logsumexp over rows of length n.

namespace serial {
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate);
void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t n);
void logsumexp_rows(std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t n);
}  // namespace serial

namespace parallel {
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate);
void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t n);
void logsumexp_rows(std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t n);
}  // namespace parallel

/// Number of threads used by the dispatching kernels below (default 1).
void set_num_threads(int n);
int num_threads();

// Dispatch: parallel when more than one thread is configured and the
// problem is big enough to amortize a parallel region.
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate);
void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t n);
void logsumexp_rows(std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t n);

}  // namespace atlop::kernels
