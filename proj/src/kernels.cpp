#include "atlop/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

namespace atlop::kernels {

namespace {

std::atomic<int> g_threads{1};

constexpr std::size_t kParallelMinWork = 1 << 14;

inline void gemm_nn_row(const double* a, const double* b, double* c, std::size_t k, std::size_t n,
                        bool accumulate) {
  if (!accumulate) std::fill(c, c + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a[p];
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
  }
}

inline void gemm_nt_row(const double* a, const double* b, double* c, std::size_t k, std::size_t n,
                        bool accumulate) {
  for (std::size_t j = 0; j < n; ++j) {
    const double* brow = b + j * k;
    double s = 0.0;
    for (std::size_t p = 0; p < k; ++p) s += a[p] * brow[p];
    c[j] = accumulate ? c[j] + s : s;
  }
}

// Row i of A^T * B: sum over p of A[p, i] * B[p, :].
inline void gemm_tn_row(const double* a, const double* b, double* c, std::size_t i, std::size_t m,
                        std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a[p * m + i];
    if (av == 0.0) continue;
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
  }
}

inline void softmax_row(const double* x, double* y, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, x[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = std::exp(x[j] - mx);
    s += y[j];
  }
  const double inv = 1.0 / s;
  for (std::size_t j = 0; j < n; ++j) y[j] *= inv;
}

inline double logsumexp_row(const double* x, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, x[j]);
  if (std::isinf(mx)) return mx;
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += std::exp(x[j] - mx);
  return mx + std::log(s);
}

}  // namespace

namespace serial {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) gemm_nn_row(&a[i * k], b.data(), &c[i * n], k, n, accumulate);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) gemm_nt_row(&a[i * k], b.data(), &c[i * n], k, n, accumulate);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) gemm_tn_row(a.data(), b.data(), &c[i * n], i, m, k, n, accumulate);
}

void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t n) {
  for (std::size_t r = 0; r < rows; ++r) softmax_row(&x[r * n], &y[r * n], n);
}

void logsumexp_rows(std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t n) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = logsumexp_row(&x[r * n], n);
}

}  // namespace serial

namespace parallel {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) num_threads(g_threads.load())
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    gemm_nn_row(&a[static_cast<std::size_t>(i) * k], b.data(), &c[static_cast<std::size_t>(i) * n], k, n,
                accumulate);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) num_threads(g_threads.load())
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    gemm_nt_row(&a[static_cast<std::size_t>(i) * k], b.data(), &c[static_cast<std::size_t>(i) * n], k, n,
                accumulate);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) num_threads(g_threads.load())
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    gemm_tn_row(a.data(), b.data(), &c[static_cast<std::size_t>(i) * n], static_cast<std::size_t>(i), m, k, n,
                accumulate);
}

void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t n) {
  const auto r_end = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) num_threads(g_threads.load())
  for (std::ptrdiff_t r = 0; r < r_end; ++r)
    softmax_row(&x[static_cast<std::size_t>(r) * n], &y[static_cast<std::size_t>(r) * n], n);
}

void logsumexp_rows(std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t n) {
  const auto r_end = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) num_threads(g_threads.load())
  for (std::ptrdiff_t r = 0; r < r_end; ++r)
    y[static_cast<std::size_t>(r)] = logsumexp_row(&x[static_cast<std::size_t>(r) * n], n);
}

}  // namespace parallel

void set_num_threads(int n) { g_threads.store(std::max(1, n)); }
int num_threads() { return g_threads.load(); }

namespace {
// Nested regions (e.g. per-document parallelism in the trainer) stay serial.
bool use_parallel(std::size_t work) {
  return g_threads.load() > 1 && work >= kParallelMinWork && !omp_in_parallel();
}
}  // namespace

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  if (use_parallel(m * k * n))
    parallel::gemm_nn(a, b, c, m, k, n, accumulate);
  else
    serial::gemm_nn(a, b, c, m, k, n, accumulate);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  if (use_parallel(m * k * n))
    parallel::gemm_nt(a, b, c, m, k, n, accumulate);
  else
    serial::gemm_nt(a, b, c, m, k, n, accumulate);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  if (use_parallel(m * k * n))
    parallel::gemm_tn(a, b, c, m, k, n, accumulate);
  else
    serial::gemm_tn(a, b, c, m, k, n, accumulate);
}

void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t n) {
  if (use_parallel(rows * n))
    parallel::softmax_rows(x, y, rows, n);
  else
    serial::softmax_rows(x, y, rows, n);
}

void logsumexp_rows(std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t n) {
  if (use_parallel(rows * n))
    parallel::logsumexp_rows(x, y, rows, n);
  else
    serial::logsumexp_rows(x, y, rows, n);
}

}  // namespace atlop::kernels
