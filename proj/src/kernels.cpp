#include "ctcattn/kernels.hpp"

#include <cassert>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ctcattn::kernels {

namespace {

constexpr std::size_t kParallelWork = 1 << 15;

inline double a_at(const GemmDims& d, std::span<const double> a,
                   std::size_t i, std::size_t p) {
  return d.trans_a ? a[p * d.m + i] : a[i * d.k + p];
}

inline double b_at(const GemmDims& d, std::span<const double> b,
                   std::size_t p, std::size_t j) {
  return d.trans_b ? b[j * d.k + p] : b[p * d.n + j];
}

// One output row, k-ascending accumulation.
inline void gemm_row(const GemmDims& d, std::span<const double> a,
                     std::span<const double> b, std::span<double> c,
                     std::size_t i) {
  double* crow = c.data() + i * d.n;
  if (d.trans_b) {
    // A row (or column) dotted with contiguous B rows.
    for (std::size_t j = 0; j < d.n; ++j) {
      const double* brow = b.data() + j * d.k;
      double acc = crow[j];
      for (std::size_t p = 0; p < d.k; ++p) acc += a_at(d, a, i, p) * brow[p];
      crow[j] = acc;
    }
    return;
  }
  for (std::size_t p = 0; p < d.k; ++p) {
    const double av = a_at(d, a, i, p);
    const double* brow = b.data() + p * d.n;
    for (std::size_t j = 0; j < d.n; ++j) crow[j] += av * brow[j];
  }
}

}  // namespace

namespace serial {

void gemm(const GemmDims& d, std::span<const double> a,
          std::span<const double> b, std::span<double> c) {
  assert(c.size() == d.m * d.n);
  for (std::size_t i = 0; i < d.m; ++i) {
    for (std::size_t j = 0; j < d.n; ++j) {
      double acc = c[i * d.n + j];
      for (std::size_t p = 0; p < d.k; ++p) {
        acc += a_at(d, a, i, p) * b_at(d, b, p, j);
      }
      c[i * d.n + j] = acc;
    }
  }
}

}  // namespace serial

namespace parallel {

void gemm(const GemmDims& d, std::span<const double> a,
          std::span<const double> b, std::span<double> c) {
  assert(c.size() == d.m * d.n);
  const auto rows = static_cast<long>(d.m);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i) {
    gemm_row(d, a, b, c, static_cast<std::size_t>(i));
  }
}

}  // namespace parallel

void gemm(const GemmDims& d, std::span<const double> a,
          std::span<const double> b, std::span<double> c) {
  if (d.m > 1 && d.m * d.n * d.k >= kParallelWork && max_threads() > 1) {
    parallel::gemm(d, a, b, c);
    return;
  }
  for (std::size_t i = 0; i < d.m; ++i) gemm_row(d, a, b, c, i);
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace ctcattn::kernels
