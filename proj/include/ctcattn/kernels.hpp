#ifndef CTCATTN_KERNELS_HPP_
#define CTCATTN_KERNELS_HPP_

#include <cstddef>
#include <span>

namespace ctcattn::kernels {

// Dense GEMM accumulate: C[m x n] += op(A) * op(B), row-major throughout.
// op(A) is m x k (A stored k x m when trans_a), op(B) is k x n (B stored
// n x k when trans_b).
struct GemmDims {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  bool trans_a = false;
  bool trans_b = false;
};

namespace serial {
// Textbook triple loop. Kept as the reference the parallel kernel is tested
// and benchmarked against.
void gemm(const GemmDims& d, std::span<const double> a,
          std::span<const double> b, std::span<double> c);
}  // namespace serial

namespace parallel {
// Cache-friendly loop order, rows of C split across OpenMP threads. Every
// C element is reduced over k in ascending order regardless of thread count,
// so results are bit-identical for any schedule.
void gemm(const GemmDims& d, std::span<const double> a,
          std::span<const double> b, std::span<double> c);
}  // namespace parallel

// Dispatches to parallel::gemm above a work threshold, else runs the same
// loop order inline.
void gemm(const GemmDims& d, std::span<const double> a,
          std::span<const double> b, std::span<double> c);

int max_threads();

}  // namespace ctcattn::kernels

#endif  // CTCATTN_KERNELS_HPP_
