#include <cstdint>

#include "fairdemand/kernels.hpp"
#include "gemm_rows.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fairdemand::kernels {

namespace detail {
void check_nn(ConstMat a, ConstMat b, Mat c);
void check_tn(ConstMat a, ConstMat b, Mat c);
void check_nt(ConstMat a, ConstMat b, Mat c);
}  // namespace detail

namespace omp {

void gemm_nn(ConstMat a, ConstMat b, Mat c, Accumulate acc) {
  detail::check_nn(a, b, c);
  const auto rows = static_cast<std::int64_t>(c.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i)
    detail::gemm_nn_row(a, b, c, static_cast<std::size_t>(i), acc);
}

void gemm_tn(ConstMat a, ConstMat b, Mat c, Accumulate acc) {
  detail::check_tn(a, b, c);
#pragma omp parallel
  {
    std::size_t lo = 0;
    std::size_t hi = c.rows;
#ifdef _OPENMP
    const auto t = static_cast<std::size_t>(omp_get_thread_num());
    const auto nt = static_cast<std::size_t>(omp_get_num_threads());
    lo = c.rows * t / nt;
    hi = c.rows * (t + 1) / nt;
#endif
    if (lo < hi) detail::gemm_tn_rows(a, b, c, lo, hi, acc);
  }
}

void gemm_nt(ConstMat a, ConstMat b, Mat c, Accumulate acc) {
  detail::check_nt(a, b, c);
  const auto rows = static_cast<std::int64_t>(c.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i)
    detail::gemm_nt_row(a, b, c, static_cast<std::size_t>(i), acc);
}

}  // namespace omp

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {
bool go_parallel(std::size_t work) {
#ifdef _OPENMP
  return work >= kParallelWork && omp_get_max_threads() > 1 && !omp_in_parallel();
#else
  (void)work;
  return false;
#endif
}
}  // namespace

void gemm_nn(ConstMat a, ConstMat b, Mat c, Accumulate acc) {
  if (go_parallel(c.rows * c.cols * a.cols)) {
    omp::gemm_nn(a, b, c, acc);
  } else {
    serial::gemm_nn(a, b, c, acc);
  }
}

void gemm_tn(ConstMat a, ConstMat b, Mat c, Accumulate acc) {
  if (go_parallel(c.rows * c.cols * a.rows)) {
    omp::gemm_tn(a, b, c, acc);
  } else {
    serial::gemm_tn(a, b, c, acc);
  }
}

void gemm_nt(ConstMat a, ConstMat b, Mat c, Accumulate acc) {
  if (go_parallel(c.rows * c.cols * a.cols)) {
    omp::gemm_nt(a, b, c, acc);
  } else {
    serial::gemm_nt(a, b, c, acc);
  }
}

}  // namespace fairdemand::kernels
