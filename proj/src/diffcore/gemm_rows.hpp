#pragma once

// Per-row bodies shared by the serial and OpenMP kernels.

#include <algorithm>
#include <cstddef>

#include "fairdemand/kernels.hpp"

namespace fairdemand::kernels::detail {

constexpr std::size_t kBlock = 8;

// Columns [j0, j0 + w) of row i are kept in registers while k advances, so
// each output still sums its terms in ascending k.
inline void axpy_block(const double* acol, std::size_t astride, std::size_t kn, const double* b,
                       std::size_t bstride, double* out, std::size_t w, bool add) {
  double s[kBlock];
  for (std::size_t j = 0; j < kBlock; ++j) s[j] = add && j < w ? out[j] : 0.0;
  if (w == kBlock) {
    for (std::size_t k = 0; k < kn; ++k) {
      const double av = acol[k * astride];
      const double* brow = b + k * bstride;
      for (std::size_t j = 0; j < kBlock; ++j) s[j] += av * brow[j];
    }
  } else {
    for (std::size_t k = 0; k < kn; ++k) {
      const double av = acol[k * astride];
      const double* brow = b + k * bstride;
      for (std::size_t j = 0; j < w; ++j) s[j] += av * brow[j];
    }
  }
  for (std::size_t j = 0; j < w; ++j) out[j] = s[j];
}

inline void gemm_nn_row(ConstMat a, ConstMat b, Mat c, std::size_t i, Accumulate acc) {
  double* out = c.data.data() + i * c.cols;
  const double* arow = a.data.data() + i * a.cols;
  const bool add = acc == Accumulate::add;
  for (std::size_t j0 = 0; j0 < c.cols; j0 += kBlock) {
    const std::size_t w = std::min(kBlock, c.cols - j0);
    axpy_block(arow, 1, a.cols, b.data.data() + j0, b.cols, out + j0, w, add);
  }
}

// Rows [i0, i1) of A^T * B; A is (k x m). Rank-one updates keep the output
// block hot while each entry still sums in ascending k.
inline void gemm_tn_rows(ConstMat a, ConstMat b, Mat c, std::size_t i0, std::size_t i1,
                         Accumulate acc) {
  if (acc == Accumulate::overwrite)
    std::fill(c.data.begin() + static_cast<std::ptrdiff_t>(i0 * c.cols),
              c.data.begin() + static_cast<std::ptrdiff_t>(i1 * c.cols), 0.0);
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double* acol = a.data.data() + k * a.cols;
    const double* brow = b.data.data() + k * b.cols;
    for (std::size_t i = i0; i < i1; ++i) {
      const double av = acol[i];
      if (av == 0.0) continue;
      double* out = c.data.data() + i * c.cols;
      for (std::size_t j = 0; j < c.cols; ++j) out[j] += av * brow[j];
    }
  }
}

// Row i of A * B^T; B is (n x k). Four dot products run side by side.
inline void gemm_nt_row(ConstMat a, ConstMat b, Mat c, std::size_t i, Accumulate acc) {
  double* out = c.data.data() + i * c.cols;
  const double* arow = a.data.data() + i * a.cols;
  const bool add = acc == Accumulate::add;
  std::size_t j = 0;
  for (; j + 4 <= c.cols; j += 4) {
    const double* b0 = b.data.data() + j * b.cols;
    const double* b1 = b0 + b.cols;
    const double* b2 = b1 + b.cols;
    const double* b3 = b2 + b.cols;
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double av = arow[k];
      s0 += av * b0[k];
      s1 += av * b1[k];
      s2 += av * b2[k];
      s3 += av * b3[k];
    }
    out[j] = add ? out[j] + s0 : s0;
    out[j + 1] = add ? out[j + 1] + s1 : s1;
    out[j + 2] = add ? out[j + 2] + s2 : s2;
    out[j + 3] = add ? out[j + 3] + s3 : s3;
  }
  for (; j < c.cols; ++j) {
    const double* brow = b.data.data() + j * b.cols;
    double s = 0.0;
    for (std::size_t k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
    out[j] = add ? out[j] + s : s;
  }
}

}  // namespace fairdemand::kernels::detail
