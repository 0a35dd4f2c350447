#include <string>

#include "fairdemand/error.hpp"
#include "fairdemand/kernels.hpp"
#include "gemm_rows.hpp"

namespace fairdemand::kernels {

namespace {
void require(bool ok, const char* what, ConstMat a, ConstMat b, Mat c) {
  if (!ok) {
    throw ValidationError(std::string(what) + ": incompatible shapes " + std::to_string(a.rows) +
                          "x" + std::to_string(a.cols) + ", " + std::to_string(b.rows) + "x" +
                          std::to_string(b.cols) + " -> " + std::to_string(c.rows) + "x" +
                          std::to_string(c.cols));
  }
}
}  // namespace

namespace detail {
void check_nn(ConstMat a, ConstMat b, Mat c) {
  require(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols, "gemm_nn", a, b, c);
}
void check_tn(ConstMat a, ConstMat b, Mat c) {
  require(a.rows == b.rows && c.rows == a.cols && c.cols == b.cols, "gemm_tn", a, b, c);
}
void check_nt(ConstMat a, ConstMat b, Mat c) {
  require(a.cols == b.cols && c.rows == a.rows && c.cols == b.rows, "gemm_nt", a, b, c);
}
}  // namespace detail

namespace serial {

void gemm_nn(ConstMat a, ConstMat b, Mat c, Accumulate acc) {
  detail::check_nn(a, b, c);
  for (std::size_t i = 0; i < c.rows; ++i) detail::gemm_nn_row(a, b, c, i, acc);
}

void gemm_tn(ConstMat a, ConstMat b, Mat c, Accumulate acc) {
  detail::check_tn(a, b, c);
  detail::gemm_tn_rows(a, b, c, 0, c.rows, acc);
}

void gemm_nt(ConstMat a, ConstMat b, Mat c, Accumulate acc) {
  detail::check_nt(a, b, c);
  for (std::size_t i = 0; i < c.rows; ++i) detail::gemm_nt_row(a, b, c, i, acc);
}

}  // namespace serial
}  // namespace fairdemand::kernels
