#pragma once

#include <cstddef>
#include <span>

// Dense kernels behind the differentiation engine.
//
// Every kernel exists twice: a serial reference and an OpenMP version that
// splits the output rows across threads. Both call the same per-row body, so
// results are bit-identical regardless of thread count.
namespace fairdemand::kernels {

// Row-major matrix views.
struct ConstMat {
  std::span<const double> data;
  std::size_t rows;
  std::size_t cols;
};

struct Mat {
  std::span<double> data;
  std::size_t rows;
  std::size_t cols;
};

enum class Accumulate { overwrite, add };

namespace serial {
// C = A * B
void gemm_nn(ConstMat a, ConstMat b, Mat c, Accumulate acc = Accumulate::overwrite);
// C = A^T * B
void gemm_tn(ConstMat a, ConstMat b, Mat c, Accumulate acc = Accumulate::overwrite);
// C = A * B^T
void gemm_nt(ConstMat a, ConstMat b, Mat c, Accumulate acc = Accumulate::overwrite);
}  // namespace serial

namespace omp {
void gemm_nn(ConstMat a, ConstMat b, Mat c, Accumulate acc = Accumulate::overwrite);
void gemm_tn(ConstMat a, ConstMat b, Mat c, Accumulate acc = Accumulate::overwrite);
void gemm_nt(ConstMat a, ConstMat b, Mat c, Accumulate acc = Accumulate::overwrite);
}  // namespace omp

// Dispatching entry points used by the engine. Small products stay serial.
void gemm_nn(ConstMat a, ConstMat b, Mat c, Accumulate acc = Accumulate::overwrite);
void gemm_tn(ConstMat a, ConstMat b, Mat c, Accumulate acc = Accumulate::overwrite);
void gemm_nt(ConstMat a, ConstMat b, Mat c, Accumulate acc = Accumulate::overwrite);

// Work (multiply-adds) above which the dispatchers go parallel.
inline constexpr std::size_t kParallelWork = 1u << 16;

bool openmp_enabled();
int max_threads();

}  // namespace fairdemand::kernels
