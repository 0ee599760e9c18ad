#pragma once

#include "kdla/matrix.hpp"

// Dense products C = op(A) op(B). Two implementations share one contract:
//
//  serial::   textbook triple loop, kept as the reference the tests compare against.
//  parallel:: packed, cache-blocked, OpenMP over output tiles.
//
// Each output entry of the parallel kernel is produced by exactly one thread and is
// accumulated in ascending k within blocks of kBlockK, blocks summed in ascending
// order. The result therefore does not depend on the thread count.
namespace kdla::kernels {

enum class Op { none, transpose };

namespace serial {
Matrix gemm(Op op_a, Op op_b, const Matrix& a, const Matrix& b);
}

namespace parallel {
Matrix gemm(Op op_a, Op op_b, const Matrix& a, const Matrix& b);
/// Number of threads the OpenMP runtime will use for the next region.
int max_threads();
/// Wraps omp_set_num_threads; values < 1 are ignored.
void set_threads(int n);
}

inline constexpr std::size_t kBlockK = 256;

}  // namespace kdla::kernels
