#include "kdla/kernels.hpp"

#include <algorithm>
#include <vector>

#include <omp.h>

#include "kdla/errors.hpp"

namespace kdla::kernels {
namespace {

struct Dims {
  std::size_t m, n, k;
};

Dims product_dims(Op op_a, Op op_b, const Matrix& a, const Matrix& b) {
  const std::size_t m = op_a == Op::none ? a.rows() : a.cols();
  const std::size_t ka = op_a == Op::none ? a.cols() : a.rows();
  const std::size_t kb = op_b == Op::none ? b.rows() : b.cols();
  const std::size_t n = op_b == Op::none ? b.cols() : b.rows();
  if (ka != kb) {
    throw DimensionError("gemm: inner dimensions differ (" + shape_str(a) + (op_a == Op::none ? "" : "^T") +
                         " x " + shape_str(b) + (op_b == Op::none ? "" : "^T") + ")");
  }
  return {m, n, ka};
}

// op(A)(i, p)
inline double elem(const Matrix& a, Op op, std::size_t i, std::size_t p) {
  return op == Op::none ? a(i, p) : a(p, i);
}

constexpr std::size_t kMR = 4;
constexpr std::size_t kNR = 16;
constexpr std::size_t kBlockM = 128;
constexpr std::size_t kBlockN = 1024;

// Packs rows [i0, i0+mc) x depth [p0, p0+kc) of op(A) into kMR-row slivers, zero padded.
void pack_a(const Matrix& a, Op op, std::size_t i0, std::size_t mc, std::size_t p0, std::size_t kc,
            double* out) {
  for (std::size_t is = 0; is < mc; is += kMR) {
    const std::size_t rows = std::min(kMR, mc - is);
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t r = 0; r < kMR; ++r) {
        *out++ = r < rows ? elem(a, op, i0 + is + r, p0 + p) : 0.0;
      }
    }
  }
}

// Packs depth [p0, p0+kc) x columns [j0, j0+nc) of op(B) into kNR-column slivers.
void pack_b(const Matrix& b, Op op, std::size_t j0, std::size_t nc, std::size_t p0, std::size_t kc,
            double* out) {
  for (std::size_t js = 0; js < nc; js += kNR) {
    const std::size_t cols = std::min(kNR, nc - js);
    for (std::size_t p = 0; p < kc; ++p) {
      if (op == Op::none && cols == kNR) {
        const double* src = b.data() + (p0 + p) * b.cols() + j0 + js;
        std::copy(src, src + kNR, out);
        out += kNR;
        continue;
      }
      for (std::size_t c = 0; c < kNR; ++c) {
        *out++ = c < cols ? elem(b, op == Op::none ? Op::transpose : Op::none, j0 + js + c, p0 + p) : 0.0;
      }
    }
  }
}

// acc[r][c] = sum_p a[p][r] * b[p][c], then added into C.
inline void micro_kernel(std::size_t kc, const double* __restrict a, const double* __restrict b,
                         double* __restrict c, std::size_t ldc, std::size_t rows, std::size_t cols) {
  double acc[kMR][kNR] = {};
  for (std::size_t p = 0; p < kc; ++p) {
    const double* bp = b + p * kNR;
    const double* ap = a + p * kMR;
#pragma GCC unroll 4
    for (std::size_t r = 0; r < kMR; ++r) {
      const double ar = ap[r];
#pragma omp simd
      for (std::size_t col = 0; col < kNR; ++col) acc[r][col] += ar * bp[col];
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    double* cr = c + r * ldc;
    for (std::size_t col = 0; col < cols; ++col) cr[col] += acc[r][col];
  }
}

}  // namespace

namespace serial {

Matrix gemm(Op op_a, Op op_b, const Matrix& a, const Matrix& b) {
  const auto [m, n, k] = product_dims(op_a, op_b, a, b);
  Matrix c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += elem(a, op_a, i, p) * elem(b, op_b, p, j);
      c(i, j) = s;
    }
  }
  return c;
}

}  // namespace serial

namespace parallel {

Matrix gemm(Op op_a, Op op_b, const Matrix& a, const Matrix& b) {
  const auto [m, n, k] = product_dims(op_a, op_b, a, b);
  Matrix c(m, n);
  if (m == 0 || n == 0 || k == 0) return c;

  const std::size_t kc_max = std::min(kBlockK, k);
  std::vector<double> bpack(((std::min(kBlockN, n) + kNR - 1) / kNR) * kNR * kc_max);

  for (std::size_t j0 = 0; j0 < n; j0 += kBlockN) {
    const std::size_t nc = std::min(kBlockN, n - j0);
    for (std::size_t p0 = 0; p0 < k; p0 += kBlockK) {
      const std::size_t kc = std::min(kBlockK, k - p0);
      pack_b(b, op_b, j0, nc, p0, kc, bpack.data());
      const std::size_t m_blocks = (m + kBlockM - 1) / kBlockM;

#pragma omp parallel
      {
        std::vector<double> apack(((kBlockM + kMR - 1) / kMR) * kMR * kc);
#pragma omp for schedule(static)
        for (std::size_t ib = 0; ib < m_blocks; ++ib) {
          const std::size_t i0 = ib * kBlockM;
          const std::size_t mc = std::min(kBlockM, m - i0);
          pack_a(a, op_a, i0, mc, p0, kc, apack.data());
          for (std::size_t js = 0; js < nc; js += kNR) {
            const double* bs = bpack.data() + (js / kNR) * kNR * kc;
            for (std::size_t is = 0; is < mc; is += kMR) {
              micro_kernel(kc, apack.data() + (is / kMR) * kMR * kc, bs,
                           c.data() + (i0 + is) * n + j0 + js, n, std::min(kMR, mc - is),
                           std::min(kNR, nc - js));
            }
          }
        }
      }
    }
  }
  return c;
}

int max_threads() { return omp_get_max_threads(); }

void set_threads(int n) {
  if (n >= 1) omp_set_num_threads(n);
}

}  // namespace parallel
}  // namespace kdla::kernels
