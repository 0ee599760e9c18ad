#pragma once

#include <cmath>
#include <functional>

#include "kdla/matrix.hpp"
#include "kdla/rng.hpp"

namespace kdla::test {

inline Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  CounterRng rng(seed, 77);
  Matrix m(r, c);
  for (double& v : m.flat()) v = rng.uniform(lo, hi);
  return m;
}

// Rank-k product of random factors.
inline Matrix low_rank(std::size_t r, std::size_t c, std::size_t k, std::uint64_t seed) {
  return matmul(random_matrix(r, k, seed), random_matrix(k, c, seed + 1));
}

inline double max_diff(const Matrix& a, const Matrix& b) { return max_abs(a - b); }

// Central difference of f along every entry of x.
inline Matrix central_diff(Matrix& x, const std::function<double()>& f, double h = 1e-6) {
  Matrix g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x.flat()[i];
    x.flat()[i] = keep + h;
    const double up = f();
    x.flat()[i] = keep - h;
    const double down = f();
    x.flat()[i] = keep;
    g.flat()[i] = (up - down) / (2 * h);
  }
  return g;
}

inline double rel_err(const Matrix& a, const Matrix& b) {
  return frobenius_norm(a - b) / std::max(frobenius_norm(b), 1e-300);
}

}  // namespace kdla::test
